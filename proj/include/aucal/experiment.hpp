#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "aucal/aucfer.hpp"
#include "aucal/dataset.hpp"
#include "aucal/metrics.hpp"

namespace aucal::experiment {

struct RunSpec {
  std::string name;
  aucfer::TrainConfig config;  // its seed is replaced by each comparison seed
};

struct CompareOptions {
  std::vector<RunSpec> runs;
  std::vector<std::uint64_t> seeds;
  std::string group_attr = "gender";
  std::string positive_group = "F";
  // When set, test records are scored against this extra column (e.g.
  // "fair_label") instead of the training labels.
  std::string test_label_column;
  metrics::FairTestOptions fair;
  // Run whose model at seeds[0] scores the easy cases to prune.
  std::size_t reference_run = 0;
  unsigned threads = 1;
};

struct SeedResult {
  std::uint64_t seed = 0;
  aucfer::TrainResult train;
  metrics::EvalResult eval;
};

struct RunResult {
  std::string name;
  aucfer::TrainConfig config;
  std::vector<SeedResult> seeds;
  metrics::Summary accuracy;
  metrics::Summary f1;
  metrics::Summary disc_abs;
  metrics::Summary disc_signed;
};

struct CompareResult {
  std::vector<RunResult> runs;
  std::size_t test_records = 0;
  std::size_t fair_test_records = 0;
  std::size_t pruned_easy = 0;
  std::size_t removed_for_balance = 0;
  std::map<std::string, double> fair_positive_rate;
};

// Trains every run on the train split for every seed, builds one fair test
// set from the test split and evaluates all models on it. Results do not
// depend on the thread count.
CompareResult compare(const Dataset& dataset, const CompareOptions& options);

// Relative drop of mean disc_abs from `baseline` to `mitigated`.
double disc_reduction(const RunResult& baseline, const RunResult& mitigated);

// Method, accuracy, F1 and Disc as "mean ± sd" plus raw columns.
void write_compare_csv(const CompareResult& result, std::ostream& out);

// Worker count from AUCAL_THREADS (default 1).
unsigned threads_from_env();

}  // namespace aucal::experiment
