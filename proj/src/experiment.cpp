#include "aucal/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <cstring>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "aucal/error.hpp"

namespace aucal::experiment {
namespace {

// Runs jobs [0, count) on up to `threads` workers; the first exception is
// rethrown after all workers stop.
template <typename Job>
void run_jobs(std::size_t count, unsigned threads, Job job) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (unsigned t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

std::string cell(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

}  // namespace

unsigned threads_from_env() {
  const char* raw = std::getenv("AUCAL_THREADS");
  if (!raw || !*raw) return 1;
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(raw, raw + std::strlen(raw), value);
  if (ec != std::errc() || *ptr != '\0' || value == 0) {
    throw InvalidConfig("AUCAL_THREADS must be a positive integer");
  }
  return value;
}

CompareResult compare(const Dataset& dataset, const CompareOptions& options) {
  if (options.runs.empty()) throw InvalidConfig("no runs to compare");
  if (options.seeds.empty()) throw InvalidConfig("no seeds to compare");
  if (options.reference_run >= options.runs.size()) throw InvalidConfig("reference run out of range");

  std::vector<AnnotatedRecord> test_records;
  for (const auto& r : dataset.records()) {
    if (r.split == Split::test) test_records.push_back(r);
  }
  if (test_records.empty()) throw EmptyInput("dataset has no test split");
  Dataset test = dataset.with_records(std::move(test_records));
  if (!options.test_label_column.empty()) test = with_label_column(test, options.test_label_column);

  CompareResult out;
  out.test_records = test.size();
  const std::size_t n_seeds = options.seeds.size();
  out.runs.resize(options.runs.size());
  for (std::size_t r = 0; r < options.runs.size(); ++r) {
    out.runs[r].name = options.runs[r].name;
    out.runs[r].config = options.runs[r].config;
    out.runs[r].seeds.resize(n_seeds);
  }
  run_jobs(options.runs.size() * n_seeds, options.threads, [&](std::size_t job) {
    const std::size_t r = job / n_seeds;
    const std::size_t s = job % n_seeds;
    auto config = options.runs[r].config;
    config.seed = options.seeds[s];
    out.runs[r].seeds[s].seed = config.seed;
    out.runs[r].seeds[s].train = aucfer::train(dataset, config);
  });

  const auto& reference = out.runs[options.reference_run].seeds.front().train.params;
  const auto fair = metrics::build_fair_test_set(test, aucfer::predict_scores(reference, test),
                                                 options.fair);
  out.fair_test_records = fair.dataset.size();
  out.pruned_easy = fair.pruned_easy;
  out.removed_for_balance = fair.removed_for_balance;
  out.fair_positive_rate = fair.positive_rate;

  for (auto& run : out.runs) {
    std::vector<double> acc, f1, disc, disc_signed;
    for (auto& sr : run.seeds) {
      sr.eval = metrics::evaluate(sr.train.params, fair.dataset, options.group_attr,
                                  options.positive_group, options.fair.target_label);
      acc.push_back(sr.eval.accuracy);
      f1.push_back(sr.eval.f1);
      disc.push_back(sr.eval.disc_abs);
      disc_signed.push_back(sr.eval.disc_signed);
    }
    run.accuracy = metrics::summarize(acc);
    run.f1 = metrics::summarize(f1);
    run.disc_abs = metrics::summarize(disc);
    run.disc_signed = metrics::summarize(disc_signed);
  }
  return out;
}

double disc_reduction(const RunResult& baseline, const RunResult& mitigated) {
  if (baseline.disc_abs.mean == 0.0) return 0.0;
  return 1.0 - mitigated.disc_abs.mean / baseline.disc_abs.mean;
}

void write_compare_csv(const CompareResult& result, std::ostream& out) {
  out << "method,lambda,accuracy,f1,disc,accuracy_mean,accuracy_sd,f1_mean,f1_sd,disc_mean,disc_sd,"
         "seeds\n";
  for (const auto& run : result.runs) {
    out << run.name << ',' << cell(run.config.lambda, 2) << ',' << run.accuracy.format(3) << ','
        << run.f1.format(3) << ',' << run.disc_abs.format(3) << ',' << cell(run.accuracy.mean) << ','
        << cell(run.accuracy.sd) << ',' << cell(run.f1.mean) << ',' << cell(run.f1.sd) << ','
        << cell(run.disc_abs.mean) << ',' << cell(run.disc_abs.sd) << ',' << run.seeds.size() << '\n';
  }
}

}  // namespace aucal::experiment
