#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aucal/dataset.hpp"

namespace aucal::relabel {

enum class FlipDirection { to_positive, to_negative };

std::string_view to_string(FlipDirection direction);

struct FlipEntry {
  std::string id;
  std::string cell;
  std::string level;
  FlipDirection direction = FlipDirection::to_positive;
};

struct CellGroupSummary {
  std::string cell;
  std::string level;
  std::int64_t count = 0;
  std::int64_t positives_before = 0;
  std::int64_t positives_after = 0;
  double target_proportion = 0.0;  // pooled proportion of the cell
  std::int64_t planned_flips = 0;  // signed: > 0 means negatives turned positive
  std::int64_t deficit = 0;        // planned flips that had no eligible record
};

struct FlipLog {
  std::vector<FlipEntry> flips;
  std::vector<CellGroupSummary> cells;
};

struct RelabelResult {
  Dataset dataset;
  FlipLog log;
};

// Equalizes the positive-label proportion of every group inside every AU
// cell at the cell's pooled proportion by flipping uniformly sampled labels.
// Flip counts are rounded half-to-even.
RelabelResult relabel_to_parity(const Dataset& dataset, const std::vector<std::string>& conditioning,
                                const std::string& group_attr, const std::string& target_label,
                                std::uint64_t seed);

struct Shortfall {
  std::string cell;
  std::string level;
  std::int64_t available = 0;
  std::int64_t requested = 0;
};

struct SubsampleResult {
  Dataset dataset;
  std::vector<Shortfall> shortfalls;
};

// Uniform sample without replacement of per_cell_count records per
// (AU cell, group level); strata smaller than that are kept whole.
SubsampleResult balanced_subsample(const Dataset& dataset,
                                   const std::vector<std::string>& conditioning,
                                   const std::string& group_attr, std::int64_t per_cell_count,
                                   std::uint64_t seed);

}  // namespace aucal::relabel
