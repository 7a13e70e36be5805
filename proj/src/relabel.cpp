#include "aucal/relabel.hpp"

#include <algorithm>

#include "aucal/error.hpp"
#include "aucal/rng.hpp"

namespace aucal::relabel {
namespace {

// round(num / den) with ties to even; den > 0.
std::int64_t round_half_even(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  std::int64_t r = num % den;
  if (r < 0) {
    r += den;
    --q;
  }
  if (2 * r > den || (2 * r == den && (q % 2 != 0))) ++q;
  return q;
}

// Record indices grouped by (cell code, level).
std::vector<std::vector<std::vector<std::size_t>>> stratify(const Dataset& dataset,
                                                            const CellIndexer& indexer,
                                                            std::size_t attr) {
  const std::size_t k = dataset.attributes()[attr].levels.size();
  std::vector<std::vector<std::vector<std::size_t>>> strata(
      indexer.cell_count(), std::vector<std::vector<std::size_t>>(k));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& r = dataset[i];
    strata[indexer.code(r)][static_cast<std::size_t>(r.groups[attr])].push_back(i);
  }
  return strata;
}

}  // namespace

std::string_view to_string(FlipDirection direction) {
  return direction == FlipDirection::to_positive ? "to_positive" : "to_negative";
}

RelabelResult relabel_to_parity(const Dataset& dataset, const std::vector<std::string>& conditioning,
                                const std::string& group_attr, const std::string& target_label,
                                std::uint64_t seed) {
  const std::size_t attr = dataset.attribute_index(group_attr);
  const auto& levels = dataset.attributes()[attr].levels;
  if (levels.size() < 2) throw MissingGroup("relabeling needs at least two group levels");
  const CellIndexer indexer(dataset, conditioning);

  // Resolve the positive and negative classes, extending the label set
  // when the dataset lacks one of them.
  auto schema = dataset.schema();
  int positive = dataset.target_class(target_label);
  if (positive < 0) {
    schema.label_levels.emplace_back("1");
    positive = static_cast<int>(schema.label_levels.size() - 1);
  }
  int negative = -1;
  if (schema.label_levels.size() == 2) {
    negative = positive == 0 ? 1 : 0;
  } else {
    const std::string name = "not_" + schema.label_levels[static_cast<std::size_t>(positive)];
    const auto it = std::find(schema.label_levels.begin(), schema.label_levels.end(), name);
    if (it == schema.label_levels.end()) {
      schema.label_levels.push_back(name);
      negative = static_cast<int>(schema.label_levels.size() - 1);
    } else {
      negative = static_cast<int>(it - schema.label_levels.begin());
    }
  }

  std::vector<AnnotatedRecord> records(dataset.records().begin(), dataset.records().end());
  const auto strata = stratify(dataset, indexer, attr);
  const Rng root = Rng(seed).child("relabel");
  FlipLog log;

  for (std::uint32_t code = 0; code < strata.size(); ++code) {
    const std::string cell = indexer.key(code).to_string();
    std::int64_t cell_n = 0, cell_pos = 0;
    std::vector<std::int64_t> n(levels.size()), k(levels.size());
    for (std::size_t g = 0; g < levels.size(); ++g) {
      n[g] = static_cast<std::int64_t>(strata[code][g].size());
      for (auto i : strata[code][g]) k[g] += records[i].label == positive ? 1 : 0;
      cell_n += n[g];
      cell_pos += k[g];
    }
    if (cell_n == 0) continue;
    const double target = static_cast<double>(cell_pos) / static_cast<double>(cell_n);
    for (std::size_t g = 0; g < levels.size(); ++g) {
      if (n[g] == 0) continue;
      // Signed flips: n_g * (p* - p_g) = (n_g * K - k_g * N) / N.
      const std::int64_t planned = round_half_even(n[g] * cell_pos - k[g] * cell_n, cell_n);
      const bool to_positive = planned > 0;
      std::vector<std::size_t> eligible;
      for (auto i : strata[code][g]) {
        if ((records[i].label == positive) != to_positive) eligible.push_back(i);
      }
      const auto wanted = static_cast<std::uint64_t>(std::abs(planned));
      Rng rng = root.child(cell).child(levels[g]);
      const auto picks = rng.sample_indices(eligible.size(), wanted);
      for (auto pick : picks) {
        auto& r = records[eligible[pick]];
        r.label = to_positive ? positive : negative;
        log.flips.push_back({r.id, cell, levels[g],
                             to_positive ? FlipDirection::to_positive : FlipDirection::to_negative});
      }
      CellGroupSummary summary;
      summary.cell = cell;
      summary.level = levels[g];
      summary.count = n[g];
      summary.positives_before = k[g];
      summary.positives_after =
          k[g] + (to_positive ? 1 : -1) * static_cast<std::int64_t>(picks.size());
      summary.target_proportion = target;
      summary.planned_flips = planned;
      summary.deficit = static_cast<std::int64_t>(wanted - picks.size());
      log.cells.push_back(summary);
    }
  }
  return {Dataset(std::move(schema), std::move(records)), std::move(log)};
}

SubsampleResult balanced_subsample(const Dataset& dataset,
                                   const std::vector<std::string>& conditioning,
                                   const std::string& group_attr, std::int64_t per_cell_count,
                                   std::uint64_t seed) {
  if (per_cell_count < 1) throw InvalidCount("per_cell_count must be at least 1");
  const std::size_t attr = dataset.attribute_index(group_attr);
  const auto& levels = dataset.attributes()[attr].levels;
  const CellIndexer indexer(dataset, conditioning);
  const auto strata = stratify(dataset, indexer, attr);
  const Rng root = Rng(seed).child("balanced_subsample");

  SubsampleResult result;
  std::vector<std::size_t> keep;
  for (std::uint32_t code = 0; code < strata.size(); ++code) {
    const std::string cell = indexer.key(code).to_string();
    for (std::size_t g = 0; g < levels.size(); ++g) {
      const auto& members = strata[code][g];
      const auto available = static_cast<std::int64_t>(members.size());
      if (available < per_cell_count) {
        result.shortfalls.push_back({cell, levels[g], available, per_cell_count});
      }
      Rng rng = root.child(cell).child(levels[g]);
      for (auto pick : rng.sample_indices(members.size(), static_cast<std::uint64_t>(per_cell_count))) {
        keep.push_back(members[pick]);
      }
    }
  }
  std::sort(keep.begin(), keep.end());
  std::vector<AnnotatedRecord> records;
  records.reserve(keep.size());
  for (auto i : keep) records.push_back(dataset[i]);
  result.dataset = dataset.with_records(std::move(records));
  return result;
}

}  // namespace aucal::relabel
