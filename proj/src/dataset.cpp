#include "aucal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "aucal/error.hpp"

namespace aucal {
namespace {

std::optional<long> numeric_suffix(std::string_view id) {
  std::size_t pos = id.size();
  while (pos > 0 && std::isdigit(static_cast<unsigned char>(id[pos - 1]))) --pos;
  if (pos == id.size()) return std::nullopt;
  long value = 0;
  std::from_chars(id.data() + pos, id.data() + id.size(), value);
  return value;
}

bool is_au_column(std::string_view name) {
  if (name.size() < 3 || name.substr(0, 2) != "AU") return false;
  return std::all_of(name.begin() + 2, name.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::optional<std::size_t> feature_column_index(std::string_view name) {
  if (name.size() < 2 || name[0] != 'f') return std::nullopt;
  std::size_t value = 0;
  const auto* end = name.data() + name.size();
  auto [ptr, ec] = std::from_chars(name.data() + 1, end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> ordered_levels(const std::set<std::string>& seen,
                                        const std::vector<std::string>* declared,
                                        const std::string& attribute) {
  if (declared == nullptr) return {seen.begin(), seen.end()};
  for (const auto& level : seen) {
    if (std::find(declared->begin(), declared->end(), level) == declared->end()) {
      throw UnknownGroupLevel("level '" + level + "' of '" + attribute +
                              "' is not in the declared level order");
    }
  }
  return *declared;
}

}  // namespace

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

bool au_less(std::string_view a, std::string_view b) {
  const auto na = numeric_suffix(a);
  const auto nb = numeric_suffix(b);
  if (na && nb && *na != *nb) return *na < *nb;
  return a < b;
}

void sort_au_ids(std::vector<std::string>& ids) {
  std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return au_less(a, b); });
}

std::string AuCellKey::to_string() const {
  std::string out;
  for (const auto& [au, bit] : bits) {
    if (!out.empty()) out += ',';
    out += au;
    out += '=';
    out += static_cast<char>('0' + bit);
  }
  return out;
}

Dataset::Dataset(Schema schema, std::vector<AnnotatedRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  for (const auto& attr : schema_.attributes) {
    std::set<std::string> unique(attr.levels.begin(), attr.levels.end());
    if (unique.size() != attr.levels.size()) {
      throw Error("duplicate levels for attribute '" + attr.name + "'");
    }
  }
  const std::size_t n_aus = schema_.au_ids.size();
  for (const auto& r : records_) {
    if (r.au_intensities.size() != n_aus || r.au_presence.size() != n_aus) {
      throw Error("record '" + r.id + "' does not match the dataset AU set");
    }
    for (double v : r.au_intensities) {
      if (!(v >= kMinIntensity && v <= kMaxIntensity)) {
        throw Error("record '" + r.id + "' has an AU intensity outside [0,5]");
      }
    }
    for (auto p : r.au_presence) {
      if (p != kPresenceUnset && p != 0 && p != 1) {
        throw Error("record '" + r.id + "' has an invalid AU presence value");
      }
    }
    if (r.groups.size() != schema_.attributes.size()) {
      throw Error("record '" + r.id + "' does not match the dataset attribute set");
    }
    for (std::size_t a = 0; a < r.groups.size(); ++a) {
      if (r.groups[a] < 0 ||
          static_cast<std::size_t>(r.groups[a]) >= schema_.attributes[a].levels.size()) {
        throw UnknownGroupLevel("record '" + r.id + "' has an undeclared level for '" +
                                schema_.attributes[a].name + "'");
      }
    }
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= schema_.label_levels.size()) {
      throw InvalidLabel("record '" + r.id + "' has an undeclared label");
    }
    if (r.features.size() != schema_.feature_dim) {
      throw InconsistentFeatureDim("record '" + r.id + "' has " +
                                   std::to_string(r.features.size()) + " features, expected " +
                                   std::to_string(schema_.feature_dim));
    }
    if (r.extras.size() != schema_.extra_columns.size()) {
      throw Error("record '" + r.id + "' does not match the extra column set");
    }
  }
}

Dataset Dataset::with_records(std::vector<AnnotatedRecord> records) const {
  return Dataset(schema_, std::move(records));
}

Dataset Dataset::with_schema(Schema schema) const { return Dataset(std::move(schema), records_); }

std::size_t Dataset::au_index(std::string_view au) const {
  const auto it = std::find(schema_.au_ids.begin(), schema_.au_ids.end(), au);
  if (it == schema_.au_ids.end()) throw UnknownAu("unknown AU: " + std::string(au));
  return static_cast<std::size_t>(it - schema_.au_ids.begin());
}

std::size_t Dataset::attribute_index(std::string_view name) const {
  for (std::size_t i = 0; i < schema_.attributes.size(); ++i) {
    if (schema_.attributes[i].name == name) return i;
  }
  throw UnknownAttribute("unknown attribute: " + std::string(name));
}

const Attribute& Dataset::attribute(std::string_view name) const {
  return schema_.attributes[attribute_index(name)];
}

int Dataset::level_index(std::string_view attribute_name, std::string_view level) const {
  const auto& levels = attribute(attribute_name).levels;
  const auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) {
    throw UnknownGroupLevel("unknown level '" + std::string(level) + "' of '" +
                            std::string(attribute_name) + "'");
  }
  return static_cast<int>(it - levels.begin());
}

int Dataset::target_class(std::string_view target) const {
  const auto& levels = schema_.label_levels;
  if (auto it = std::find(levels.begin(), levels.end(), target); it != levels.end()) {
    return static_cast<int>(it - levels.begin());
  }
  const bool binary = std::all_of(levels.begin(), levels.end(),
                                  [](const std::string& l) { return l == "0" || l == "1"; });
  if (!binary) {
    throw InvalidLabel("label '" + std::string(target) + "' not found in column '" +
                       schema_.label_column + "'");
  }
  const auto one = std::find(levels.begin(), levels.end(), "1");
  return one == levels.end() ? -1 : static_cast<int>(one - levels.begin());
}

LoadedDataset parse_dataset(std::istream& in, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw EmptyDataset("no header row");
  const auto header = split_line(line);
  std::vector<std::string> names;
  for (const auto& h : header) names.emplace_back(trim(h));

  auto find_column = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  };
  auto require_column = [&](const std::string& name) {
    const auto col = find_column(name);
    if (!col) throw MissingColumn(name);
    return *col;
  };

  const std::size_t id_col = require_column(schema.id_column);
  // An unlabeled file (allowed when !label_required) gets one empty class.
  const std::optional<std::size_t> label_col =
      schema.label_required ? std::optional(require_column(schema.label_column))
                            : find_column(schema.label_column);
  for (const auto& au : schema.required_aus) require_column(au);

  std::vector<std::pair<std::string, std::size_t>> group_cols;
  for (const auto& g : schema.group_columns) group_cols.emplace_back(g, require_column(g));
  for (const auto& g : schema.optional_group_columns) {
    const bool already = std::any_of(group_cols.begin(), group_cols.end(),
                                     [&](const auto& gc) { return gc.first == g; });
    if (auto col = find_column(g); col && !already) group_cols.emplace_back(g, *col);
  }
  if (group_cols.empty()) throw MissingColumn("at least one group attribute column");
  const auto split_col = find_column("split");

  std::vector<std::pair<std::string, std::size_t>> au_cols;
  std::vector<std::pair<std::size_t, std::size_t>> feature_cols;  // (feature index, column)
  LoadReport report;
  std::vector<std::size_t> extra_cols;
  std::vector<std::string> extra_names;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto& name = names[c];
    const bool known = c == id_col || (label_col && c == *label_col) || (split_col && c == *split_col) ||
                       std::any_of(group_cols.begin(), group_cols.end(),
                                   [&](const auto& gc) { return gc.second == c; });
    if (known) continue;
    if (is_au_column(name)) {
      au_cols.emplace_back(name, c);
    } else if (auto f = feature_column_index(name)) {
      feature_cols.emplace_back(*f, c);
    } else {
      report.unrecognized_columns.push_back(name);
      extra_cols.push_back(c);
      extra_names.push_back(name);
    }
  }
  if (au_cols.empty()) throw MissingColumn("AU intensity columns (AU<n>)");
  std::sort(au_cols.begin(), au_cols.end(),
            [](const auto& a, const auto& b) { return au_less(a.first, b.first); });
  std::sort(feature_cols.begin(), feature_cols.end());
  for (std::size_t i = 0; i < feature_cols.size(); ++i) {
    if (feature_cols[i].first != i) {
      throw InconsistentFeatureDim("feature columns must be f0..f{d-1} without gaps");
    }
  }

  struct RawRow {
    std::string id;
    std::vector<double> intensities;
    std::string label;
    std::vector<std::string> groups;
    std::vector<double> features;
    Split split = Split::train;
    std::vector<std::string> extras;
  };
  std::vector<RawRow> rows;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    ++report.rows_read;
    const auto fields = split_line(line);
    if (fields.size() != names.size()) {
      throw ParseError(row_number, "*",
                       "expected " + std::to_string(names.size()) + " fields, found " +
                           std::to_string(fields.size()));
    }
    RawRow row;
    row.id = std::string(trim(fields[id_col]));
    bool missing_au = false;
    for (const auto& [name, col] : au_cols) {
      std::optional<double> v;
      try {
        v = parse_double(fields[col]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(row_number, name, e.what());
      }
      if (!v) {
        missing_au = true;
        continue;
      }
      if (!(*v >= kMinIntensity && *v <= kMaxIntensity)) {
        throw ParseError(row_number, name, "intensity outside [0,5]");
      }
      row.intensities.push_back(*v);
    }
    if (missing_au) {
      ++report.dropped_missing_au;
      continue;
    }
    if (label_col) {
      row.label = std::string(trim(fields[*label_col]));
      if (row.label.empty()) throw ParseError(row_number, schema.label_column, "empty label");
    }
    for (const auto& [name, col] : group_cols) {
      auto value = std::string(trim(fields[col]));
      if (value.empty()) throw ParseError(row_number, name, "empty group value");
      row.groups.push_back(std::move(value));
    }
    for (const auto& [index, col] : feature_cols) {
      std::optional<double> v;
      try {
        v = parse_double(fields[col]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(row_number, names[col], e.what());
      }
      if (!v) {
        throw InconsistentFeatureDim("row " + std::to_string(row_number) + " is missing " +
                                     names[col]);
      }
      row.features.push_back(*v);
    }
    if (split_col) {
      const auto s = trim(fields[*split_col]);
      if (s == "train" || s.empty()) {
        row.split = Split::train;
      } else if (s == "test") {
        row.split = Split::test;
      } else {
        throw ParseError(row_number, "split", "expected train or test");
      }
    }
    for (auto col : extra_cols) row.extras.emplace_back(trim(fields[col]));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyDataset("no usable rows");

  Dataset::Schema ds;
  for (const auto& [name, col] : au_cols) ds.au_ids.push_back(name);
  ds.label_column = label_col ? schema.label_column : std::string();
  ds.feature_dim = feature_cols.size();
  ds.extra_columns = extra_names;
  {
    std::set<std::string> labels;
    for (const auto& r : rows) labels.insert(r.label);
    const auto it = schema.level_order.find(schema.label_column);
    ds.label_levels = ordered_levels(labels, it == schema.level_order.end() ? nullptr : &it->second,
                                     schema.label_column);
  }
  for (std::size_t g = 0; g < group_cols.size(); ++g) {
    std::set<std::string> seen;
    for (const auto& r : rows) seen.insert(r.groups[g]);
    const auto& name = group_cols[g].first;
    const auto it = schema.level_order.find(name);
    ds.attributes.push_back(
        {name, ordered_levels(seen, it == schema.level_order.end() ? nullptr : &it->second, name)});
  }

  std::vector<AnnotatedRecord> records;
  records.reserve(rows.size());
  for (auto& row : rows) {
    AnnotatedRecord r;
    r.id = std::move(row.id);
    r.au_intensities = std::move(row.intensities);
    r.au_presence.assign(r.au_intensities.size(), kPresenceUnset);
    r.label = static_cast<int>(
        std::find(ds.label_levels.begin(), ds.label_levels.end(), row.label) -
        ds.label_levels.begin());
    for (std::size_t g = 0; g < row.groups.size(); ++g) {
      const auto& levels = ds.attributes[g].levels;
      r.groups.push_back(
          static_cast<int>(std::find(levels.begin(), levels.end(), row.groups[g]) - levels.begin()));
    }
    r.features = std::move(row.features);
    r.split = row.split;
    r.extras = std::move(row.extras);
    records.push_back(std::move(r));
  }
  return {Dataset(std::move(ds), std::move(records)), std::move(report)};
}

LoadedDataset load_dataset(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_dataset(in, schema);
}

void write_csv(const Dataset& dataset, std::ostream& out) {
  out << "id";
  for (const auto& au : dataset.au_ids()) out << ',' << au;
  const bool labeled = !dataset.schema().label_column.empty();
  if (labeled) out << ',' << dataset.schema().label_column;
  for (const auto& attr : dataset.attributes()) out << ',' << attr.name;
  out << ",split";
  for (std::size_t f = 0; f < dataset.feature_dim(); ++f) out << ",f" << f;
  for (const auto& extra : dataset.schema().extra_columns) out << ',' << extra;
  out << '\n';
  for (const auto& r : dataset.records()) {
    out << r.id;
    for (double v : r.au_intensities) out << ',' << format_double(v);
    if (labeled) out << ',' << dataset.label_levels()[static_cast<std::size_t>(r.label)];
    for (std::size_t a = 0; a < r.groups.size(); ++a) {
      out << ',' << dataset.attributes()[a].levels[static_cast<std::size_t>(r.groups[a])];
    }
    out << ',' << to_string(r.split);
    for (double v : r.features) out << ',' << format_double(v);
    for (const auto& e : r.extras) out << ',' << e;
    out << '\n';
  }
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(dataset, out);
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset with_label_column(const Dataset& dataset, const std::string& column) {
  auto schema = dataset.schema();
  const auto it = std::find(schema.extra_columns.begin(), schema.extra_columns.end(), column);
  if (it == schema.extra_columns.end()) throw MissingColumn(column);
  const auto pos = static_cast<std::size_t>(it - schema.extra_columns.begin());

  std::set<std::string> values;
  for (const auto& r : dataset.records()) values.insert(r.extras[pos]);
  std::vector<std::string> levels(values.begin(), values.end());
  const auto old_levels = schema.label_levels;
  *it = schema.label_column;
  schema.label_column = column;
  schema.label_levels = levels;

  std::vector<AnnotatedRecord> records(dataset.records().begin(), dataset.records().end());
  for (auto& r : records) {
    const std::string value = r.extras[pos];
    r.extras[pos] = old_levels[static_cast<std::size_t>(r.label)];
    r.label = static_cast<int>(std::lower_bound(levels.begin(), levels.end(), value) - levels.begin());
  }
  return Dataset(std::move(schema), std::move(records));
}

Dataset binarize(const Dataset& dataset, const std::map<std::string, double>& thresholds,
                 const std::optional<GroupThresholds>& per_group) {
  const std::size_t n_aus = dataset.au_ids().size();
  std::vector<std::optional<double>> global(n_aus);
  for (const auto& [au, t] : thresholds) global[dataset.au_index(au)] = t;

  // per_au_level[au][level] -> threshold
  std::vector<std::vector<std::optional<double>>> group_t(n_aus);
  std::size_t attr = 0;
  if (per_group) {
    attr = dataset.attribute_index(per_group->attribute);
    const auto& levels = dataset.attributes()[attr].levels;
    for (const auto& [key, t] : per_group->values) {
      const auto au = dataset.au_index(key.first);
      const auto level = dataset.level_index(per_group->attribute, key.second);
      group_t[au].resize(levels.size());
      group_t[au][static_cast<std::size_t>(level)] = t;
    }
    for (std::size_t au = 0; au < n_aus; ++au) {
      if (group_t[au].empty()) continue;
      for (std::size_t l = 0; l < levels.size(); ++l) {
        if (!group_t[au][l]) {
          throw UnknownGroupLevel("per-group thresholds for " + dataset.au_ids()[au] +
                                  " do not cover level '" + levels[l] + "'");
        }
      }
    }
  }

  std::vector<AnnotatedRecord> records(dataset.records().begin(), dataset.records().end());
  for (auto& r : records) {
    for (std::size_t au = 0; au < n_aus; ++au) {
      std::optional<double> t = global[au];
      if (!group_t[au].empty()) t = group_t[au][static_cast<std::size_t>(r.groups[attr])];
      if (t) r.au_presence[au] = r.au_intensities[au] > *t ? 1 : 0;
    }
  }
  return dataset.with_records(std::move(records));
}

CellIndexer::CellIndexer(const Dataset& dataset, std::vector<std::string> aus)
    : aus_(std::move(aus)) {
  sort_au_ids(aus_);
  aus_.erase(std::unique(aus_.begin(), aus_.end()), aus_.end());
  if (aus_.empty() || aus_.size() > 16) throw UnknownAu("conditioning needs 1 to 16 AUs");
  for (const auto& au : aus_) positions_.push_back(dataset.au_index(au));
}

std::uint32_t CellIndexer::code(const AnnotatedRecord& record) const {
  std::uint32_t code = 0;
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    const auto bit = record.au_presence[positions_[i]];
    if (bit == kPresenceUnset) {
      throw NotBinarized("record '" + record.id + "' has no presence bit for " + aus_[i]);
    }
    code = (code << 1) | static_cast<std::uint32_t>(bit);
  }
  return code;
}

AuCellKey CellIndexer::key(std::uint32_t code) const {
  AuCellKey key;
  const std::size_t k = aus_.size();
  for (std::size_t i = 0; i < k; ++i) {
    key.bits.emplace_back(aus_[i], static_cast<std::uint8_t>((code >> (k - 1 - i)) & 1U));
  }
  return key;
}

}  // namespace aucal
