#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aucal {

inline constexpr double kMinIntensity = 0.0;
inline constexpr double kMaxIntensity = 5.0;
inline constexpr std::int8_t kPresenceUnset = -1;

enum class Split : std::uint8_t { train, test };

std::string_view to_string(Split split);

// Orders AU ids by their numeric suffix ("AU6" < "AU12"), falling back to
// plain string comparison for ids without one.
bool au_less(std::string_view a, std::string_view b);
void sort_au_ids(std::vector<std::string>& ids);

// One labeled face. Per-AU and per-attribute fields are stored positionally;
// Dataset holds the names (au_ids, attributes) that give them meaning.
struct AnnotatedRecord {
  std::string id;
  std::vector<double> au_intensities;
  std::vector<std::int8_t> au_presence;  // kPresenceUnset until binarized
  int label = 0;                         // index into Dataset::label_levels
  std::vector<int> groups;               // level index per attribute
  std::vector<double> features;
  Split split = Split::train;
  std::vector<std::string> extras;  // unrecognized CSV columns, passed through

  bool operator==(const AnnotatedRecord&) const = default;
};

struct Attribute {
  std::string name;
  std::vector<std::string> levels;

  bool operator==(const Attribute&) const = default;
};

// Identifies a conditioning cell: (AU id, presence bit) pairs in AU order.
struct AuCellKey {
  std::vector<std::pair<std::string, std::uint8_t>> bits;

  std::string to_string() const;
  auto operator<=>(const AuCellKey&) const = default;
};

class Dataset {
 public:
  struct Schema {
    std::vector<std::string> au_ids;
    std::vector<Attribute> attributes;
    std::vector<std::string> label_levels;
    std::string label_column = "label";
    std::size_t feature_dim = 0;
    std::vector<std::string> extra_columns;

    bool operator==(const Schema&) const = default;
  };

  Dataset() = default;
  // Validates every record against the schema.
  Dataset(Schema schema, std::vector<AnnotatedRecord> records);

  // A new dataset with the same schema and the given records.
  Dataset with_records(std::vector<AnnotatedRecord> records) const;
  Dataset with_schema(Schema schema) const;

  const Schema& schema() const { return schema_; }
  std::span<const AnnotatedRecord> records() const { return records_; }
  const AnnotatedRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const std::vector<std::string>& au_ids() const { return schema_.au_ids; }
  const std::vector<Attribute>& attributes() const { return schema_.attributes; }
  const std::vector<std::string>& label_levels() const { return schema_.label_levels; }
  std::size_t feature_dim() const { return schema_.feature_dim; }

  std::size_t au_index(std::string_view au) const;  // throws UnknownAu
  std::size_t attribute_index(std::string_view name) const;  // throws UnknownAttribute
  const Attribute& attribute(std::string_view name) const;
  int level_index(std::string_view attribute, std::string_view level) const;

  // Class index treated as the positive target. A 0/1 label column maps any
  // target name to "1". Returns -1 when the class never occurs.
  int target_class(std::string_view target) const;
  bool is_positive(const AnnotatedRecord& r, int target_class) const {
    return r.label == target_class;
  }

  bool operator==(const Dataset&) const = default;

 private:
  Schema schema_;
  std::vector<AnnotatedRecord> records_;
};

struct CsvSchema {
  std::string id_column = "id";
  std::string label_column = "label";
  bool label_required = true;
  std::vector<std::string> group_columns{"gender"};
  std::vector<std::string> optional_group_columns{"age_group", "race"};
  std::vector<std::string> required_aus;
  // Declared level order per attribute; undeclared attributes sort levels.
  std::map<std::string, std::vector<std::string>> level_order;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t dropped_missing_au = 0;
  std::vector<std::string> unrecognized_columns;
};

struct LoadedDataset {
  Dataset dataset;
  LoadReport report;
};

LoadedDataset load_dataset(const std::filesystem::path& path, const CsvSchema& schema = {});
LoadedDataset parse_dataset(std::istream& in, const CsvSchema& schema = {});
void write_csv(const Dataset& dataset, std::ostream& out);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

// Swaps the label column with an extra column (e.g. "fair_label"); the old
// labels become an extra column under their previous name. Throws
// MissingColumn.
Dataset with_label_column(const Dataset& dataset, const std::string& column);

// Per-group thresholds for one attribute, keyed by (AU id, level).
struct GroupThresholds {
  std::string attribute;
  std::map<std::pair<std::string, std::string>, double> values;
};

// Presence = intensity > threshold. A per-group threshold, when given for an
// AU, takes precedence over the global one.
Dataset binarize(const Dataset& dataset, const std::map<std::string, double>& thresholds,
                 const std::optional<GroupThresholds>& per_group = std::nullopt);

// Maps records to conditioning cells over a set of AUs (sorted into AU
// order). The first AU is the most significant bit of the cell code, so code
// order equals lexicographic key order.
class CellIndexer {
 public:
  CellIndexer(const Dataset& dataset, std::vector<std::string> aus);

  const std::vector<std::string>& aus() const { return aus_; }
  std::size_t cell_count() const { return std::size_t{1} << aus_.size(); }
  // Throws NotBinarized when a conditioning AU has no presence bit.
  std::uint32_t code(const AnnotatedRecord& record) const;
  AuCellKey key(std::uint32_t code) const;

 private:
  std::vector<std::string> aus_;
  std::vector<std::size_t> positions_;
};

}  // namespace aucal
