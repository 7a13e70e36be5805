#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aucal/aucfer.hpp"
#include "aucal/audit.hpp"
#include "aucal/calibrate.hpp"
#include "aucal/metrics.hpp"
#include "aucal/relabel.hpp"

namespace aucal::report {

inline constexpr const char* kToolName = "aucal";
inline constexpr const char* kToolVersion = "0.1.0";

using Json = nlohmann::json;

// Canonical text: keys sorted, two-space indentation with arrays of scalars
// kept on one line, floating point numbers printed with 17 significant
// digits, non-finite numbers as null, one trailing newline.
std::string canonical_dump(const Json& j);

// Hex FNV-1a-64 digest of a file's bytes; throws IoError.
std::string file_digest(const std::filesystem::path& path);
std::string bytes_digest(std::string_view bytes);

struct Header {
  std::string command;
  std::uint64_t seed = 0;
  // Digest of every input file, keyed by role ("data", "model", ...).
  std::map<std::string, std::string> inputs;
};

Json to_json(const Header& header);

Json to_json(const stats::ThresholdFit& fit);
Json to_json(const calibrate::ParityCheck& check);
Json to_json(const calibrate::CalibrationResult& result);
Json to_json(const audit::ChiSquareResult& result);
Json to_json(const audit::LogisticFit& fit, const std::vector<std::string>& terms);
Json to_json(const audit::BiasReport& report);
Json to_json(const std::vector<audit::BiasCurve>& curves);
Json to_json(const relabel::FlipLog& log);
Json to_json(const metrics::EvalResult& result);
Json to_json(const metrics::Summary& summary);
Json to_json(const aucfer::TrainConfig& config);

// model.json: dimensions, every parameter matrix (row-major nested arrays),
// the training config and the loss traces.
Json model_to_json(const aucfer::ModelParams& params, const aucfer::TrainConfig& config,
                   const aucfer::TrainResult* trace = nullptr);

struct LoadedModel {
  aucfer::ModelParams params;
  aucfer::TrainConfig config;
};
LoadedModel model_from_json(const Json& j);  // throws InvalidConfig
aucfer::TrainConfig train_config_from_json(const Json& j, aucfer::TrainConfig base = {});

// One row per cell, sorted by cell key: condition, per-level count,
// positives and proportion, delta, chi2, dof, p_value, status.
void write_bias_csv(const audit::BiasReport& report, std::ostream& out);
// One row per (AU, intensity) with probability and band columns per level.
void write_curves_csv(const std::vector<audit::BiasCurve>& curves, std::ostream& out);

std::string format_double(double v);  // %.17g

Json read_json_file(const std::filesystem::path& path);  // IoError / InvalidConfig
void write_text_file(const std::filesystem::path& path, const std::string& text);  // IoError
void write_json_file(const std::filesystem::path& path, const Json& j);

}  // namespace aucal::report
