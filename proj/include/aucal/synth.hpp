#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aucal/dataset.hpp"

namespace aucal::synth {

// Normal distribution truncated to the AU intensity range [0, 5].
struct TruncatedNormal {
  double mean = 0.0;
  double stddev = 1.0;
};

// Intensity model of one AU for each latent expression state.
struct AuModel {
  std::string au;
  TruncatedNormal absent;   // latent state 0
  TruncatedNormal present;  // latent state 1
};

// Biased annotator: P(label = 1) = sigmoid(intercept + sum w * intensity +
// group_shift[level]). The fair label drops the group shift.
struct Annotator {
  double intercept = 0.0;
  std::map<std::string, double> weights;
  std::map<std::string, double> group_shift;
};

struct SynthConfig {
  std::size_t n = 20000;
  std::string group_attribute = "gender";
  // Declared level order and sampling probabilities.
  std::vector<std::pair<std::string, double>> group_probs{{"M", 0.5}, {"F", 0.5}};
  double latent_positive_prob = 0.35;
  // Per-level override of latent_positive_prob (data composition bias).
  std::map<std::string, double> composition_shift;
  std::vector<AuModel> au_models;
  Annotator annotator;
  // Binarization thresholds that define the conditioning cells.
  std::map<std::string, double> presence_thresholds;
  std::size_t feature_dim = 24;
  double feature_noise_std = 0.5;
  std::size_t gender_leak_dims = 4;
  double test_fraction = 0.0;
  std::uint64_t seed = 7;

  void validate() const;  // throws InvalidConfig
  double latent_prob(const std::string& level) const;
  double shift(const std::string& level) const;
};

// Two-AU happiness model (AU6, AU12) with a +1.0 annotation shift for "F".
SynthConfig happy_config();

SynthConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const SynthConfig& config);

struct SynthOutput {
  // Biased labels in the label column; "fair_label" and "latent" are carried
  // as extra columns.
  Dataset dataset;
  std::vector<int> fair_labels;
  std::vector<int> latent;
};

SynthOutput generate(const SynthConfig& config);

struct CellExpectation {
  std::string level;
  double positive_rate = 0.0;  // P(label = 1 | cell, level)
  double cell_probability = 0.0;  // P(cell | level)
};

// Expected positive proportion of the biased annotator per level inside a
// cell defined by presence_thresholds, by Gauss-Legendre quadrature over the
// truncated-normal intensity model.
std::vector<CellExpectation> expected_cell_proportions(const SynthConfig& config,
                                                       const AuCellKey& cell);

// 64-point Gauss-Legendre rule on [-1, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& gauss_legendre_64();

double truncated_normal_mass(const TruncatedNormal& tn, double lo, double hi);

}  // namespace aucal::synth
