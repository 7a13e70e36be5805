#include "aucal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <regex>
#include <set>

#include "aucal/error.hpp"
#include "aucal/rng.hpp"
#include "aucal/stats.hpp"

namespace aucal::synth {
namespace {

constexpr double kDefaultPresenceThreshold = 2.5;
// Below this mass a truncated normal is numerically degenerate on [0, 5].
constexpr double kMinTruncatedMass = 1e-9;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double sample_truncated(const TruncatedNormal& tn, Rng& rng) {
  // Rejection sampling; validate() guarantees a non-negligible acceptance rate.
  for (;;) {
    const double x = tn.mean + tn.stddev * rng.normal();
    if (x >= kMinIntensity && x <= kMaxIntensity) return x;
  }
}

double presence_threshold(const SynthConfig& config, const std::string& au) {
  const auto it = config.presence_thresholds.find(au);
  return it == config.presence_thresholds.end() ? kDefaultPresenceThreshold : it->second;
}

double lookup(const std::map<std::string, double>& m, const std::string& key, double fallback) {
  const auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidConfig(message);
}

std::vector<AuModel> models_in_au_order(const SynthConfig& config) {
  auto models = config.au_models;
  std::stable_sort(models.begin(), models.end(),
                   [](const AuModel& a, const AuModel& b) { return au_less(a.au, b.au); });
  return models;
}

nlohmann::json tn_to_json(const TruncatedNormal& tn) {
  return {{"mean", tn.mean}, {"stddev", tn.stddev}};
}

TruncatedNormal tn_from_json(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("stddev").get<double>()};
}

// Integrates sigmoid(offset + sum w_d x_d) against the product density over
// the boxes [lo_d, hi_d] with a tensor-product Gauss-Legendre rule.
struct QuadDim {
  double lo, hi, weight;
  TruncatedNormal tn;
  double norm;  // mass of tn on [0, 5]
};

double integrate(const std::vector<QuadDim>& dims, std::size_t d, double offset) {
  if (d == dims.size()) return sigmoid(offset);
  const auto& rule = gauss_legendre_64();
  const auto& q = dims[d];
  const double half = 0.5 * (q.hi - q.lo);
  const double mid = 0.5 * (q.hi + q.lo);
  double total = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    const double x = mid + half * rule.nodes[k];
    const double density = normal_pdf((x - q.tn.mean) / q.tn.stddev) / (q.tn.stddev * q.norm);
    total += rule.weights[k] * density * integrate(dims, d + 1, offset + q.weight * x);
  }
  return half * total;
}

}  // namespace

const QuadratureRule& gauss_legendre_64() {
  static const QuadratureRule rule = [] {
    constexpr int n = 64;
    QuadratureRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < n / 2; ++i) {
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double step = p1 / dp;
        x -= step;
        if (std::abs(step) < 1e-16) break;
      }
      // Recompute the derivative at the converged root.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      r.nodes[i] = -x;
      r.nodes[n - 1 - i] = x;
      r.weights[i] = w;
      r.weights[n - 1 - i] = w;
    }
    return r;
  }();
  return rule;
}

double truncated_normal_mass(const TruncatedNormal& tn, double lo, double hi) {
  return stats::normal_cdf((hi - tn.mean) / tn.stddev) - stats::normal_cdf((lo - tn.mean) / tn.stddev);
}

double SynthConfig::latent_prob(const std::string& level) const {
  return lookup(composition_shift, level, latent_positive_prob);
}

double SynthConfig::shift(const std::string& level) const {
  return lookup(annotator.group_shift, level, 0.0);
}

void SynthConfig::validate() const {
  require(!group_attribute.empty(), "group_attribute is empty");
  require(!group_probs.empty(), "group_probs is empty");
  std::set<std::string> levels;
  double total = 0.0;
  for (const auto& [level, p] : group_probs) {
    require(levels.insert(level).second, "duplicate group level '" + level + "'");
    require(p >= 0.0 && p <= 1.0, "group probability of '" + level + "' outside [0,1]");
    total += p;
  }
  require(std::abs(total - 1.0) < 1e-9, "group probabilities do not sum to 1");
  require(latent_positive_prob >= 0.0 && latent_positive_prob <= 1.0,
          "latent_positive_prob outside [0,1]");
  for (const auto& [level, p] : composition_shift) {
    require(levels.contains(level), "composition_shift names unknown level '" + level + "'");
    require(p >= 0.0 && p <= 1.0, "composition_shift of '" + level + "' outside [0,1]");
  }
  for (const auto& [level, b] : annotator.group_shift) {
    require(levels.contains(level), "group_shift names unknown level '" + level + "'");
    require(std::isfinite(b), "group_shift of '" + level + "' is not finite");
  }
  require(std::isfinite(annotator.intercept), "annotator intercept is not finite");

  static const std::regex au_pattern("AU[0-9]+");
  std::set<std::string> aus;
  for (const auto& m : au_models) {
    require(std::regex_match(m.au, au_pattern), "invalid AU id '" + m.au + "'");
    require(aus.insert(m.au).second, "duplicate AU model '" + m.au + "'");
    for (const auto* tn : {&m.absent, &m.present}) {
      require(std::isfinite(tn->mean), "AU model mean of " + m.au + " is not finite");
      require(std::isfinite(tn->stddev) && tn->stddev > 0.0,
              "AU model stddev of " + m.au + " must be positive");
      require(truncated_normal_mass(*tn, kMinIntensity, kMaxIntensity) > kMinTruncatedMass,
              "AU model of " + m.au + " has no mass on [0,5]");
    }
  }
  for (const auto& [au, w] : annotator.weights) {
    require(aus.contains(au), "annotator weight for unmodelled AU '" + au + "'");
    require(std::isfinite(w), "annotator weight of " + au + " is not finite");
  }
  for (const auto& [au, t] : presence_thresholds) {
    require(aus.contains(au), "presence threshold for unmodelled AU '" + au + "'");
    require(std::isfinite(t), "presence threshold of " + au + " is not finite");
  }
  require(feature_dim >= au_models.size() + gender_leak_dims,
          "feature_dim is smaller than the AU and leak dimensions");
  require(std::isfinite(feature_noise_std) && feature_noise_std >= 0.0,
          "feature_noise_std must be non-negative");
  require(test_fraction >= 0.0 && test_fraction <= 1.0, "test_fraction outside [0,1]");
}

SynthConfig happy_config() {
  SynthConfig c;
  c.n = 20000;
  c.latent_positive_prob = 0.35;
  c.au_models = {
      {"AU6", {0.8, 0.7}, {2.8, 0.9}},
      {"AU12", {0.6, 0.7}, {3.0, 0.9}},
  };
  c.annotator.intercept = -5.5;
  c.annotator.weights = {{"AU6", 0.7}, {"AU12", 1.3}};
  c.annotator.group_shift = {{"F", 1.0}, {"M", 0.0}};
  c.presence_thresholds = {{"AU6", 1.8}, {"AU12", 1.8}};
  c.feature_dim = 24;
  c.feature_noise_std = 0.5;
  c.gender_leak_dims = 4;
  c.test_fraction = 0.2;
  c.seed = 7;
  return c;
}

SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c = happy_config();
  try {
    if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
    if (j.contains("group_attribute")) c.group_attribute = j.at("group_attribute").get<std::string>();
    if (j.contains("group_probs")) {
      c.group_probs.clear();
      const auto& g = j.at("group_probs");
      if (g.is_array()) {
        for (const auto& e : g) {
          c.group_probs.emplace_back(e.at("level").get<std::string>(), e.at("probability").get<double>());
        }
      } else {
        for (const auto& [level, p] : g.items()) c.group_probs.emplace_back(level, p.get<double>());
      }
    }
    if (j.contains("latent_positive_prob")) {
      c.latent_positive_prob = j.at("latent_positive_prob").get<double>();
    }
    if (j.contains("composition_shift")) {
      c.composition_shift = j.at("composition_shift").get<std::map<std::string, double>>();
    }
    if (j.contains("au_models")) {
      c.au_models.clear();
      for (const auto& m : j.at("au_models")) {
        c.au_models.push_back({m.at("au").get<std::string>(), tn_from_json(m.at("absent")),
                               tn_from_json(m.at("present"))});
      }
    }
    if (j.contains("annotator")) {
      const auto& a = j.at("annotator");
      c.annotator = Annotator{};
      if (a.contains("intercept")) c.annotator.intercept = a.at("intercept").get<double>();
      if (a.contains("weights")) c.annotator.weights = a.at("weights").get<std::map<std::string, double>>();
      if (a.contains("group_shift")) {
        c.annotator.group_shift = a.at("group_shift").get<std::map<std::string, double>>();
      }
    }
    if (j.contains("presence_thresholds")) {
      c.presence_thresholds = j.at("presence_thresholds").get<std::map<std::string, double>>();
    }
    if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<std::size_t>();
    if (j.contains("feature_noise_std")) c.feature_noise_std = j.at("feature_noise_std").get<double>();
    if (j.contains("gender_leak_dims")) c.gender_leak_dims = j.at("gender_leak_dims").get<std::size_t>();
    if (j.contains("test_fraction")) c.test_fraction = j.at("test_fraction").get<double>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const SynthConfig& c) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& [level, p] : c.group_probs) groups.push_back({{"level", level}, {"probability", p}});
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.au_models) {
    models.push_back({{"au", m.au}, {"absent", tn_to_json(m.absent)}, {"present", tn_to_json(m.present)}});
  }
  return {
      {"n", c.n},
      {"group_attribute", c.group_attribute},
      {"group_probs", groups},
      {"latent_positive_prob", c.latent_positive_prob},
      {"composition_shift", c.composition_shift},
      {"au_models", models},
      {"annotator",
       {{"intercept", c.annotator.intercept},
        {"weights", c.annotator.weights},
        {"group_shift", c.annotator.group_shift}}},
      {"presence_thresholds", c.presence_thresholds},
      {"feature_dim", c.feature_dim},
      {"feature_noise_std", c.feature_noise_std},
      {"gender_leak_dims", c.gender_leak_dims},
      {"test_fraction", c.test_fraction},
      {"seed", c.seed},
  };
}

SynthOutput generate(const SynthConfig& config) {
  config.validate();
  const auto models = models_in_au_order(config);
  const std::size_t n_aus = models.size();

  Dataset::Schema schema;
  for (const auto& m : models) schema.au_ids.push_back(m.au);
  Attribute attr{config.group_attribute, {}};
  for (const auto& [level, p] : config.group_probs) attr.levels.push_back(level);
  schema.attributes = {attr};
  schema.label_levels = {"0", "1"};
  schema.label_column = "label";
  schema.feature_dim = config.feature_dim;
  schema.extra_columns = {"fair_label", "latent"};

  std::vector<double> weights(n_aus);
  for (std::size_t a = 0; a < n_aus; ++a) weights[a] = lookup(config.annotator.weights, models[a].au, 0.0);

  // One counter-based stream per purpose and record, so changing one part
  // of the config leaves the draws of the others untouched.
  const Rng root(config.seed);
  const Rng group_root = root.child("group");
  const Rng latent_root = root.child("latent");
  const Rng au_root = root.child("au");
  const Rng label_root = root.child("label");
  const Rng feature_root = root.child("features");
  const Rng split_root = root.child("split");

  const int width = std::max<int>(6, static_cast<int>(std::to_string(config.n).size()));
  SynthOutput out;
  std::vector<AnnotatedRecord> records;
  records.reserve(config.n);
  out.fair_labels.reserve(config.n);
  out.latent.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    AnnotatedRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "s%0*zu", width, i);
    r.id = id;

    Rng g_rng = group_root.child(i);
    const double u_group = g_rng.uniform();
    std::size_t g = 0;
    double cum = 0.0;
    for (; g + 1 < config.group_probs.size(); ++g) {
      cum += config.group_probs[g].second;
      if (u_group < cum) break;
    }
    const std::string& level = config.group_probs[g].first;
    r.groups = {static_cast<int>(g)};

    Rng l_rng = latent_root.child(i);
    const int latent = l_rng.uniform() < config.latent_prob(level) ? 1 : 0;

    Rng a_rng = au_root.child(i);
    r.au_intensities.resize(n_aus);
    double eta = config.annotator.intercept;
    for (std::size_t a = 0; a < n_aus; ++a) {
      const auto& tn = latent ? models[a].present : models[a].absent;
      r.au_intensities[a] = sample_truncated(tn, a_rng);
      eta += weights[a] * r.au_intensities[a];
    }
    r.au_presence.assign(n_aus, kPresenceUnset);

    // A shared uniform couples the two labels: the fair label differs only
    // where the group shift moves the Bernoulli boundary.
    Rng y_rng = label_root.child(i);
    const double u = y_rng.uniform();
    const int biased = u < sigmoid(eta + config.shift(level)) ? 1 : 0;
    const int fair = u < sigmoid(eta) ? 1 : 0;
    r.label = biased;

    Rng f_rng = feature_root.child(i);
    r.features.resize(config.feature_dim);
    std::size_t f = 0;
    for (std::size_t a = 0; a < n_aus; ++a, ++f) {
      r.features[f] = r.au_intensities[a] + config.feature_noise_std * f_rng.normal();
    }
    for (std::size_t k = 0; k < config.gender_leak_dims; ++k, ++f) {
      r.features[f] = static_cast<double>(g) + config.feature_noise_std * f_rng.normal();
    }
    for (; f < config.feature_dim; ++f) r.features[f] = config.feature_noise_std * f_rng.normal();

    Rng s_rng = split_root.child(i);
    r.split = s_rng.uniform() < config.test_fraction ? Split::test : Split::train;
    r.extras = {std::to_string(fair), std::to_string(latent)};

    out.fair_labels.push_back(fair);
    out.latent.push_back(latent);
    records.push_back(std::move(r));
  }
  out.dataset = Dataset(std::move(schema), std::move(records));
  return out;
}

std::vector<CellExpectation> expected_cell_proportions(const SynthConfig& config,
                                                       const AuCellKey& cell) {
  config.validate();
  const auto models = models_in_au_order(config);
  std::map<std::string, int> bits;
  for (const auto& [au, bit] : cell.bits) {
    const bool known = std::any_of(models.begin(), models.end(),
                                   [&](const AuModel& m) { return m.au == au; });
    require(known, "cell names unmodelled AU '" + au + "'");
    require(bit <= 1, "cell presence bits must be 0 or 1");
    bits[au] = bit;
  }

  std::vector<CellExpectation> out;
  for (const auto& [level, p_group] : config.group_probs) {
    (void)p_group;
    const double pi = config.latent_prob(level);
    double num = 0.0, den = 0.0;
    for (int state = 0; state <= 1; ++state) {
      const double w_state = state ? pi : 1.0 - pi;
      if (w_state == 0.0) continue;
      // Dimensions entering the logistic need quadrature; AUs that only
      // restrict the cell contribute a closed-form probability factor.
      std::vector<QuadDim> dims;
      double factor = 1.0;
      for (const auto& m : models) {
        const auto& tn = state ? m.present : m.absent;
        const double norm = truncated_normal_mass(tn, kMinIntensity, kMaxIntensity);
        double lo = kMinIntensity, hi = kMaxIntensity;
        if (const auto b = bits.find(m.au); b != bits.end()) {
          const double t = std::clamp(presence_threshold(config, m.au), kMinIntensity, kMaxIntensity);
          if (b->second == 1) {
            lo = t;
          } else {
            hi = t;
          }
        }
        const double w = lookup(config.annotator.weights, m.au, 0.0);
        if (w != 0.0) {
          dims.push_back({lo, hi, w, tn, norm});
        } else {
          factor *= truncated_normal_mass(tn, lo, hi) / norm;
        }
      }
      double mass = factor;
      for (const auto& d : dims) mass *= truncated_normal_mass(d.tn, d.lo, d.hi) / d.norm;
      const double positive =
          factor * integrate(dims, 0, config.annotator.intercept + config.shift(level));
      num += w_state * positive;
      den += w_state * mass;
    }
    out.push_back({level, den > 0.0 ? num / den : 0.0, den});
  }
  return out;
}

}  // namespace aucal::synth
