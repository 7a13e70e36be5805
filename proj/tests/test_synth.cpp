#include <doctest.h>

#include <cmath>
#include <map>

#include "aucal/error.hpp"
#include "aucal/synth.hpp"

using namespace aucal;
using namespace aucal::synth;

namespace {

AuCellKey cell(int au6, int au12) {
  return {{{"AU6", static_cast<std::uint8_t>(au6)}, {"AU12", static_cast<std::uint8_t>(au12)}}};
}

SynthConfig small(std::size_t n = 2000) {
  auto c = happy_config();
  c.n = n;
  return c;
}

}  // namespace

TEST_CASE("Gauss-Legendre rule") {
  const auto& rule = gauss_legendre_64();
  REQUIRE(rule.nodes.size() == 64);
  // numpy.polynomial.legendre.leggauss(64)
  CHECK(rule.nodes[0] == doctest::Approx(-0.9993050417357722).epsilon(1e-15));
  CHECK(rule.weights[0] == doctest::Approx(0.0017832807216942152).epsilon(1e-13));
  CHECK(rule.nodes[31] == doctest::Approx(-0.02435029266342443).epsilon(1e-14));
  CHECK(rule.weights[31] == doctest::Approx(0.04869095700913975).epsilon(1e-13));
  double total = 0.0;
  for (double w : rule.weights) total += w;
  CHECK(total == doctest::Approx(2.0).epsilon(1e-14));
  // exact for polynomials up to degree 127
  for (int degree : {2, 10, 64, 126}) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 64; ++i) sum += rule.weights[i] * std::pow(rule.nodes[i], degree);
    CHECK(sum == doctest::Approx(2.0 / (degree + 1)).epsilon(1e-12));
  }
}

TEST_CASE("truncated normal mass") {
  // scipy.stats.norm cdf differences
  CHECK(truncated_normal_mass({0.8, 0.7}, 0.0, 1.8) == doctest::Approx(0.7968873200166074).epsilon(1e-13));
  CHECK(truncated_normal_mass({2.8, 0.9}, 1.8, 5.0) == doctest::Approx(0.8594859659726268).epsilon(1e-13));
  CHECK(truncated_normal_mass({1.0, 1.0}, -1.0, 7.0) == doctest::Approx(0.9772498670652331).epsilon(1e-13));
}

TEST_CASE("expected cell proportions match an adaptive-quadrature reference") {
  // scipy.integrate.dblquad over the truncated-normal mixture
  struct Ref {
    int au6, au12;
    double m, f, mass;
  };
  const Ref refs[] = {
      {1, 1, 0.6256615657924565, 0.7937260301605485, 0.2784526887452869},
      {0, 1, 0.2749500318217048, 0.44884041705123434, 0.07427909931708437},
      {1, 0, 0.10050251722145681, 0.21338106548549324, 0.08182691576437146},
      {0, 0, 0.02489474333197737, 0.06362174519640613, 0.5654412961732573},
  };
  const auto config = happy_config();
  double total_mass = 0.0;
  for (const auto& r : refs) {
    const auto e = expected_cell_proportions(config, cell(r.au6, r.au12));
    REQUIRE(e.size() == 2);
    CHECK(e[0].level == "M");
    CHECK(e[0].positive_rate == doctest::Approx(r.m).epsilon(1e-9));
    CHECK(e[1].positive_rate == doctest::Approx(r.f).epsilon(1e-9));
    CHECK(e[0].cell_probability == doctest::Approx(r.mass).epsilon(1e-12));
    CHECK(e[1].positive_rate > e[0].positive_rate);
    total_mass += e[0].cell_probability;
  }
  CHECK(total_mass == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quadrature agrees with sampling") {
  auto c = small(200000);
  c.feature_dim = 4;
  c.gender_leak_dims = 0;
  const auto out = generate(c);
  const auto ds = binarize(out.dataset, c.presence_thresholds);
  const CellIndexer idx(ds, {"AU6", "AU12"});
  std::map<std::pair<std::uint32_t, int>, std::pair<double, double>> nk;
  for (const auto& r : ds.records()) {
    auto& [n, k] = nk[{idx.code(r), r.groups[0]}];
    n += 1;
    k += r.label == 1;
  }
  for (std::uint32_t code = 0; code < 4; ++code) {
    const auto e = expected_cell_proportions(c, idx.key(code));
    for (int g = 0; g < 2; ++g) {
      const auto [n, k] = nk[{code, g}];
      const double p = e[g].positive_rate;
      const double se = std::sqrt(p * (1 - p) / n);
      CAPTURE(code);
      CAPTURE(g);
      CHECK(std::abs(k / n - p) < 3 * se);
    }
  }
}

TEST_CASE("no shift gives identical expectations") {
  auto c = happy_config();
  c.annotator.group_shift.clear();
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const auto e = expected_cell_proportions(c, cell(a, b));
      CHECK(e[0].positive_rate == e[1].positive_rate);
    }
  }
  // a partial cell marginalizes the other AU
  const auto marginal = expected_cell_proportions(c, {{{"AU12", 1}}});
  const auto joint1 = expected_cell_proportions(c, cell(1, 1));
  const auto joint0 = expected_cell_proportions(c, cell(0, 1));
  const double mixed = (joint1[0].positive_rate * joint1[0].cell_probability +
                        joint0[0].positive_rate * joint0[0].cell_probability) /
                       (joint1[0].cell_probability + joint0[0].cell_probability);
  CHECK(marginal[0].positive_rate == doctest::Approx(mixed).epsilon(1e-12));
  CHECK_THROWS_AS(expected_cell_proportions(c, {{{"AU9", 1}}}), InvalidConfig);
}

TEST_CASE("generation is deterministic and streams are separate") {
  const auto a = generate(small());
  const auto b = generate(small());
  CHECK(a.dataset == b.dataset);
  CHECK(a.fair_labels == b.fair_labels);

  auto noisy = small();
  noisy.feature_noise_std = 2.0;
  const auto c = generate(noisy);
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    REQUIRE(a.dataset[i].au_intensities == c.dataset[i].au_intensities);
    REQUIRE(a.dataset[i].label == c.dataset[i].label);
    REQUIRE(a.dataset[i].groups == c.dataset[i].groups);
  }
  CHECK(a.dataset[0].features != c.dataset[0].features);

  auto other = small();
  other.seed = 8;
  CHECK_FALSE(generate(other).dataset == a.dataset);
}

TEST_CASE("generated records follow the config") {
  auto c = small(5000);
  c.test_fraction = 0.25;
  const auto out = generate(c);
  const auto& ds = out.dataset;
  CHECK(ds.size() == 5000);
  CHECK(ds.feature_dim() == 24);
  CHECK(ds.au_ids() == std::vector<std::string>{"AU6", "AU12"});
  CHECK(ds.attribute("gender").levels == std::vector<std::string>{"M", "F"});
  CHECK(ds.schema().extra_columns == std::vector<std::string>{"fair_label", "latent"});
  std::size_t tests = 0, f = 0, flips_down = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& r = ds[i];
    tests += r.split == Split::test;
    f += r.groups[0] == 1;
    for (double v : r.au_intensities) CHECK((v >= 0.0 && v <= 5.0));
    CHECK(r.extras[0] == std::to_string(out.fair_labels[i]));
    // coupled draw: the shift can only raise the label
    flips_down += out.fair_labels[i] == 1 && r.label == 0;
  }
  CHECK(flips_down == 0);
  CHECK(std::abs(static_cast<double>(tests) / 5000 - 0.25) < 0.03);
  CHECK(std::abs(static_cast<double>(f) / 5000 - 0.5) < 0.03);
}

TEST_CASE("leak dimensions carry the group") {
  const auto out = generate(small(4000));
  const auto& ds = out.dataset;
  double mean[2] = {0, 0};
  double n[2] = {0, 0};
  for (const auto& r : ds.records()) {
    mean[r.groups[0]] += r.features[2];  // first leak dim after two AU dims
    n[r.groups[0]] += 1;
  }
  CHECK(mean[1] / n[1] - mean[0] / n[0] > 0.8);
}

TEST_CASE("config validation and json") {
  CHECK(generate(small(0)).dataset.empty());
  auto bad = happy_config();
  bad.au_models[0].present.stddev = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
  bad = happy_config();
  bad.group_probs = {{"M", 0.7}, {"F", 0.7}};
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
  bad = happy_config();
  bad.latent_positive_prob = 1.5;
  CHECK_THROWS_AS(generate(bad), InvalidConfig);

  const auto c = happy_config();
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(generate(small(50)).dataset == generate(config_from_json(config_to_json(small(50)))).dataset);
  const auto partial = config_from_json(nlohmann::json{{"n", 10}, {"seed", 3}});
  CHECK(partial.n == 10);
  CHECK(partial.au_models.size() == 2);
  CHECK_THROWS_AS(config_from_json(nlohmann::json{{"n", "ten"}}), InvalidConfig);
}
