#include "aucal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "aucal/error.hpp"
#include "aucal/rng.hpp"

namespace aucal::report {
namespace {

void dump(const Json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {  // std::map: sorted keys
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(key).dump() + ": ";
        dump(value, out, indent + 2);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      const bool flat = std::none_of(j.begin(), j.end(),
                                     [](const Json& e) { return e.is_structured(); });
      out += flat ? "[" : "[\n";
      bool first = true;
      for (const auto& value : j) {
        if (!first) out += flat ? ", " : ",\n";
        first = false;
        if (!flat) out += pad;
        dump(value, out, indent + 2);
      }
      out += flat ? "]" : "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

Json optional_double(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw InvalidConfig("model matrix '" + name + "' has the wrong number of rows");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InvalidConfig("model matrix '" + name + "' has the wrong number of columns");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index size, const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw InvalidConfig("model vector '" + name + "' has the wrong length");
  }
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string canonical_dump(const Json& j) {
  std::string out;
  dump(j, out, 0);
  out += "\n";
  return out;
}

std::string bytes_digest(std::string_view bytes) { return "fnv1a64:" + hex64(fnv1a64(bytes)); }

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return bytes_digest(ss.str());
}

Json to_json(const Header& header) {
  return {{"tool", kToolName},
          {"version", kToolVersion},
          {"command", header.command},
          {"seed", header.seed},
          {"inputs", header.inputs}};
}

Json to_json(const stats::ThresholdFit& fit) {
  return {{"threshold", fit.threshold}, {"accuracy", fit.accuracy}};
}

Json to_json(const calibrate::ParityCheck& check) {
  Json levels = Json::object();
  for (std::size_t i = 0; i < check.levels.size(); ++i) {
    levels[check.levels[i]] = {{"accuracy", check.accuracy[i]},
                               {"f1", check.f1[i]},
                               {"correct", check.correct[i]},
                               {"count", check.count[i]}};
  }
  return {{"levels", levels}, {"p_value", check.p_value}, {"pairwise_p", check.pairwise_p}};
}

Json to_json(const calibrate::CalibrationResult& r) {
  return {{"au", r.au_id},
          {"global_threshold", r.global_threshold},
          {"global_accuracy", r.global_accuracy},
          {"raw_accuracy", r.raw_accuracy},
          {"raw_parity_p_value", r.raw_parity_p_value},
          {"per_group_thresholds", r.per_group_thresholds},
          {"per_group_accuracy", r.per_group_accuracy},
          {"per_group_f1", r.per_group_f1},
          {"parity_p_value", r.parity_p_value},
          {"degenerate_levels", r.degenerate_levels}};
}

Json to_json(const audit::ChiSquareResult& r) {
  return {{"statistic", r.statistic}, {"dof", r.dof}, {"p_value", r.p_value}};
}

Json to_json(const audit::LogisticFit& fit, const std::vector<std::string>& terms) {
  Json coefficients = Json::object();
  for (Eigen::Index i = 0; i < fit.coefficients.size(); ++i) {
    const auto name = static_cast<std::size_t>(i) < terms.size() ? terms[static_cast<std::size_t>(i)]
                                                                 : "x" + std::to_string(i);
    coefficients[name] = {{"estimate", fit.coefficients[i]},
                          {"std_error", fit.standard_errors[i]},
                          {"z", fit.wald_z[i]},
                          {"p_value", fit.p_values[i]}};
  }
  return {{"terms", terms},
          {"coefficients", coefficients},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"log_likelihood", fit.log_likelihood},
          {"score_norm", fit.score_norm}};
}

Json to_json(const audit::BiasReport& report) {
  Json cells = Json::array();
  for (const auto& cell : report.cells) {
    Json groups = Json::object();
    for (const auto& g : cell.groups) {
      groups[g.level] = {{"count", g.count},
                         {"positives", g.positives},
                         {"proportion", optional_double(g.proportion)}};
    }
    cells.push_back({{"condition", cell.condition},
                     {"groups", groups},
                     {"delta", optional_double(cell.delta)},
                     {"status", std::string(audit::to_string(cell.status))},
                     {"test", cell.test ? to_json(*cell.test) : Json(nullptr)},
                     {"merged_levels", cell.merged_levels},
                     {"highlighted_level",
                      cell.highlighted_level ? Json(*cell.highlighted_level) : Json(nullptr)}});
  }
  Json out = {{"group_attribute", report.group_attribute},
              {"levels", report.levels},
              {"target_label", report.target_label},
              {"label_column", report.label_column},
              {"mode", report.mode},
              {"conditioning", report.conditioning_aus},
              {"min_expected", report.min_expected},
              {"cells", cells}};
  out["logistic"] = report.logistic ? to_json(*report.logistic, report.logistic_terms) : Json(nullptr);
  out["logistic_error"] = report.logistic_error ? Json(*report.logistic_error) : Json(nullptr);
  return out;
}

Json to_json(const std::vector<audit::BiasCurve>& curves) {
  Json out = Json::array();
  for (const auto& c : curves) {
    out.push_back({{"au", c.au},
                   {"level", c.level},
                   {"grid", c.grid},
                   {"probability", c.probability},
                   {"lower", c.lower},
                   {"upper", c.upper}});
  }
  return out;
}

Json to_json(const relabel::FlipLog& log) {
  Json flips = Json::array();
  for (const auto& f : log.flips) {
    flips.push_back({{"id", f.id},
                     {"cell", f.cell},
                     {"level", f.level},
                     {"direction", std::string(relabel::to_string(f.direction))}});
  }
  Json cells = Json::array();
  for (const auto& c : log.cells) {
    cells.push_back({{"cell", c.cell},
                     {"level", c.level},
                     {"count", c.count},
                     {"positives_before", c.positives_before},
                     {"positives_after", c.positives_after},
                     {"target_proportion", c.target_proportion},
                     {"planned_flips", c.planned_flips},
                     {"deficit", c.deficit}});
  }
  return {{"flip_count", log.flips.size()}, {"flips", flips}, {"cells", cells}};
}

Json to_json(const metrics::EvalResult& r) {
  return {{"threshold", r.threshold},
          {"accuracy", r.accuracy},
          {"f1", r.f1},
          {"per_group_positive_rate", r.per_group_positive_rate},
          {"disc_signed", r.disc_signed},
          {"disc_abs", r.disc_abs}};
}

Json to_json(const metrics::Summary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}};
}

Json to_json(const aucfer::TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"margin", c.margin},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"d_emb", c.d_emb},
          {"seed", c.seed},
          {"max_triplets_per_anchor", c.max_triplets_per_anchor},
          {"reduction", c.reduction == aucfer::TripletReduction::sum ? "sum" : "mean"},
          {"conditioning", c.conditioning},
          {"target_label", c.target_label}};
}

aucfer::TrainConfig train_config_from_json(const Json& j, aucfer::TrainConfig c) {
  try {
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("margin")) c.margin = j.at("margin").get<double>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("d_emb")) c.d_emb = j.at("d_emb").get<std::size_t>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("max_triplets_per_anchor")) {
      c.max_triplets_per_anchor = j.at("max_triplets_per_anchor").get<std::size_t>();
    }
    if (j.contains("reduction")) {
      const auto r = j.at("reduction").get<std::string>();
      if (r == "sum") {
        c.reduction = aucfer::TripletReduction::sum;
      } else if (r == "mean") {
        c.reduction = aucfer::TripletReduction::mean;
      } else {
        throw InvalidConfig("unknown triplet reduction '" + r + "'");
      }
    }
    if (j.contains("conditioning")) c.conditioning = j.at("conditioning").get<std::vector<std::string>>();
    if (j.contains("target_label")) c.target_label = j.at("target_label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

Json model_to_json(const aucfer::ModelParams& params, const aucfer::TrainConfig& config,
                   const aucfer::TrainResult* trace) {
  Json out = {{"input_dim", params.input_dim()},
              {"embedding_dim", params.embedding_dim()},
              {"classes", params.class_count()},
              {"w1", matrix_json(params.w1)},
              {"b1", vector_json(params.b1)},
              {"w2", matrix_json(params.w2)},
              {"b2", vector_json(params.b2)},
              {"config", to_json(config)}};
  if (trace) {
    out["loss_trace"] = trace->loss_trace;
    out["softmax_trace"] = trace->softmax_trace;
    out["triplet_trace"] = trace->triplet_trace;
    out["triplet_count_trace"] = trace->triplet_count_trace;
    out["starved_batches"] = trace->starved_batches;
  }
  return out;
}

LoadedModel model_from_json(const Json& j) {
  LoadedModel m;
  try {
    const auto d_in = j.at("input_dim").get<Eigen::Index>();
    const auto d_emb = j.at("embedding_dim").get<Eigen::Index>();
    const auto classes = j.at("classes").get<Eigen::Index>();
    if (d_in < 1 || d_emb < 1 || classes < 1) throw InvalidConfig("model dimensions must be positive");
    m.params.w1 = matrix_from_json(j.at("w1"), d_in, d_emb, "w1");
    m.params.b1 = vector_from_json(j.at("b1"), d_emb, "b1");
    m.params.w2 = matrix_from_json(j.at("w2"), d_emb, classes, "w2");
    m.params.b2 = vector_from_json(j.at("b2"), classes, "b2");
    if (j.contains("config")) m.config = train_config_from_json(j.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("model: ") + e.what());
  }
  if (!m.params.all_finite()) throw InvalidConfig("model has non-finite parameters");
  return m;
}

void write_bias_csv(const audit::BiasReport& report, std::ostream& out) {
  out << "condition";
  for (const auto& level : report.levels) {
    out << ',' << csv_field("n_" + level) << ',' << csv_field("positives_" + level) << ','
        << csv_field("p_" + level);
  }
  out << ",delta,chi2,dof,p_value,status\n";
  std::vector<const audit::CellReport*> rows;
  for (const auto& c : report.cells) rows.push_back(&c);
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto* a, const auto* b) { return a->key < b->key; });
  for (const auto* c : rows) {
    out << csv_field(c->condition);
    for (const auto& level : report.levels) {
      const auto it = std::find_if(c->groups.begin(), c->groups.end(),
                                   [&](const auto& g) { return g.level == level; });
      if (it == c->groups.end()) {
        out << ",0,0,";
        continue;
      }
      out << ',' << it->count << ',' << it->positives << ','
          << (it->proportion ? format_double(*it->proportion) : "");
    }
    out << ',' << (c->delta ? format_double(*c->delta) : "");
    if (c->test) {
      out << ',' << format_double(c->test->statistic) << ',' << c->test->dof << ','
          << format_double(c->test->p_value);
    } else {
      out << ",,,";
    }
    out << ',' << audit::to_string(c->status) << '\n';
  }
}

void write_curves_csv(const std::vector<audit::BiasCurve>& curves, std::ostream& out) {
  std::vector<std::string> aus, levels;
  for (const auto& c : curves) {
    if (std::find(aus.begin(), aus.end(), c.au) == aus.end()) aus.push_back(c.au);
    if (std::find(levels.begin(), levels.end(), c.level) == levels.end()) levels.push_back(c.level);
  }
  out << "au,intensity";
  for (const auto& level : levels) {
    out << ',' << csv_field(level) << ',' << csv_field(level + "_lower") << ','
        << csv_field(level + "_upper");
  }
  out << '\n';
  for (const auto& au : aus) {
    std::vector<const audit::BiasCurve*> per_level(levels.size(), nullptr);
    std::size_t points = 0;
    for (const auto& c : curves) {
      if (c.au != au) continue;
      const auto l = static_cast<std::size_t>(
          std::find(levels.begin(), levels.end(), c.level) - levels.begin());
      per_level[l] = &c;
      points = std::max(points, c.grid.size());
    }
    for (std::size_t i = 0; i < points; ++i) {
      double x = 0.0;
      for (const auto* c : per_level) {
        if (c && i < c->grid.size()) x = c->grid[i];
      }
      out << au << ',' << format_double(x);
      for (const auto* c : per_level) {
        if (c && i < c->probability.size()) {
          out << ',' << format_double(c->probability[i]) << ',' << format_double(c->lower[i]) << ','
              << format_double(c->upper[i]);
        } else {
          out << ",,,";
        }
      }
      out << '\n';
    }
  }
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidConfig("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  write_text_file(path, canonical_dump(j));
}

}  // namespace aucal::report
