#include "aucal/aucfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "aucal/error.hpp"

namespace aucal::aucfer {
namespace {

constexpr std::size_t kClasses = 2;

RowMatrix gather_rows(const RowMatrix& source, std::span<const std::size_t> rows) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = source.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

struct TrainingData {
  Batch all;
};

TrainingData training_data(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.feature_dim() == 0) throw NoFeatures("dataset has no feature columns");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].split == Split::train) rows.push_back(i);
  }
  if (rows.empty()) throw EmptyTrainSplit("no training records");
  return {make_batch(dataset, rows, config.conditioning, config.target_label)};
}

void sgd_step(ModelParams& params, const ModelParams& grads, double lr) {
  params.w1 -= lr * grads.w1;
  params.b1 -= lr * grads.b1;
  params.w2 -= lr * grads.w2;
  params.b2 -= lr * grads.b2;
}

// Runs the shared epoch/batch schedule; `step` returns the loss breakdown of
// one batch and the gradients to apply.
template <typename StepFn>
TrainResult run_schedule(const Dataset& dataset, const TrainConfig& config, StepFn step) {
  const auto data = training_data(dataset, config);
  const std::size_t n = data.all.labels.size();
  TrainResult result;
  result.params = initialize(dataset.feature_dim(), config.d_emb, kClasses, config.seed);
  const Rng root(config.seed);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = stratified_order(data.all.keys, root.child("shuffle").child(epoch));
    Rng mining = root.child("mine").child(epoch);
    double total = 0.0, softmax = 0.0, triplet = 0.0;
    std::size_t triplets = 0, batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      Batch batch;
      batch.features = gather_rows(data.all.features, rows);
      for (auto r : rows) {
        batch.labels.push_back(data.all.labels[r]);
        batch.keys.push_back(data.all.keys[r]);
      }
      const LossBreakdown lb = step(result.params, batch, mining);
      sgd_step(result.params, lb.grads, config.learning_rate);
      total += lb.total;
      softmax += lb.softmax;
      triplet += lb.triplet;
      triplets += lb.triplet_count;
      if (config.lambda != 0.0 && lb.triplet_count == 0) ++result.starved_batches;
      ++batches;
    }
    const auto denom = static_cast<double>(batches);
    result.loss_trace.push_back(total / denom);
    result.softmax_trace.push_back(softmax / denom);
    result.triplet_trace.push_back(triplet / denom);
    result.triplet_count_trace.push_back(triplets);
  }
  return result;
}

}  // namespace

ModelParams ModelParams::zeros(std::size_t d_in, std::size_t d_emb, std::size_t n_classes) {
  const auto in = static_cast<Eigen::Index>(d_in);
  const auto emb = static_cast<Eigen::Index>(d_emb);
  const auto cls = static_cast<Eigen::Index>(n_classes);
  return {Eigen::MatrixXd::Zero(in, emb), Eigen::VectorXd::Zero(emb),
          Eigen::MatrixXd::Zero(emb, cls), Eigen::VectorXd::Zero(cls)};
}

std::size_t ModelParams::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

bool ModelParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  flat.insert(flat.end(), w1.data(), w1.data() + w1.size());
  flat.insert(flat.end(), b1.data(), b1.data() + b1.size());
  flat.insert(flat.end(), w2.data(), w2.data() + w2.size());
  flat.insert(flat.end(), b2.data(), b2.data() + b2.size());
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionMismatch("flat parameter size mismatch");
  auto it = flat.begin();
  std::copy_n(it, w1.size(), w1.data());
  it += w1.size();
  std::copy_n(it, b1.size(), b1.data());
  it += b1.size();
  std::copy_n(it, w2.size(), w2.data());
  it += w2.size();
  std::copy_n(it, b2.size(), b2.data());
}

bool ModelParams::operator==(const ModelParams& other) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
  };
  return same(w1, other.w1) && same(b1, other.b1) && same(w2, other.w2) && same(b2, other.b2);
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be >= 0");
  if (!(margin >= 0.0)) throw InvalidConfig("margin must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidConfig("learning rate must be positive");
  if (batch_size < 2) throw InvalidConfig("batch size must be at least 2");
  if (epochs < 1) throw InvalidConfig("epochs must be positive");
  if (d_emb < 1) throw InvalidConfig("embedding dimension must be positive");
  if (max_triplets_per_anchor < 1) throw InvalidConfig("triplet cap must be positive");
  if (conditioning.empty()) throw InvalidConfig("conditioning AU set is empty");
}

TripletSet mine_triplets(std::span<const std::uint32_t> keys, std::size_t cap, Rng& rng) {
  TripletSet set;
  const std::size_t n = keys.size();
  std::map<std::uint32_t, std::vector<int>> by_key;
  for (std::size_t i = 0; i < n; ++i) by_key[keys[i]].push_back(static_cast<int>(i));
  std::vector<int> positives, negatives;
  for (std::size_t i = 0; i < n; ++i) {
    positives.clear();
    negatives.clear();
    for (int j : by_key[keys[i]]) {
      if (j != static_cast<int>(i)) positives.push_back(j);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (keys[k] != keys[i]) negatives.push_back(static_cast<int>(k));
    }
    const std::uint64_t valid = positives.size() * negatives.size();
    if (valid == 0) continue;
    const auto anchor = static_cast<int>(i);
    if (valid <= cap) {
      for (int j : positives) {
        for (int k : negatives) set.triples.push_back({anchor, j, k});
      }
    } else {
      ++set.capped_anchors;
      for (auto flat : rng.sample_indices(valid, cap)) {
        set.triples.push_back({anchor, positives[flat / negatives.size()],
                               negatives[flat % negatives.size()]});
      }
    }
  }
  set.starved = set.triples.empty();
  return set;
}

TripletSet mine_triplets(std::span<const AuCellKey> keys, std::size_t cap, Rng& rng) {
  std::map<AuCellKey, std::uint32_t> codes;
  for (const auto& key : keys) codes.emplace(key, 0);
  std::uint32_t next = 0;
  for (auto& [key, code] : codes) code = next++;
  std::vector<std::uint32_t> coded;
  coded.reserve(keys.size());
  for (const auto& key : keys) coded.push_back(codes.at(key));
  return mine_triplets(coded, cap, rng);
}

LossGrad triplet_loss(const RowMatrix& embeddings, const TripletSet& triplets, double margin,
                      TripletReduction reduction) {
  LossGrad out;
  out.grad = RowMatrix::Zero(embeddings.rows(), embeddings.cols());
  const auto n = static_cast<int>(embeddings.rows());
  for (const auto& t : triplets.triples) {
    for (int idx : {t.anchor, t.positive, t.negative}) {
      if (idx < 0 || idx >= n) throw IndexOutOfRange("triplet index out of range");
    }
  }
  if (triplets.empty()) return out;
  const double scale =
      reduction == TripletReduction::mean ? 1.0 / static_cast<double>(triplets.size()) : 1.0;
  for (const auto& t : triplets.triples) {
    const auto a = embeddings.row(t.anchor);
    const auto p = embeddings.row(t.positive);
    const auto q = embeddings.row(t.negative);
    const double hinge = (a - p).squaredNorm() - (a - q).squaredNorm() + margin;
    if (hinge <= 0.0) continue;
    out.loss += scale * hinge;
    out.grad.row(t.anchor) += (2.0 * scale) * (q - p);
    out.grad.row(t.positive) += (2.0 * scale) * (p - a);
    out.grad.row(t.negative) += (2.0 * scale) * (a - q);
  }
  return out;
}

LossGrad cross_entropy(const RowMatrix& logits, std::span<const int> labels) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index c = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw LengthMismatch("logits/labels mismatch");
  if (n == 0) throw EmptyInput("empty batch");
  for (int y : labels) {
    if (y < 0 || y >= c) throw InvalidLabel("label out of range");
  }
  LossGrad out;
  out.grad.resize(n, c);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = logits.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) sum += std::exp(logits(i, j) - m);
    const double lse = m + std::log(sum);
    const int y = labels[static_cast<std::size_t>(i)];
    out.loss += lse - logits(i, y);
    for (Eigen::Index j = 0; j < c; ++j) {
      out.grad(i, j) = (std::exp(logits(i, j) - lse) - (j == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  out.loss *= inv_n;
  return out;
}

ForwardPass forward(const ModelParams& params, const RowMatrix& features) {
  if (static_cast<std::size_t>(features.cols()) != params.input_dim()) {
    throw DimensionMismatch("feature width does not match the model input");
  }
  ForwardPass fp;
  fp.pre_activation = features * params.w1;
  fp.pre_activation.rowwise() += params.b1.transpose();
  fp.embedding = fp.pre_activation.cwiseMax(0.0);
  fp.logits = fp.embedding * params.w2;
  fp.logits.rowwise() += params.b2.transpose();
  return fp;
}

LossBreakdown total_loss(const ModelParams& params, const Batch& batch, const TrainConfig& config,
                         const TripletSet& triplets) {
  const ForwardPass fp = forward(params, batch.features);
  const LossGrad ce = cross_entropy(fp.logits, batch.labels);

  LossBreakdown out;
  out.softmax = ce.loss;
  out.total = ce.loss;
  out.grads.w2 = fp.embedding.transpose() * ce.grad;
  out.grads.b2 = ce.grad.colwise().sum().transpose();
  RowMatrix d_embedding = ce.grad * params.w2.transpose();
  if (config.lambda != 0.0) {
    const LossGrad trp = triplet_loss(fp.embedding, triplets, config.margin, config.reduction);
    out.triplet = trp.loss;
    out.triplet_count = triplets.size();
    out.total = ce.loss + config.lambda * trp.loss;
    d_embedding += config.lambda * trp.grad;
  }
  const RowMatrix d_pre =
      d_embedding.cwiseProduct((fp.pre_activation.array() > 0.0).cast<double>().matrix());
  out.grads.w1 = batch.features.transpose() * d_pre;
  out.grads.b1 = d_pre.colwise().sum().transpose();
  return out;
}

LossBreakdown total_loss(const ModelParams& params, const Batch& batch, const TrainConfig& config,
                         Rng& mining_rng) {
  if (config.lambda == 0.0) return total_loss(params, batch, config, TripletSet{});
  const auto triplets = mine_triplets(batch.keys, config.max_triplets_per_anchor, mining_rng);
  return total_loss(params, batch, config, triplets);
}

ModelParams initialize(std::size_t d_in, std::size_t d_emb, std::size_t n_classes,
                       std::uint64_t seed) {
  auto params = ModelParams::zeros(d_in, d_emb, n_classes);
  Rng rng = Rng(seed).child("init");
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(d_in));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(d_emb));
  for (Eigen::Index i = 0; i < params.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < params.w1.cols(); ++j) params.w1(i, j) = rng.uniform(-bound1, bound1);
  }
  for (Eigen::Index j = 0; j < params.b1.size(); ++j) params.b1[j] = rng.uniform(-bound1, bound1);
  for (Eigen::Index i = 0; i < params.w2.rows(); ++i) {
    for (Eigen::Index j = 0; j < params.w2.cols(); ++j) params.w2(i, j) = rng.uniform(-bound2, bound2);
  }
  for (Eigen::Index j = 0; j < params.b2.size(); ++j) params.b2[j] = rng.uniform(-bound2, bound2);
  return params;
}

std::vector<std::size_t> stratified_order(std::span<const std::uint32_t> keys, Rng rng) {
  std::map<std::uint32_t, std::vector<std::size_t>> by_key;
  for (std::size_t i = 0; i < keys.size(); ++i) by_key[keys[i]].push_back(i);
  struct Slot {
    double position;
    std::uint32_t key;
    std::size_t index;
  };
  std::vector<Slot> slots;
  slots.reserve(keys.size());
  for (auto& [key, members] : by_key) {
    rng.shuffle(members);
    const auto count = static_cast<double>(members.size());
    for (std::size_t rank = 0; rank < members.size(); ++rank) {
      slots.push_back({(static_cast<double>(rank) + rng.uniform()) / count, key, members[rank]});
    }
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.position != b.position) return a.position < b.position;
    return a.key < b.key;
  });
  std::vector<std::size_t> order;
  order.reserve(slots.size());
  for (const auto& s : slots) order.push_back(s.index);
  return order;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  return run_schedule(dataset, config, [&](const ModelParams& params, const Batch& batch, Rng& rng) {
    return total_loss(params, batch, config, rng);
  });
}

TrainResult train_softmax_only(const Dataset& dataset, const TrainConfig& config) {
  return run_schedule(dataset, config, [](const ModelParams& params, const Batch& batch, Rng&) {
    const ForwardPass fp = forward(params, batch.features);
    const LossGrad ce = cross_entropy(fp.logits, batch.labels);
    LossBreakdown out;
    out.total = out.softmax = ce.loss;
    out.grads.w2 = fp.embedding.transpose() * ce.grad;
    out.grads.b2 = ce.grad.colwise().sum().transpose();
    const RowMatrix d_embedding = ce.grad * params.w2.transpose();
    const RowMatrix d_pre =
        d_embedding.cwiseProduct((fp.pre_activation.array() > 0.0).cast<double>().matrix());
    out.grads.w1 = batch.features.transpose() * d_pre;
    out.grads.b1 = d_pre.colwise().sum().transpose();
    return out;
  });
}

Prediction predict(const ModelParams& params, std::span<const double> features) {
  const std::size_t d_in = params.input_dim();
  if (features.size() != d_in) throw DimensionMismatch("feature width does not match the model input");
  const auto d_emb = static_cast<Eigen::Index>(params.embedding_dim());
  const auto n_cls = static_cast<Eigen::Index>(params.class_count());
  Prediction out;
  out.embedding.resize(d_emb);
  for (Eigen::Index j = 0; j < d_emb; ++j) {
    double z = params.b1[j];
    for (std::size_t i = 0; i < d_in; ++i) z += features[i] * params.w1(static_cast<Eigen::Index>(i), j);
    out.embedding[j] = std::max(z, 0.0);
  }
  std::vector<double> logits(static_cast<std::size_t>(n_cls));
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < n_cls; ++c) {
    double z = params.b2[c];
    for (Eigen::Index j = 0; j < d_emb; ++j) z += out.embedding[j] * params.w2(j, c);
    logits[static_cast<std::size_t>(c)] = z;
    m = std::max(m, z);
  }
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - m);
  out.score = n_cls > 1 ? std::exp(logits[1] - m) / sum : 1.0;
  return out;
}

std::vector<Prediction> predict_batch(const ModelParams& params, const RowMatrix& features) {
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  std::vector<double> row(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) row[static_cast<std::size_t>(j)] = features(i, j);
    out.push_back(predict(params, row));
  }
  return out;
}

std::vector<double> predict_scores(const ModelParams& params, const Dataset& dataset) {
  std::vector<double> scores;
  scores.reserve(dataset.size());
  for (const auto& r : dataset.records()) scores.push_back(predict(params, r.features).score);
  return scores;
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> rows,
                 const std::vector<std::string>& conditioning, const std::string& target_label) {
  const CellIndexer indexer(dataset, conditioning);
  const int target = dataset.target_class(target_label);
  Batch batch;
  batch.features.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(dataset.feature_dim()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = dataset[rows[i]];
    for (std::size_t f = 0; f < r.features.size(); ++f) {
      batch.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = r.features[f];
    }
    batch.labels.push_back(r.label == target ? 1 : 0);
    batch.keys.push_back(indexer.code(r));
  }
  return batch;
}

}  // namespace aucal::aucfer
