#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "aucal/dataset.hpp"
#include "aucal/rng.hpp"

namespace aucal::aucfer {

// Batch matrices hold one sample per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Two-stage model: embedding f(x) = relu(W1^T x + b1), logits = W2^T f(x) + b2.
struct ModelParams {
  Eigen::MatrixXd w1;  // d_in x d_emb
  Eigen::VectorXd b1;  // d_emb
  Eigen::MatrixXd w2;  // d_emb x n_classes
  Eigen::VectorXd b2;  // n_classes

  static ModelParams zeros(std::size_t d_in, std::size_t d_emb, std::size_t n_classes);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t embedding_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t class_count() const { return static_cast<std::size_t>(w2.cols()); }
  std::size_t parameter_count() const;
  bool all_finite() const;

  // Flat view in the order w1 (column-major), b1, w2, b2.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const ModelParams& other) const;
};

enum class TripletReduction { sum, mean };

struct TrainConfig {
  double lambda = 10.0;
  double margin = 0.2;
  double learning_rate = 0.05;
  std::size_t batch_size = 128;
  std::size_t epochs = 40;
  std::size_t d_emb = 16;
  std::uint64_t seed = 7;
  std::size_t max_triplets_per_anchor = 64;
  TripletReduction reduction = TripletReduction::sum;
  std::vector<std::string> conditioning{"AU6", "AU12"};
  std::string target_label = "happy";

  void validate() const;  // throws InvalidConfig
};

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;

  auto operator<=>(const Triplet&) const = default;
};

struct TripletSet {
  std::vector<Triplet> triples;
  std::size_t capped_anchors = 0;
  // Set when the batch offers no valid triple at all.
  bool starved = false;

  std::size_t size() const { return triples.size(); }
  bool empty() const { return triples.empty(); }
};

// Every (i, j, k) with key(i) == key(j), i != j and key(i) != key(k); anchors
// with more than `cap` valid triples keep a uniform subsample of size cap.
TripletSet mine_triplets(std::span<const std::uint32_t> keys, std::size_t cap, Rng& rng);
TripletSet mine_triplets(std::span<const AuCellKey> keys, std::size_t cap, Rng& rng);

struct LossGrad {
  double loss = 0.0;
  RowMatrix grad;
};

// Hinge [||a-p||^2 - ||a-n||^2 + margin]_+ summed (or averaged) over triples.
LossGrad triplet_loss(const RowMatrix& embeddings, const TripletSet& triplets, double margin,
                      TripletReduction reduction = TripletReduction::sum);

// Mean negative log-softmax of the true class.
LossGrad cross_entropy(const RowMatrix& logits, std::span<const int> labels);

struct Batch {
  RowMatrix features;
  std::vector<int> labels;
  std::vector<std::uint32_t> keys;
};

struct ForwardPass {
  RowMatrix pre_activation;
  RowMatrix embedding;
  RowMatrix logits;
};

ForwardPass forward(const ModelParams& params, const RowMatrix& features);

struct LossBreakdown {
  double total = 0.0;
  double softmax = 0.0;
  double triplet = 0.0;
  std::size_t triplet_count = 0;
  ModelParams grads;
};

// L = L_softmax + lambda * L_trp with gradients for all four parameter
// blocks. With lambda == 0 the triplet term is skipped entirely.
LossBreakdown total_loss(const ModelParams& params, const Batch& batch, const TrainConfig& config,
                         const TripletSet& triplets);
LossBreakdown total_loss(const ModelParams& params, const Batch& batch, const TrainConfig& config,
                         Rng& mining_rng);

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_trace;  // per-epoch mean of L over batches
  std::vector<double> softmax_trace;
  std::vector<double> triplet_trace;
  std::vector<std::size_t> triplet_count_trace;
  std::size_t starved_batches = 0;
};

// Minibatch SGD on the train split with AU-key-stratified batches.
TrainResult train(const Dataset& dataset, const TrainConfig& config);

// Reference trainer minimizing cross-entropy only, sharing the initializer
// and batch schedule of train().
TrainResult train_softmax_only(const Dataset& dataset, const TrainConfig& config);

ModelParams initialize(std::size_t d_in, std::size_t d_emb, std::size_t n_classes,
                       std::uint64_t seed);

// Batch order for one epoch: records of each AU key are spread evenly
// through the epoch so that batches mix keys.
std::vector<std::size_t> stratified_order(std::span<const std::uint32_t> keys, Rng rng);

struct Prediction {
  double score = 0.0;  // softmax probability of class 1
  Eigen::VectorXd embedding;
};

Prediction predict(const ModelParams& params, std::span<const double> features);
std::vector<Prediction> predict_batch(const ModelParams& params, const RowMatrix& features);
std::vector<double> predict_scores(const ModelParams& params, const Dataset& dataset);

// Training inputs drawn from a dataset: features, binary labels (1 = target)
// and AU cell codes over the conditioning AUs.
Batch make_batch(const Dataset& dataset, std::span<const std::size_t> rows,
                 const std::vector<std::string>& conditioning, const std::string& target_label);

}  // namespace aucal::aucfer
