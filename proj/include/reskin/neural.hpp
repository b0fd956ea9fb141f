#pragma once

// Feed-forward decoder from flux deltas to contact location and force, with
// hand-written reverse mode for the L2 and triplet losses.
//
// Samples are rows in the public API (n x 15 inputs, n x out labels) and
// columns internally.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "reskin/common.hpp"

namespace reskin::data {
struct Dataset;
}

namespace reskin::nn {

struct Architecture {
  // widths[0] is the input dimension, widths.back() the output dimension.
  std::vector<int> widths;
  // relu[l] applies to the output of layer l (0-based).
  std::vector<bool> relu;
  // Number of layers whose output forms the feature vector.
  int feature_layer = 3;

  // 15 -> 200 -> 200 -> 40 -> 200 -> 200 -> out. ReLU after layers 1, 4, 5
  // unless `relu_feature_layers` also puts it after layers 2 and 3.
  static Architecture canonical(int out_dim = 3, bool relu_feature_layers = false);

  int layers() const { return static_cast<int>(widths.size()) - 1; }
  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  int feature_dim() const { return widths[feature_layer]; }
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  static Normalizer identity(int dim);
  // Per-column mean and SD of `X` (rows are samples); constant columns get SD 1.
  static Normalizer fit(const Eigen::MatrixXd& X);
};

struct MlpModel {
  Architecture arch;
  std::vector<Eigen::MatrixXd> W;  // W[l] is widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> b;
  Normalizer input;
  // Physical output = output_scale .* last-layer output.
  Eigen::VectorXd output_scale;

  std::size_t parameter_count() const;
  bool operator==(const MlpModel& o) const;
};

// Fan-in-scaled uniform weights, zero biases, identity normalizer.
MlpModel init_model(const Architecture& arch, std::uint64_t seed);
MlpModel zero_model(const Architecture& arch);

struct Prediction {
  Vec2 location = Vec2::Zero();
  Eigen::VectorXd force;  // Fz, or (Fx, Fy, Fz)
};

// Row-major batch API: X is n x in_dim.
Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& X);
Eigen::MatrixXd features(const MlpModel& model, const Eigen::MatrixXd& X);
// Head only: maps feature rows (n x feature_dim) to physical outputs.
Eigen::MatrixXd predict_from_features(const MlpModel& model, const Eigen::MatrixXd& F);

Prediction forward(const MlpModel& model, const Eigen::VectorXd& flux_delta);
Eigen::VectorXd feat(const MlpModel& model, const Eigen::VectorXd& flux_delta);

// Mean over rows of the (optionally weighted) squared-error sum.
double l2_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels,
               const Eigen::VectorXd& component_weights = {});

// max(0, |f(a) - f(p)|^2 - |f(a) - f(n)|^2), no margin.
double triplet_loss(const MlpModel& model, const Eigen::VectorXd& anchor,
                    const Eigen::VectorXd& positive, const Eigen::VectorXd& negative);
double triplet_from_features(const Eigen::VectorXd& fa, const Eigen::VectorXd& fp,
                             const Eigen::VectorXd& fn);

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static Gradients zeros_like(const MlpModel& model);
  Gradients& operator+=(const Gradients& o);
  Gradients& operator*=(double s);
};

// One optimization batch. Either part may be empty.
struct Batch {
  Eigen::MatrixXd X;  // labeled inputs, n x in
  Eigen::MatrixXd Y;  // labels, n x out
  Eigen::MatrixXd anchor, positive, negative;  // triplets, m x in each
};

struct LossSpec {
  double l2_weight = 1.0;
  double triplet_weight = 0.0;
  Eigen::VectorXd component_weights;  // empty: unit weights

  static LossSpec l2() { return {1.0, 0.0, {}}; }
  static LossSpec triplet() { return {0.0, 1.0, {}}; }
};

struct LossValue {
  double total = 0.0;
  double l2 = 0.0;       // unweighted component values
  double triplet = 0.0;
};

// Loss of `batch` under `spec`; fills `grads` when non-null. The triplet term
// is the mean hinge over the batch's triplets.
LossValue evaluate(const MlpModel& model, const Batch& batch, const LossSpec& spec,
                   Gradients* grads = nullptr);
Gradients backward(const MlpModel& model, const Batch& batch, const LossSpec& spec);

// Flat parameter views in layer order (W row-major, then b), for finite
// differences and checkpoints.
Eigen::VectorXd flatten_parameters(const MlpModel& model);
void set_parameters(MlpModel& model, const Eigen::VectorXd& flat);
Eigen::VectorXd flatten_gradients(const Gradients& g);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 256;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Learning rate is multiplied by this factor after every epoch.
  double lr_decay = 1.0;
  std::uint64_t seed = 0;
  double triplet_weight = 1.0;
  Eigen::VectorXd component_weights;
  double validation_fraction = 0.1;
  // Keep the layers after the feature layer fixed while fine-tuning.
  bool freeze_head = false;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation set
  double train_triplet = 0.0;
  double learning_rate = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  bool early_stopped = false;

  std::string to_csv() const;
};

class Adam {
 public:
  Adam(const MlpModel& model, const TrainConfig& config);
  void step(MlpModel& model, const Gradients& g, double learning_rate);

 private:
  Gradients m_, v_;
  double beta1_, beta2_, eps_;
  bool freeze_head_;
  int feature_layer_;
  long t_ = 0;
};

// Fills `a`, `p`, `n` with `count` triplet rows.
using TripletSampler = std::function<void(std::mt19937_64& rng, Eigen::Index count,
                                          Eigen::MatrixXd& a, Eigen::MatrixXd& p,
                                          Eigen::MatrixXd& n)>;

struct FitOptions {
  const Eigen::MatrixXd* val_X = nullptr;
  const Eigen::MatrixXd* val_Y = nullptr;
  // Fit input standardization and output scale on the training data first.
  bool fit_normalizer = true;
  // When set, every step also draws `triplet_batch` triplets (default: the
  // labeled batch size) weighted by `TrainConfig::triplet_weight`.
  TripletSampler triplets;
  int triplet_batch = 0;
  // Steps per epoch; 0 means one pass over the labeled data.
  int steps_per_epoch = 0;
  // Called after each epoch; returning true stops training and restores the
  // parameters from before that epoch.
  std::function<bool(const EpochLog&)> stop_after_epoch;
};

struct TrainResult {
  MlpModel model;
  TrainLog log;
};

// Minibatch Adam on the L2 loss (plus triplets when configured). Throws
// NumericalError on a non-finite loss and std::invalid_argument on empty data.
TrainResult train(MlpModel model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const TrainConfig& config, const FitOptions& options = {});

// Splits off `validation_fraction` at random (seeded) and trains.
TrainResult train(MlpModel model, const data::Dataset& dataset, const TrainConfig& config);

// Checkpoint: "RSKM", u32 version, JSON architecture, normalizer, output
// scale, then row-major f64 weights and biases per layer.
std::vector<std::uint8_t> encode_model(const MlpModel& model);
MlpModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::string& path, const MlpModel& model);
MlpModel load_model(const std::string& path);

}  // namespace reskin::nn
