#include "reskin/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "reskin/binio.hpp"
#include "reskin/datagen.hpp"

namespace reskin::nn {

namespace {

constexpr std::uint32_t kModelMagic = 0x4d4b5352;  // "RSKM"
constexpr std::uint32_t kModelVersion = 1;

Eigen::MatrixXd normalize_cols(const MlpModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.arch.in_dim())
    throw DimensionError("expected " + std::to_string(model.arch.in_dim()) +
                         " input features, got " + std::to_string(X.cols()));
  Eigen::MatrixXd out = X.transpose();
  out.colwise() -= model.input.mean;
  out.array().colwise() /= model.input.sd.array();
  return out;
}

// Runs layers [first, last) on column activations; acts[k] receives the
// output of layer first+k when `acts` is non-null.
Eigen::MatrixXd run_layers(const MlpModel& model, Eigen::MatrixXd a, int first, int last,
                           std::vector<Eigen::MatrixXd>* acts) {
  for (int l = first; l < last; ++l) {
    Eigen::MatrixXd z = model.W[l] * a;
    z.colwise() += model.b[l];
    if (model.arch.relu[l]) z = z.cwiseMax(0.0);
    a = std::move(z);
    if (acts) acts->push_back(a);
  }
  return a;
}

// Backpropagates `delta` (gradient w.r.t. the output of layer last-1) down to
// layer 0. acts[l] is the input to layer l.
void backprop(const MlpModel& model, const std::vector<Eigen::MatrixXd>& acts, int last,
              Eigen::MatrixXd delta, Gradients& g) {
  for (int l = last - 1; l >= 0; --l) {
    if (model.arch.relu[l]) delta = delta.cwiseProduct((acts[l + 1].array() > 0.0).cast<double>().matrix());
    g.dW[l].noalias() += delta * acts[l].transpose();
    g.db[l] += delta.rowwise().sum();
    if (l > 0) delta = model.W[l].transpose() * delta;
  }
}

double l2_part(const MlpModel& model, const Batch& batch, const Eigen::VectorXd& weights,
               double scale, Gradients* g) {
  const Eigen::Index n = batch.X.rows();
  if (batch.Y.rows() != n || batch.Y.cols() != model.arch.out_dim())
    throw DimensionError("label matrix does not match inputs/model output");
  std::vector<Eigen::MatrixXd> acts;
  acts.push_back(normalize_cols(model, batch.X));
  const Eigen::MatrixXd out = run_layers(model, acts.front(), 0, model.arch.layers(), &acts);
  const Eigen::MatrixXd pred = out.array().colwise() * model.output_scale.array();
  Eigen::MatrixXd err = pred - batch.Y.transpose();
  Eigen::MatrixXd werr = err;
  if (weights.size() > 0) werr.array().colwise() *= weights.array();
  const double loss = err.cwiseProduct(werr).sum() / double(n);
  if (g && scale != 0.0) {
    Eigen::MatrixXd delta = (2.0 * scale / double(n)) * werr;
    delta.array().colwise() *= model.output_scale.array();
    backprop(model, acts, model.arch.layers(), std::move(delta), *g);
  }
  return loss;
}

double triplet_part(const MlpModel& model, const Batch& batch, double scale, Gradients* g) {
  const Eigen::Index m = batch.anchor.rows();
  if (batch.positive.rows() != m || batch.negative.rows() != m)
    throw DimensionError("triplet parts have different sizes");
  Eigen::MatrixXd stacked(3 * m, model.arch.in_dim());
  stacked << batch.anchor, batch.positive, batch.negative;
  std::vector<Eigen::MatrixXd> acts;
  acts.push_back(normalize_cols(model, stacked));
  const int K = model.arch.feature_layer;
  const Eigen::MatrixXd f = run_layers(model, acts.front(), 0, K, &acts);
  const auto fa = f.leftCols(m), fp = f.middleCols(m, m), fn = f.rightCols(m);
  const Eigen::RowVectorXd h =
      (fa - fp).colwise().squaredNorm() - (fa - fn).colwise().squaredNorm();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) loss += std::max(0.0, h[i]);
  loss /= double(m);
  if (g && scale != 0.0) {
    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(f.rows(), 3 * m);
    const double c = 2.0 * scale / double(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!(h[i] > 0.0)) continue;
      delta.col(i) = c * (fn.col(i) - fp.col(i));
      delta.col(m + i) = -c * (fa.col(i) - fp.col(i));
      delta.col(2 * m + i) = c * (fa.col(i) - fn.col(i));
    }
    backprop(model, acts, K, std::move(delta), *g);
  }
  return loss;
}

bool finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

Eigen::VectorXd column_sd(const Eigen::MatrixXd& X) {
  const Eigen::RowVectorXd mean = X.colwise().mean();
  Eigen::VectorXd sd(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - mean[c]).square().mean();
    sd[c] = std::sqrt(var);
    if (!(sd[c] > 1e-12)) sd[c] = 1.0;
  }
  return sd;
}

}  // namespace

Architecture Architecture::canonical(int out_dim, bool relu_feature_layers) {
  Architecture a;
  a.widths = {kFluxDim, 200, 200, 40, 200, 200, out_dim};
  a.relu = {true, relu_feature_layers, relu_feature_layers, true, true, false};
  a.feature_layer = 3;
  return a;
}

void Architecture::validate() const {
  if (widths.size() < 2) throw ConfigError("architecture needs at least one layer");
  if (relu.size() != widths.size() - 1)
    throw ConfigError("architecture needs one activation flag per layer");
  for (int w : widths)
    if (w < 1) throw ConfigError("layer widths must be positive");
  if (feature_layer < 1 || feature_layer > layers())
    throw ConfigError("feature layer out of range");
}

Normalizer Normalizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Normalizer Normalizer::fit(const Eigen::MatrixXd& X) {
  if (X.rows() == 0) throw std::invalid_argument("cannot fit a normalizer on no data");
  return {X.colwise().mean().transpose(), column_sd(X)};
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
  return n;
}

bool MlpModel::operator==(const MlpModel& o) const {
  if (!(arch == o.arch) || W.size() != o.W.size()) return false;
  for (std::size_t l = 0; l < W.size(); ++l)
    if (W[l] != o.W[l] || b[l] != o.b[l]) return false;
  return input.mean == o.input.mean && input.sd == o.input.sd &&
         output_scale == o.output_scale;
}

MlpModel zero_model(const Architecture& arch) {
  arch.validate();
  MlpModel m;
  m.arch = arch;
  for (int l = 0; l < arch.layers(); ++l) {
    m.W.push_back(Eigen::MatrixXd::Zero(arch.widths[l + 1], arch.widths[l]));
    m.b.push_back(Eigen::VectorXd::Zero(arch.widths[l + 1]));
  }
  m.input = Normalizer::identity(arch.in_dim());
  m.output_scale = Eigen::VectorXd::Ones(arch.out_dim());
  return m;
}

MlpModel init_model(const Architecture& arch, std::uint64_t seed) {
  MlpModel m = zero_model(arch);
  std::mt19937_64 rng(derive_seed(seed, 0x1417));
  for (int l = 0; l < arch.layers(); ++l) {
    const double gain = arch.relu[l] ? 6.0 : 3.0;
    const double limit = std::sqrt(gain / arch.widths[l]);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index r = 0; r < m.W[l].rows(); ++r)
      for (Eigen::Index c = 0; c < m.W[l].cols(); ++c) m.W[l](r, c) = u(rng);
  }
  return m;
}

Eigen::MatrixXd predict(const MlpModel& model, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out = run_layers(model, normalize_cols(model, X), 0, model.arch.layers(), nullptr);
  out.array().colwise() *= model.output_scale.array();
  return out.transpose();
}

Eigen::MatrixXd features(const MlpModel& model, const Eigen::MatrixXd& X) {
  return run_layers(model, normalize_cols(model, X), 0, model.arch.feature_layer, nullptr)
      .transpose();
}

Eigen::MatrixXd predict_from_features(const MlpModel& model, const Eigen::MatrixXd& F) {
  if (F.cols() != model.arch.feature_dim()) throw DimensionError("feature dimension mismatch");
  Eigen::MatrixXd out =
      run_layers(model, F.transpose(), model.arch.feature_layer, model.arch.layers(), nullptr);
  out.array().colwise() *= model.output_scale.array();
  return out.transpose();
}

Prediction forward(const MlpModel& model, const Eigen::VectorXd& flux_delta) {
  const Eigen::VectorXd y = predict(model, flux_delta.transpose()).row(0).transpose();
  if (y.size() < 3) throw DimensionError("model output must have at least 3 components");
  Prediction p;
  p.location = y.head<2>();
  p.force = y.tail(y.size() - 2);
  return p;
}

Eigen::VectorXd feat(const MlpModel& model, const Eigen::VectorXd& flux_delta) {
  return features(model, flux_delta.transpose()).row(0).transpose();
}

double l2_loss(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels,
               const Eigen::VectorXd& component_weights) {
  if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols())
    throw DimensionError("prediction and label shapes differ");
  if (predictions.rows() == 0) throw std::invalid_argument("l2 loss of an empty batch");
  Eigen::ArrayXXd sq = (predictions - labels).array().square();
  if (component_weights.size() > 0) {
    if (component_weights.size() != labels.cols())
      throw DimensionError("component weights do not match label width");
    sq.rowwise() *= component_weights.transpose().array();
  }
  return sq.sum() / double(predictions.rows());
}

double triplet_from_features(const Eigen::VectorXd& fa, const Eigen::VectorXd& fp,
                             const Eigen::VectorXd& fn) {
  return std::max(0.0, (fa - fp).squaredNorm() - (fa - fn).squaredNorm());
}

double triplet_loss(const MlpModel& model, const Eigen::VectorXd& anchor,
                    const Eigen::VectorXd& positive, const Eigen::VectorXd& negative) {
  return triplet_from_features(feat(model, anchor), feat(model, positive), feat(model, negative));
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    g.dW.push_back(Eigen::MatrixXd::Zero(model.W[l].rows(), model.W[l].cols()));
    g.db.push_back(Eigen::VectorXd::Zero(model.b[l].size()));
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& o) {
  for (std::size_t l = 0; l < dW.size(); ++l) {
    dW[l] += o.dW[l];
    db[l] += o.db[l];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (std::size_t l = 0; l < dW.size(); ++l) {
    dW[l] *= s;
    db[l] *= s;
  }
  return *this;
}

LossValue evaluate(const MlpModel& model, const Batch& batch, const LossSpec& spec,
                   Gradients* grads) {
  if (grads) *grads = Gradients::zeros_like(model);
  LossValue v;
  if (spec.l2_weight != 0.0 && batch.X.rows() > 0)
    v.l2 = l2_part(model, batch, spec.component_weights, spec.l2_weight, grads);
  if (spec.triplet_weight != 0.0 && batch.anchor.rows() > 0)
    v.triplet = triplet_part(model, batch, spec.triplet_weight, grads);
  v.total = spec.l2_weight * v.l2 + spec.triplet_weight * v.triplet;
  return v;
}

Gradients backward(const MlpModel& model, const Batch& batch, const LossSpec& spec) {
  Gradients g;
  evaluate(model, batch, spec, &g);
  return g;
}

Eigen::VectorXd flatten_parameters(const MlpModel& model) {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(model.parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    for (Eigen::Index r = 0; r < model.W[l].rows(); ++r)
      for (Eigen::Index c = 0; c < model.W[l].cols(); ++c) flat[k++] = model.W[l](r, c);
    for (Eigen::Index r = 0; r < model.b[l].size(); ++r) flat[k++] = model.b[l][r];
  }
  return flat;
}

void set_parameters(MlpModel& model, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(model.parameter_count()))
    throw DimensionError("parameter vector has the wrong length");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    for (Eigen::Index r = 0; r < model.W[l].rows(); ++r)
      for (Eigen::Index c = 0; c < model.W[l].cols(); ++c) model.W[l](r, c) = flat[k++];
    for (Eigen::Index r = 0; r < model.b[l].size(); ++r) model.b[l][r] = flat[k++];
  }
}

Eigen::VectorXd flatten_gradients(const Gradients& g) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < g.dW.size(); ++l) n += g.dW[l].size() + g.db[l].size();
  Eigen::VectorXd flat(n);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    for (Eigen::Index r = 0; r < g.dW[l].rows(); ++r)
      for (Eigen::Index c = 0; c < g.dW[l].cols(); ++c) flat[k++] = g.dW[l](r, c);
    for (Eigen::Index r = 0; r < g.db[l].size(); ++r) flat[k++] = g.db[l][r];
  }
  return flat;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(triplet_weight >= 0.0)) throw ConfigError("triplet_weight must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_loss,train_triplet,learning_rate\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.train_triplet << ','
       << e.learning_rate << '\n';
  return os.str();
}

Adam::Adam(const MlpModel& model, const TrainConfig& config)
    : m_(Gradients::zeros_like(model)),
      v_(Gradients::zeros_like(model)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.adam_eps),
      freeze_head_(config.freeze_head),
      feature_layer_(model.arch.feature_layer) {}

void Adam::step(MlpModel& model, const Gradients& g, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  const double lr = learning_rate * std::sqrt(c2) / c1;
  const int last = freeze_head_ ? feature_layer_ : model.arch.layers();
  for (int l = 0; l < last; ++l) {
    m_.dW[l] = beta1_ * m_.dW[l] + (1.0 - beta1_) * g.dW[l];
    v_.dW[l] = beta2_ * v_.dW[l] + (1.0 - beta2_) * g.dW[l].cwiseAbs2();
    model.W[l].array() -= lr * m_.dW[l].array() / (v_.dW[l].array().sqrt() + eps_);
    m_.db[l] = beta1_ * m_.db[l] + (1.0 - beta1_) * g.db[l];
    v_.db[l] = beta2_ * v_.db[l] + (1.0 - beta2_) * g.db[l].cwiseAbs2();
    model.b[l].array() -= lr * m_.db[l].array() / (v_.db[l].array().sqrt() + eps_);
  }
}

TrainResult train(MlpModel model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const TrainConfig& config, const FitOptions& options) {
  config.validate();
  if (X.rows() == 0) throw std::invalid_argument("cannot train on an empty dataset");
  if (X.rows() != Y.rows()) throw DimensionError("inputs and labels have different row counts");
  if (X.cols() != model.arch.in_dim() || Y.cols() != model.arch.out_dim())
    throw DimensionError("data dimensions do not match the model architecture");
  const bool has_val = options.val_X && options.val_Y && options.val_X->rows() > 0;
  if (has_val && (options.val_X->cols() != X.cols() || options.val_Y->cols() != Y.cols()))
    throw DimensionError("validation data dimensions do not match training data");
  if (!finite(X) || !finite(Y)) throw NumericalError("training data contains non-finite values");

  if (options.fit_normalizer) {
    model.input = Normalizer::fit(X);
    model.output_scale = column_sd(Y);
  }

  const Eigen::Index n = X.rows();
  const Eigen::Index B = std::min<Eigen::Index>(config.batch_size, n);
  const int steps = options.steps_per_epoch > 0
                        ? options.steps_per_epoch
                        : static_cast<int>((n + config.batch_size - 1) / config.batch_size);
  const Eigen::Index tb = options.triplet_batch > 0 ? options.triplet_batch : B;

  LossSpec spec;
  spec.l2_weight = 1.0;
  spec.triplet_weight = options.triplets ? config.triplet_weight : 0.0;
  spec.component_weights = config.component_weights;
  if (spec.component_weights.size() > 0 && spec.component_weights.size() != Y.cols())
    throw DimensionError("component weights do not match label width");

  std::mt19937_64 rng(derive_seed(config.seed, 0x7a1));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  Adam adam(model, config);
  TrainLog log;
  double lr = config.learning_rate;
  double best_val = std::numeric_limits<double>::infinity();
  Batch batch;
  Gradients g;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const MlpModel before = model;
    double l2_sum = 0.0, trip_sum = 0.0;
    Eigen::Index seen = 0;
    for (int s = 0; s < steps; ++s) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Eigen::Index take = std::min<Eigen::Index>(B, Eigen::Index(order.size() - cursor));
      batch.X.resize(take, X.cols());
      batch.Y.resize(take, Y.cols());
      for (Eigen::Index i = 0; i < take; ++i) {
        batch.X.row(i) = X.row(order[cursor + i]);
        batch.Y.row(i) = Y.row(order[cursor + i]);
      }
      cursor += static_cast<std::size_t>(take);
      if (options.triplets) options.triplets(rng, tb, batch.anchor, batch.positive, batch.negative);

      const LossValue v = evaluate(model, batch, spec, &g);
      if (!std::isfinite(v.total))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(s));
      l2_sum += v.l2 * double(take);
      trip_sum += v.triplet * double(take);
      seen += take;
      adam.step(model, g, lr);
    }

    EpochLog e;
    e.epoch = epoch;
    e.train_loss = l2_sum / double(seen);
    e.train_triplet = trip_sum / double(seen);
    e.learning_rate = lr;
    e.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (has_val) {
      e.val_loss = l2_loss(predict(model, *options.val_X), *options.val_Y, config.component_weights);
      if (!std::isfinite(e.val_loss))
        throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
      if (e.val_loss < best_val) {
        best_val = e.val_loss;
        log.best_epoch = epoch;
      }
    }
    log.epochs.push_back(e);
    if (options.stop_after_epoch && options.stop_after_epoch(e)) {
      model = before;
      log.early_stopped = true;
      break;
    }
    lr *= config.lr_decay;
  }
  return {std::move(model), std::move(log)};
}

TrainResult train(MlpModel model, const data::Dataset& dataset, const TrainConfig& config) {
  config.validate();
  const data::Matrices m = data::to_matrices(dataset);
  if (m.X.rows() == 0) throw std::invalid_argument("cannot train on an empty dataset");
  std::vector<int> idx(static_cast<std::size_t>(m.X.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, 0x5b17));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::floor(config.validation_fraction * idx.size()));
  const std::span<const int> all(idx);
  const data::Matrices val = data::select_rows(m, all.first(n_val));
  const data::Matrices tr = data::select_rows(m, all.subspan(n_val));
  FitOptions opt;
  if (n_val > 0) {
    opt.val_X = &val.X;
    opt.val_Y = &val.Y;
  }
  return train(std::move(model), tr.X, tr.Y, config, opt);
}

std::vector<std::uint8_t> encode_model(const MlpModel& model) {
  nlohmann::json arch = {{"widths", model.arch.widths},
                         {"relu", model.arch.relu},
                         {"feature_layer", model.arch.feature_layer}};
  binio::Writer w;
  w.put(kModelMagic);
  w.put(kModelVersion);
  w.put_string(arch.dump());
  w.put_matrix(model.input.mean.transpose());
  w.put_matrix(model.input.sd.transpose());
  w.put_matrix(model.output_scale.transpose());
  for (std::size_t l = 0; l < model.W.size(); ++l) {
    w.put_matrix(model.W[l]);
    w.put_matrix(model.b[l].transpose());
  }
  return w.take();
}

MlpModel decode_model(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.get<std::uint32_t>() != kModelMagic) throw IoError("not a model checkpoint");
  if (const auto v = r.get<std::uint32_t>(); v != kModelVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(v));
  Architecture arch;
  try {
    const auto j = nlohmann::json::parse(r.get_string());
    arch.widths = j.at("widths").get<std::vector<int>>();
    arch.relu = j.at("relu").get<std::vector<bool>>();
    arch.feature_layer = j.at("feature_layer").get<int>();
    arch.validate();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint architecture: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("bad checkpoint architecture: ") + e.what());
  }
  std::size_t expected = 0;
  for (int l = 0; l < arch.layers(); ++l)
    expected += std::size_t(arch.widths[l + 1]) * (arch.widths[l] + 1);
  expected += 2 * std::size_t(arch.in_dim()) + arch.out_dim();
  if (r.remaining() != expected * sizeof(double))
    throw IoError("checkpoint size does not match its architecture");
  MlpModel m = zero_model(arch);
  Eigen::RowVectorXd row(arch.in_dim());
  r.get_matrix(row);
  m.input.mean = row.transpose();
  r.get_matrix(row);
  m.input.sd = row.transpose();
  Eigen::RowVectorXd out(arch.out_dim());
  r.get_matrix(out);
  m.output_scale = out.transpose();
  for (int l = 0; l < arch.layers(); ++l) {
    r.get_matrix(m.W[l]);
    Eigen::RowVectorXd bias(arch.widths[l + 1]);
    r.get_matrix(bias);
    m.b[l] = bias.transpose();
  }
  return m;
}

void save_model(const std::string& path, const MlpModel& model) {
  binio::write_file(path, encode_model(model));
}

MlpModel load_model(const std::string& path) { return decode_model(binio::read_file(path)); }

}  // namespace reskin::nn
