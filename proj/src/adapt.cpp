#include "reskin/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "reskin/parallel.hpp"

namespace reskin::adapt {

namespace {

nn::FitOptions val_options(const Split& s) {
  nn::FitOptions o;
  if (s.val.X.rows() > 0) {
    o.val_X = &s.val.X;
    o.val_Y = &s.val.Y;
  }
  return o;
}

// Draws (a, p, n) indices from `n` ordered items such that p is strictly
// closer to a than n is under `dist`.
template <typename Dist>
void draw_ordered(std::mt19937_64& rng, int n, Dist dist, int& a, int& p, int& q) {
  std::uniform_int_distribution<int> u(0, n - 1);
  for (;;) {
    a = u(rng);
    const int j = u(rng), k = u(rng);
    if (j == a || k == a || j == k) continue;
    const double dj = dist(a, j), dk = dist(a, k);
    if (dj == dk) continue;
    p = dj < dk ? j : k;
    q = dj < dk ? k : j;
    return;
  }
}

// Sensor indices used by the single-sensor condition of fold `f`: the test
// sensors come from the boards after the held-out one, in board order.
std::vector<std::string> single_sensor_targets(const MultiSensorDataset& data, const Fold& fold,
                                               int count) {
  const auto boards = data.boards();
  const int held = data.sensor(fold.test_ids.front()).board;
  const auto it = std::find(boards.begin(), boards.end(), held);
  const auto start = static_cast<std::size_t>(it - boards.begin());
  std::vector<std::string> out;
  const auto ids = data.ids();
  for (std::size_t step = 1; step < boards.size() && int(out.size()) < count; ++step) {
    const int b = boards[(start + step) % boards.size()];
    for (const auto& id : ids)
      if (data.sensor(id).board == b && int(out.size()) < count) out.push_back(id);
  }
  return out;
}

}  // namespace

Split split_rows(const data::Matrices& m, double val_fraction, std::uint64_t seed) {
  std::vector<int> idx(static_cast<std::size_t>(m.X.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x5b17));
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(val_fraction * idx.size());
  const std::span<const int> all(idx);
  const auto tr = all.subspan(n_val);
  return {data::select_rows(m, tr), data::select_rows(m, all.first(n_val)),
          std::vector<int>(tr.begin(), tr.end())};
}

void predict_sensors(const nn::MlpModel& model, const MultiSensorDataset& data,
                     std::span<const std::string> ids, Eigen::MatrixXd& predictions,
                     Eigen::MatrixXd& labels) {
  const Pool t = pool(data, ids);
  predictions = nn::predict(model, t.m.X);
  labels = t.m.Y;
}

void append_rows(Eigen::MatrixXd& acc, const Eigen::MatrixXd& more) {
  Eigen::MatrixXd out(acc.rows() + more.rows(), more.cols());
  if (acc.rows() > 0) out.topRows(acc.rows()) = acc;
  out.bottomRows(more.rows()) = more;
  acc = std::move(out);
}

void MultiSensorDataset::add(SensorData sensor) {
  for (const auto& s : sensors_)
    if (s.id == sensor.id) throw ConfigError("duplicate sensor id '" + sensor.id + "'");
  if (!sensors_.empty() && sensor.dataset.meta.label_dim != sensors_.front().dataset.meta.label_dim)
    throw DimensionError("sensors disagree on label dimension");
  sensors_.push_back(std::move(sensor));
}

std::vector<std::string> MultiSensorDataset::ids() const {
  std::vector<std::string> out;
  for (const auto& s : sensors_) out.push_back(s.id);
  return out;
}

const SensorData& MultiSensorDataset::sensor(const std::string& id) const {
  for (const auto& s : sensors_)
    if (s.id == id) return s;
  throw ConfigError("unknown sensor id '" + id + "'");
}

std::vector<int> MultiSensorDataset::boards() const {
  std::set<int> b;
  for (const auto& s : sensors_) b.insert(s.board);
  return {b.begin(), b.end()};
}

void MultiSensorDataset::make_board_folds() {
  std::vector<Fold> folds;
  int index = 0;
  for (int b : boards()) {
    Fold f;
    f.index = index++;
    for (const auto& s : sensors_) (s.board == b ? f.test_ids : f.train_ids).push_back(s.id);
    folds.push_back(std::move(f));
  }
  set_folds(std::move(folds));
}

void MultiSensorDataset::set_folds(std::vector<Fold> folds) {
  for (const auto& f : folds) {
    if (f.test_ids.empty()) throw ConfigError("fold " + std::to_string(f.index) + " has no test sensors");
    std::set<std::string> train(f.train_ids.begin(), f.train_ids.end());
    for (const auto& id : f.train_ids) sensor(id);
    for (const auto& id : f.test_ids) {
      sensor(id);
      if (train.count(id))
        throw ConfigError("fold " + std::to_string(f.index) + ": sensor '" + id +
                          "' is in both train and test");
    }
  }
  folds_ = std::move(folds);
}

Pool pool(const MultiSensorDataset& data, std::span<const std::string> ids) {
  Pool p;
  std::vector<data::Matrices> parts;
  std::map<std::pair<int, long>, std::vector<int>> groups;
  int row = 0;
  for (std::size_t g = 0; g < ids.size(); ++g) {
    const auto& ds = data.sensor(ids[g]).dataset;
    parts.push_back(data::to_matrices(ds, static_cast<int>(g)));
    for (const auto& s : ds.samples)
      groups[{int(g), std::lround(s.depth * 1000.0)}].push_back(row++);
  }
  p.m = data::concat(parts);
  for (auto& [key, rows] : groups)
    if (rows.size() >= 3) p.triplet_groups.push_back(std::move(rows));
  return p;
}

nn::TripletSampler labeled_triplet_sampler(const Pool& pool) {
  if (pool.triplet_groups.empty()) throw std::invalid_argument("no group has 3 or more rows");
  std::vector<double> weights;
  for (const auto& g : pool.triplet_groups) weights.push_back(double(g.size()));
  // The sampler owns copies so it can outlive `pool`.
  auto groups = std::make_shared<std::vector<std::vector<int>>>(pool.triplet_groups);
  auto X = std::make_shared<Eigen::MatrixXd>(pool.m.X);
  auto loc = std::make_shared<Eigen::MatrixXd>(pool.m.Y.leftCols(2));
  auto pick = std::make_shared<std::discrete_distribution<int>>(weights.begin(), weights.end());
  return [groups, X, loc, pick](std::mt19937_64& rng, Eigen::Index count, Eigen::MatrixXd& a,
                                Eigen::MatrixXd& p, Eigen::MatrixXd& n) {
    a.resize(count, X->cols());
    p.resize(count, X->cols());
    n.resize(count, X->cols());
    for (Eigen::Index t = 0; t < count; ++t) {
      const auto& g = (*groups)[(*pick)(rng)];
      int ia, ip, in;
      draw_ordered(rng, static_cast<int>(g.size()),
                   [&](int i, int j) { return (loc->row(g[i]) - loc->row(g[j])).squaredNorm(); },
                   ia, ip, in);
      a.row(t) = X->row(g[ia]);
      p.row(t) = X->row(g[ip]);
      n.row(t) = X->row(g[in]);
    }
  };
}

AdaptationSet::AdaptationSet(std::vector<data::UnlabeledLine> lines) : lines_(std::move(lines)) {
  for (const auto& l : lines_) budget_ += l.ordered_flux.size();
}

AdaptationSet AdaptationSet::take(std::span<const data::UnlabeledLine> lines, std::size_t budget) {
  std::vector<data::UnlabeledLine> out;
  std::size_t used = 0;
  for (const auto& l : lines) {
    if (used >= budget) break;
    data::UnlabeledLine part;
    const std::size_t n = std::min(l.ordered_flux.size(), budget - used);
    part.ordered_flux.assign(l.ordered_flux.begin(), l.ordered_flux.begin() + n);
    used += n;
    if (part.ordered_flux.size() >= 3) out.push_back(std::move(part));
  }
  if (used < budget)
    throw std::invalid_argument("adaptation budget " + std::to_string(budget) +
                                " exceeds the available " + std::to_string(used) +
                                " indentations");
  return AdaptationSet(std::move(out));
}

AdaptationSet AdaptationSet::from_trajectories(std::span<const data::LineTrajectory> lines,
                                               std::size_t budget) {
  std::vector<data::UnlabeledLine> stripped;
  for (const auto& l : lines) stripped.push_back(data::strip_labels(l));
  return take(stripped, budget);
}

nn::TripletSampler unlabeled_triplet_sampler(const AdaptationSet& set) {
  if (set.empty()) throw std::invalid_argument("empty adaptation set");
  auto lines = std::make_shared<std::vector<data::UnlabeledLine>>(set.lines());
  std::vector<double> weights;
  for (const auto& l : *lines) weights.push_back(double(l.ordered_flux.size()));
  auto pick = std::make_shared<std::discrete_distribution<int>>(weights.begin(), weights.end());
  return [lines, pick](std::mt19937_64& rng, Eigen::Index count, Eigen::MatrixXd& a,
                       Eigen::MatrixXd& p, Eigen::MatrixXd& n) {
    a.resize(count, kFluxDim);
    p.resize(count, kFluxDim);
    n.resize(count, kFluxDim);
    for (Eigen::Index t = 0; t < count; ++t) {
      const auto& f = (*lines)[(*pick)(rng)].ordered_flux;
      int ia, ip, in;
      draw_ordered(rng, static_cast<int>(f.size()),
                   [](int i, int j) { return double(std::abs(i - j)); }, ia, ip, in);
      a.row(t) = f[ia].transpose();
      p.row(t) = f[ip].transpose();
      n.row(t) = f[in].transpose();
    }
  };
}

nn::TrainResult train_multisensor(const MultiSensorDataset& data,
                                  std::span<const std::string> train_ids,
                                  const nn::TrainConfig& config, bool use_triplet,
                                  bool relu_feature_layers) {
  if (train_ids.size() < 2)
    throw std::invalid_argument("multi-sensor training needs at least two sensors");
  const Pool p = pool(data, train_ids);
  const Split s = split_rows(p.m, config.validation_fraction, config.seed);
  nn::FitOptions opt = val_options(s);
  if (use_triplet) {
    // Triplets come from training rows only.
    Pool tp;
    tp.m = s.train;
    std::vector<int> new_index(static_cast<std::size_t>(p.m.X.rows()), -1);
    for (std::size_t i = 0; i < s.train_rows.size(); ++i) new_index[s.train_rows[i]] = int(i);
    for (const auto& g : p.triplet_groups) {
      std::vector<int> rows;
      for (int r : g)
        if (new_index[r] >= 0) rows.push_back(new_index[r]);
      if (rows.size() >= 3) tp.triplet_groups.push_back(std::move(rows));
    }
    opt.triplets = labeled_triplet_sampler(tp);
  }
  const int out_dim = static_cast<int>(p.m.Y.cols());
  return nn::train(nn::init_model(nn::Architecture::canonical(out_dim, relu_feature_layers),
                                  config.seed),
                   s.train.X, s.train.Y, config, opt);
}

nn::TrainResult self_supervised_adapt(const nn::MlpModel& model, const AdaptationSet& target,
                                      const data::Matrices& source_train,
                                      const data::Matrices& source_val,
                                      const nn::TrainConfig& config,
                                      const AdaptOptions& options) {
  if (target.empty()) throw std::invalid_argument("empty adaptation set");
  if (options.epochs < 1) throw ConfigError("adaptation epochs must be >= 1");
  nn::TrainConfig cfg = config;
  cfg.epochs = options.epochs;
  cfg.learning_rate = options.learning_rate;
  cfg.freeze_head = options.freeze_head;
  cfg.lr_decay = 1.0;
  cfg.seed = derive_seed(config.seed, 0xada7);

  nn::FitOptions opt;
  opt.fit_normalizer = false;
  opt.triplets = unlabeled_triplet_sampler(target);
  opt.steps_per_epoch =
      static_cast<int>((target.budget() + std::size_t(cfg.batch_size) - 1) / std::size_t(cfg.batch_size));
  if (source_val.X.rows() > 0) {
    opt.val_X = &source_val.X;
    opt.val_Y = &source_val.Y;
    const double initial =
        nn::l2_loss(nn::predict(model, source_val.X), source_val.Y, cfg.component_weights);
    const double limit = initial * (1.0 + options.early_stop_tolerance);
    opt.stop_after_epoch = [limit](const nn::EpochLog& e) { return e.val_loss > limit; };
  }
  return nn::train(model, source_train.X, source_train.Y, cfg, opt);
}

std::string condition_name(Condition c, std::size_t budget) {
  switch (c) {
    case Condition::single_sensor: return "Single-sensor";
    case Condition::multi_no_triplet: return "Multi-sensor without triplet loss";
    case Condition::multi_triplet: return "Multi-sensor with triplet loss";
    case Condition::multi_triplet_adapted:
      return "Multi-sensor with triplet loss, adapted using " + std::to_string(budget) +
             " indentations";
  }
  return "?";
}

Condition parse_condition(std::string_view name) {
  if (name == "single_sensor") return Condition::single_sensor;
  if (name == "multi_no_triplet") return Condition::multi_no_triplet;
  if (name == "multi_triplet") return Condition::multi_triplet;
  if (name == "multi_triplet_adapted") return Condition::multi_triplet_adapted;
  throw ConfigError("unknown condition '" + std::string(name) + "'");
}

std::vector<eval::EvalReport> cross_validate(const MultiSensorDataset& data,
                                             const nn::TrainConfig& config,
                                             const CvOptions& options) {
  const auto& folds = data.folds();
  if (folds.empty()) throw ConfigError("cross-validation needs folds");
  const auto has = [&](Condition c) {
    return std::find(options.conditions.begin(), options.conditions.end(), c) !=
           options.conditions.end();
  };
  const bool need_triplet_model = has(Condition::multi_triplet) || has(Condition::multi_triplet_adapted);

  // results[fold][condition index]
  std::vector<std::vector<eval::FoldResult>> results(
      folds.size(), std::vector<eval::FoldResult>(options.conditions.size()));

  auto predict_on = [&](const nn::MlpModel& m, std::span<const std::string> ids,
                        Eigen::MatrixXd& P, Eigen::MatrixXd& Y) {
    predict_sensors(m, data, ids, P, Y);
  };

  parallel_for(static_cast<int>(folds.size()), options.jobs, [&](int fi) {
    const Fold& fold = folds[fi];
    nn::TrainConfig cfg = config;
    cfg.seed = derive_seed(config.seed, 0xf01d, std::uint64_t(fold.index));
    const std::string name = "fold" + std::to_string(fold.index);

    nn::MlpModel triplet_model;
    if (need_triplet_model)
      triplet_model =
          train_multisensor(data, fold.train_ids, cfg, true, options.relu_feature_layers).model;

    for (std::size_t ci = 0; ci < options.conditions.size(); ++ci) {
      Eigen::MatrixXd P, Y;
      switch (options.conditions[ci]) {
        case Condition::single_sensor: {
          const auto targets = single_sensor_targets(data, fold, options.single_test_sensors);
          const int n_train = std::min<int>(options.single_train_sensors, int(fold.test_ids.size()));
          for (int s = 0; s < n_train; ++s) {
            const SensorData& src = data.sensor(fold.test_ids[s]);
            nn::TrainConfig c1 = cfg;
            c1.seed = derive_seed(cfg.seed, 0x5191e, std::uint64_t(s));
            const auto m = nn::train(
                nn::init_model(nn::Architecture::canonical(src.dataset.meta.label_dim,
                                                           options.relu_feature_layers),
                               c1.seed),
                src.dataset, c1);
            Eigen::MatrixXd p, y;
            predict_on(m.model, targets, p, y);
            append_rows(P, p);
            append_rows(Y, y);
          }
          break;
        }
        case Condition::multi_no_triplet: {
          const auto m = train_multisensor(data, fold.train_ids, cfg, false, options.relu_feature_layers);
          predict_on(m.model, fold.test_ids, P, Y);
          break;
        }
        case Condition::multi_triplet:
          predict_on(triplet_model, fold.test_ids, P, Y);
          break;
        case Condition::multi_triplet_adapted: {
          const Pool src = pool(data, fold.train_ids);
          const Split s = split_rows(src.m, cfg.validation_fraction, cfg.seed);
          for (const auto& id : fold.test_ids) {
            const auto& lines = data.sensor(id).adaptation_lines;
            const AdaptationSet set = AdaptationSet::take(lines, options.adaptation_budget);
            nn::MlpModel adapted = triplet_model;
            if (!set.empty())
              adapted = self_supervised_adapt(triplet_model, set, s.train, s.val, cfg, options.adapt).model;
            Eigen::MatrixXd p, y;
            const std::string one[] = {id};
            predict_on(adapted, one, p, y);
            append_rows(P, p);
            append_rows(Y, y);
          }
          break;
        }
      }
      results[fi][ci] = eval::score_fold(name, P, Y);
    }
  });

  std::vector<eval::EvalReport> reports;
  for (std::size_t ci = 0; ci < options.conditions.size(); ++ci) {
    std::vector<eval::FoldResult> per_fold;
    for (std::size_t fi = 0; fi < folds.size(); ++fi) per_fold.push_back(results[fi][ci]);
    reports.push_back(eval::summarize(condition_name(options.conditions[ci], options.adaptation_budget),
                                      std::move(per_fold), options.config_hash));
  }
  return reports;
}

}  // namespace reskin::adapt
