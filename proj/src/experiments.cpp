#include "reskin/experiments.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "reskin/parallel.hpp"

namespace reskin::exp {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kFleetStream = 0xf1ee7;
constexpr std::uint64_t kFlexStream = 0xf1e8;

std::vector<PresetInfo> build_presets() {
  return {
      {"same_sensor", "train and test on one simulated sensor (random 9,000/1,000 split)",
       {{"data.fleet", false}, {"data.passes", 26}, {"train.total_samples", 10000},
        {"train.test_samples", 1000}}},
      {"table2", "6-fold board-held-out cross-validation of the four approaches",
       {{"data.fleet", true}, {"data.passes", 26}}},
      {"fig5a_budget_sweep", "adaptation accuracy versus target indentation budget",
       {{"data.fleet", true}, {"data.passes", 26}}},
      {"fig5b_sensor_sweep", "held-out accuracy versus number of training sensors",
       {{"data.fleet", true}, {"data.passes", 26}}},
      {"flex_transfer", "rigid-board fleet model applied to a flexible (thin-standoff) board",
       {{"data.fleet", true}, {"data.passes", 26}, {"transfer.standoff_factor", 0.2}}},
      {"manual_adapt", "adaptation from 5 hand-held lines of 65 pokes",
       {{"data.fleet", true},
        {"data.passes", 26},
        {"lines.manual", true},
        {"lines.count", 5},
        {"lines.points", 65},
        {"adapt.budget", 325},
        {"cv.conditions", {"multi_triplet", "multi_triplet_adapted"}}}},
      {"drift", "error growth over 50,000 interactions under each baseline policy",
       {{"data.fleet", false}, {"drift.enabled", true}}},
  };
}

eval::FoldResult score(const std::string& name, const Eigen::MatrixXd& P, const Eigen::MatrixXd& Y) {
  return eval::score_fold(name, P, Y);
}

}  // namespace

const std::vector<PresetInfo>& presets() {
  static const std::vector<PresetInfo> p = build_presets();
  return p;
}

const PresetInfo& preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

void apply_preset(cfg::RunConfig& config, std::string_view name) {
  const PresetInfo& p = preset(name);
  config.set_json("preset", std::string(name));
  config.merge(p.overrides);
}

sim::SensorInstance make_single_sensor(const cfg::RunConfig& config) {
  return sim::make_sensor(config.board(), config.variation(),
                          derive_seed(config.as<std::uint64_t>("seed"), 0x5e45), config.sim_params(),
                          config.drift());
}

data::Dataset simulate_dataset(const cfg::RunConfig& config, sim::SensorInstance& sensor,
                               const std::string& id) {
  const auto po = config.protocol_options();
  data::Dataset ds;
  if (config.as<std::string>("data.protocol") == "shear_drag")
    ds = data::shear_drag_protocol(sensor, config.as<double>("shear.spacing"),
                                   config.as<double>("shear.depth"), po, config.shear(), id);
  else
    ds = data::snake_grid_protocol(sensor, config.as<int>("data.passes"), po, id);
  ds.meta.config_hash = config.hash();
  ds.meta.recipe = {{"config", config.flat()}, {"sensor_seed", sensor.seed}};
  return ds;
}

std::vector<data::FleetMember> make_fleet(const cfg::RunConfig& config) {
  return data::make_fleet(config.board(), config.fleet(), config.sim_params(), config.variation(),
                          config.drift(), derive_seed(config.as<std::uint64_t>("seed"), kFleetStream));
}

adapt::MultiSensorDataset simulate_sensors(const cfg::RunConfig& config,
                                           std::vector<data::FleetMember> members, int jobs,
                                           std::uint64_t stream) {
  const auto base = config.protocol_options();
  const auto line_opts = config.lines();
  const int n_lines = config.as<int>("lines.count");
  const int points = config.as<int>("lines.points");
  const std::uint64_t seed = config.as<std::uint64_t>("seed");
  std::vector<adapt::SensorData> out(members.size());
  parallel_for(static_cast<int>(members.size()), jobs, [&](int k) {
    auto& m = members[k];
    data::ProtocolOptions po = base;
    po.seed = derive_seed(seed, stream, std::uint64_t(k));
    adapt::SensorData sd;
    sd.id = m.id;
    sd.board = m.board;
    sd.dataset = data::snake_grid_protocol(m.sensor, config.as<int>("data.passes"), po, m.id);
    sd.dataset.meta.config_hash = config.hash();
    po.seed = derive_seed(seed, stream ^ 0x11e5, std::uint64_t(k));
    for (const auto& line : data::line_adaptation_protocol(m.sensor, n_lines, points, po, line_opts))
      sd.adaptation_lines.push_back(data::strip_labels(line));
    out[k] = std::move(sd);
  });
  adapt::MultiSensorDataset msd;
  for (auto& s : out) msd.add(std::move(s));
  return msd;
}

adapt::MultiSensorDataset simulate_fleet(const cfg::RunConfig& config, int jobs,
                                         const Progress& progress) {
  if (progress) progress("simulating fleet");
  auto msd = simulate_sensors(config, make_fleet(config), jobs, kFleetStream);
  msd.make_board_folds();
  return msd;
}

ExperimentResult same_sensor(const cfg::RunConfig& config) {
  auto sensor = make_single_sensor(config);
  const data::Dataset ds = simulate_dataset(config, sensor, "sensor");
  const data::Matrices all = data::to_matrices(ds);
  const int total = config.as<int>("train.total_samples");
  const int n_test = config.as<int>("train.test_samples");
  if (all.X.rows() < total)
    throw ConfigError("same-sensor experiment needs " + std::to_string(total) +
                      " samples but data.passes yields " + std::to_string(all.X.rows()));
  std::vector<int> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(config.as<std::uint64_t>("seed"), 0x5b1e));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::span<const int> s(idx);
  const data::Matrices test = data::select_rows(all, s.first(static_cast<std::size_t>(n_test)));
  const data::Matrices train = data::select_rows(all, s.subspan(static_cast<std::size_t>(n_test)));

  const auto tc = config.train();
  nn::FitOptions opt;
  opt.val_X = &test.X;  // logged only; nothing is selected on it
  opt.val_Y = &test.Y;
  const auto arch = nn::Architecture::canonical(ds.meta.label_dim,
                                                config.as<bool>("train.relu_feature_layers"));
  const auto result = nn::train(nn::init_model(arch, tc.seed), train.X, train.Y, tc, opt);
  ExperimentResult r;
  r.reports.push_back(eval::summarize(
      "Same-sensor", {score("test", nn::predict(result.model, test.X), test.Y)}, config.hash()));
  r.artifacts["train_log.csv"] = result.log.to_csv();
  return r;
}

ExperimentResult budget_sweep(const cfg::RunConfig& config, const adapt::MultiSensorDataset& data,
                              int jobs) {
  std::vector<std::size_t> budgets;
  for (const auto& b : config.get("sweep.budgets")) budgets.push_back(b.get<std::size_t>());
  const auto tc = config.train();
  const auto ao = config.adapt_options();
  const bool relu = config.as<bool>("train.relu_feature_layers");
  const auto& folds = data.folds();
  std::vector<std::vector<eval::FoldResult>> res(folds.size(),
                                                 std::vector<eval::FoldResult>(budgets.size()));
  parallel_for(static_cast<int>(folds.size()), jobs, [&](int fi) {
    const auto& fold = folds[fi];
    nn::TrainConfig c = tc;
    c.seed = derive_seed(tc.seed, 0xf01d, std::uint64_t(fold.index));
    const auto model = adapt::train_multisensor(data, fold.train_ids, c, true, relu).model;
    const adapt::Pool src = adapt::pool(data, fold.train_ids);
    const adapt::Split split = adapt::split_rows(src.m, c.validation_fraction, c.seed);
    for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
      Eigen::MatrixXd P, Y;
      for (const auto& id : fold.test_ids) {
        nn::MlpModel m = model;
        if (budgets[bi] > 0) {
          const auto set = adapt::AdaptationSet::take(data.sensor(id).adaptation_lines, budgets[bi]);
          m = adapt::self_supervised_adapt(model, set, split.train, split.val, c, ao).model;
        }
        Eigen::MatrixXd p, y;
        const std::string one[] = {id};
        adapt::predict_sensors(m, data, one, p, y);
        adapt::append_rows(P, p);
        adapt::append_rows(Y, y);
      }
      res[fi][bi] = score("fold" + std::to_string(fold.index), P, Y);
    }
  });
  ExperimentResult r;
  std::string curve = "budget,accuracy_mean,mse_xy_mean,mse_f_mean\n";
  for (std::size_t bi = 0; bi < budgets.size(); ++bi) {
    std::vector<eval::FoldResult> per;
    for (auto& f : res) per.push_back(f[bi]);
    const auto name = budgets[bi] == 0
                          ? adapt::condition_name(adapt::Condition::multi_triplet, 0)
                          : adapt::condition_name(adapt::Condition::multi_triplet_adapted, budgets[bi]);
    r.reports.push_back(eval::summarize(name, std::move(per), config.hash()));
    const auto& rep = r.reports.back();
    curve += std::to_string(budgets[bi]) + "," + json(rep.accuracy_pct.mean).dump() + "," +
             json(rep.mse_xy.mean).dump() + "," + json(rep.mse_f.mean).dump() + "\n";
  }
  r.artifacts["budget_curve.csv"] = curve;
  return r;
}

ExperimentResult sensor_sweep(const cfg::RunConfig& config, const adapt::MultiSensorDataset& data,
                              int jobs) {
  std::vector<int> counts;
  for (const auto& c : config.get("sweep.sensor_counts")) counts.push_back(c.get<int>());
  const auto tc = config.train();
  const bool relu = config.as<bool>("train.relu_feature_layers");
  const auto& folds = data.folds();
  std::vector<std::vector<eval::FoldResult>> res(folds.size(),
                                                 std::vector<eval::FoldResult>(counts.size()));
  // One job per (fold, count) pair.
  const int n_jobs = static_cast<int>(folds.size() * counts.size());
  parallel_for(n_jobs, jobs, [&](int j) {
    const auto fi = static_cast<std::size_t>(j) / counts.size();
    const auto ci = static_cast<std::size_t>(j) % counts.size();
    const auto& fold = folds[fi];
    std::vector<std::string> ids = fold.train_ids;
    std::mt19937_64 rng(derive_seed(tc.seed, 0x5e75, std::uint64_t(fold.index)));
    std::shuffle(ids.begin(), ids.end(), rng);
    if (counts[ci] > int(ids.size()))
      throw ConfigError("sweep.sensor_counts asks for " + std::to_string(counts[ci]) +
                        " training sensors but folds have " + std::to_string(ids.size()));
    ids.resize(static_cast<std::size_t>(counts[ci]));
    nn::TrainConfig c = tc;
    c.seed = derive_seed(tc.seed, 0xf01d, std::uint64_t(fold.index));
    const auto model = adapt::train_multisensor(data, ids, c, true, relu).model;
    Eigen::MatrixXd P, Y;
    adapt::predict_sensors(model, data, fold.test_ids, P, Y);
    res[fi][ci] = score("fold" + std::to_string(fold.index), P, Y);
  });
  ExperimentResult r;
  std::string curve = "sensors,accuracy_mean,mse_xy_mean,mse_f_mean\n";
  for (std::size_t ci = 0; ci < counts.size(); ++ci) {
    std::vector<eval::FoldResult> per;
    for (auto& f : res) per.push_back(f[ci]);
    r.reports.push_back(eval::summarize("Multi-sensor with triplet loss, " +
                                            std::to_string(counts[ci]) + " training sensors",
                                        std::move(per), config.hash()));
    const auto& rep = r.reports.back();
    curve += std::to_string(counts[ci]) + "," + json(rep.accuracy_pct.mean).dump() + "," +
             json(rep.mse_xy.mean).dump() + "," + json(rep.mse_f.mean).dump() + "\n";
  }
  r.artifacts["sensor_curve.csv"] = curve;
  return r;
}

ExperimentResult flex_transfer(const cfg::RunConfig& config, int jobs, const Progress& progress) {
  const auto source = simulate_fleet(config, jobs, progress);

  // Flexible board: same design with the skin much closer to the chips.
  sim::BoardGeometry flex = config.board();
  flex.sensor_standoff *= config.as<double>("transfer.standoff_factor");
  const auto fleet_spec = config.fleet();
  const std::uint64_t seed = derive_seed(config.as<std::uint64_t>("seed"), kFlexStream);
  std::vector<data::FleetMember> members;
  for (int s = 0; s < config.as<int>("transfer.target_skins"); ++s) {
    auto m = data::make_fleet_member(flex, fleet_spec, fleet_spec.boards, s, config.sim_params(),
                                     config.variation(), config.drift(), seed);
    m.id = "flex" + std::to_string(s);
    members.push_back(std::move(m));
  }
  if (progress) progress("simulating flexible board");
  const auto target = simulate_sensors(config, std::move(members), jobs, kFlexStream);

  const auto tc = config.train();
  const auto ids = source.ids();
  if (progress) progress("training on the rigid fleet");
  const auto model =
      adapt::train_multisensor(source, ids, tc, true, config.as<bool>("train.relu_feature_layers"))
          .model;
  const adapt::Pool src = adapt::pool(source, ids);
  const adapt::Split split = adapt::split_rows(src.m, tc.validation_fraction, tc.seed);
  const auto budget = static_cast<std::size_t>(config.as<int>("adapt.budget"));
  const auto ao = config.adapt_options();

  const auto tids = target.ids();
  std::vector<eval::FoldResult> plain(tids.size()), adapted(tids.size());
  parallel_for(static_cast<int>(tids.size()), jobs, [&](int k) {
    const std::string one[] = {tids[k]};
    Eigen::MatrixXd P, Y;
    adapt::predict_sensors(model, target, one, P, Y);
    plain[k] = score(tids[k], P, Y);
    nn::MlpModel m = model;
    if (budget > 0) {
      const auto set = adapt::AdaptationSet::take(target.sensor(tids[k]).adaptation_lines, budget);
      m = adapt::self_supervised_adapt(model, set, split.train, split.val, tc, ao).model;
    }
    adapt::predict_sensors(m, target, one, P, Y);
    adapted[k] = score(tids[k], P, Y);
  });
  ExperimentResult r;
  r.reports.push_back(eval::summarize("Rigid-board model on flexible board", plain, config.hash()));
  r.reports.push_back(eval::summarize("Rigid-board model on flexible board, adapted using " +
                                          std::to_string(budget) + " indentations",
                                      adapted, config.hash()));
  return r;
}

ExperimentResult drift(const cfg::RunConfig& config, int jobs) {
  const auto sensor = make_single_sensor(config);
  const auto spec = config.drift_study();
  const auto study = eval::drift_study(sensor, config.train(), spec,
                                       config.as<bool>("train.relu_feature_layers"), jobs);
  ExperimentResult r;
  for (const auto& c : study.curves) {
    std::vector<eval::FoldResult> per;
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const auto& d = c.windows[w];
      per.push_back({"window" + std::to_string(w), d.accuracy_pct, d.mse_xy, d.mse_f,
                     static_cast<std::uint64_t>(spec.eval_window)});
    }
    r.reports.push_back(
        eval::summarize("Baseline " + protocol::to_string(c.mode), std::move(per), config.hash()));
  }
  r.artifacts["drift_curves.csv"] = study.curves_csv();
  r.artifacts["force_scatter.csv"] = study.scatter_csv();
  r.artifacts["drift_summary.json"] = study.to_json().dump(2) + "\n";
  return r;
}

ExperimentResult run_experiment(const cfg::RunConfig& config, int jobs, const Progress& progress) {
  config.validate();
  const auto name = config.as<std::string>("preset");
  if (name.empty()) throw ConfigError("no experiment preset selected (set `preset`)");
  preset(name);
  if (progress) progress("running " + name);
  if (name == "same_sensor") return same_sensor(config);
  if (name == "drift") return drift(config, jobs);
  if (name == "flex_transfer") return flex_transfer(config, jobs, progress);
  const auto data = simulate_fleet(config, jobs, progress);
  if (name == "fig5a_budget_sweep") return budget_sweep(config, data, jobs);
  if (name == "fig5b_sensor_sweep") return sensor_sweep(config, data, jobs);
  // table2 and manual_adapt
  auto opts = config.cv_options();
  opts.jobs = jobs;
  ExperimentResult r;
  r.reports = adapt::cross_validate(data, config.train(), opts);
  return r;
}

}  // namespace reskin::exp
