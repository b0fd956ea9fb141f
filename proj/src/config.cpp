#include "reskin/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "reskin/binio.hpp"

namespace reskin::cfg {

namespace {

using json = nlohmann::json;

std::vector<KeyInfo> build_registry() {
  const json conditions = {"single_sensor", "multi_no_triplet", "multi_triplet",
                           "multi_triplet_adapted"};
  return {
      {"seed", 0, "global seed; every other seed is derived from it"},
      {"preset", "", "experiment preset (see `reskin presets`)"},
      {"output.root", "", "output root; empty uses $RESKIN_OUTPUT_ROOT or ./runs", false},

      {"sim.grid_nx", 10, "dipoles along x"},
      {"sim.grid_ny", 10, "dipoles along y"},
      {"sim.grid_nz", 2, "dipole layers through the skin"},
      {"sim.elastomer_width", 22.0, "magnetized region width, mm"},
      {"sim.elastomer_height", 22.0, "magnetized region height, mm"},
      {"sim.moment_magnitude", 1.0, "dipole moment magnitude"},
      {"sim.magnet_blocks", 4, "magnetization blocks per side"},
      {"sim.alternating_blocks", false, "alternate block polarity"},
      {"sim.field_constant", 1.0, "field scale constant"},
      {"sim.tip_radius", 2.0, "indenter tip radius, mm"},
      {"sim.lateral_factor", 0.3, "outward displacement relative to vertical"},
      {"sim.shear_factor", 1.0, "tangential displacement gain while dragging"},
      {"sim.effective_modulus", 1.2, "Hertz effective modulus, MPa"},
      {"sim.friction", 0.4, "Coulomb friction coefficient"},
      {"sim.noise_rel", 0.005, "noise SD relative to a typical flux delta"},
      {"sim.ambient_temp", 25.0, "reported chip temperature, degC"},

      {"board.pitch", 7.0, "magnetometer pitch, mm"},
      {"board.standoff", 1.0, "magnetometer plane to skin underside, mm"},
      {"board.thickness", 2.0, "skin thickness, mm"},

      {"variation.moment_scale_sd", 0.1, "relative SD of dipole strength"},
      {"variation.moment_angle_sd", 0.05, "SD of dipole tilt, rad"},
      {"variation.position_jitter_sd", 0.2, "SD of dipole placement, mm"},
      {"variation.standoff_offset_sd", 0.1, "SD of per-skin standoff offset, mm"},

      {"drift.enabled", true, "simulate softening and baseline drift"},
      {"drift.softening_floor", 0.85, "asymptotic stiffness factor"},
      {"drift.softening_tau", 30000.0, "softening time constant, interactions"},
      {"drift.baseline_step_rel", 1e-5, "baseline random-walk step relative to rest flux"},
      {"drift.baseline_trend_rel", 5e-7, "baseline trend per interaction relative to rest flux"},

      {"fleet.boards", 6, "boards in the simulated fleet"},
      {"fleet.skins_per_board", 3, "skins per board"},
      {"fleet.board_standoff_sd", 0.15, "SD of per-board standoff, mm"},
      {"fleet.board_shift_sd", 0.3, "SD of per-board in-plane shift, mm"},

      {"data.protocol", "snake_grid", "snake_grid or shear_drag"},
      {"data.fleet", false, "simulate the whole fleet instead of one sensor"},
      {"data.passes", 26, "snake-grid passes per sensor (390 indentations each)"},
      {"data.baseline", "before_each", "no-load baseline mode: once, every_k, before_each"},
      {"data.baseline_k", 100, "contacts between baseline updates in every_k mode"},

      {"shear.spacing", 2.0, "distance between drag lines, mm"},
      {"shear.depth", 0.6, "drag depth, mm"},
      {"shear.step", 0.5, "distance between samples along a drag, mm"},
      {"shear.drag_speed", 5.0, "drag speed, mm/s"},
      {"shear.span", 16.0, "length of each drag, mm"},

      {"lines.count", 24, "adaptation lines recorded per sensor"},
      {"lines.points", 65, "indentations per adaptation line"},
      {"lines.manual", false, "emulate hand-held pokes"},
      {"lines.location_sd", 0.5, "hand-held location SD, mm"},
      {"lines.depth_sd", 0.15, "hand-held depth SD, mm"},
      {"lines.min_length", 8.0, "minimum line length, mm"},
      {"lines.min_depth", 0.4, "minimum line depth, mm"},
      {"lines.max_depth", 1.2, "maximum line depth, mm"},

      {"train.learning_rate", 1e-3, "Adam learning rate"},
      {"train.batch_size", 256, "minibatch size"},
      {"train.epochs", 100, "training epochs"},
      {"train.beta1", 0.9, "Adam beta1"},
      {"train.beta2", 0.999, "Adam beta2"},
      {"train.adam_eps", 1e-8, "Adam epsilon"},
      {"train.lr_decay", 1.0, "per-epoch learning-rate factor"},
      {"train.triplet_weight", 1.0, "weight of the triplet term"},
      {"train.validation_fraction", 0.1, "fraction of training rows held out for validation"},
      {"train.relu_feature_layers", false, "also apply ReLU after layers 2 and 3"},
      {"train.component_weights", json::array(), "per-output L2 weights; empty means 1"},
      {"train.test_samples", 1000, "same-sensor experiment: held-out test rows"},
      {"train.total_samples", 10000, "same-sensor experiment: rows used in total"},

      {"adapt.budget", 390, "target indentations available for adaptation"},
      {"adapt.epochs", 50, "adaptation epochs over the target set"},
      {"adapt.early_stop_tolerance", 0.25, "allowed relative rise of source validation loss"},
      {"adapt.learning_rate", 1e-4, "adaptation learning rate"},
      {"adapt.freeze_head", false, "keep layers after the feature layer fixed"},

      {"cv.conditions", conditions, "cross-validation conditions, in report order"},
      {"cv.single_train_sensors", 3, "single-sensor condition: sensors trained on"},
      {"cv.single_test_sensors", 9, "single-sensor condition: sensors tested on"},

      {"sweep.budgets", json::array({0, 130, 390, 780, 1560}), "adaptation budgets swept"},
      {"sweep.sensor_counts", json::array({2, 5, 10, 15}), "training sensor counts swept"},
      {"transfer.standoff_factor", 0.2, "flexible-board standoff relative to rigid"},
      {"transfer.target_skins", 3, "skins on the flexible target board"},

      {"drift_study.total_interactions", 50000, "interactions simulated"},
      {"drift_study.train_prefix", 5000, "leading interactions used for training"},
      {"drift_study.eval_window", 1000, "interactions per evaluation window"},
      {"drift_study.eval_stride", 5000, "spacing of evaluation windows"},
      {"drift_study.modes", json::array({"once", "every_k", "before_each"}), "baseline modes compared"},
      {"drift_study.every_k", 100, "k for the every_k mode"},

      {"stream.max_rate_hz", 400.0, "replay rate cap; 0 disables", false},
  };
}

const KeyInfo& info(std::string_view key) {
  for (const auto& k : registry())
    if (k.key == key) return k;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void flatten_into(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object())
      flatten_into(*it, key, out);
    else
      out.emplace_back(key, *it);
  }
}

json coerce(const KeyInfo& k, const json& v) {
  const json& d = k.default_value;
  auto bad = [&](const char* want) {
    return ConfigError("config key '" + k.key + "' expects " + want + ", got " + v.dump());
  };
  if (d.is_boolean()) {
    if (!v.is_boolean()) throw bad("a boolean");
    return v;
  }
  if (d.is_number_integer() || d.is_number_unsigned()) {
    if (v.is_number_integer() || v.is_number_unsigned()) return v;
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
      return json(static_cast<std::int64_t>(v.get<double>()));
    throw bad("an integer");
  }
  if (d.is_number_float()) {
    if (!v.is_number()) throw bad("a number");
    return json(v.get<double>());
  }
  if (d.is_string()) {
    if (!v.is_string()) throw bad("a string");
    return v;
  }
  if (d.is_array()) {
    if (!v.is_array()) throw bad("a list");
    return v;
  }
  return v;
}

std::vector<protocol::BaselineMode> modes_of(const json& arr) {
  std::vector<protocol::BaselineMode> out;
  for (const auto& m : arr) out.push_back(protocol::parse_baseline_mode(m.get<std::string>()));
  return out;
}

}  // namespace

const std::vector<KeyInfo>& registry() {
  static const std::vector<KeyInfo> r = build_registry();
  return r;
}

std::string keys_help() {
  std::string out;
  for (const auto& k : registry()) {
    std::string line = "  " + k.key;
    if (line.size() < 34) line.resize(34, ' ');
    line += " = " + k.default_value.dump();
    if (line.size() < 56) line.resize(56, ' ');
    out += line + "  " + k.description + "\n";
  }
  return out;
}

std::string default_output_root() {
  if (const char* env = std::getenv("RESKIN_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

RunConfig::RunConfig() {
  for (const auto& k : registry()) values_[k.key] = k.default_value;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.merge(j);
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
  const auto bytes = binio::read_file(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config file '" + path + "': " + e.what());
  }
  return from_json(j);
}

void RunConfig::merge(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten_into(j, "", flat);
  for (const auto& [k, v] : flat) set_json(k, v);
}

void RunConfig::set_json(std::string_view key, const nlohmann::json& value) {
  const KeyInfo& k = info(key);
  values_[k.key] = coerce(k, value);
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const KeyInfo& k = info(key);
  if (k.default_value.is_string()) {
    values_[k.key] = std::string(value);
    return;
  }
  json v;
  try {
    v = json::parse(value);
  } catch (const json::exception&) {
    throw ConfigError("config key '" + k.key + "': cannot parse value '" + std::string(value) + "'");
  }
  values_[k.key] = coerce(k, v);
}

const nlohmann::json& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

nlohmann::json RunConfig::flat() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

nlohmann::json RunConfig::nested() const {
  json j = json::object();
  for (const auto& [k, v] : values_) j[json::json_pointer("/" + [&] {
    std::string p = k;
    for (auto& c : p)
      if (c == '.') c = '/';
    return p;
  }())] = v;
  return j;
}

std::string RunConfig::hash() const {
  json j = json::object();
  for (const auto& k : registry())
    if (k.hashed) j[k.key] = values_.at(k.key);
  return hex64(fnv1a64(j.dump()));
}

sim::SimParams RunConfig::sim_params() const {
  sim::SimParams p;
  p.grid_nx = as<int>("sim.grid_nx");
  p.grid_ny = as<int>("sim.grid_ny");
  p.grid_nz = as<int>("sim.grid_nz");
  p.elastomer_width = as<double>("sim.elastomer_width");
  p.elastomer_height = as<double>("sim.elastomer_height");
  p.moment_magnitude = as<double>("sim.moment_magnitude");
  p.magnet_blocks = as<int>("sim.magnet_blocks");
  p.alternating_blocks = as<bool>("sim.alternating_blocks");
  p.field_constant = as<double>("sim.field_constant");
  p.tip_radius = as<double>("sim.tip_radius");
  p.lateral_factor = as<double>("sim.lateral_factor");
  p.shear_factor = as<double>("sim.shear_factor");
  p.effective_modulus = as<double>("sim.effective_modulus");
  p.friction = as<double>("sim.friction");
  p.noise_rel = as<double>("sim.noise_rel");
  p.ambient_temp = as<double>("sim.ambient_temp");
  if (p.grid_nx < 1 || p.grid_ny < 1 || p.grid_nz < 1)
    throw ConfigError("sim.grid_* must be >= 1");
  if (p.magnet_blocks < 1) throw ConfigError("sim.magnet_blocks must be >= 1");
  if (!(p.tip_radius > 0.0)) throw ConfigError("sim.tip_radius must be positive");
  if (!(p.effective_modulus > 0.0)) throw ConfigError("sim.effective_modulus must be positive");
  if (!(p.noise_rel >= 0.0)) throw ConfigError("sim.noise_rel must be >= 0");
  if (!(p.friction >= 0.0)) throw ConfigError("sim.friction must be >= 0");
  return p;
}

sim::BoardGeometry RunConfig::board() const {
  const auto g = sim::BoardGeometry::canonical(as<double>("board.pitch"), as<double>("board.standoff"),
                                               as<double>("board.thickness"));
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("board: ") + e.what());
  }
  return g;
}

sim::VariationParams RunConfig::variation() const {
  sim::VariationParams v;
  v.moment_scale_sd = as<double>("variation.moment_scale_sd");
  v.moment_angle_sd = as<double>("variation.moment_angle_sd");
  v.position_jitter_sd = as<double>("variation.position_jitter_sd");
  v.standoff_offset_sd = as<double>("variation.standoff_offset_sd");
  v.rng_seed = 0;
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("variation: ") + e.what());
  }
  return v;
}

sim::DriftParams RunConfig::drift() const {
  sim::DriftParams d;
  d.enabled = as<bool>("drift.enabled");
  d.softening_floor = as<double>("drift.softening_floor");
  d.softening_tau = as<double>("drift.softening_tau");
  d.baseline_step_rel = as<double>("drift.baseline_step_rel");
  d.baseline_trend_rel = as<double>("drift.baseline_trend_rel");
  if (!(d.softening_floor > 0.0 && d.softening_floor <= 1.0))
    throw ConfigError("drift.softening_floor must lie in (0, 1]");
  if (!(d.softening_tau > 0.0)) throw ConfigError("drift.softening_tau must be positive");
  if (!(d.baseline_step_rel >= 0.0) || !(d.baseline_trend_rel >= 0.0))
    throw ConfigError("drift.baseline_* must be >= 0");
  return d;
}

data::FleetSpec RunConfig::fleet() const {
  data::FleetSpec f;
  f.boards = as<int>("fleet.boards");
  f.skins_per_board = as<int>("fleet.skins_per_board");
  f.board_standoff_sd = as<double>("fleet.board_standoff_sd");
  f.board_shift_sd = as<double>("fleet.board_shift_sd");
  if (f.boards < 1 || f.skins_per_board < 1) throw ConfigError("fleet sizes must be >= 1");
  if (!(f.board_standoff_sd >= 0.0) || !(f.board_shift_sd >= 0.0))
    throw ConfigError("fleet SDs must be >= 0");
  return f;
}

data::ProtocolOptions RunConfig::protocol_options() const {
  data::ProtocolOptions o;
  o.baseline = protocol::parse_baseline_mode(as<std::string>("data.baseline"));
  o.baseline_k = as<int>("data.baseline_k");
  if (o.baseline_k < 1) throw ConfigError("data.baseline_k must be >= 1");
  if (as<int>("data.passes") < 1) throw ConfigError("data.passes must be >= 1");
  const auto proto = as<std::string>("data.protocol");
  if (proto != "snake_grid" && proto != "shear_drag")
    throw ConfigError("data.protocol must be snake_grid or shear_drag");
  o.seed = derive_seed(as<std::uint64_t>("seed"), 0xda7a);
  return o;
}

data::ShearOptions RunConfig::shear() const {
  data::ShearOptions s;
  s.step = as<double>("shear.step");
  s.drag_speed = as<double>("shear.drag_speed");
  s.span = as<double>("shear.span");
  if (!(s.step > 0.0) || !(s.span > 0.0) || !(as<double>("shear.spacing") > 0.0))
    throw ConfigError("shear.step, shear.span and shear.spacing must be positive");
  if (!(s.drag_speed >= 0.0)) throw ConfigError("shear.drag_speed must be >= 0");
  return s;
}

data::LineOptions RunConfig::lines() const {
  data::LineOptions l;
  l.manual = as<bool>("lines.manual");
  l.manual_location_sd = as<double>("lines.location_sd");
  l.manual_depth_sd = as<double>("lines.depth_sd");
  l.min_length = as<double>("lines.min_length");
  l.min_depth = as<double>("lines.min_depth");
  l.max_depth = as<double>("lines.max_depth");
  if (as<int>("lines.count") < 1) throw ConfigError("lines.count must be >= 1");
  if (as<int>("lines.points") < 3) throw ConfigError("lines.points must be >= 3");
  if (!(l.min_depth > 0.0 && l.min_depth <= l.max_depth))
    throw ConfigError("lines.min_depth must be positive and <= lines.max_depth");
  if (!(l.min_length > 0.0 && l.min_length < 2.0 * std::sqrt(2.0) * l.half_extent))
    throw ConfigError("lines.min_length must be positive and fit inside the grid");
  return l;
}

nn::TrainConfig RunConfig::train() const {
  nn::TrainConfig t;
  t.learning_rate = as<double>("train.learning_rate");
  t.batch_size = as<int>("train.batch_size");
  t.epochs = as<int>("train.epochs");
  t.beta1 = as<double>("train.beta1");
  t.beta2 = as<double>("train.beta2");
  t.adam_eps = as<double>("train.adam_eps");
  t.lr_decay = as<double>("train.lr_decay");
  t.triplet_weight = as<double>("train.triplet_weight");
  t.validation_fraction = as<double>("train.validation_fraction");
  t.seed = derive_seed(as<std::uint64_t>("seed"), 0x7ea1);
  const auto w = get("train.component_weights");
  if (!w.empty()) {
    t.component_weights.resize(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w[i].is_number()) throw ConfigError("train.component_weights must hold numbers");
      t.component_weights[static_cast<Eigen::Index>(i)] = w[i].get<double>();
    }
  }
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (as<int>("train.test_samples") < 1 || as<int>("train.total_samples") <= as<int>("train.test_samples"))
    throw ConfigError("train.total_samples must exceed train.test_samples >= 1");
  return t;
}

adapt::AdaptOptions RunConfig::adapt_options() const {
  adapt::AdaptOptions a;
  a.epochs = as<int>("adapt.epochs");
  a.early_stop_tolerance = as<double>("adapt.early_stop_tolerance");
  a.learning_rate = as<double>("adapt.learning_rate");
  a.freeze_head = as<bool>("adapt.freeze_head");
  if (a.epochs < 1) throw ConfigError("adapt.epochs must be >= 1");
  if (!(a.learning_rate > 0.0)) throw ConfigError("adapt.learning_rate must be positive");
  if (!(a.early_stop_tolerance >= 0.0)) throw ConfigError("adapt.early_stop_tolerance must be >= 0");
  if (as<int>("adapt.budget") < 0) throw ConfigError("adapt.budget must be >= 0");
  return a;
}

adapt::CvOptions RunConfig::cv_options() const {
  adapt::CvOptions o;
  o.conditions.clear();
  for (const auto& c : get("cv.conditions")) {
    if (!c.is_string()) throw ConfigError("cv.conditions must hold strings");
    o.conditions.push_back(adapt::parse_condition(c.get<std::string>()));
  }
  if (o.conditions.empty()) throw ConfigError("cv.conditions must not be empty");
  o.adaptation_budget = static_cast<std::size_t>(as<int>("adapt.budget"));
  o.adapt = adapt_options();
  o.single_train_sensors = as<int>("cv.single_train_sensors");
  o.single_test_sensors = as<int>("cv.single_test_sensors");
  if (o.single_train_sensors < 1 || o.single_test_sensors < 1)
    throw ConfigError("cv.single_* must be >= 1");
  o.relu_feature_layers = as<bool>("train.relu_feature_layers");
  o.config_hash = hash();
  return o;
}

eval::DriftStudySpec RunConfig::drift_study() const {
  eval::DriftStudySpec s;
  s.total_interactions = as<std::int64_t>("drift_study.total_interactions");
  s.train_prefix = as<std::int64_t>("drift_study.train_prefix");
  s.eval_window = as<std::int64_t>("drift_study.eval_window");
  s.eval_stride = as<std::int64_t>("drift_study.eval_stride");
  s.every_k = as<int>("drift_study.every_k");
  for (const auto& m : get("drift_study.modes")) {
    if (!m.is_string()) throw ConfigError("drift_study.modes must hold strings");
  }
  s.baseline_modes = modes_of(get("drift_study.modes"));
  s.seed = derive_seed(as<std::uint64_t>("seed"), 0xd51f7);
  s.validate();
  return s;
}

void RunConfig::validate() const {
  sim_params();
  board();
  variation();
  drift();
  fleet();
  protocol_options();
  shear();
  lines();
  train();
  adapt_options();
  cv_options();
  drift_study();
  for (const auto& b : get("sweep.budgets"))
    if (!b.is_number_integer() || b.get<int>() < 0)
      throw ConfigError("sweep.budgets must hold integers >= 0");
  for (const auto& c : get("sweep.sensor_counts"))
    if (!c.is_number_integer() || c.get<int>() < 2)
      throw ConfigError("sweep.sensor_counts must hold integers >= 2");
  const double f = as<double>("transfer.standoff_factor");
  if (!(f > 0.0)) throw ConfigError("transfer.standoff_factor must be positive");
  if (as<int>("transfer.target_skins") < 1) throw ConfigError("transfer.target_skins must be >= 1");
  if (!(as<double>("stream.max_rate_hz") >= 0.0)) throw ConfigError("stream.max_rate_hz must be >= 0");
}

}  // namespace reskin::cfg
