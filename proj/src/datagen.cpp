#include "reskin/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "reskin/binio.hpp"

namespace reskin::data {

namespace {

constexpr std::uint32_t kDatasetMagic = 0x444b5352;  // "RSKD"
constexpr std::uint32_t kLinesMagic = 0x4c4b5352;    // "RSKL"
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint64_t kFramePeriodUs = 2500;       // 400 Hz

// Shared per-interaction step: no-load reading, contact reading, force label,
// then one interaction of drift.
RawIndentation interact(sim::SensorInstance& sensor, const sim::IndenterContact& contact,
                        std::mt19937_64& rng, int pass) {
  RawIndentation raw;
  raw.location = contact.location;
  raw.depth = contact.depth;
  raw.pass_index = pass;
  raw.interaction_index = sensor.drift.interaction_count;
  raw.no_load = sim::read_flux(sensor, std::nullopt, rng).flux;
  const sim::Reading r = sim::read_flux(sensor, contact, rng);
  raw.contact = r.flux;
  raw.temperature = r.temperature;
  raw.force = sim::contact_force(contact, sensor.drift, sensor.params);
  sensor.drift = sim::advance_drift(std::move(sensor.drift), 1);
  return raw;
}

Dataset make_dataset(const std::string& protocol, int label_dim, const std::string& sensor_id,
                     std::uint64_t seed) {
  Dataset ds;
  ds.meta.protocol = protocol;
  ds.meta.label_dim = label_dim;
  ds.meta.sensor_ids = {sensor_id};
  ds.meta.seeds = {seed};
  return ds;
}

}  // namespace

std::vector<Vec2> snake_grid_locations() {
  std::vector<Vec2> out;
  out.reserve(kGridLocations);
  const int mid = kGridSide / 2;
  for (int j = 0; j < kGridSide; ++j)
    for (int step = 0; step < kGridSide; ++step) {
      const int i = (j % 2 == 0) ? step : kGridSide - 1 - step;
      if (std::abs(i - mid) >= 3 && std::abs(j - mid) >= 3) continue;
      out.emplace_back(kGridPitch * (i - mid), kGridPitch * (j - mid));
    }
  return out;
}

std::vector<RawIndentation> record_snake_session(sim::SensorInstance& sensor,
                                                 std::int64_t n_interactions,
                                                 std::uint64_t seed) {
  const auto locations = snake_grid_locations();
  const std::int64_t per_pass = std::int64_t(locations.size()) * kGridDepths.size();
  std::mt19937_64 rng(seed);
  std::vector<RawIndentation> out;
  out.reserve(static_cast<std::size_t>(std::max<std::int64_t>(n_interactions, 0)));
  for (std::int64_t i = 0; i < n_interactions; ++i) {
    const std::int64_t within = i % per_pass;
    const double depth = kGridDepths[within / std::int64_t(locations.size())];
    const Vec2& loc = locations[within % std::int64_t(locations.size())];
    out.push_back(interact(sensor, sensor.contact_at(loc, depth), rng,
                           static_cast<int>(i / per_pass)));
  }
  return out;
}

std::vector<Indentation> apply_baseline(std::span<const RawIndentation> raw,
                                        protocol::BaselineTracker tracker,
                                        std::uint32_t sensor_index) {
  std::vector<Indentation> out;
  out.reserve(raw.size());
  for (const auto& r : raw) {
    tracker.observe_no_load(r.no_load);
    Indentation s;
    s.location = r.location;
    s.depth = r.depth;
    s.force = r.force;
    s.flux_delta = tracker.contact_delta(r.contact);
    s.sensor = sensor_index;
    s.pass_index = r.pass_index;
    s.interaction_index = r.interaction_index;
    out.push_back(s);
  }
  return out;
}

FrameLog to_frames(std::span<const RawIndentation> raw) {
  FrameLog log;
  log.frames.reserve(2 * raw.size());
  std::uint64_t t = 0;
  for (const auto& r : raw) {
    log.frames.push_back(protocol::make_frame(t, r.no_load, r.temperature));
    log.contact.push_back(false);
    t += kFramePeriodUs;
    log.frames.push_back(protocol::make_frame(t, r.contact, r.temperature));
    log.contact.push_back(true);
    t += kFramePeriodUs;
  }
  return log;
}

Dataset snake_grid_protocol(sim::SensorInstance& sensor, int passes,
                            const ProtocolOptions& options, const std::string& sensor_id) {
  Dataset ds = make_dataset("snake_grid", 3, sensor_id, options.seed);
  if (passes < 0) throw std::invalid_argument("passes must be >= 0");
  if (passes == 0) return ds;
  const std::int64_t n = std::int64_t(passes) * kGridLocations * std::int64_t(kGridDepths.size());
  const auto raw = record_snake_session(sensor, n, options.seed);
  ds.samples = apply_baseline(raw, protocol::BaselineTracker(options.baseline, options.baseline_k));
  return ds;
}

Dataset shear_drag_protocol(sim::SensorInstance& sensor, double spacing, double depth,
                            const ProtocolOptions& options, const ShearOptions& shear,
                            const std::string& sensor_id) {
  if (!(spacing > 0.0)) throw std::invalid_argument("drag spacing must be positive");
  if (!(shear.step > 0.0)) throw std::invalid_argument("drag sample step must be positive");
  Dataset ds = make_dataset("shear_drag", 5, sensor_id, options.seed);
  std::mt19937_64 rng(options.seed);
  protocol::BaselineTracker tracker(options.baseline, options.baseline_k);

  const double half = 0.5 * shear.span;
  const int n_lines = static_cast<int>(std::floor(shear.span / spacing + 1e-9)) + 1;
  const int n_steps = static_cast<int>(std::floor(shear.span / shear.step + 1e-9)) + 1;
  int line_no = 0;
  for (int axis = 0; axis < 2; ++axis)
    for (int l = 0; l < n_lines; ++l, ++line_no) {
      const double offset = -half + l * spacing;
      const double dir = (line_no % 2 == 0) ? 1.0 : -1.0;
      Vec2 velocity = axis == 0 ? Vec2(dir * shear.drag_speed, 0.0)
                                : Vec2(0.0, dir * shear.drag_speed);
      // Indenter lifted between drags: one no-load reading per line.
      tracker.observe_no_load(sim::read_flux(sensor, std::nullopt, rng).flux);
      for (int s = 0; s < n_steps; ++s) {
        const double along = dir * (-half + s * shear.step);
        const Vec2 loc = axis == 0 ? Vec2(along, offset) : Vec2(offset, along);
        sim::IndenterContact contact = sensor.contact_at(loc, depth);
        contact.drag_velocity = velocity;
        Indentation smp;
        smp.location = loc;
        smp.depth = depth;
        smp.force = sim::contact_force(contact, sensor.drift, sensor.params);
        smp.flux_delta = tracker.contact_delta(sim::read_flux(sensor, contact, rng).flux);
        smp.pass_index = line_no;
        smp.interaction_index = sensor.drift.interaction_count;
        ds.samples.push_back(smp);
      }
      sensor.drift = sim::advance_drift(std::move(sensor.drift), 1);
    }
  return ds;
}

UnlabeledLine strip_labels(const LineTrajectory& line) { return {line.ordered_flux}; }

std::vector<LineTrajectory> line_adaptation_protocol(sim::SensorInstance& sensor, int n_lines,
                                                     int points_per_line,
                                                     const ProtocolOptions& options,
                                                     const LineOptions& lo) {
  if (n_lines < 1) throw std::invalid_argument("need at least one line");
  if (points_per_line < 3) throw std::invalid_argument("lines need at least 3 points");
  std::mt19937_64 geo_rng(derive_seed(options.seed, 0x11e5));
  std::mt19937_64 noise_rng(derive_seed(options.seed, 0x2015e));
  std::uniform_real_distribution<double> coord(-lo.half_extent, lo.half_extent);
  std::uniform_real_distribution<double> depth_dist(lo.min_depth, lo.max_depth);
  std::normal_distribution<double> normal(0.0, 1.0);
  protocol::BaselineTracker tracker(options.baseline, options.baseline_k);
  const double limit_x = 0.5 * sensor.geometry.sensing_width;
  const double limit_y = 0.5 * sensor.geometry.sensing_height;

  std::vector<LineTrajectory> lines;
  lines.reserve(n_lines);
  for (int l = 0; l < n_lines; ++l) {
    LineTrajectory line;
    do {
      line.start = Vec2(coord(geo_rng), coord(geo_rng));
      line.end = Vec2(coord(geo_rng), coord(geo_rng));
    } while ((line.end - line.start).norm() < lo.min_length);
    const double depth = depth_dist(geo_rng);
    line.n_points = points_per_line;
    for (int i = 0; i < points_per_line; ++i) {
      const double t = double(i) / (points_per_line - 1);
      Vec2 loc = line.start + t * (line.end - line.start);
      double d = depth;
      if (lo.manual) {
        loc += lo.manual_location_sd * Vec2(normal(geo_rng), normal(geo_rng));
        loc.x() = std::clamp(loc.x(), -limit_x, limit_x);
        loc.y() = std::clamp(loc.y(), -limit_y, limit_y);
        d = std::clamp(d + lo.manual_depth_sd * normal(geo_rng), 0.05, 1.5);
      }
      const RawIndentation raw = interact(sensor, sensor.contact_at(loc, d), noise_rng, l);
      tracker.observe_no_load(raw.no_load);
      line.ordered_flux.push_back(tracker.contact_delta(raw.contact));
      line.indices.push_back(i);
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<Triplet> sample_triplets(std::span<const UnlabeledLine> lines,
                                     std::size_t n_triplets, std::uint64_t seed) {
  if (lines.empty()) throw std::invalid_argument("no lines to sample triplets from");
  std::vector<double> weights;
  for (const auto& l : lines) {
    if (l.ordered_flux.size() < 3)
      throw std::invalid_argument("triplet sampling needs lines with >= 3 points");
    weights.push_back(double(l.ordered_flux.size()));
  }
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> pick_line(weights.begin(), weights.end());
  std::vector<Triplet> out;
  out.reserve(n_triplets);
  while (out.size() < n_triplets) {
    const int li = pick_line(rng);
    const auto& flux = lines[li].ordered_flux;
    const int n = static_cast<int>(flux.size());
    std::uniform_int_distribution<int> idx(0, n - 1);
    const int a = idx(rng);
    const int j = idx(rng);
    const int k = idx(rng);
    if (j == a || k == a || j == k) continue;
    const int dj = std::abs(j - a), dk = std::abs(k - a);
    if (dj == dk) continue;
    const int p = dj < dk ? j : k;
    const int q = dj < dk ? k : j;
    out.push_back({flux[a], flux[p], flux[q], li, a, p, q});
  }
  return out;
}

std::vector<Triplet> sample_triplets(std::span<const LineTrajectory> lines,
                                     std::size_t n_triplets, std::uint64_t seed) {
  std::vector<UnlabeledLine> stripped;
  stripped.reserve(lines.size());
  for (const auto& l : lines) stripped.push_back(strip_labels(l));
  return sample_triplets(std::span<const UnlabeledLine>(stripped), n_triplets, seed);
}

sim::BoardGeometry board_geometry(const sim::BoardGeometry& nominal, const FleetSpec& spec,
                                  int board, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 0xb0a2d, std::uint64_t(board)));
  std::normal_distribution<double> normal(0.0, 1.0);
  sim::BoardGeometry g = nominal;
  g.sensor_standoff = std::max(0.05, g.sensor_standoff + spec.board_standoff_sd * normal(rng));
  const double sx = spec.board_shift_sd * normal(rng);
  const double sy = spec.board_shift_sd * normal(rng);
  for (auto& p : g.magnetometer_positions) p += Vec2(sx, sy);
  return g;
}

FleetMember make_fleet_member(const sim::BoardGeometry& nominal, const FleetSpec& spec,
                              int board, int skin, const sim::SimParams& params,
                              const sim::VariationParams& variation,
                              const sim::DriftParams& drift, std::uint64_t seed) {
  FleetMember m;
  m.id = "b" + std::to_string(board) + "s" + std::to_string(skin);
  m.board = board;
  m.skin = skin;
  const auto geometry = board_geometry(nominal, spec, board, seed);
  const std::uint64_t skin_seed =
      derive_seed(seed, 0x5c1, std::uint64_t(board) * 1000 + std::uint64_t(skin));
  m.sensor = sim::make_sensor(geometry, variation, skin_seed, params, drift);
  return m;
}

std::vector<FleetMember> make_fleet(const sim::BoardGeometry& nominal, const FleetSpec& spec,
                                    const sim::SimParams& params,
                                    const sim::VariationParams& variation,
                                    const sim::DriftParams& drift, std::uint64_t seed) {
  std::vector<FleetMember> fleet;
  for (int b = 0; b < spec.boards; ++b)
    for (int s = 0; s < spec.skins_per_board; ++s)
      fleet.push_back(make_fleet_member(nominal, spec, b, s, params, variation, drift, seed));
  return fleet;
}

Eigen::RowVectorXd label_row(const Indentation& s, int label_dim) {
  Eigen::RowVectorXd y(label_dim);
  if (label_dim == 3) {
    y << s.location.x(), s.location.y(), s.force.z();
  } else if (label_dim == 5) {
    y << s.location.x(), s.location.y(), s.force.x(), s.force.y(), s.force.z();
  } else {
    throw DimensionError("label dimension must be 3 or 5");
  }
  return y;
}

Matrices to_matrices(const Dataset& ds, int group) {
  Matrices m;
  const auto n = static_cast<Eigen::Index>(ds.samples.size());
  m.X.resize(n, kFluxDim);
  m.Y.resize(n, ds.meta.label_dim);
  m.group.assign(ds.samples.size(), group);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.X.row(i) = ds.samples[i].flux_delta.transpose();
    m.Y.row(i) = label_row(ds.samples[i], ds.meta.label_dim);
  }
  return m;
}

Matrices concat(std::span<const Matrices> parts) {
  Matrices out;
  Eigen::Index rows = 0;
  Eigen::Index ycols = parts.empty() ? 0 : parts.front().Y.cols();
  for (const auto& p : parts) {
    if (p.Y.cols() != ycols) throw DimensionError("cannot concatenate datasets with different label dims");
    rows += p.X.rows();
  }
  out.X.resize(rows, kFluxDim);
  out.Y.resize(rows, ycols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.X.middleRows(r, p.X.rows()) = p.X;
    out.Y.middleRows(r, p.Y.rows()) = p.Y;
    out.group.insert(out.group.end(), p.group.begin(), p.group.end());
    r += p.X.rows();
  }
  return out;
}

Matrices select_rows(const Matrices& m, std::span<const int> rows) {
  Matrices out;
  out.X.resize(Eigen::Index(rows.size()), m.X.cols());
  out.Y.resize(Eigen::Index(rows.size()), m.Y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(Eigen::Index(i)) = m.X.row(rows[i]);
    out.Y.row(Eigen::Index(i)) = m.Y.row(rows[i]);
    out.group.push_back(m.group.empty() ? 0 : m.group[rows[i]]);
  }
  return out;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  nlohmann::json header = {
      {"format", "reskin-dataset"},
      {"protocol", ds.meta.protocol},
      {"label_dim", ds.meta.label_dim},
      {"sensor_ids", ds.meta.sensor_ids},
      {"seeds", ds.meta.seeds},
      {"config_hash", ds.meta.config_hash},
      {"recipe", ds.meta.recipe},
  };
  binio::Writer w;
  w.put(kDatasetMagic);
  w.put(kFormatVersion);
  w.put_string(header.dump());
  w.put<std::uint64_t>(ds.samples.size());
  for (const auto& s : ds.samples) {
    for (double v : {s.location.x(), s.location.y(), s.depth, s.force.x(), s.force.y(), s.force.z()})
      w.put(v);
    for (int i = 0; i < kFluxDim; ++i) w.put(s.flux_delta[i]);
    w.put<std::uint32_t>(s.sensor);
    w.put<std::int32_t>(s.pass_index);
    w.put<std::int64_t>(s.interaction_index);
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.get<std::uint32_t>() != kDatasetMagic) throw IoError("not a dataset container");
  if (const auto v = r.get<std::uint32_t>(); v != kFormatVersion)
    throw IoError("unsupported dataset version " + std::to_string(v));
  Dataset ds;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string());
    ds.meta.protocol = header.at("protocol").get<std::string>();
    ds.meta.label_dim = header.at("label_dim").get<int>();
    ds.meta.sensor_ids = header.at("sensor_ids").get<std::vector<std::string>>();
    ds.meta.seeds = header.at("seeds").get<std::vector<std::uint64_t>>();
    ds.meta.config_hash = header.at("config_hash").get<std::string>();
    ds.meta.recipe = header.at("recipe");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad dataset header: ") + e.what());
  }
  const auto n = r.get<std::uint64_t>();
  if (n > r.remaining() / 184) throw IoError("dataset record count exceeds file size");
  ds.samples.resize(n);
  for (auto& s : ds.samples) {
    s.location.x() = r.get<double>();
    s.location.y() = r.get<double>();
    s.depth = r.get<double>();
    s.force.x() = r.get<double>();
    s.force.y() = r.get<double>();
    s.force.z() = r.get<double>();
    for (int i = 0; i < kFluxDim; ++i) s.flux_delta[i] = r.get<double>();
    s.sensor = r.get<std::uint32_t>();
    s.pass_index = r.get<std::int32_t>();
    s.interaction_index = r.get<std::int64_t>();
    if (s.sensor >= ds.meta.sensor_ids.size()) throw IoError("record references unknown sensor");
  }
  if (!r.done()) throw IoError("trailing bytes in dataset container");
  return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
  binio::write_file(path, encode_dataset(ds));
}

Dataset read_dataset(const std::string& path) { return decode_dataset(binio::read_file(path)); }

std::string dataset_csv(const Dataset& ds) {
  std::string out = "sensor_id,pass,interaction,x,y,depth,fx,fy,fz";
  for (int i = 0; i < kFluxDim; ++i) out += ",b" + std::to_string(i);
  out += "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out += buf;
  };
  for (const auto& s : ds.samples) {
    out += ds.meta.sensor_ids.at(s.sensor) + "," + std::to_string(s.pass_index) + "," +
           std::to_string(s.interaction_index);
    for (double v : {s.location.x(), s.location.y(), s.depth, s.force.x(), s.force.y(), s.force.z()})
      num(v);
    for (int i = 0; i < kFluxDim; ++i) num(s.flux_delta[i]);
    out += "\n";
  }
  return out;
}

std::vector<std::uint8_t> encode_lines(std::span<const UnlabeledLine> lines,
                                       const nlohmann::json& header) {
  binio::Writer w;
  w.put(kLinesMagic);
  w.put(kFormatVersion);
  w.put_string(header.dump());
  w.put<std::uint64_t>(lines.size());
  for (const auto& l : lines) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(l.ordered_flux.size()));
    for (const auto& f : l.ordered_flux)
      for (int i = 0; i < kFluxDim; ++i) w.put(f[i]);
  }
  return w.take();
}

std::vector<UnlabeledLine> decode_lines(std::span<const std::uint8_t> bytes,
                                        nlohmann::json* header) {
  binio::Reader r(bytes);
  if (r.get<std::uint32_t>() != kLinesMagic) throw IoError("not a line-trajectory container");
  if (const auto v = r.get<std::uint32_t>(); v != kFormatVersion)
    throw IoError("unsupported line container version " + std::to_string(v));
  const std::string h = r.get_string();
  if (header) {
    try {
      *header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("bad line container header: ") + e.what());
    }
  }
  const auto n = r.get<std::uint64_t>();
  std::vector<UnlabeledLine> lines;
  for (std::uint64_t l = 0; l < n; ++l) {
    UnlabeledLine line;
    const auto pts = r.get<std::uint32_t>();
    if (pts > r.remaining() / (8 * kFluxDim)) throw IoError("line container truncated");
    line.ordered_flux.resize(pts);
    for (auto& f : line.ordered_flux)
      for (int i = 0; i < kFluxDim; ++i) f[i] = r.get<double>();
    lines.push_back(std::move(line));
  }
  if (!r.done()) throw IoError("trailing bytes in line container");
  return lines;
}

}  // namespace reskin::data
