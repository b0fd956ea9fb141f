#include "reskin/field_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

#include "reskin/binio.hpp"

namespace reskin::sim {

namespace {

constexpr std::uint32_t kSnapshotMagic = 0x534b5352;  // "RSKS"
constexpr std::uint32_t kSnapshotVersion = 1;

// Block index of grid column `i` out of `n` for a pattern with `blocks`
// blocks. Columns that sit exactly on a block boundary go to the block nearer
// the centre so the pattern stays mirror-symmetric.
int block_of(int i, int n, int blocks) {
  const int u = (2 * i + 1) * blocks;
  int q = u / (2 * n);
  if (u % (2 * n) == 0 && 2 * q > blocks) --q;
  return std::clamp(q, 0, blocks - 1);
}

Vec3 magnetometer_point(const BoardGeometry& g, int chip) {
  return {g.magnetometer_positions[chip].x(), g.magnetometer_positions[chip].y(),
          0.0};
}

}  // namespace

BoardGeometry BoardGeometry::canonical(double pitch, double standoff,
                                       double thickness) {
  BoardGeometry g;
  g.magnetometer_positions = {Vec2{0.0, 0.0}, Vec2{pitch, 0.0}, Vec2{-pitch, 0.0},
                              Vec2{0.0, pitch}, Vec2{0.0, -pitch}};
  g.sensor_standoff = standoff;
  g.skin_thickness = thickness;
  return g;
}

void BoardGeometry::validate() const {
  if (!(skin_thickness > 0.0))
    throw std::invalid_argument("skin_thickness must be positive");
  if (!(sensor_standoff >= 0.0))
    throw std::invalid_argument("sensor_standoff must be non-negative");
  if (!(sensing_width > 0.0 && sensing_height > 0.0))
    throw std::invalid_argument("sensing area must be positive");
  // Four chips symmetric about the central one.
  const Vec2 c = magnetometer_positions[0];
  const Vec2 sum = magnetometer_positions[1] + magnetometer_positions[2] +
                   magnetometer_positions[3] + magnetometer_positions[4] -
                   4.0 * c;
  if (sum.norm() > 1e-9)
    throw std::invalid_argument("outer magnetometers must be symmetric about the centre");
}

bool BoardGeometry::contains(const Vec2& p) const {
  return std::abs(p.x()) <= 0.5 * sensing_width + 1e-12 &&
         std::abs(p.y()) <= 0.5 * sensing_height + 1e-12;
}

void VariationParams::validate() const {
  if (moment_scale_sd < 0 || moment_angle_sd < 0 || position_jitter_sd < 0 ||
      standoff_offset_sd < 0)
    throw std::invalid_argument("variation standard deviations must be >= 0");
}

Vec3 dipole_field(const Vec3& position, const Vec3& moment,
                  const Vec3& observation, double k) {
  const Vec3 r = observation - position;
  const double r2 = r.squaredNorm();
  if (r2 == 0.0) throw std::domain_error("dipole field evaluated at the dipole");
  const double inv_r = 1.0 / std::sqrt(r2);
  const double inv_r3 = inv_r * inv_r * inv_r;
  const double inv_r5 = inv_r3 * inv_r * inv_r;
  return k * (3.0 * moment.dot(r) * inv_r5 * r - moment * inv_r3);
}

FluxVector superpose(const DipoleGrid& grid, const BoardGeometry& geometry,
                     double k) {
  FluxVector out = FluxVector::Zero();
  for (int chip = 0; chip < kNumMagnetometers; ++chip) {
    const Vec3 obs = magnetometer_point(geometry, chip);
    Vec3 acc = Vec3::Zero();
    for (Eigen::Index i = 0; i < grid.size(); ++i)
      acc += dipole_field(grid.positions.row(i).transpose(),
                          grid.moments.row(i).transpose(), obs, k);
    out.segment<3>(3 * chip) = acc;
  }
  return out;
}

DipoleGrid nominal_grid(const BoardGeometry& geometry, const SimParams& p) {
  if (p.grid_nx < 1 || p.grid_ny < 1 || p.grid_nz < 1)
    throw std::invalid_argument("dipole grid dimensions must be positive");
  DipoleGrid grid;
  grid.dims = {p.grid_nx, p.grid_ny, p.grid_nz};
  const Eigen::Index n = Eigen::Index(p.grid_nx) * p.grid_ny * p.grid_nz;
  grid.positions.resize(n, 3);
  grid.moments.resize(n, 3);
  const double dx = p.elastomer_width / p.grid_nx;
  const double dy = p.elastomer_height / p.grid_ny;
  const double dz = geometry.skin_thickness / p.grid_nz;
  Eigen::Index idx = 0;
  for (int k = 0; k < p.grid_nz; ++k)
    for (int j = 0; j < p.grid_ny; ++j)
      for (int i = 0; i < p.grid_nx; ++i, ++idx) {
        grid.positions.row(idx) << -0.5 * p.elastomer_width + (i + 0.5) * dx,
            -0.5 * p.elastomer_height + (j + 0.5) * dy,
            geometry.skin_bottom() + (k + 0.5) * dz;
        const int bx = block_of(i, p.grid_nx, p.magnet_blocks);
        const int by = block_of(j, p.grid_ny, p.magnet_blocks);
        const double sign = (!p.alternating_blocks || (bx + by) % 2 == 0) ? 1.0 : -1.0;
        grid.moments.row(idx) << 0.0, 0.0, sign * p.moment_magnitude;
      }
  return grid;
}

SensorInstance make_sensor(const BoardGeometry& geometry,
                           const VariationParams& variation, std::uint64_t seed,
                           const SimParams& params, const DriftParams& drift) {
  geometry.validate();
  variation.validate();
  std::mt19937_64 rng(derive_seed(seed, variation.rng_seed, 0x5e05));
  std::normal_distribution<double> normal(0.0, 1.0);

  SensorInstance s;
  s.params = params;
  s.seed = seed;
  s.geometry = geometry;
  s.geometry.sensor_standoff =
      std::max(0.05, geometry.sensor_standoff +
                        variation.standoff_offset_sd * normal(rng));
  s.grid = nominal_grid(s.geometry, params);

  const double zlo = s.geometry.skin_bottom();
  const double zhi = s.geometry.skin_top();
  for (Eigen::Index i = 0; i < s.grid.size(); ++i) {
    const double jx = normal(rng), jy = normal(rng), jz = normal(rng);
    const double js = normal(rng);
    const double w1 = normal(rng), w2 = normal(rng);
    Vec3 pos = s.grid.positions.row(i).transpose();
    pos += variation.position_jitter_sd * Vec3(jx, jy, jz);
    pos.z() = std::clamp(pos.z(), zlo, zhi);
    s.grid.positions.row(i) = pos.transpose();

    Vec3 m = s.grid.moments.row(i).transpose();
    m *= std::max(0.1, 1.0 + variation.moment_scale_sd * js);
    const Vec3 tilt = variation.moment_angle_sd * Vec3(w1, w2, 0.0);
    if (const double angle = tilt.norm(); angle > 0.0)
      m = Eigen::AngleAxisd(angle, tilt / angle) * m;
    s.grid.moments.row(i) = m.transpose();
  }

  s.rest_flux = superpose(s.grid, s.geometry, params.field_constant);
  const double typical = typical_delta_norm(s);
  s.noise_sd = params.noise_rel * typical;
  s.drift = initial_drift(drift, s.rest_flux.norm(), derive_seed(seed, variation.rng_seed, 0xd21f7),
                          compression_set_direction(s));
  return s;
}

DipoleGrid deform(const DipoleGrid& grid, const BoardGeometry& geometry,
                  const IndenterContact& contact, const SimParams& params) {
  if (contact.depth < 0.0) throw std::invalid_argument("indentation depth must be >= 0");
  if (!geometry.contains(contact.location))
    throw std::invalid_argument("contact outside the sensing area");
  if (!(contact.tip_radius > 0.0))
    throw std::invalid_argument("tip radius must be positive");
  DipoleGrid out = grid;
  if (contact.depth == 0.0) return out;

  const double sigma = contact.tip_radius;
  const double inv_two_s2 = 1.0 / (2.0 * sigma * sigma);
  Vec2 drag_dir = Vec2::Zero();
  if (contact.drag_velocity && contact.drag_velocity->norm() > 0.0)
    drag_dir = contact.drag_velocity->normalized();

  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const Vec2 d = grid.positions.row(i).head<2>().transpose() - contact.location;
    const double r = d.norm();
    const double w = contact.depth * std::exp(-r * r * inv_two_s2);
    const double zf = std::clamp(
        (grid.positions(i, 2) - geometry.skin_bottom()) / geometry.skin_thickness,
        0.0, 1.0);
    Vec2 lateral = Vec2::Zero();
    if (r > 0.0) lateral = params.lateral_factor * (r / sigma) * w * zf * (d / r);
    lateral += params.shear_factor * params.friction * w * zf * drag_dir;
    out.positions(i, 0) += lateral.x();
    out.positions(i, 1) += lateral.y();
    out.positions(i, 2) -= w * zf;
  }
  return out;
}

Reading read_flux(const SensorInstance& sensor,
                  const std::optional<IndenterContact>& contact,
                  std::mt19937_64& rng) {
  Reading out;
  out.flux = contact ? superpose(deform(sensor.grid, sensor.geometry, *contact,
                                        sensor.params),
                                 sensor.geometry, sensor.params.field_constant)
                     : sensor.rest_flux;
  out.flux += sensor.drift.baseline_offset;
  if (sensor.noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, sensor.noise_sd);
    for (int i = 0; i < kFluxDim; ++i) out.flux[i] += noise(rng);
  }
  out.temperature.setConstant(sensor.params.ambient_temp);
  return out;
}

FluxVector noiseless_delta(const SensorInstance& sensor,
                           const IndenterContact& contact) {
  return superpose(deform(sensor.grid, sensor.geometry, contact, sensor.params),
                   sensor.geometry, sensor.params.field_constant) -
         sensor.rest_flux;
}

Vec3 contact_force(const IndenterContact& contact, const DriftState& drift,
                   const SimParams& params) {
  if (contact.depth < 0.0) throw std::invalid_argument("indentation depth must be >= 0");
  const double fz = drift.softening_factor * (4.0 / 3.0) * params.effective_modulus *
                    std::sqrt(contact.tip_radius) * std::pow(contact.depth, 1.5);
  Vec3 f(0.0, 0.0, fz);
  if (contact.drag_velocity && contact.drag_velocity->norm() > 0.0)
    f.head<2>() = params.friction * fz * contact.drag_velocity->normalized();
  return f;
}

double softening_at(const DriftParams& p, std::int64_t n) {
  if (!p.enabled) return 1.0;
  return p.softening_floor +
         (1.0 - p.softening_floor) * std::exp(-double(n) / p.softening_tau);
}

DriftState initial_drift(const DriftParams& params, double scale, std::uint64_t seed,
                         const FluxVector& set_direction) {
  DriftState d;
  d.params = params;
  d.step_sd = params.baseline_step_rel * scale;
  d.rng.seed(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  FluxVector dir;
  for (int i = 0; i < kFluxDim; ++i) dir[i] = normal(d.rng);
  if (set_direction.norm() > 0.0) dir = set_direction;
  d.trend = params.baseline_trend_rel * scale * dir.normalized();
  d.softening_factor = softening_at(params, 0);
  return d;
}

DriftState advance_drift(DriftState drift, std::int64_t n) {
  if (n < 0) throw std::invalid_argument("interaction count must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::int64_t step = 0; step < n; ++step) {
    ++drift.interaction_count;
    if (!drift.params.enabled) continue;
    drift.baseline_offset += drift.trend;
    for (int i = 0; i < kFluxDim; ++i)
      drift.baseline_offset[i] += drift.step_sd * std::clamp(normal(drift.rng), -4.0, 4.0);
  }
  drift.softening_factor = softening_at(drift.params, drift.interaction_count);
  return drift;
}

double typical_delta_norm(const SensorInstance& sensor) {
  double total = 0.0;
  int count = 0;
  for (int j = -2; j <= 2; ++j)
    for (int i = -2; i <= 2; ++i) {
      total += noiseless_delta(sensor, sensor.contact_at(Vec2(4.0 * i, 4.0 * j), 0.7)).norm();
      ++count;
    }
  return total / count;
}

FluxVector compression_set_direction(const SensorInstance& sensor) {
  FluxVector sum = FluxVector::Zero();
  for (int j = -2; j <= 2; ++j)
    for (int i = -2; i <= 2; ++i)
      sum += noiseless_delta(sensor, sensor.contact_at(Vec2(4.0 * i, 4.0 * j), 0.2));
  return sum.normalized();
}

std::vector<std::uint8_t> save_snapshot(const SensorInstance& s) {
  binio::Writer w;
  w.put(kSnapshotMagic);
  w.put(kSnapshotVersion);
  for (const auto& m : s.geometry.magnetometer_positions) w.put_matrix(m.transpose());
  w.put(s.geometry.skin_thickness);
  w.put(s.geometry.sensor_standoff);
  w.put(s.geometry.sensing_width);
  w.put(s.geometry.sensing_height);

  const SimParams& p = s.params;
  for (int v : {p.grid_nx, p.grid_ny, p.grid_nz, p.magnet_blocks}) w.put<std::int32_t>(v);
  w.put<std::uint8_t>(p.alternating_blocks ? 1 : 0);
  for (double v : {p.elastomer_width, p.elastomer_height, p.moment_magnitude,
                   p.field_constant, p.tip_radius, p.lateral_factor, p.shear_factor,
                   p.effective_modulus, p.friction, p.noise_rel, p.ambient_temp})
    w.put(v);

  for (int d : s.grid.dims) w.put<std::int32_t>(d);
  w.put<std::uint64_t>(s.grid.size());
  w.put_matrix(s.grid.positions);
  w.put_matrix(s.grid.moments);

  w.put<std::int64_t>(s.drift.interaction_count);
  w.put(s.drift.softening_factor);
  w.put_matrix(s.drift.baseline_offset.transpose());
  w.put<std::uint8_t>(s.drift.params.enabled ? 1 : 0);
  w.put(s.drift.params.softening_floor);
  w.put(s.drift.params.softening_tau);
  w.put(s.drift.params.baseline_step_rel);
  w.put(s.drift.params.baseline_trend_rel);
  w.put(s.drift.step_sd);
  w.put_matrix(s.drift.trend.transpose());
  std::ostringstream rng_state;
  rng_state << s.drift.rng;
  w.put_string(rng_state.str());

  w.put(s.noise_sd);
  w.put<std::uint64_t>(s.seed);
  return w.take();
}

SensorInstance load_snapshot(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.get<std::uint32_t>() != kSnapshotMagic) throw IoError("not a sensor snapshot");
  if (const auto v = r.get<std::uint32_t>(); v != kSnapshotVersion)
    throw IoError("unsupported sensor snapshot version " + std::to_string(v));
  SensorInstance s;
  for (auto& m : s.geometry.magnetometer_positions) {
    Eigen::RowVector2d row;
    r.get_matrix(row);
    m = row.transpose();
  }
  s.geometry.skin_thickness = r.get<double>();
  s.geometry.sensor_standoff = r.get<double>();
  s.geometry.sensing_width = r.get<double>();
  s.geometry.sensing_height = r.get<double>();

  SimParams& p = s.params;
  for (int* v : {&p.grid_nx, &p.grid_ny, &p.grid_nz, &p.magnet_blocks}) *v = r.get<std::int32_t>();
  p.alternating_blocks = r.get<std::uint8_t>() != 0;
  for (double* v : {&p.elastomer_width, &p.elastomer_height, &p.moment_magnitude,
                    &p.field_constant, &p.tip_radius, &p.lateral_factor, &p.shear_factor,
                    &p.effective_modulus, &p.friction, &p.noise_rel, &p.ambient_temp})
    *v = r.get<double>();

  for (int& d : s.grid.dims) d = r.get<std::int32_t>();
  const auto n = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  if (n != Eigen::Index(s.grid.dims[0]) * s.grid.dims[1] * s.grid.dims[2])
    throw IoError("snapshot grid size does not match its dimensions");
  s.grid.positions.resize(n, 3);
  s.grid.moments.resize(n, 3);
  r.get_matrix(s.grid.positions);
  r.get_matrix(s.grid.moments);

  s.drift.interaction_count = r.get<std::int64_t>();
  s.drift.softening_factor = r.get<double>();
  Eigen::Matrix<double, 1, kFluxDim> offset;
  r.get_matrix(offset);
  s.drift.baseline_offset = offset.transpose();
  s.drift.params.enabled = r.get<std::uint8_t>() != 0;
  s.drift.params.softening_floor = r.get<double>();
  s.drift.params.softening_tau = r.get<double>();
  s.drift.params.baseline_step_rel = r.get<double>();
  s.drift.params.baseline_trend_rel = r.get<double>();
  s.drift.step_sd = r.get<double>();
  r.get_matrix(offset);
  s.drift.trend = offset.transpose();
  std::istringstream rng_state(r.get_string());
  rng_state >> s.drift.rng;

  s.noise_sd = r.get<double>();
  s.seed = r.get<std::uint64_t>();
  if (!r.done()) throw IoError("trailing bytes in sensor snapshot");
  s.rest_flux = superpose(s.grid, s.geometry, s.params.field_constant);
  return s;
}

}  // namespace reskin::sim
