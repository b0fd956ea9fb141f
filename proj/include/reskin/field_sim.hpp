#pragma once

// Magnetized-elastomer skin simulator: a grid of point dipoles embedded in a
// soft layer above five magnetometers. Contacts deform the layer, which moves
// the dipoles and changes the flux seen by each magnetometer.
//
// Units: positions in mm, forces in N, moduli in MPa (N/mm^2). Flux is in
// arbitrary units fixed by `SimParams::field_constant` and
// `SimParams::moment_magnitude`; nothing is matched to real hardware.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "reskin/common.hpp"

namespace reskin::sim {

struct BoardGeometry {
  // Index 0 is the central chip; 1..4 sit at +x, -x, +y, -y.
  std::array<Vec2, kNumMagnetometers> magnetometer_positions;
  double skin_thickness = 2.0;
  double sensor_standoff = 1.0;
  double sensing_width = 20.0;
  double sensing_height = 20.0;

  static BoardGeometry canonical(double pitch = 7.0, double standoff = 1.0,
                                 double thickness = 2.0);

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  double skin_bottom() const { return sensor_standoff; }
  double skin_top() const { return sensor_standoff + skin_thickness; }
  bool contains(const Vec2& p) const;

  bool operator==(const BoardGeometry&) const = default;
};

struct DipoleGrid {
  Eigen::MatrixX3d positions;
  Eigen::MatrixX3d moments;
  std::array<int, 3> dims{0, 0, 0};

  Eigen::Index size() const { return positions.rows(); }
  bool operator==(const DipoleGrid& o) const {
    return dims == o.dims && positions == o.positions && moments == o.moments;
  }
};

// Simulator constants shared by every sensor instance built from one config.
struct SimParams {
  int grid_nx = 10;
  int grid_ny = 10;
  int grid_nz = 2;
  double elastomer_width = 22.0;
  double elastomer_height = 22.0;
  double moment_magnitude = 1.0;
  int magnet_blocks = 4;
  // Alternate the polarity of neighbouring blocks. Off by default: with an
  // even block count the checkerboard cancels at the central chip.
  bool alternating_blocks = false;
  double field_constant = 1.0;
  double tip_radius = 2.0;
  double lateral_factor = 0.3;
  double shear_factor = 1.0;
  double effective_modulus = 1.2;
  double friction = 0.4;
  double noise_rel = 0.005;
  double ambient_temp = 25.0;

  bool operator==(const SimParams&) const = default;
};

struct VariationParams {
  double moment_scale_sd = 0.1;
  double moment_angle_sd = 0.05;
  double position_jitter_sd = 0.2;
  double standoff_offset_sd = 0.1;
  std::uint64_t rng_seed = 0;

  static VariationParams none() { return {0.0, 0.0, 0.0, 0.0, 0}; }
  void validate() const;
};

struct DriftParams {
  bool enabled = true;
  double softening_floor = 0.85;
  double softening_tau = 30000.0;
  // Per-interaction random-walk step of the no-load offset, relative to the
  // rest-flux norm.
  double baseline_step_rel = 1e-5;
  // Per-interaction systematic offset along the sensor's compression-set
  // direction, relative to the rest-flux norm.
  double baseline_trend_rel = 5e-7;

  bool operator==(const DriftParams&) const = default;
};

// Slow changes of the skin over its life. The random walk of the no-load
// offset draws from `rng`, so a state carries everything needed to continue.
struct DriftState {
  std::int64_t interaction_count = 0;
  double softening_factor = 1.0;
  FluxVector baseline_offset = FluxVector::Zero();
  DriftParams params;
  double step_sd = 0.0;
  FluxVector trend = FluxVector::Zero();
  std::mt19937_64 rng;

  bool operator==(const DriftState&) const = default;
};

struct IndenterContact {
  Vec2 location = Vec2::Zero();
  double depth = 0.0;
  double tip_radius = 2.0;
  std::optional<Vec2> drag_velocity;
};

struct SensorInstance {
  BoardGeometry geometry;
  DipoleGrid grid;
  DriftState drift;
  double noise_sd = 0.0;
  SimParams params;
  std::uint64_t seed = 0;
  // Noiseless no-load superposition of `grid`; derived, kept for speed.
  FluxVector rest_flux = FluxVector::Zero();

  IndenterContact contact_at(const Vec2& location, double depth) const {
    return {location, depth, params.tip_radius, std::nullopt};
  }

  bool operator==(const SensorInstance& o) const {
    return geometry == o.geometry && grid == o.grid && drift == o.drift &&
           noise_sd == o.noise_sd && params == o.params && seed == o.seed;
  }
};

struct Reading {
  FluxVector flux = FluxVector::Zero();
  TempVector temperature = TempVector::Zero();
};

// Point-dipole field (3(m.r)r/|r|^5 - m/|r|^3) scaled by `k`.
// Throws std::domain_error when the observation coincides with the dipole.
Vec3 dipole_field(const Vec3& position, const Vec3& moment,
                  const Vec3& observation, double k = 1.0);

FluxVector superpose(const DipoleGrid& grid, const BoardGeometry& geometry,
                     double k = 1.0);

DipoleGrid nominal_grid(const BoardGeometry& geometry, const SimParams& params);

SensorInstance make_sensor(const BoardGeometry& geometry,
                           const VariationParams& variation, std::uint64_t seed,
                           const SimParams& params = {},
                           const DriftParams& drift = {});

// Smooth Gaussian bump under the indenter; dipoles move down and outward,
// attenuated linearly towards the bonded underside of the skin.
DipoleGrid deform(const DipoleGrid& grid, const BoardGeometry& geometry,
                  const IndenterContact& contact, const SimParams& params);

Reading read_flux(const SensorInstance& sensor,
                  const std::optional<IndenterContact>& contact,
                  std::mt19937_64& rng);

// Contact reading minus no-load reading with noise disabled.
FluxVector noiseless_delta(const SensorInstance& sensor,
                           const IndenterContact& contact);

// Hertzian normal force scaled by the softening factor; Coulomb friction
// along the drag direction when the indenter is moving.
Vec3 contact_force(const IndenterContact& contact, const DriftState& drift,
                   const SimParams& params);

double softening_at(const DriftParams& params, std::int64_t interactions);

// `scale` is the rest-flux norm the relative drift rates refer to. The
// systematic offset moves along `set_direction`, or a random direction when
// it is zero.
DriftState initial_drift(const DriftParams& params, double scale, std::uint64_t seed,
                         const FluxVector& set_direction = FluxVector::Zero());
DriftState advance_drift(DriftState drift, std::int64_t n_interactions);

// Mean noiseless flux-delta norm over a 5x5 grid of contacts at 0.7 mm,
// the reference scale for measurement noise.
double typical_delta_norm(const SensorInstance& sensor);

// Compression set: repeated loading leaves the skin slightly pressed in, so
// the no-load reading creeps the way a shallow press over the whole skin
// moves it. Unit vector.
FluxVector compression_set_direction(const SensorInstance& sensor);

std::vector<std::uint8_t> save_snapshot(const SensorInstance& sensor);
SensorInstance load_snapshot(std::span<const std::uint8_t> bytes);

}  // namespace reskin::sim
