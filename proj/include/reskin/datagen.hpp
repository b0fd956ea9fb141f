#pragma once

// Drives the simulator through the indentation protocols and packages the
// results as datasets. A protocol mutates the sensor it is given: drift is
// path-dependent, so every indentation advances the sensor's life by one
// interaction.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "reskin/common.hpp"
#include "reskin/field_sim.hpp"
#include "reskin/protocol.hpp"

namespace reskin::data {

constexpr std::array<double, 6> kGridDepths{0.2, 0.4, 0.6, 0.8, 1.0, 1.2};
constexpr double kGridPitch = 2.0;
constexpr int kGridSide = 9;
constexpr int kGridLocations = 65;

struct Indentation {
  Vec2 location = Vec2::Zero();
  double depth = 0.0;
  Vec3 force = Vec3::Zero();
  FluxVector flux_delta = FluxVector::Zero();
  std::uint32_t sensor = 0;  // index into DatasetMeta::sensor_ids
  std::int32_t pass_index = 0;
  std::int64_t interaction_index = 0;
};

struct DatasetMeta {
  std::vector<std::string> sensor_ids;
  std::string protocol;
  int label_dim = 3;  // 3: (x, y, Fz); 5: (x, y, Fx, Fy, Fz)
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
  // Everything needed to regenerate the dataset: resolved config, sensor
  // recipe, protocol parameters.
  nlohmann::json recipe = nlohmann::json::object();
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Indentation> samples;
};

// One interaction as the hardware would see it: a no-load reading taken just
// before the contact, and the contact reading itself.
struct RawIndentation {
  Vec2 location = Vec2::Zero();
  double depth = 0.0;
  Vec3 force = Vec3::Zero();
  FluxVector no_load = FluxVector::Zero();
  FluxVector contact = FluxVector::Zero();
  TempVector temperature = TempVector::Zero();
  std::int32_t pass_index = 0;
  std::int64_t interaction_index = 0;
};

struct ProtocolOptions {
  protocol::BaselineMode baseline = protocol::BaselineMode::before_each;
  int baseline_k = 1;
  std::uint64_t seed = 0;  // measurement-noise stream
};

// The 65 grid locations (9x9 at 2 mm pitch, 2x2 block removed at each
// corner) in boustrophedon order.
std::vector<Vec2> snake_grid_locations();

// Runs `n` consecutive snake-grid interactions (cycling depths, then passes)
// and returns the raw readings.
std::vector<RawIndentation> record_snake_session(sim::SensorInstance& sensor,
                                                 std::int64_t n_interactions,
                                                 std::uint64_t seed);

// Converts raw readings to flux deltas under a baseline policy.
std::vector<Indentation> apply_baseline(std::span<const RawIndentation> raw,
                                        protocol::BaselineTracker tracker,
                                        std::uint32_t sensor_index = 0);

// Frame stream equivalent of a raw session: a no-load frame followed by a
// contact frame per interaction, 400 Hz timestamps.
struct FrameLog {
  std::vector<protocol::FluxFrame> frames;
  std::vector<bool> contact;
};
FrameLog to_frames(std::span<const RawIndentation> raw);

Dataset snake_grid_protocol(sim::SensorInstance& sensor, int passes,
                            const ProtocolOptions& options = {},
                            const std::string& sensor_id = "sensor");

struct ShearOptions {
  double step = 0.5;        // mm between flux samples along a drag
  double drag_speed = 5.0;  // mm/s; 0 gives a degenerate (static) drag
  double span = 16.0;       // mm covered by each line
};

// Straight drags along x (one per y row) then along y (one per x column) at
// `spacing` pitch; alternate lines reverse direction.
Dataset shear_drag_protocol(sim::SensorInstance& sensor, double spacing, double depth,
                            const ProtocolOptions& options = {},
                            const ShearOptions& shear = {},
                            const std::string& sensor_id = "sensor");

struct LineTrajectory {
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
  int n_points = 0;
  std::vector<FluxVector> ordered_flux;
  std::vector<int> indices;
};

// Flux sequence of a line with every label stripped; what adaptation sees.
struct UnlabeledLine {
  std::vector<FluxVector> ordered_flux;
};

UnlabeledLine strip_labels(const LineTrajectory& line);

struct LineOptions {
  bool manual = false;           // emulate hand-held pokes
  double manual_location_sd = 0.5;
  double manual_depth_sd = 0.15;
  double min_length = 8.0;       // mm
  double min_depth = 0.4;
  double max_depth = 1.2;
  double half_extent = 8.0;      // lines stay inside +-half_extent
};

std::vector<LineTrajectory> line_adaptation_protocol(sim::SensorInstance& sensor,
                                                     int n_lines, int points_per_line,
                                                     const ProtocolOptions& options = {},
                                                     const LineOptions& lines = {});

struct Triplet {
  FluxVector anchor;
  FluxVector positive;
  FluxVector negative;
  int line = 0;
  int anchor_index = 0;
  int positive_index = 0;
  int negative_index = 0;
};

// Draws triplets with replacement; each comes from a single line (lines are
// picked in proportion to their length) and satisfies
// |anchor - positive| < |anchor - negative| in index distance.
std::vector<Triplet> sample_triplets(std::span<const UnlabeledLine> lines,
                                     std::size_t n_triplets, std::uint64_t seed);
std::vector<Triplet> sample_triplets(std::span<const LineTrajectory> lines,
                                     std::size_t n_triplets, std::uint64_t seed);

// Simulated fleet: boards share a standoff/placement perturbation, skins on a
// board are independent variation draws.
struct FleetSpec {
  int boards = 6;
  int skins_per_board = 3;
  double board_standoff_sd = 0.15;
  double board_shift_sd = 0.3;
};

struct FleetMember {
  std::string id;
  int board = 0;
  int skin = 0;
  sim::SensorInstance sensor;
};

sim::BoardGeometry board_geometry(const sim::BoardGeometry& nominal, const FleetSpec& spec,
                                  int board, std::uint64_t seed);
FleetMember make_fleet_member(const sim::BoardGeometry& nominal, const FleetSpec& spec,
                              int board, int skin, const sim::SimParams& params,
                              const sim::VariationParams& variation,
                              const sim::DriftParams& drift, std::uint64_t seed);
std::vector<FleetMember> make_fleet(const sim::BoardGeometry& nominal, const FleetSpec& spec,
                                    const sim::SimParams& params,
                                    const sim::VariationParams& variation,
                                    const sim::DriftParams& drift, std::uint64_t seed);

// Design matrices: X is n x 15 raw flux deltas; Y is n x label_dim.
struct Matrices {
  Eigen::MatrixXd X;
  Eigen::MatrixXd Y;
  std::vector<int> group;  // per-row group id (sensor)
};

Eigen::RowVectorXd label_row(const Indentation& s, int label_dim);
Matrices to_matrices(const Dataset& ds, int group = 0);
Matrices concat(std::span<const Matrices> parts);
Matrices select_rows(const Matrices& m, std::span<const int> rows);

// Single-file container: "RSKD", u32 version, u64 header length, JSON
// header, u64 record count, fixed 184-byte little-endian records.
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);
std::string dataset_csv(const Dataset& ds);

// Unlabeled line container: "RSKL", u32 version, u64 header length, JSON
// header, then per line a u32 point count and row-major f64 flux.
std::vector<std::uint8_t> encode_lines(std::span<const UnlabeledLine> lines,
                                       const nlohmann::json& header);
std::vector<UnlabeledLine> decode_lines(std::span<const std::uint8_t> bytes,
                                        nlohmann::json* header = nullptr);

}  // namespace reskin::data
