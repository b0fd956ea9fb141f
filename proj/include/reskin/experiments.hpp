#pragma once

// Named experiment presets and the runners behind them. Everything here is
// a deterministic function of a RunConfig; `jobs` only affects wall time.

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reskin/adapt.hpp"
#include "reskin/config.hpp"
#include "reskin/eval.hpp"

namespace reskin::exp {

struct PresetInfo {
  std::string name;
  std::string description;
  nlohmann::json overrides;  // dotted keys applied on top of the defaults
};

const std::vector<PresetInfo>& presets();
const PresetInfo& preset(std::string_view name);

// Sets `preset` and applies the preset's overrides to `config`.
void apply_preset(cfg::RunConfig& config, std::string_view name);

using Progress = std::function<void(const std::string&)>;

// Sensor used by single-sensor commands and experiments.
sim::SensorInstance make_single_sensor(const cfg::RunConfig& config);
// Dataset from one sensor under `data.protocol` (mutates the sensor's drift).
data::Dataset simulate_dataset(const cfg::RunConfig& config, sim::SensorInstance& sensor,
                               const std::string& sensor_id);
std::vector<data::FleetMember> make_fleet(const cfg::RunConfig& config);
// Snake-grid data plus adaptation lines for every fleet member.
adapt::MultiSensorDataset simulate_fleet(const cfg::RunConfig& config, int jobs,
                                         const Progress& progress = {});
// Snake data and lines for an arbitrary list of sensors.
adapt::MultiSensorDataset simulate_sensors(const cfg::RunConfig& config,
                                           std::vector<data::FleetMember> members, int jobs,
                                           std::uint64_t stream);

struct ExperimentResult {
  std::vector<eval::EvalReport> reports;
  // Extra plot-ready files, by file name.
  std::map<std::string, std::string> artifacts;
};

ExperimentResult run_experiment(const cfg::RunConfig& config, int jobs,
                                const Progress& progress = {});

// Individual experiments, for callers that already hold data.
ExperimentResult same_sensor(const cfg::RunConfig& config);
ExperimentResult budget_sweep(const cfg::RunConfig& config, const adapt::MultiSensorDataset& data,
                              int jobs);
ExperimentResult sensor_sweep(const cfg::RunConfig& config, const adapt::MultiSensorDataset& data,
                              int jobs);
ExperimentResult flex_transfer(const cfg::RunConfig& config, int jobs, const Progress& progress = {});
ExperimentResult drift(const cfg::RunConfig& config, int jobs);

}  // namespace reskin::exp
