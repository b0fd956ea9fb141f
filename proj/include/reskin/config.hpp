#pragma once

// Run configuration: a flat registry of dotted keys, each with a default and
// a description. Config files may be nested or dotted JSON; unknown keys and
// type mismatches are ConfigErrors naming the key.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reskin/adapt.hpp"
#include "reskin/datagen.hpp"
#include "reskin/eval.hpp"
#include "reskin/field_sim.hpp"
#include "reskin/neural.hpp"

namespace reskin::cfg {

struct KeyInfo {
  std::string key;
  nlohmann::json default_value;
  std::string description;
  bool hashed = true;  // false for keys that cannot change results
};

const std::vector<KeyInfo>& registry();

// One line per key: name, default, description.
std::string keys_help();

// Default output root: $RESKIN_OUTPUT_ROOT, or "runs".
std::string default_output_root();

class RunConfig {
 public:
  RunConfig();

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);

  // Overlays `j` (nested or dotted keys).
  void merge(const nlohmann::json& j);
  // `key=value` style override; the value is parsed as JSON when the key is
  // not a string key.
  void set(std::string_view key, std::string_view value);
  void set_json(std::string_view key, const nlohmann::json& value);

  const nlohmann::json& get(std::string_view key) const;
  template <typename T>
  T as(std::string_view key) const {
    return get(key).get<T>();
  }

  nlohmann::json flat() const;
  nlohmann::json nested() const;
  // FNV-1a over the canonical (sorted-key) dump of all hashed keys, as 16 hex
  // digits. Independent of the order keys were given in.
  std::string hash() const;

  // Typed views. Each validates what it builds.
  sim::SimParams sim_params() const;
  sim::BoardGeometry board() const;
  sim::VariationParams variation() const;
  sim::DriftParams drift() const;
  data::FleetSpec fleet() const;
  data::ProtocolOptions protocol_options() const;
  data::ShearOptions shear() const;
  data::LineOptions lines() const;
  nn::TrainConfig train() const;
  adapt::AdaptOptions adapt_options() const;
  adapt::CvOptions cv_options() const;
  eval::DriftStudySpec drift_study() const;

  // Runs every typed view so that bad values surface before any work.
  void validate() const;

 private:
  std::map<std::string, nlohmann::json, std::less<>> values_;
};

}  // namespace reskin::cfg
