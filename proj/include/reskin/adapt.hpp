#pragma once

// Cross-sensor generalization: pooled multi-sensor training, triplet
// regularization, and fine-tuning on a new sensor from unlabeled line scans.

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "reskin/datagen.hpp"
#include "reskin/eval.hpp"
#include "reskin/neural.hpp"

namespace reskin::adapt {

struct SensorData {
  std::string id;
  int board = 0;
  data::Dataset dataset;
  // Unlabeled line scans recorded on this sensor, for adapting to it.
  std::vector<data::UnlabeledLine> adaptation_lines;
};

struct Fold {
  int index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

class MultiSensorDataset {
 public:
  void add(SensorData sensor);

  std::size_t size() const { return sensors_.size(); }
  std::vector<std::string> ids() const;
  const SensorData& sensor(const std::string& id) const;
  std::vector<int> boards() const;  // distinct, ascending

  // One fold per board: that board's sensors are the test set.
  void make_board_folds();
  // Throws ConfigError when a fold's train and test ids overlap or name
  // unknown sensors.
  void set_folds(std::vector<Fold> folds);
  const std::vector<Fold>& folds() const { return folds_; }

 private:
  std::vector<SensorData> sensors_;
  std::vector<Fold> folds_;
};

// Rows of several sensors stacked, plus the row groups that triplets are
// drawn from (same sensor, same indentation depth).
struct Pool {
  data::Matrices m;
  std::vector<std::vector<int>> triplet_groups;
};

Pool pool(const MultiSensorDataset& data, std::span<const std::string> ids);

// Seeded random train/validation split of pooled rows.
struct Split {
  data::Matrices train, val;
  std::vector<int> train_rows;  // pooled row of each training row
};
Split split_rows(const data::Matrices& m, double val_fraction, std::uint64_t seed);

void predict_sensors(const nn::MlpModel& model, const MultiSensorDataset& data,
                     std::span<const std::string> ids, Eigen::MatrixXd& predictions,
                     Eigen::MatrixXd& labels);
void append_rows(Eigen::MatrixXd& acc, const Eigen::MatrixXd& more);

// Triplets from labeled rows: anchor, positive, negative share a group and
// the positive is strictly closer to the anchor in true (x, y).
nn::TripletSampler labeled_triplet_sampler(const Pool& pool);

// What adaptation is allowed to see of the target sensor: ordered flux
// sequences and how many indentations they contain. No location, depth or
// force is stored.
class AdaptationSet {
 public:
  AdaptationSet() = default;
  explicit AdaptationSet(std::vector<data::UnlabeledLine> lines);

  // Whole lines in order until `budget` indentations are reached; the last
  // line is truncated if needed.
  static AdaptationSet take(std::span<const data::UnlabeledLine> lines, std::size_t budget);
  static AdaptationSet from_trajectories(std::span<const data::LineTrajectory> lines,
                                         std::size_t budget);

  const std::vector<data::UnlabeledLine>& lines() const { return lines_; }
  std::size_t budget() const { return budget_; }
  bool empty() const { return budget_ == 0; }

 private:
  std::vector<data::UnlabeledLine> lines_;
  std::size_t budget_ = 0;
};

// Compile-time audit: none of the types on the adaptation path expose a
// label-bearing member.
template <typename T>
concept ExposesLabels = requires(const T& t) { t.location; } || requires(const T& t) { t.force; } ||
                        requires(const T& t) { t.depth; } || requires(const T& t) { t.start; } ||
                        requires(const T& t) { t.end; } || requires(const T& t) { t.Y; };

static_assert(!ExposesLabels<data::UnlabeledLine>);
static_assert(!ExposesLabels<AdaptationSet>);
static_assert(ExposesLabels<data::LineTrajectory>);
static_assert(ExposesLabels<data::Indentation>);

nn::TripletSampler unlabeled_triplet_sampler(const AdaptationSet& set);

// Requires at least two sensors. With `use_triplet`, every step adds
// triplet_weight x the labeled-triplet loss.
nn::TrainResult train_multisensor(const MultiSensorDataset& data,
                                  std::span<const std::string> train_ids,
                                  const nn::TrainConfig& config, bool use_triplet,
                                  bool relu_feature_layers = false);

struct AdaptOptions {
  int epochs = 50;  // passes over the adaptation set
  // Stop (and keep the previous epoch) once source validation loss exceeds
  // its pre-adaptation value by this relative amount.
  double early_stop_tolerance = 0.25;
  double learning_rate = 1e-4;
  bool freeze_head = false;
};

// Each step: a labeled source batch under the L2 loss and an equal-sized
// batch of target triplets, drawn with replacement, under the triplet loss.
nn::TrainResult self_supervised_adapt(const nn::MlpModel& model, const AdaptationSet& target,
                                      const data::Matrices& source_train,
                                      const data::Matrices& source_val,
                                      const nn::TrainConfig& config,
                                      const AdaptOptions& options = {});

enum class Condition { single_sensor, multi_no_triplet, multi_triplet, multi_triplet_adapted };

std::string condition_name(Condition c, std::size_t budget);
Condition parse_condition(std::string_view name);

struct CvOptions {
  std::vector<Condition> conditions{Condition::single_sensor, Condition::multi_no_triplet,
                                    Condition::multi_triplet,
                                    Condition::multi_triplet_adapted};
  std::size_t adaptation_budget = 390;
  AdaptOptions adapt;
  // Single-sensor condition: models trained individually on this many
  // sensors, each tested on `single_test_sensors` sensors of other boards.
  int single_train_sensors = 3;
  int single_test_sensors = 9;
  bool relu_feature_layers = false;
  std::string config_hash;
  int jobs = 1;
};

// Deterministic in config.seed; `jobs` only changes wall time.
std::vector<eval::EvalReport> cross_validate(const MultiSensorDataset& data,
                                             const nn::TrainConfig& config,
                                             const CvOptions& options = {});

}  // namespace reskin::adapt
