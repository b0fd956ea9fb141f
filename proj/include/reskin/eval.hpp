#pragma once

// Metrics, report rendering and the drift-over-time study.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "reskin/field_sim.hpp"
#include "reskin/neural.hpp"
#include "reskin/protocol.hpp"

namespace reskin::eval {

// Label/prediction layout: columns 0, 1 are x, y in mm; remaining columns
// are force components in N.

// Percentage of rows with |dx| <= tol and |dy| <= tol.
double localization_accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels,
                             double tolerance = 1.0);

struct MseMetrics {
  double mse_xy = 0.0;  // per-coordinate mean: mean((dx^2 + dy^2) / 2)
  double mse_f = 0.0;   // mean over samples and force components
};

MseMetrics mse_metrics(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels);

struct Stat {
  double mean = 0.0;
  std::optional<double> sd;  // sample SD over folds; absent for a single fold

  bool operator==(const Stat&) const = default;
};

struct FoldResult {
  std::string fold;
  double accuracy_pct = 0.0;
  double mse_xy = 0.0;
  double mse_f = 0.0;
  std::uint64_t n_samples = 0;

  bool operator==(const FoldResult&) const = default;
};

struct EvalReport {
  std::string condition;
  Stat accuracy_pct;
  Stat mse_xy;
  Stat mse_f;
  std::uint64_t n_samples = 0;
  std::vector<FoldResult> folds;
  std::string config_hash;

  bool operator==(const EvalReport&) const = default;
};

FoldResult score_fold(const std::string& fold, const Eigen::MatrixXd& predictions,
                      const Eigen::MatrixXd& labels, double tolerance = 1.0);
EvalReport summarize(const std::string& condition, std::vector<FoldResult> folds,
                     const std::string& config_hash);

enum class ReportFormat { json, csv, markdown };

ReportFormat parse_report_format(std::string_view name);
std::string render_report(std::span<const EvalReport> reports, ReportFormat format);
nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
std::vector<EvalReport> parse_reports_json(std::string_view text);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, t approximation with n - 2 dof
  int n = 0;
};

// Average ranks for ties.
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

struct DriftStudySpec {
  std::int64_t total_interactions = 50000;
  std::int64_t train_prefix = 5000;
  std::int64_t eval_window = 1000;
  std::int64_t eval_stride = 5000;
  std::vector<protocol::BaselineMode> baseline_modes{protocol::BaselineMode::once,
                                                     protocol::BaselineMode::every_k,
                                                     protocol::BaselineMode::before_each};
  int every_k = 100;
  std::uint64_t seed = 0;

  void validate() const;
  // Start offsets of the evaluation windows: every stride from the end of the
  // training prefix while a full window fits.
  std::vector<std::int64_t> window_starts() const;
};

struct DriftWindow {
  std::int64_t start = 0;
  double accuracy_pct = 0.0;
  double mse_xy = 0.0;
  double mse_xy_se = 0.0;  // standard error of the per-sample squared errors
  double mse_f = 0.0;
  double mean_force_error = 0.0;  // mean(predicted - true), N
};

struct DriftCurve {
  protocol::BaselineMode mode = protocol::BaselineMode::once;
  std::vector<DriftWindow> windows;
  SpearmanResult mse_trend;  // window index vs MSE_xy
  // Final window: true and predicted normal force per sample.
  std::vector<double> final_true_force;
  std::vector<double> final_pred_force;
};

struct DriftStudyResult {
  std::vector<DriftCurve> curves;

  std::string curves_csv() const;
  std::string scatter_csv() const;
  nlohmann::json to_json() const;
};

// Records one snake-grid session on a copy of `sensor`, then for each baseline
// mode trains on the prefix and scores every window. Modes run on up to
// `jobs` threads; results do not depend on `jobs`.
DriftStudyResult drift_study(const sim::SensorInstance& sensor, const nn::TrainConfig& train,
                             const DriftStudySpec& spec, bool relu_feature_layers = false,
                             int jobs = 1);

}  // namespace reskin::eval
