#include "reskin/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "reskin/datagen.hpp"
#include "reskin/parallel.hpp"

namespace reskin::eval {

namespace {

void check_shapes(const Eigen::MatrixXd& p, const Eigen::MatrixXd& l, int min_cols) {
  if (p.rows() != l.rows() || p.cols() != l.cols())
    throw DimensionError("prediction and label shapes differ");
  if (p.cols() < min_cols)
    throw DimensionError("labels need at least " + std::to_string(min_cols) + " columns");
  if (p.rows() == 0) throw std::invalid_argument("metrics of an empty set");
}

Stat stat_of(const std::vector<double>& v) {
  Stat s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / double(v.size() - 1));
  }
  return s;
}

nlohmann::json stat_json(const Stat& s) {
  nlohmann::json j = {{"mean", s.mean}};
  j["sd"] = s.sd ? nlohmann::json(*s.sd) : nlohmann::json(nullptr);
  return j;
}

Stat stat_from(const nlohmann::json& j) {
  Stat s;
  s.mean = j.at("mean").get<double>();
  if (j.contains("sd") && !j.at("sd").is_null()) s.sd = j.at("sd").get<double>();
  return s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string fmt_stat(const Stat& s, const char* f) {
  std::string out = fmt(f, s.mean);
  if (s.sd) out += " ± " + fmt(f, *s.sd);
  return out;
}

std::string csv_num(double v) { return fmt("%.17g", v); }

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double localization_accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels,
                             double tolerance) {
  check_shapes(predictions, labels, 2);
  if (!(tolerance >= 0.0)) throw std::invalid_argument("tolerance must be >= 0");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < labels.rows(); ++i)
    if (std::abs(predictions(i, 0) - labels(i, 0)) <= tolerance &&
        std::abs(predictions(i, 1) - labels(i, 1)) <= tolerance)
      ++hits;
  return 100.0 * double(hits) / double(labels.rows());
}

MseMetrics mse_metrics(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels) {
  check_shapes(predictions, labels, 3);
  const Eigen::MatrixXd d = predictions - labels;
  const double n = double(d.rows());
  MseMetrics m;
  m.mse_xy = d.leftCols(2).squaredNorm() / (2.0 * n);
  m.mse_f = d.rightCols(d.cols() - 2).squaredNorm() / (n * double(d.cols() - 2));
  return m;
}

FoldResult score_fold(const std::string& fold, const Eigen::MatrixXd& predictions,
                      const Eigen::MatrixXd& labels, double tolerance) {
  FoldResult r;
  r.fold = fold;
  r.accuracy_pct = localization_accuracy(predictions, labels, tolerance);
  const auto m = mse_metrics(predictions, labels);
  r.mse_xy = m.mse_xy;
  r.mse_f = m.mse_f;
  r.n_samples = static_cast<std::uint64_t>(labels.rows());
  return r;
}

EvalReport summarize(const std::string& condition, std::vector<FoldResult> folds,
                     const std::string& config_hash) {
  if (folds.empty()) throw std::invalid_argument("report needs at least one fold");
  EvalReport r;
  r.condition = condition;
  r.config_hash = config_hash;
  std::vector<double> acc, xy, f;
  for (const auto& fr : folds) {
    acc.push_back(fr.accuracy_pct);
    xy.push_back(fr.mse_xy);
    f.push_back(fr.mse_f);
    r.n_samples += fr.n_samples;
  }
  r.accuracy_pct = stat_of(acc);
  r.mse_xy = stat_of(xy);
  r.mse_f = stat_of(f);
  r.folds = std::move(folds);
  return r;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "markdown" || name == "md") return ReportFormat::markdown;
  throw ConfigError("unknown report format '" + std::string(name) + "'");
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds)
    folds.push_back({{"fold", f.fold},
                     {"accuracy_pct", f.accuracy_pct},
                     {"mse_xy", f.mse_xy},
                     {"mse_f", f.mse_f},
                     {"n_samples", f.n_samples}});
  return {{"condition", r.condition},     {"accuracy_pct", stat_json(r.accuracy_pct)},
          {"mse_xy", stat_json(r.mse_xy)}, {"mse_f", stat_json(r.mse_f)},
          {"n_samples", r.n_samples},      {"folds", folds},
          {"config_hash", r.config_hash}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.condition = j.at("condition").get<std::string>();
    r.accuracy_pct = stat_from(j.at("accuracy_pct"));
    r.mse_xy = stat_from(j.at("mse_xy"));
    r.mse_f = stat_from(j.at("mse_f"));
    r.n_samples = j.at("n_samples").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& f : j.at("folds"))
      r.folds.push_back({f.at("fold").get<std::string>(), f.at("accuracy_pct").get<double>(),
                         f.at("mse_xy").get<double>(), f.at("mse_f").get<double>(),
                         f.at("n_samples").get<std::uint64_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

std::vector<EvalReport> parse_reports_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report JSON: ") + e.what());
  }
  const auto& arr = j.contains("reports") ? j.at("reports") : j;
  std::vector<EvalReport> out;
  for (const auto& r : arr) out.push_back(report_from_json(r));
  return out;
}

std::string render_report(std::span<const EvalReport> reports, ReportFormat format) {
  if (reports.empty()) throw std::invalid_argument("nothing to render");
  switch (format) {
    case ReportFormat::json: {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : reports) arr.push_back(report_to_json(r));
      nlohmann::json doc = {
          {"mse_xy_convention", "per-coordinate mean: mean((dx^2 + dy^2) / 2), mm^2"},
          {"accuracy_convention", "|dx| <= 1 mm and |dy| <= 1 mm, inclusive"},
          {"reports", arr}};
      return doc.dump(2) + "\n";
    }
    case ReportFormat::csv: {
      std::string out =
          "condition,accuracy_mean,accuracy_sd,mse_xy_mean,mse_xy_sd,mse_f_mean,mse_f_sd,"
          "n_samples,folds,config_hash\n";
      auto sd = [](const Stat& s) { return s.sd ? csv_num(*s.sd) : std::string(); };
      for (const auto& r : reports)
        out += "\"" + r.condition + "\"," + csv_num(r.accuracy_pct.mean) + "," +
               sd(r.accuracy_pct) + "," + csv_num(r.mse_xy.mean) + "," + sd(r.mse_xy) + "," +
               csv_num(r.mse_f.mean) + "," + sd(r.mse_f) + "," + std::to_string(r.n_samples) +
               "," + std::to_string(r.folds.size()) + "," + r.config_hash + "\n";
      return out;
    }
    case ReportFormat::markdown: {
      std::string out =
          "MSE_xy is the per-coordinate mean squared location error; accuracy counts "
          "predictions within 1 mm on both axes.\n\n"
          "| Approach | Accuracy, in % | MSE_xy, in mm² | MSE_F, in N² |\n"
          "|---|---|---|---|\n";
      for (const auto& r : reports)
        out += "| " + r.condition + " | " + fmt_stat(r.accuracy_pct, "%.2f") + " | " +
               fmt_stat(r.mse_xy, "%.3f") + " | " + fmt_stat(r.mse_f, "%.3f") + " |\n";
      return out;
    }
  }
  return {};
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman inputs differ in length");
  SpearmanResult s;
  s.n = static_cast<int>(x.size());
  if (s.n < 3) throw std::invalid_argument("spearman needs at least 3 points");
  const auto rx = ranks(x), ry = ranks(y);
  const double mean = 0.5 * (s.n + 1);
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < s.n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) {
    s.rho = 0.0;
    s.p_value = 1.0;
    return s;
  }
  s.rho = sxy / std::sqrt(sxx * syy);
  const double dof = s.n - 2;
  const double denom = 1.0 - s.rho * s.rho;
  if (denom <= 0.0) {
    s.p_value = 0.0;
    return s;
  }
  const double t = s.rho * std::sqrt(dof / denom);
  boost::math::students_t dist(dof);
  s.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return s;
}

void DriftStudySpec::validate() const {
  if (train_prefix < 1 || eval_window < 1 || eval_stride < 1)
    throw ConfigError("drift study lengths must be positive");
  if (train_prefix + eval_window > total_interactions)
    throw ConfigError("drift study: train_prefix + eval_window exceeds total_interactions");
  if (baseline_modes.empty()) throw ConfigError("drift study needs at least one baseline mode");
  if (every_k < 1) throw ConfigError("drift study every_k must be >= 1");
}

std::vector<std::int64_t> DriftStudySpec::window_starts() const {
  std::vector<std::int64_t> out;
  const std::int64_t first = ((train_prefix + eval_stride - 1) / eval_stride) * eval_stride;
  for (std::int64_t s = first; s + eval_window <= total_interactions; s += eval_stride)
    out.push_back(s);
  return out;
}

std::string DriftStudyResult::curves_csv() const {
  std::string out = "mode,window,start,accuracy_pct,mse_xy,mse_xy_se,mse_f,mean_force_error\n";
  for (const auto& c : curves)
    for (std::size_t w = 0; w < c.windows.size(); ++w) {
      const auto& d = c.windows[w];
      out += protocol::to_string(c.mode) + "," + std::to_string(w) + "," +
             std::to_string(d.start) + "," + csv_num(d.accuracy_pct) + "," + csv_num(d.mse_xy) +
             "," + csv_num(d.mse_xy_se) + "," + csv_num(d.mse_f) + "," + csv_num(d.mean_force_error) + "\n";
    }
  return out;
}

std::string DriftStudyResult::scatter_csv() const {
  std::string out = "mode,true_force,predicted_force\n";
  for (const auto& c : curves)
    for (std::size_t i = 0; i < c.final_true_force.size(); ++i)
      out += protocol::to_string(c.mode) + "," + csv_num(c.final_true_force[i]) + "," +
             csv_num(c.final_pred_force[i]) + "\n";
  return out;
}

nlohmann::json DriftStudyResult::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : curves) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& d : c.windows)
      w.push_back({{"start", d.start},
                   {"accuracy_pct", d.accuracy_pct},
                   {"mse_xy", d.mse_xy},
                   {"mse_xy_se", d.mse_xy_se},
                   {"mse_f", d.mse_f},
                   {"mean_force_error", d.mean_force_error}});
    arr.push_back({{"mode", protocol::to_string(c.mode)},
                   {"windows", w},
                   {"mse_trend", {{"rho", c.mse_trend.rho},
                                  {"p_value", c.mse_trend.p_value},
                                  {"n", c.mse_trend.n}}}});
  }
  return {{"curves", arr}};
}

DriftStudyResult drift_study(const sim::SensorInstance& sensor, const nn::TrainConfig& train,
                             const DriftStudySpec& spec, bool relu_feature_layers, int jobs) {
  spec.validate();
  const auto starts = spec.window_starts();
  sim::SensorInstance live = sensor;
  const auto raw =
      data::record_snake_session(live, spec.total_interactions, derive_seed(spec.seed, 0xd51f));

  DriftStudyResult result;
  result.curves.resize(spec.baseline_modes.size());
  parallel_for(static_cast<int>(spec.baseline_modes.size()), jobs, [&](int m) {
    const auto mode = spec.baseline_modes[m];
    data::Dataset ds;
    ds.meta.label_dim = 3;
    ds.meta.sensor_ids = {"drift"};
    ds.samples = data::apply_baseline(raw, protocol::BaselineTracker(mode, spec.every_k));
    const data::Matrices all = data::to_matrices(ds);

    std::vector<int> prefix(static_cast<std::size_t>(spec.train_prefix));
    std::iota(prefix.begin(), prefix.end(), 0);
    std::mt19937_64 rng(derive_seed(spec.seed, 0x5b17));
    std::shuffle(prefix.begin(), prefix.end(), rng);
    const auto n_val = static_cast<std::size_t>(train.validation_fraction * prefix.size());
    const std::span<const int> p(prefix);
    const data::Matrices val = data::select_rows(all, p.first(n_val));
    const data::Matrices tr = data::select_rows(all, p.subspan(n_val));
    nn::FitOptions opt;
    if (n_val > 0) {
      opt.val_X = &val.X;
      opt.val_Y = &val.Y;
    }
    const auto model =
        nn::train(nn::init_model(nn::Architecture::canonical(3, relu_feature_layers), train.seed),
                  tr.X, tr.Y, train, opt)
            .model;

    DriftCurve& curve = result.curves[m];
    curve.mode = mode;
    std::vector<double> index, mse;
    for (std::size_t w = 0; w < starts.size(); ++w) {
      const Eigen::MatrixXd X = all.X.middleRows(starts[w], spec.eval_window);
      const Eigen::MatrixXd Y = all.Y.middleRows(starts[w], spec.eval_window);
      const Eigen::MatrixXd P = nn::predict(model, X);
      DriftWindow d;
      d.start = starts[w];
      d.accuracy_pct = localization_accuracy(P, Y);
      const auto mm = mse_metrics(P, Y);
      d.mse_xy = mm.mse_xy;
      const Eigen::ArrayXd e = 0.5 * (P.leftCols(2) - Y.leftCols(2)).rowwise().squaredNorm().array();
      if (e.size() > 1)
        d.mse_xy_se = std::sqrt((e - e.mean()).square().sum() / double(e.size() - 1) / double(e.size()));
      d.mse_f = mm.mse_f;
      d.mean_force_error = (P.col(2) - Y.col(2)).mean();
      curve.windows.push_back(d);
      index.push_back(double(w));
      mse.push_back(d.mse_xy);
      if (w + 1 == starts.size()) {
        curve.final_true_force.assign(Y.col(2).data(), Y.col(2).data() + Y.rows());
        const Eigen::VectorXd pf = P.col(2);
        curve.final_pred_force.assign(pf.data(), pf.data() + pf.size());
      }
    }
    if (index.size() >= 3) curve.mse_trend = spearman(index, mse);
  });
  return result;
}

}  // namespace reskin::eval
