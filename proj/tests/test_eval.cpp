#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "reskin/eval.hpp"

using namespace reskin;
using namespace reskin::eval;

namespace {

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(r.size(), r.begin()->size());
  int i = 0;
  for (const auto& row : r) {
    int j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

// Ranks with ties averaged, then Pearson correlation of the ranks.
double spearman_oracle(std::vector<double> x, std::vector<double> y) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) less += w < v[i], equal += w == v[i];
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = rank(x), ry = rank(y);
  const double n = double(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

EvalReport sample_report(const std::string& name, int folds) {
  std::vector<FoldResult> f;
  for (int i = 0; i < folds; ++i)
    f.push_back({"fold" + std::to_string(i), 80.0 + i, 0.5 + 0.1 * i, 0.02 * (i + 1), 100u + i});
  return summarize(name, f, "0123456789abcdef");
}

}  // namespace

TEST(Accuracy, PerfectAndBoundary) {
  const auto Y = rows({{0, 0, 1}, {2, -3, 0.5}});
  EXPECT_EQ(localization_accuracy(Y, Y), 100.0);
  Eigen::MatrixXd P = Y;
  P.col(0).array() += 1.0;
  P.col(1).array() += 1.0;
  EXPECT_EQ(localization_accuracy(P, Y), 100.0);
  P = Y;
  P.col(0).array() += 1.0001;
  EXPECT_EQ(localization_accuracy(P, Y), 0.0);
}

TEST(Accuracy, HandCountedBatch) {
  const Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(10, 3);
  const auto P = rows({{0.5, 0.5, 9},    // in
                       {1.0, -1.0, 0},   // in (boundary)
                       {1.2, 0.0, 0},    // out
                       {0.0, -1.5, 0},   // out
                       {-0.9, 0.9, 0},   // in
                       {3.0, 3.0, 0},    // out
                       {0.0, 0.0, 0},    // in
                       {-1.0, 0.2, 0},   // in
                       {0.3, 1.01, 0},   // out
                       {0.99, 0.99, 0}});  // in
  EXPECT_DOUBLE_EQ(localization_accuracy(P, Y), 60.0);
}

TEST(Accuracy, MonotoneInTolerance) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd P(200, 3), Y(200, 3);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = n(rng), Y.data()[i] = n(rng);
  double prev = 100.0;
  for (double tol = 5.0; tol >= 0.0; tol -= 0.05) {
    const double a = localization_accuracy(P, Y, tol);
    EXPECT_LE(a, prev);
    EXPECT_GE(a, 0.0);
    prev = a;
  }
}

TEST(Mse, Definitions) {
  const auto Y = rows({{0, 0, 1.0}});
  EXPECT_EQ(mse_metrics(Y, Y).mse_xy, 0.0);
  EXPECT_EQ(mse_metrics(Y, Y).mse_f, 0.0);
  const auto P = rows({{1, 1, 1.5}});
  const auto m = mse_metrics(P, Y);
  EXPECT_DOUBLE_EQ(m.mse_xy, 1.0);
  EXPECT_DOUBLE_EQ(m.mse_f, 0.25);
}

TEST(Mse, MatchesNaiveRecomputationAndPermutation) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 2.0);
  Eigen::MatrixXd P(77, 5), Y(77, 5);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = n(rng), Y.data()[i] = n(rng);
  double sxy = 0, sf = 0;
  for (int i = 0; i < 77; ++i) {
    sxy += std::pow(P(i, 0) - Y(i, 0), 2) + std::pow(P(i, 1) - Y(i, 1), 2);
    for (int j = 2; j < 5; ++j) sf += std::pow(P(i, j) - Y(i, j), 2);
  }
  const auto m = mse_metrics(P, Y);
  EXPECT_NEAR(m.mse_xy, sxy / (2 * 77), 1e-12);
  EXPECT_NEAR(m.mse_f, sf / (3 * 77), 1e-12);
  std::vector<int> perm(77);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd P2(77, 5), Y2(77, 5);
  for (int i = 0; i < 77; ++i) P2.row(i) = P.row(perm[i]), Y2.row(i) = Y.row(perm[i]);
  EXPECT_NEAR(mse_metrics(P2, Y2).mse_xy, m.mse_xy, 1e-12);
  EXPECT_NEAR(mse_metrics(P2, Y2).mse_f, m.mse_f, 1e-12);
}

TEST(Mse, ShapeMismatchThrows) {
  EXPECT_THROW(mse_metrics(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(3, 5)), DimensionError);
  EXPECT_THROW(localization_accuracy(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(3, 3)),
               DimensionError);
}

TEST(Summary, MeanAndSampleSd) {
  const auto r = sample_report("X", 3);
  EXPECT_DOUBLE_EQ(r.accuracy_pct.mean, 81.0);
  ASSERT_TRUE(r.accuracy_pct.sd.has_value());
  EXPECT_DOUBLE_EQ(*r.accuracy_pct.sd, 1.0);
  EXPECT_EQ(r.n_samples, 303u);
  EXPECT_FALSE(sample_report("Y", 1).accuracy_pct.sd.has_value());
}

TEST(Render, CsvHasHeaderPlusRow) {
  const std::vector<EvalReport> one{sample_report("Multi-sensor with triplet loss", 6)};
  const auto csv = render_report(one, ReportFormat::csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.rfind("condition,", 0), 0u);
}

TEST(Render, MarkdownTable) {
  const std::vector<EvalReport> r{sample_report("Single-sensor", 6), sample_report("Solo", 1)};
  const auto md = render_report(r, ReportFormat::markdown);
  EXPECT_NE(md.find("| Approach | Accuracy, in % | MSE_xy, in mm² | MSE_F, in N² |"), std::string::npos);
  EXPECT_NE(md.find("| Single-sensor | 82.50 ± 1.87 |"), std::string::npos);
  EXPECT_NE(md.find("per-coordinate"), std::string::npos);
}

TEST(Render, JsonRoundTrip) {
  const std::vector<EvalReport> r{sample_report("A", 6), sample_report("B", 1)};
  const auto text = render_report(r, ReportFormat::json);
  const auto back = parse_reports_json(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[0] == r[0]);
  EXPECT_TRUE(back[1] == r[1]);
  EXPECT_EQ(render_report(back, ReportFormat::json), text);
}

TEST(Render, FormatNames) {
  EXPECT_EQ(parse_report_format("json"), ReportFormat::json);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_EQ(parse_report_format("markdown"), ReportFormat::markdown);
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
}

TEST(Spearman, MatchesOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, 6);  // plenty of ties
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(12), y(12);
    for (int i = 0; i < 12; ++i) x[i] = u(rng), y[i] = u(rng) + 0.5 * x[i];
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; })) continue;
    EXPECT_NEAR(spearman(x, y).rho, spearman_oracle(x, y), 1e-12);
  }
}

TEST(Spearman, KnownPValues) {
  // rho = 1 on n = 10 gives p = 0; a reversed series gives rho = -1.
  std::vector<double> x(10), y(10);
  std::iota(x.begin(), x.end(), 0.0);
  y = x;
  EXPECT_DOUBLE_EQ(spearman(x, y).rho, 1.0);
  EXPECT_LT(spearman(x, y).p_value, 1e-6);
  std::reverse(y.begin(), y.end());
  EXPECT_DOUBLE_EQ(spearman(x, y).rho, -1.0);
  const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> b{2, 1, 4, 3, 7, 10, 5, 9, 6, 8};
  const auto s = spearman(a, b);
  EXPECT_NEAR(s.rho, spearman_oracle(a, b), 1e-12);
  EXPECT_GT(s.p_value, 0.0);
  EXPECT_LT(s.p_value, 1.0);
  EXPECT_EQ(s.n, 10);
}

TEST(Spearman, HandComputedPValue) {
  std::vector<double> a(10), b{1, 3, 2, 5, 4, 9, 7, 6, 10, 8};
  std::iota(a.begin(), a.end(), 1.0);
  const auto s = spearman(a, b);
  // Hand value: d^2 = 0+1+1+1+1+9+0+4+1+4 = 22, rho = 1 - 6*22/990 = 0.8667.
  EXPECT_NEAR(s.rho, 1.0 - 6.0 * 22.0 / 990.0, 1e-12);
  // t = 4.9026 on 8 dof; two-sided p = 0.001189.
  EXPECT_NEAR(s.p_value, 0.001189, 2e-5);
}

TEST(DriftSpec, WindowsAndValidation) {
  DriftStudySpec s;
  const auto w = s.window_starts();
  ASSERT_EQ(w.size(), 9u);
  EXPECT_EQ(w.front(), 5000);
  EXPECT_EQ(w.back(), 45000);
  s.train_prefix = 49500;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(DriftStudy, NoDriftControlIsFlat) {
  sim::DriftParams off;
  off.enabled = false;
  const auto sensor = sim::make_sensor(sim::BoardGeometry::canonical(), {}, 4, {}, off);
  DriftStudySpec spec;
  // Windows of whole snake passes so every window sees the same locations.
  spec.total_interactions = 3120 + 8 * 780;
  spec.train_prefix = 3120;
  spec.eval_window = 780;
  spec.eval_stride = 780;
  spec.baseline_modes = {protocol::BaselineMode::once};
  spec.seed = 2;
  nn::TrainConfig tc;
  tc.epochs = 15;
  const auto r = drift_study(sensor, tc, spec);
  ASSERT_EQ(r.curves.size(), 1u);
  const auto& wins = r.curves[0].windows;
  ASSERT_GE(wins.size(), 8u);
  for (const auto& w : wins)
    EXPECT_LE(std::abs(w.mse_xy - wins[0].mse_xy), 2.0 * std::hypot(w.mse_xy_se, wins[0].mse_xy_se))
        << w.start;
}

TEST(DriftStudy, OutputsAreDeterministicAndRenderable) {
  const auto sensor = sim::make_sensor(sim::BoardGeometry::canonical(), {}, 5);
  DriftStudySpec spec;
  spec.total_interactions = 3000;
  spec.train_prefix = 1000;
  spec.eval_window = 500;
  spec.eval_stride = 500;
  spec.seed = 1;
  nn::TrainConfig tc;
  tc.epochs = 3;
  const auto a = drift_study(sensor, tc, spec, false, 1);
  const auto b = drift_study(sensor, tc, spec, false, 3);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.curves_csv(), b.curves_csv());
  EXPECT_EQ(a.curves.size(), 3u);
  const auto scatter = a.scatter_csv();
  EXPECT_EQ(std::count(scatter.begin(), scatter.end(), '\n'), 1 + 3 * 500);
}
