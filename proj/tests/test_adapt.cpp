#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "reskin/adapt.hpp"
#include "reskin/config.hpp"
#include "reskin/experiments.hpp"

using namespace reskin;
using namespace reskin::adapt;

namespace {

data::UnlabeledLine ramp_line(int n, double offset) {
  data::UnlabeledLine l;
  for (int i = 0; i < n; ++i) {
    FluxVector f = FluxVector::Zero();
    f(0) = offset + i;
    f(1) = std::sin(0.3 * i + offset);
    l.ordered_flux.push_back(f);
  }
  return l;
}

cfg::RunConfig tiny_fleet_config() {
  cfg::RunConfig c;
  c.merge(nlohmann::json{{"data.fleet", true},        {"fleet.boards", 2},
                         {"fleet.skins_per_board", 2}, {"data.passes", 1},
                         {"lines.count", 2},           {"lines.points", 65},
                         {"train.epochs", 3},          {"adapt.epochs", 2},
                         {"adapt.budget", 100},        {"cv.single_train_sensors", 1},
                         {"cv.single_test_sensors", 2}});
  return c;
}

const MultiSensorDataset& tiny_fleet() {
  static const MultiSensorDataset d = exp::simulate_fleet(tiny_fleet_config(), 1);
  return d;
}

}  // namespace

TEST(Folds, BoardFoldsHoldOutWholeBoards) {
  const auto& d = tiny_fleet();
  ASSERT_EQ(d.size(), 4u);
  ASSERT_EQ(d.folds().size(), 2u);
  for (const auto& f : d.folds()) {
    EXPECT_EQ(f.test_ids.size(), 2u);
    for (const auto& t : f.test_ids) {
      for (const auto& r : f.train_ids) {
        EXPECT_NE(t, r);
        EXPECT_NE(d.sensor(t).board, d.sensor(r).board);
      }
    }
  }
}

TEST(Folds, OverlapAndUnknownIdsRejected) {
  MultiSensorDataset d = tiny_fleet();
  const auto ids = d.ids();
  EXPECT_THROW(d.set_folds({Fold{0, {ids[0], ids[1]}, {ids[1]}}}), ConfigError);
  EXPECT_THROW(d.set_folds({Fold{0, {ids[0]}, {"nobody"}}}), ConfigError);
  EXPECT_NO_THROW(d.set_folds({Fold{0, {ids[0], ids[1]}, {ids[2]}}}));
}

TEST(MultiSensor, NeedsTwoSensors) {
  const auto& d = tiny_fleet();
  const std::vector<std::string> one{d.ids()[0]};
  nn::TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train_multisensor(d, one, tc, false), std::invalid_argument);
}

TEST(Pool, GroupsShareSensorAndDepth) {
  const auto& d = tiny_fleet();
  const auto ids = d.ids();
  const Pool p = pool(d, ids);
  std::vector<std::pair<int, double>> key;
  for (std::size_t g = 0; g < ids.size(); ++g)
    for (const auto& s : d.sensor(ids[g]).dataset.samples) key.emplace_back(int(g), s.depth);
  ASSERT_EQ(std::size_t(p.m.X.rows()), key.size());
  std::size_t covered = 0;
  for (const auto& g : p.triplet_groups) {
    ASSERT_GE(g.size(), 3u);
    covered += g.size();
    for (int r : g) {
      EXPECT_EQ(p.m.group[r], key[g[0]].first);
      EXPECT_EQ(key[r].first, key[g[0]].first);
      EXPECT_NEAR(key[r].second, key[g[0]].second, 1e-9);
    }
  }
  // One pass: 6 depths x 65 locations per sensor.
  EXPECT_EQ(p.triplet_groups.size(), ids.size() * 6);
  EXPECT_EQ(covered, key.size());
}

TEST(Triplets, LabeledSamplerOrdersByTrueDistance) {
  const auto& d = tiny_fleet();
  const auto ids = d.ids();
  Pool p = pool(d, ids);
  // Tag each row so sampled flux rows can be traced back to their labels.
  for (Eigen::Index r = 0; r < p.m.X.rows(); ++r) p.m.X(r, 0) = double(r);
  auto sampler = labeled_triplet_sampler(p);
  std::mt19937_64 rng(3);
  Eigen::MatrixXd a, pos, neg;
  sampler(rng, 2000, a, pos, neg);
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    const auto ra = Eigen::Index(a(t, 0)), rp = Eigen::Index(pos(t, 0)),
               rn = Eigen::Index(neg(t, 0));
    const double dp = (p.m.Y.row(ra).head<2>() - p.m.Y.row(rp).head<2>()).norm();
    const double dn = (p.m.Y.row(ra).head<2>() - p.m.Y.row(rn).head<2>()).norm();
    ASSERT_LT(dp, dn);
    ASSERT_EQ(p.m.group[ra], p.m.group[rn]);
  }
}

TEST(Triplets, UnlabeledSamplerOrdersByIndexAndStaysInLine) {
  const AdaptationSet set({ramp_line(20, 0.0), ramp_line(7, 1000.0), ramp_line(40, 5000.0)});
  auto sampler = unlabeled_triplet_sampler(set);
  std::mt19937_64 rng(11);
  Eigen::MatrixXd a, p, n;
  sampler(rng, 5000, a, p, n);
  auto line_of = [](double v) { return v >= 5000 ? 2 : v >= 1000 ? 1 : 0; };
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    ASSERT_LT(std::abs(a(t, 0) - p(t, 0)), std::abs(a(t, 0) - n(t, 0)));
    ASSERT_EQ(line_of(a(t, 0)), line_of(p(t, 0)));
    ASSERT_EQ(line_of(a(t, 0)), line_of(n(t, 0)));
  }
}

TEST(AdaptationSet, TakeRespectsBudget) {
  const std::vector<data::UnlabeledLine> lines{ramp_line(65, 0), ramp_line(65, 100),
                                               ramp_line(65, 200)};
  const auto s = AdaptationSet::take(lines, 100);
  EXPECT_EQ(s.budget(), 100u);
  ASSERT_EQ(s.lines().size(), 2u);
  EXPECT_EQ(s.lines()[0].ordered_flux.size(), 65u);
  EXPECT_EQ(s.lines()[1].ordered_flux.size(), 35u);
  EXPECT_DOUBLE_EQ(s.lines()[1].ordered_flux[0](0), 100.0);
  EXPECT_EQ(AdaptationSet::take(lines, 195).lines().size(), 3u);
  EXPECT_THROW(AdaptationSet::take(lines, 196), std::invalid_argument);
  EXPECT_TRUE(AdaptationSet::take(lines, 0).empty());
}

TEST(AdaptationSet, EmptySetRejected) {
  const auto& d = tiny_fleet();
  const auto ids = d.ids();
  const Pool p = pool(d, ids);
  const auto model = nn::init_model(nn::Architecture::canonical(3), 1);
  EXPECT_THROW(self_supervised_adapt(model, AdaptationSet{}, p.m, p.m, nn::TrainConfig{}),
               std::invalid_argument);
}

TEST(Adaptation, TargetLabelsCannotInfluenceResult) {
  const auto& d = tiny_fleet();
  const auto ids = d.ids();
  const std::vector<std::string> src{ids[0], ids[1]};
  nn::TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 5;
  const auto base = train_multisensor(d, src, tc, true).model;
  const Pool p = pool(d, src);
  const Split s = split_rows(p.m, 0.1, 9);

  // Same flux sequences, scrambled geometry and indices.
  auto fleet = exp::make_fleet(tiny_fleet_config());
  auto trajectories = data::line_adaptation_protocol(fleet[2].sensor, 2, 65);
  auto scrambled = trajectories;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-8, 8);
  for (auto& l : scrambled) {
    l.start = Vec2(u(rng), u(rng));
    l.end = Vec2(u(rng), u(rng));
    for (auto& i : l.indices) i = int(rng() % 1000);
  }
  AdaptOptions ao;
  ao.epochs = 2;
  const auto m1 =
      self_supervised_adapt(base, AdaptationSet::from_trajectories(trajectories, 100), s.train, s.val, tc, ao);
  const auto m2 =
      self_supervised_adapt(base, AdaptationSet::from_trajectories(scrambled, 100), s.train, s.val, tc, ao);
  EXPECT_TRUE(m1.model == m2.model);
  EXPECT_FALSE(m1.model == base);
}

TEST(Conditions, Names) {
  EXPECT_EQ(condition_name(Condition::single_sensor, 0), "Single-sensor");
  EXPECT_EQ(condition_name(Condition::multi_no_triplet, 0), "Multi-sensor without triplet loss");
  EXPECT_EQ(condition_name(Condition::multi_triplet, 0), "Multi-sensor with triplet loss");
  EXPECT_EQ(condition_name(Condition::multi_triplet_adapted, 390),
            "Multi-sensor with triplet loss, adapted using 390 indentations");
  EXPECT_EQ(parse_condition("multi_triplet_adapted"), Condition::multi_triplet_adapted);
  EXPECT_THROW(parse_condition("triplet"), ConfigError);
}

TEST(CrossValidate, DeterministicAcrossJobs) {
  auto c = tiny_fleet_config();
  const auto tc = c.train();
  auto o1 = c.cv_options();
  o1.jobs = 1;
  auto o2 = o1;
  o2.jobs = 3;
  const auto r1 = cross_validate(tiny_fleet(), tc, o1);
  const auto r2 = cross_validate(tiny_fleet(), tc, o2);
  ASSERT_EQ(r1.size(), 4u);
  EXPECT_EQ(r1, r2);
  for (const auto& r : r1) {
    EXPECT_EQ(r.config_hash, c.hash());
    EXPECT_GT(r.n_samples, 0u);
    EXPECT_EQ(r.folds.size(), 2u) << r.condition;
  }
}
