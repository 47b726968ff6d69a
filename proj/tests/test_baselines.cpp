#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "baseline_oracle.hpp"
#include "socnav/baselines.hpp"
#include "socnav/errors.hpp"
#include "test_util.hpp"

namespace socnav {
namespace {

VoxelGrid mirrored(const VoxelGrid& g) {
  VoxelGrid out(g.spec());
  const auto d = g.dims();
  for (std::uint32_t c : g.occupied()) {
    const int i = static_cast<int>(c / (d[1] * d[2]));
    const int j = static_cast<int>((c / d[2]) % d[1]);
    const int k = static_cast<int>(c % d[2]);
    out.set(i, d[1] - 1 - j, k);
  }
  return out;
}

// Closest approach of the forward-simulated arc to `goal` (dense scan, then
// golden-section refinement around the best sample).
double closest_approach(double v, double omega, Vec2 goal) {
  auto dist = [&](double t) {
    double x, y;
    testing::unicycle(v, omega, t, x, y);
    return std::hypot(x - goal.x, y - goal.y);
  };
  const double t_max = 2.0 * std::numbers::pi / std::max(std::abs(omega), 1e-3);
  const int n = 20000;
  int best = 0;
  for (int i = 1; i <= n; ++i)
    if (dist(t_max * i / n) < dist(t_max * best / n)) best = i;
  double a = t_max * std::max(0, best - 1) / n, b = t_max * std::min(n, best + 1) / n;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double c = b - r * (b - a), d = a + r * (b - a);
    if (dist(c) < dist(d)) b = d; else a = c;
  }
  return dist(0.5 * (a + b));
}

TEST(StraightPursuit, StraightAhead) {
  const auto out = straight_pursuit_plan({2.5, 0.0});
  for (int i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(out.waypoints[i].x, 0.5 * (i + 1));
    EXPECT_EQ(out.waypoints[i].y, 0.0);
  }
  EXPECT_EQ(out.action.v, 1.0);
  EXPECT_EQ(out.action.omega, 0.0);
}

TEST(StraightPursuit, HandComputedOmega) {
  EXPECT_EQ(straight_pursuit_plan({0.0, 2.5}).action.omega, 0.8);
}

TEST(StraightPursuit, ArcPassesThroughGoal) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-2.5, 2.5), rad(0.5, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = ang(rng), r = rad(rng);
    const Vec2 goal{r * std::cos(a), r * std::sin(a)};
    const auto out = straight_pursuit_plan(goal);
    EXPECT_LT(closest_approach(out.action.v, out.action.omega, goal), 1e-6) << goal.x << "," << goal.y;
  }
}

TEST(StraightPursuit, CollinearAndSigned) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec2 goal{u(rng), u(rng)};
    const auto out = straight_pursuit_plan(goal);
    for (const auto& w : out.waypoints) EXPECT_LE(std::abs(cross(w, goal)), 1e-9);
    EXPECT_NEAR(out.waypoints[4].norm(), 2.5, 1e-12);
    EXPECT_EQ(out.action.omega > 0, goal.y > 0);
    EXPECT_EQ(out.action.omega < 0, goal.y < 0);
  }
  EXPECT_EQ(straight_pursuit_plan({-2.0, 0.0}).action.omega, 0.0);
  EXPECT_THROW(straight_pursuit_plan({0.0, 0.0}), InputError);
}

TEST(Dwa, EmptyGridGoalAhead) {
  NavigationInput in;
  in.goal = {2.5, 0.0};
  const DwaPlan p = dwa_lite_plan(in);
  EXPECT_FALSE(p.blocked);
  EXPECT_EQ(p.output.action.omega, 0.0);
  EXPECT_EQ(p.output.action.v, 1.0);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(p.output.waypoints[i].x, 0.5 * (i + 1), 1e-12);
}

TEST(Dwa, WallAheadIsAvoided) {
  std::vector<Point3f> wall;
  for (double y = -0.8; y <= 0.8; y += 0.01)
    for (double z = 0.0; z < 1.0; z += 0.1) wall.push_back({1.02f, static_cast<float>(y), static_cast<float>(z)});
  NavigationInput in;
  in.voxels = voxelize(wall, GridSpec{});
  in.goal = {2.5, 0.0};
  const BaselineConfig cfg{.kind = BaselineKind::dwa_lite};
  const DwaPlan p = dwa_lite_plan(in, cfg);
  ASSERT_FALSE(p.blocked);
  EXPECT_GT(p.clearance, 0.0);
  EXPECT_NE(p.output.action.omega, 0.0);
  EXPECT_GT(testing::swept_clearance(in.voxels, p.output.action.v, p.output.action.omega, cfg.dwa.horizon_s,
                                     cfg.dwa.robot_radius_m),
            0.0);
}

TEST(Dwa, SurroundedIsBlocked) {
  std::vector<Point3f> ring;
  for (int a = 0; a < 720; ++a) {
    const double t = a * std::numbers::pi / 360.0;
    ring.push_back({static_cast<float>(0.35 + 0.1 * std::cos(t)), static_cast<float>(0.3 * std::sin(t)), 0.5f});
  }
  // The crop starts at x = 0, so posts right beside the robot block every arc.
  for (double y = -0.5; y <= 0.5; y += 0.02) ring.push_back({0.02f, static_cast<float>(y), 0.5f});
  NavigationInput in;
  in.voxels = voxelize(ring, GridSpec{});
  in.goal = {2.5, 0.0};
  const DwaPlan p = dwa_lite_plan(in);
  EXPECT_TRUE(p.blocked);
  EXPECT_EQ(p.output.action, (VelocityCommand{0.0, 0.0}));
  for (const auto& w : p.output.waypoints) EXPECT_EQ(w, (Vec2{0.0, 0.0}));
}

TEST(Dwa, RandomWorldsNeverCollide) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ang(-1.2, 1.2);
  const BaselineConfig cfg{.kind = BaselineKind::dwa_lite};
  int unblocked = 0;
  for (int w = 0; w < 30; ++w) {
    NavigationInput in;
    in.voxels = voxelize(testing::random_obstacle_cloud(rng, 6), GridSpec{});
    const double a = ang(rng);
    in.goal = {2.5 * std::cos(a), 2.5 * std::sin(a)};
    const DwaPlan p = dwa_lite_plan(in, cfg);
    if (p.blocked) continue;
    ++unblocked;
    EXPECT_GT(testing::swept_clearance(in.voxels, p.output.action.v, p.output.action.omega, cfg.dwa.horizon_s,
                                       cfg.dwa.robot_radius_m),
              0.0)
        << "world " << w;
  }
  EXPECT_GT(unblocked, 15);
}

TEST(Baselines, MirrorSymmetry) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ang(-1.2, 1.2);
  for (int w = 0; w < 20; ++w) {
    NavigationInput in;
    in.voxels = voxelize(testing::random_obstacle_cloud(rng, 4), GridSpec{});
    const double a = ang(rng);
    in.goal = {2.5 * std::cos(a), 2.5 * std::sin(a)};
    NavigationInput m = in;
    m.voxels = mirrored(in.voxels);
    m.goal.y = -in.goal.y;
    for (auto kind : {BaselineKind::straight_pursuit, BaselineKind::dwa_lite}) {
      const BaselineConfig cfg{.kind = kind};
      const auto p = baseline_plan(in, cfg), q = baseline_plan(m, cfg);
      EXPECT_EQ(p.action.v, q.action.v);
      EXPECT_EQ(p.action.omega, -q.action.omega) << to_string(kind) << " world " << w;
      for (int i = 0; i < 5; ++i) {
        EXPECT_EQ(p.waypoints[i].x, q.waypoints[i].x);
        EXPECT_EQ(p.waypoints[i].y, -q.waypoints[i].y);
      }
    }
  }
}

TEST(Baselines, ScoreMatchesAggregation) {
  std::vector<TrainingSample> samples;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int s = 0; s < 9; ++s) {
    TrainingSample t;
    for (int i = 0; i < 5; ++i) t.plan.waypoints[i] = {0.5 * (i + 1), u(rng) * i};
    t.input.goal = t.plan.waypoints[4];
    t.action.action = {1.0, u(rng)};
    t.scenario = s % 2 ? "zone_semantic" : "geometry_maze";
    t.episode_id = "e" + std::to_string(s);
    samples.push_back(t);
  }
  for (auto kind : {BaselineKind::straight_pursuit, BaselineKind::dwa_lite}) {
    const BaselineConfig cfg{.kind = kind};
    const EvalReport r = score_baseline(cfg, samples);
    EXPECT_EQ(r.overall.split, "baseline:" + to_string(kind));
    std::vector<NetworkOutput> preds;
    for (const auto& s : samples) preds.push_back(baseline_plan(s.input, cfg));
    const EvalReport ref = score_predictions(samples, preds, 1.0, 0, r.overall.split);
    EXPECT_EQ(r.overall.total, ref.overall.total);
    EXPECT_EQ(r.per_scenario.size(), 2u);
    EXPECT_EQ(score_baseline(cfg, samples).overall.total, r.overall.total);
  }
}

TEST(Baselines, ConfigValidation) {
  BaselineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.v_nominal = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.dwa.omega_samples = 2;
  EXPECT_THROW(c.validate(), ValidationError);
  c = {};
  c.dwa.robot_radius_m = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(parse_baseline_kind("dwa_lite"), BaselineKind::dwa_lite);
  EXPECT_THROW(parse_baseline_kind("move_base"), ValidationError);
}

}  // namespace
}  // namespace socnav
