#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "socnav/errors.hpp"
#include "socnav/sampling.hpp"
#include "test_util.hpp"

namespace socnav {
namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Pose2D> poses_of(const Episode& ep) {
  std::vector<Pose2D> out;
  for (const auto& f : ep.frames) out.push_back(f.odom);
  return out;
}

Episode rigid_transform(Episode ep, double angle, Vec2 shift) {
  const double c = std::cos(angle), s = std::sin(angle);
  for (auto& f : ep.frames) {
    const double x = f.odom.x, y = f.odom.y;
    f.odom.x = c * x - s * y + shift.x;
    f.odom.y = s * x + c * y + shift.y;
    f.odom.theta = normalize_angle(f.odom.theta + angle);
  }
  return ep;
}

TEST(Sampling, ResampleStraight) {
  const auto poses = poses_of(testing::straight_episode(40, 0.1));
  const auto pts = arc_length_resample(poses, 0.5, 5);
  ASSERT_EQ(pts.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(pts[i].x, 0.5 * (i + 1), 1e-9);
    EXPECT_NEAR(pts[i].y, 0.0, 1e-9);
  }
}

TEST(Sampling, ResampleStationaryThrows) {
  std::vector<Pose2D> poses(10, Pose2D{1.0, 2.0, 0.3, 0.0});
  EXPECT_THROW(arc_length_resample(poses, 0.5, 1), InsufficientFuture);
}

TEST(Sampling, ResampleTooShortThrows) {
  const auto poses = poses_of(testing::straight_episode(20, 0.1));  // 1.9 m
  EXPECT_THROW(arc_length_resample(poses, 0.5, 5), InsufficientFuture);
  EXPECT_NO_THROW(arc_length_resample(poses, 0.475, 4));
}

TEST(Sampling, ResampleCollapsesDuplicates) {
  std::vector<Pose2D> poses{{0, 0, 0, 0}, {0, 0, 0, 0.1}, {1, 0, 0, 0.2}, {1, 0, 0, 0.3}, {1, 1, 0, 0.4}};
  const auto pts = arc_length_resample(poses, 0.5, 4);
  EXPECT_NEAR(pts[0].x, 0.5, 1e-12);
  EXPECT_NEAR(pts[1].x, 1.0, 1e-12);
  EXPECT_NEAR(pts[2].y, 0.5, 1e-12);
  EXPECT_NEAR(pts[3].y, 1.0, 1e-12);
}

TEST(Sampling, ResampleQuarterCircleOnCircle) {
  const double r = 2.0;
  const auto poses = poses_of(testing::arc_episode(r, 1.0, 90.0));
  const auto pts = arc_length_resample(poses, 0.5, 5);
  for (int i = 0; i < 5; ++i) {
    const double phi = 0.5 * (i + 1) / r;
    const Vec2 exact{r * std::sin(phi), r * (1.0 - std::cos(phi))};
    EXPECT_LT(distance(pts[i], exact), 1e-3) << i;
    EXPECT_NEAR(distance(pts[i], {0.0, r}), r, 1e-3);
  }
}

TEST(Sampling, RobotFrameExamples) {
  const Vec2 a = to_robot_frame({3, 0}, {0, 0, 0, 0});
  EXPECT_DOUBLE_EQ(a.x, 3.0);
  EXPECT_DOUBLE_EQ(a.y, 0.0);
  const Vec2 b = to_robot_frame({0, 2}, {0, 0, kPi / 2, 0});
  EXPECT_NEAR(b.x, 2.0, 1e-15);
  EXPECT_NEAR(b.y, 0.0, 1e-15);
}

TEST(Sampling, RobotFrameInverse) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50, 50), th(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Pose2D r{u(rng), u(rng), th(rng), 0};
    const Vec2 back = to_world_frame(to_robot_frame(p, r), r);
    EXPECT_NEAR(back.x, p.x, 1e-9);
    EXPECT_NEAR(back.y, p.y, 1e-9);
  }
}

TEST(Sampling, GoalStraight) {
  const Episode ep = testing::straight_episode(60, 0.1);
  for (std::size_t t : {0u, 10u, 30u}) {
    const Vec2 g = extract_goal(ep, t);
    EXPECT_NEAR(g.x, 2.5, 1e-9);
    EXPECT_NEAR(g.y, 0.0, 1e-9);
  }
}

TEST(Sampling, GoalHeadingNorth) {
  const Episode ep = testing::straight_episode(60, 0.1, kPi / 2, {3.0, -4.0});
  const Vec2 g = extract_goal(ep, 5);
  EXPECT_NEAR(g.x, 2.5, 1e-9);
  EXPECT_NEAR(g.y, 0.0, 1e-9);
}

TEST(Sampling, GoalOnCircle) {
  const double r = 2.0;
  const Episode ep = testing::arc_episode(r, 1.0, 180.0);
  const Vec2 g = extract_goal(ep, 0);
  const double phi = 2.5 / r;
  const double chord = 2.0 * r * std::sin(phi / 2.0);
  EXPECT_NEAR(g.norm(), chord, 1e-3);
  EXPECT_NEAR(g.x, r * std::sin(phi), 1e-3);
  EXPECT_NEAR(g.y, r * (1.0 - std::cos(phi)), 1e-3);
}

TEST(Sampling, PlanStraightExact) {
  const Episode ep = testing::straight_episode(60, 0.1);
  const GlobalPlan p = extract_global_plan(ep, 7);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(p.waypoints[i].x, 0.5 * (i + 1), 1e-9);
    EXPECT_NEAR(p.waypoints[i].y, 0.0, 1e-9);
  }
}

TEST(Sampling, PlanEndsAtGoal) {
  const Episode ep = testing::arc_episode(1.5, 2.0, 300.0);
  for (std::size_t t = 0; t < 60; t += 7) {
    const Vec2 g = extract_goal(ep, t);
    const Vec2 last = extract_global_plan(ep, t).waypoints[4];
    EXPECT_NEAR(distance(g, last), 0.0, 1e-9);
  }
}

TEST(Sampling, PlanCircleInRobotFrame) {
  const double r = 2.0;
  const Episode ep = testing::arc_episode(r, 1.0, 270.0);
  // At every frame the future is the same circle, so robot-frame waypoints agree.
  const GlobalPlan p = extract_global_plan(ep, 40);
  for (int i = 0; i < 5; ++i) {
    const double phi = 0.5 * (i + 1) / r;
    EXPECT_NEAR(p.waypoints[i].x, r * std::sin(phi), 1e-3);
    EXPECT_NEAR(p.waypoints[i].y, r * (1.0 - std::cos(phi)), 1e-3);
  }
}

TEST(Sampling, EquivariantUnderRigidTransform) {
  const Episode ep = testing::arc_episode(1.7, 2.0, 300.0);
  const Episode moved = rigid_transform(ep, 2.1, {-13.0, 7.5});
  for (std::size_t t = 0; t < 50; t += 5) {
    const auto a = extract_global_plan(ep, t);
    const auto b = extract_global_plan(moved, t);
    for (int i = 0; i < 5; ++i) EXPECT_LT(distance(a.waypoints[i], b.waypoints[i]), 1e-9);
    EXPECT_LT(distance(extract_goal(ep, t), extract_goal(moved, t)), 1e-9);
  }
}

TEST(Sampling, DatasetStraightMatchesBruteForce) {
  const Episode ep = testing::straight_episode(100, 0.1);
  const std::vector<Episode> eps{ep};
  const Dataset ds = build_dataset(eps, 10, GridSpec{});
  std::size_t expected = 0, strided = 0;
  for (std::size_t t = 0; t < ep.frames.size(); t += 10) {
    ++strided;
    double future = 0.0;
    for (std::size_t k = t + 1; k < ep.frames.size(); ++k)
      future += distance(ep.frames[k].odom.position(), ep.frames[k - 1].odom.position());
    if (future + 1e-9 >= 2.5) ++expected;
  }
  EXPECT_EQ(ds.samples.size(), expected);
  EXPECT_EQ(ds.samples.size() + ds.skipped, strided);
  EXPECT_EQ(expected, 8u);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.t_index % 10, 0);
    EXPECT_EQ(s.episode_id, ep.id);
    EXPECT_EQ(s.scenario, ep.scenario);
    EXPECT_NEAR(s.input.goal.x, 2.5, 1e-9);
    EXPECT_LT(distance(s.input.goal, s.plan.waypoints[4]), 1e-9);
    EXPECT_EQ(s.action.action, ep.frames[static_cast<std::size_t>(s.t_index)].action);
  }
}

TEST(Sampling, DatasetStationary) {
  Episode ep = testing::straight_episode(30, 0.0);
  for (auto& f : ep.frames) f.action = {0, 0};
  const std::vector<Episode> eps{ep};
  const Dataset ds = build_dataset(eps, 4, GridSpec{});
  EXPECT_TRUE(ds.samples.empty());
  EXPECT_EQ(ds.skipped, 8u);
}

TEST(Sampling, DatasetTwoFrames) {
  Episode ep = testing::straight_episode(2, 3.0);
  for (auto& f : ep.frames) f.action = {1.0, 0.0};
  const std::vector<Episode> eps{ep};
  const Dataset ds = build_dataset(eps, 1, GridSpec{});
  ASSERT_EQ(ds.samples.size(), 1u);
  EXPECT_EQ(ds.skipped, 1u);
  EXPECT_NEAR(ds.samples[0].input.goal.x, 2.5, 1e-12);
}

TEST(Sampling, DatasetVoxelizesPoints) {
  Episode ep = testing::straight_episode(40, 0.1);
  ep.frames[0].points = {{1.0f, 0.0f, 0.5f}, {1.0f, 0.01f, 0.5f}, {20.0f, 0.0f, 0.0f}};
  const std::vector<Episode> eps{ep};
  const Dataset ds = build_dataset(eps, 1, GridSpec{});
  ASSERT_FALSE(ds.samples.empty());
  EXPECT_EQ(ds.samples[0].input.voxels.occupied_count(), 1u);
  EXPECT_EQ(ds.samples[0].input.image, ep.frames[0].image);
  EXPECT_EQ(ds.samples[0].input.history_len, 1);
}

TEST(Sampling, DatasetBadStride) {
  const std::vector<Episode> eps{testing::straight_episode(10, 0.1)};
  EXPECT_THROW(build_dataset(eps, 0, GridSpec{}), ValidationError);
}

TEST(Sampling, DatasetDeterministic) {
  const std::vector<Episode> eps{testing::arc_episode(2.0, 3.0, 300.0), testing::straight_episode(50, 0.2)};
  const Dataset a = build_dataset(eps, 3, GridSpec{});
  const Dataset b = build_dataset(eps, 3, GridSpec{});
  ASSERT_EQ(a.samples.size(), b.samples.size());
  EXPECT_EQ(a.skipped, b.skipped);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].t_index, b.samples[i].t_index);
}

}  // namespace
}  // namespace socnav
