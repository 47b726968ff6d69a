#include "socnav/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "socnav/errors.hpp"

namespace socnav {

namespace {

// Arc lengths are accumulated in floating point; a path whose length matches
// the request up to rounding still qualifies.
constexpr double kArcSlack = 1e-9;

std::span<const Pose2D> future_of(const std::vector<Pose2D>& poses, std::size_t t) {
  return std::span<const Pose2D>(poses).subspan(t);
}

std::vector<Pose2D> odometry(const Episode& ep) {
  std::vector<Pose2D> poses;
  poses.reserve(ep.frames.size());
  for (const auto& f : ep.frames) poses.push_back(f.odom);
  return poses;
}

void check_index(const Episode& ep, std::size_t t) {
  if (t >= ep.frames.size())
    throw InputError("frame index " + std::to_string(t) + " out of range for episode " + ep.id);
}

}  // namespace

std::vector<Vec2> arc_length_resample(std::span<const Pose2D> poses, double spacing, int count) {
  if (!(spacing > 0.0)) throw InputError("resample spacing must be positive");
  if (count < 1) throw InputError("resample count must be at least 1");
  if (poses.size() < 2) throw InsufficientFuture("fewer than two poses");

  std::vector<Vec2> vertices;
  vertices.reserve(poses.size());
  for (const auto& p : poses) {
    Vec2 v = p.position();
    if (vertices.empty() || !(v == vertices.back())) vertices.push_back(v);
  }

  if (vertices.size() < 2) throw InsufficientFuture("robot did not move");

  std::vector<double> cumulative(vertices.size(), 0.0);
  for (std::size_t i = 1; i < vertices.size(); ++i)
    cumulative[i] = cumulative[i - 1] + distance(vertices[i - 1], vertices[i]);

  const double total = cumulative.back();
  const double needed = spacing * count;
  if (total + kArcSlack < needed)
    throw InsufficientFuture("path length " + std::to_string(total) + " m is shorter than " +
                             std::to_string(needed) + " m");

  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t seg = 1;
  for (int n = 1; n <= count; ++n) {
    const double s = std::min(spacing * n, total);
    while (seg + 1 < vertices.size() && cumulative[seg] < s) ++seg;
    const double seg_len = cumulative[seg] - cumulative[seg - 1];
    const double u = std::clamp((s - cumulative[seg - 1]) / seg_len, 0.0, 1.0);
    const Vec2 a = vertices[seg - 1];
    const Vec2 b = vertices[seg];
    out.push_back({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
  }
  return out;
}

Vec2 to_robot_frame(Vec2 p_world, const Pose2D& robot) {
  const double dx = p_world.x - robot.x;
  const double dy = p_world.y - robot.y;
  const double c = std::cos(robot.theta);
  const double s = std::sin(robot.theta);
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 to_world_frame(Vec2 p_robot, const Pose2D& robot) {
  const double c = std::cos(robot.theta);
  const double s = std::sin(robot.theta);
  return {robot.x + c * p_robot.x - s * p_robot.y, robot.y + s * p_robot.x + c * p_robot.y};
}

Vec2 extract_goal(const Episode& ep, std::size_t t) {
  check_index(ep, t);
  const auto poses = odometry(ep);
  const auto pts = arc_length_resample(future_of(poses, t), kGoalDistance, 1);
  return to_robot_frame(pts.front(), poses[t]);
}

GlobalPlan extract_global_plan(const Episode& ep, std::size_t t) {
  check_index(ep, t);
  const auto poses = odometry(ep);
  const auto pts = arc_length_resample(future_of(poses, t), kWaypointSpacing, kPlanLength);
  GlobalPlan plan;
  for (int i = 0; i < kPlanLength; ++i) plan.waypoints[i] = to_robot_frame(pts[i], poses[t]);
  return plan;
}

void append_samples(const Episode& ep, int stride, const GridSpec& spec, Dataset& out) {
  if (stride < 1) throw ValidationError("stride must be at least 1");
  for (std::size_t t = 0; t < ep.frames.size(); t += static_cast<std::size_t>(stride)) {
    GlobalPlan plan;
    Vec2 goal;
    try {
      plan = extract_global_plan(ep, t);
      goal = extract_goal(ep, t);
    } catch (const InsufficientFuture&) {
      ++out.skipped;
      continue;
    }
    const Frame& f = ep.frames[t];
    TrainingSample s;
    s.input.voxels = voxelize(f.points, spec);
    s.input.image = f.image;
    s.input.goal = goal;
    s.plan = plan;
    s.action.action = f.action;
    s.episode_id = ep.id;
    s.t_index = static_cast<int>(t);
    s.scenario = ep.scenario;
    out.samples.push_back(std::move(s));
  }
}

Dataset build_dataset(std::span<const Episode> episodes, int stride, const GridSpec& spec) {
  if (stride < 1) throw ValidationError("stride must be at least 1");
  Dataset out;
  for (const auto& ep : episodes) append_samples(ep, stride, spec, out);
  return out;
}

}  // namespace socnav
