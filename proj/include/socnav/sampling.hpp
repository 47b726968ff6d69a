#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "socnav/episodes.hpp"
#include "socnav/geometry.hpp"
#include "socnav/voxelizer.hpp"

namespace socnav {

inline constexpr int kPlanLength = 5;            // waypoints per global plan
inline constexpr double kWaypointSpacing = 0.5;  // meters of arc length between waypoints
inline constexpr double kGoalDistance = 2.5;     // meters of arc length to the goal

/// Demonstrated future path, robot frame at the sample time.
struct GlobalPlan {
  std::array<Vec2, kPlanLength> waypoints{};
};

struct LocalPlan {
  VelocityCommand action;
};

struct NavigationInput {
  VoxelGrid voxels;
  Image image;
  Vec2 goal;
  int history_len = 1;
};

struct TrainingSample {
  NavigationInput input;
  GlobalPlan plan;
  LocalPlan action;
  std::string episode_id;
  int t_index = 0;
  std::string scenario;
};

/// Points at arc lengths spacing, 2*spacing, ..., count*spacing along the
/// polyline through the pose positions (linear interpolation, duplicate
/// consecutive positions collapsed). Throws InsufficientFuture when the
/// polyline is shorter than spacing*count.
std::vector<Vec2> arc_length_resample(std::span<const Pose2D> poses, double spacing, int count);

/// Expresses a world point in the frame of `robot`.
Vec2 to_robot_frame(Vec2 p_world, const Pose2D& robot);
/// Inverse of to_robot_frame.
Vec2 to_world_frame(Vec2 p_robot, const Pose2D& robot);

/// Point 2.5 m of arc length ahead along the odometry after frame t, robot frame.
Vec2 extract_goal(const Episode& ep, std::size_t t);

/// Five waypoints 0.5 m apart along the odometry after frame t, robot frame.
GlobalPlan extract_global_plan(const Episode& ep, std::size_t t);

struct Dataset {
  std::vector<TrainingSample> samples;
  std::size_t skipped = 0;  // strided frames without enough future path
};

/// One sample per strided frame (t = 0, stride, 2*stride, ...) whose future
/// path is long enough. Throws ValidationError when stride < 1.
Dataset build_dataset(std::span<const Episode> episodes, int stride, const GridSpec& spec);

/// Appends the samples of one episode to `out`; used to stream large sets.
void append_samples(const Episode& ep, int stride, const GridSpec& spec, Dataset& out);

}  // namespace socnav
