#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "socnav/episodes.hpp"
#include "socnav/geometry.hpp"

namespace socnav {

enum class PedModel { constant_velocity, social_force_lite };

std::string to_string(PedModel m);
PedModel parse_ped_model(std::string_view s);

using Color = std::array<std::uint8_t, 3>;

/// Axis-aligned painted region; invisible to the lidar.
struct SemanticZone {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  Color color{220, 40, 40};
  double speed_factor = 0.5;

  bool contains(Vec2 p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
  friend bool operator==(const SemanticZone&, const SemanticZone&) = default;
};

/// Which way pedestrians walk relative to the robot's direction of travel (+x).
enum class PedFlow { mixed, with, against, crossing, standing };

struct WorldSpec {
  std::uint64_t seed = 0;
  std::string scenario = "with_traffic";
  double extent = 20.0;      // world length along x, meters
  double width = 8.0;        // world spans y in [-width/2, width/2]
  int n_static = 0;          // box obstacles
  int n_peds = 0;
  PedModel ped_model = PedModel::constant_velocity;
  PedFlow ped_flow = PedFlow::mixed;
  double ped_speed = 1.0;    // preferred walking speed, m/s
  std::vector<SemanticZone> semantic_zones;
  int n_random_zones = 0;    // extra full-width zones placed by the generator
  double zone_speed_factor = 0.4;
  Color zone_color{220, 40, 40};
  double hall_half_width = 0.0;  // > 0 adds side walls at +-hall_half_width
  double obstacle_lane = 0.0;    // > 0 keeps box centres within |y| <= obstacle_lane
  bool image_shows_geometry = true;
  bool image_shows_pedestrians = true;

  void validate() const;
};

struct Box {
  Vec2 center;
  Vec2 half;  // half extents along the box axes
  double yaw = 0.0;
  double height = 1.0;
  bool wall = false;  // hall side walls; the expert does not detour around them
  friend bool operator==(const Box&, const Box&) = default;
};

struct Pedestrian {
  Vec2 pos;
  Vec2 vel;
  Vec2 goal;
  double radius = 0.3;
  double height = 1.7;
  friend bool operator==(const Pedestrian&, const Pedestrian&) = default;
};

struct World {
  WorldSpec spec;
  Pose2D start;
  Vec2 goal;
  std::vector<Box> boxes;
  std::vector<Pedestrian> peds;
  std::vector<SemanticZone> zones;
};

struct ExpertConfig {
  double v_nominal = 1.0;
  double slow_radius = 2.0;
  bool zone_obedience = true;
  double heading_gain = 1.5;
  double omega_max = 1.2;
  double goal_tolerance = 0.5;
  double robot_radius = 0.3;
  double avoid_margin = 0.35;  // extra clearance kept around obstacles when detouring

  void validate() const;
};

struct SensorConfig {
  int rays = 720;            // full circle
  double max_range = 10.0;
  double height_step = 0.1;  // vertical spacing of returns on a hit surface
  // Top-down image window in the robot frame.
  double image_x_min = -1.0;
  double image_x_max = 7.0;
  double image_half_width = 4.0;
  Color background{90, 110, 90};
  Color obstacle{128, 128, 128};
  Color pedestrian{40, 60, 220};
};

/// Deterministic world for `spec`. Throws GenerationError when objects cannot be
/// placed clear of the start pose within a bounded number of attempts.
World gen_world(const WorldSpec& spec);

/// Robot-frame returns of a planar scan against boxes and pedestrians, lifted to
/// 3D by sampling heights along every hit surface. Zones are not visible.
std::vector<Point3f> render_pointcloud(const World& world, const Pose2D& pose, const SensorConfig& sensor = {});

/// Robot-centric top-down view: forward is up, +y (left) is left.
Image render_image(const World& world, const Pose2D& pose, const SensorConfig& sensor = {});

/// Runs the scripted expert for at most `duration` seconds in steps of `dt`,
/// stopping once the goal is reached. Pedestrians move per world.spec.ped_model.
Episode simulate_episode(const World& world, const ExpertConfig& expert, double duration, double dt,
                         const std::string& id = "", const SensorConfig& sensor = {});

/// Advances pedestrians by one step; moves that would overlap a box are rejected.
void step_pedestrians(World& world, Vec2 robot, double dt);

/// Speed the expert commands at `pose` given the current pedestrians.
double expert_speed(const World& world, Vec2 position, const ExpertConfig& expert);

/// Minimum distance between a disc and a box footprint (negative inside).
double disc_box_gap(Vec2 center, double radius, const Box& box);

/// Scenario presets: with_traffic, against_traffic, street_crossing,
/// narrow_hall, zone_semantic, geometry_maze.
WorldSpec preset(std::string_view scenario, std::uint64_t seed);
const std::vector<std::string>& preset_names();

}  // namespace socnav
