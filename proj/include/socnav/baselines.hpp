#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "socnav/network.hpp"
#include "socnav/trainer.hpp"

namespace socnav {

enum class BaselineKind { straight_pursuit, dwa_lite };

std::string to_string(BaselineKind k);
BaselineKind parse_baseline_kind(std::string_view s);

struct DwaConfig {
  int v_samples = 5;
  int omega_samples = 21;
  double horizon_s = 2.5;
  double robot_radius_m = 0.3;
  double clearance_weight = 0.5;
  double goal_weight = 1.0;
  double clearance_cap = 1.0;  // clearance beyond this earns no extra score
  double v_max = 0.0;          // <= 0 means v_nominal
  double omega_max = 1.5;
  double path_step = 0.02;     // meters between collision probes along an arc
};

struct BaselineConfig {
  BaselineKind kind = BaselineKind::straight_pursuit;
  double v_nominal = 1.0;
  DwaConfig dwa;

  void validate() const;
};

/// Waypoints 0.5 m apart along the ray to the goal; v = v_nominal and the
/// pure-pursuit turn rate 2 v y / (x^2 + y^2). Throws InputError for a zero goal.
NetworkOutput straight_pursuit_plan(Vec2 goal, const BaselineConfig& config = {});

struct DwaPlan {
  NetworkOutput output;
  bool blocked = false;
  double clearance = 0.0;  // guaranteed footprint clearance of the chosen arc
};

/// Dynamic-window style search over constant (v, omega) arcs. Obstacles are the
/// occupied columns of the voxel grid. Every accepted arc keeps the robot disc
/// strictly clear of every occupied column along its whole length.
DwaPlan dwa_lite_plan(const NavigationInput& input, const BaselineConfig& config = {});

/// Position after travelling arc length `s` on the arc with curvature
/// omega / v, starting at the origin heading +x.
Vec2 arc_point(double v, double omega, double s);

/// Dispatches on config.kind.
NetworkOutput baseline_plan(const NavigationInput& input, const BaselineConfig& config);

/// Scores the baseline against the demonstrations with the same aggregation as
/// evaluate(); split is "baseline:<kind>".
EvalReport score_baseline(const BaselineConfig& config, const std::vector<TrainingSample>& samples,
                          double lambda = 1.0, int epoch = 0);

}  // namespace socnav
