#include "socnav/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include "socnav/errors.hpp"
#include "socnav/sampling.hpp"

namespace socnav {

std::string to_string(PedModel m) {
  return m == PedModel::social_force_lite ? "social_force_lite" : "constant_velocity";
}

PedModel parse_ped_model(std::string_view s) {
  if (s == "constant_velocity") return PedModel::constant_velocity;
  if (s == "social_force_lite") return PedModel::social_force_lite;
  throw ValidationError("unknown pedestrian model '" + std::string(s) + "'");
}

void WorldSpec::validate() const {
  if (!(extent > 10.0)) throw ValidationError("world: extent must exceed 10 m");
  if (!(width >= 3.0)) throw ValidationError("world: width must be at least 3 m");
  if (n_static < 0 || n_peds < 0 || n_random_zones < 0) throw ValidationError("world: counts must be non-negative");
  if (!(ped_speed >= 0.0)) throw ValidationError("world: ped_speed must be non-negative");
  if (!(zone_speed_factor > 0.0 && zone_speed_factor <= 1.0))
    throw ValidationError("world: zone_speed_factor must lie in (0, 1]");
  for (const auto& z : semantic_zones)
    if (!(z.speed_factor > 0.0 && z.speed_factor <= 1.0) || !(z.x1 > z.x0) || !(z.y1 > z.y0))
      throw ValidationError("world: zone needs positive area and speed_factor in (0, 1]");
  if (scenario.empty()) throw ValidationError("world: scenario label is empty");
  if (hall_half_width < 0.0 || obstacle_lane < 0.0)
    throw ValidationError("world: hall_half_width and obstacle_lane must be non-negative");
}

void ExpertConfig::validate() const {
  if (!(v_nominal > 0.0)) throw ValidationError("expert: v_nominal must be positive");
  if (!(slow_radius > 0.0)) throw ValidationError("expert: slow_radius must be positive");
  if (!(omega_max > 0.0) || !(heading_gain > 0.0)) throw ValidationError("expert: turn limits must be positive");
}

namespace {

constexpr double kPi = std::numbers::pi;

Vec2 rotate(Vec2 p, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

double box_radius(const Box& b) { return std::hypot(b.half.x, b.half.y); }

bool point_in_box(Vec2 p, const Box& b) {
  const Vec2 l = rotate(p - b.center, -b.yaw);
  return std::abs(l.x) <= b.half.x && std::abs(l.y) <= b.half.y;
}

// Closest point of the box footprint to p (p itself when inside).
Vec2 closest_on_box(Vec2 p, const Box& b) {
  const Vec2 l = rotate(p - b.center, -b.yaw);
  const Vec2 q{std::clamp(l.x, -b.half.x, b.half.x), std::clamp(l.y, -b.half.y, b.half.y)};
  return b.center + rotate(q, b.yaw);
}

// Entry distance of a ray into a box, if it enters from outside.
std::optional<double> ray_box(Vec2 o, Vec2 d, const Box& b) {
  const Vec2 lo = rotate(o - b.center, -b.yaw);
  const Vec2 ld = rotate(d, -b.yaw);
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  const double org[2] = {lo.x, lo.y}, dir[2] = {ld.x, ld.y}, half[2] = {b.half.x, b.half.y};
  for (int a = 0; a < 2; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (std::abs(org[a]) > half[a]) return std::nullopt;
      continue;
    }
    double ta = (-half[a] - org[a]) / dir[a], tb = (half[a] - org[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= 0.0) return std::nullopt;
  return t0;
}

std::optional<double> ray_circle(Vec2 o, Vec2 d, Vec2 c, double r) {
  const Vec2 oc = o - c;
  const double b = dot(oc, d);
  const double cc = dot(oc, oc) - r * r;
  if (cc <= 0.0) return std::nullopt;  // origin inside
  const double disc = b * b - cc;
  if (disc < 0.0) return std::nullopt;
  const double t = -b - std::sqrt(disc);
  if (t <= 0.0) return std::nullopt;
  return t;
}

double segment_point_distance(Vec2 a, Vec2 b, Vec2 p) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return distance(a + t * ab, p);
}

bool ped_blocked(const World& w, Vec2 p, double radius) {
  for (const auto& b : w.boxes)
    if (disc_box_gap(p, radius, b) < 0.0) return true;
  return false;
}

}  // namespace

double disc_box_gap(Vec2 center, double radius, const Box& box) {
  const Vec2 l = rotate(center - box.center, -box.yaw);
  const double ex = std::abs(l.x) - box.half.x, ey = std::abs(l.y) - box.half.y;
  if (ex <= 0.0 && ey <= 0.0) return std::max(ex, ey) - radius;
  return std::hypot(std::max(ex, 0.0), std::max(ey, 0.0)) - radius;
}

World gen_world(const WorldSpec& spec) {
  spec.validate();
  World w;
  w.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  constexpr int kAttempts = 2000;
  const double half_w = spec.width / 2.0;
  const double lane = spec.hall_half_width > 0.0 ? std::min(spec.hall_half_width, half_w) : half_w;

  const double lateral = std::min(1.0, std::max(0.0, lane - 0.8));
  w.start = {1.0, uni(-lateral, lateral), uni(-0.3, 0.3), 0.0};
  w.goal = {spec.extent - 1.0, uni(-lateral, lateral)};

  w.zones = spec.semantic_zones;
  // One zone per equal slot along the route, so placement cannot fail.
  if (spec.n_random_zones > 0) {
    const double lo = 2.5, hi = spec.extent - 2.0;
    const double slot = (hi - lo) / spec.n_random_zones;
    for (int z = 0; z < spec.n_random_zones; ++z) {
      SemanticZone zone;
      const double len = std::min(uni(2.0, 4.0), 0.8 * slot);
      zone.x0 = lo + z * slot + uni(0.0, slot - len);
      zone.x1 = zone.x0 + len;
      zone.y0 = -half_w;
      zone.y1 = half_w;
      zone.color = spec.zone_color;
      zone.speed_factor = spec.zone_speed_factor;
      w.zones.push_back(zone);
    }
  }

  if (spec.hall_half_width > 0.0) {
    for (double side : {-1.0, 1.0}) {
      Box wall;
      wall.center = {spec.extent / 2.0, side * (spec.hall_half_width + 0.1)};
      wall.half = {spec.extent / 2.0, 0.1};
      wall.height = 1.2;
      wall.wall = true;
      w.boxes.push_back(wall);
    }
  }

  const double robot_clear = 1.0;
  for (int k = 0; k < spec.n_static; ++k) {
    bool placed = false;
    for (int a = 0; a < kAttempts && !placed; ++a) {
      Box b;
      b.half = {uni(0.15, 0.7), uni(0.15, 0.7)};
      b.yaw = uni(-kPi / 4, kPi / 4);
      b.height = uni(0.5, 1.2);
      const double r = box_radius(b);
      double ylim = std::max(0.0, lane - 0.3 - (spec.hall_half_width > 0.0 ? r + 0.8 : 0.0));
      if (spec.obstacle_lane > 0.0) ylim = std::min(ylim, spec.obstacle_lane);
      b.center = {uni(3.0, spec.extent - 2.5), uni(-ylim, ylim)};
      placed = disc_box_gap(w.start.position(), robot_clear, b) > 0.0 && disc_box_gap(w.goal, robot_clear, b) > 0.0 &&
               std::none_of(w.boxes.begin(), w.boxes.end(), [&](const Box& o) {
                 return o.wall ? disc_box_gap(b.center, r + 0.8, o) < 0.0
                               : distance(o.center, b.center) < box_radius(o) + r + 1.0;
               });
      if (placed) w.boxes.push_back(b);
    }
    if (!placed) throw GenerationError("could not place obstacle " + std::to_string(k) + " for seed " + std::to_string(spec.seed));
  }

  for (int k = 0; k < spec.n_peds; ++k) {
    bool placed = false;
    for (int a = 0; a < kAttempts && !placed; ++a) {
      Pedestrian p;
      p.pos = {uni(3.0, spec.extent - 1.0), uni(-(lane - 0.4), lane - 0.4)};
      const double s = spec.ped_speed * uni(0.7, 1.0);
      switch (spec.ped_flow) {
        case PedFlow::with: p.vel = {s, 0.0}; break;
        case PedFlow::against: p.vel = {-s, 0.0}; break;
        case PedFlow::crossing: p.vel = {0.0, unit(rng) < 0.5 ? -s : s}; break;
        case PedFlow::standing: p.vel = {0.0, 0.0}; break;
        case PedFlow::mixed: p.vel = {unit(rng) < 0.5 ? -s : s, 0.0}; break;
      }
      const double speed = p.vel.norm();
      p.goal = speed > 0.0 ? p.pos + (100.0 / speed) * p.vel : p.pos;
      placed = !ped_blocked(w, p.pos, p.radius + 0.1) && distance(p.pos, w.start.position()) > 1.5 + p.radius &&
               std::none_of(w.peds.begin(), w.peds.end(),
                            [&](const Pedestrian& o) { return distance(o.pos, p.pos) < o.radius + p.radius + 0.2; });
      if (placed) w.peds.push_back(p);
    }
    if (!placed) throw GenerationError("could not place pedestrian " + std::to_string(k) + " for seed " + std::to_string(spec.seed));
  }
  return w;
}

void step_pedestrians(World& w, Vec2 robot, double dt) {
  const double half_w = w.spec.width / 2.0;
  for (auto& p : w.peds) {
    if (w.spec.ped_model == PedModel::social_force_lite) {
      const double pref = w.spec.ped_speed;
      Vec2 desired{};
      const Vec2 to_goal = p.goal - p.pos;
      const double gd = to_goal.norm();
      if (gd > 0.5 && p.goal != p.pos) desired = (pref / gd) * to_goal;
      Vec2 force = 2.0 * (desired - p.vel);
      auto repel = [&](Vec2 away, double gap) {
        const double g = std::max(gap, 0.1);
        const double n = away.norm();
        if (n > 0.0) force = force + (0.3 / (g * g * n)) * away;
      };
      for (const auto& b : w.boxes) {
        const Vec2 q = closest_on_box(p.pos, b);
        const double gap = distance(q, p.pos) - p.radius;
        if (gap < 2.0) repel(p.pos - q, gap);
      }
      const double rgap = distance(robot, p.pos) - p.radius - 0.3;
      if (rgap < 3.0) repel(p.pos - robot, rgap);
      p.vel = p.vel + dt * force;
      const double cap = std::max(1.5 * pref, 0.5);
      const double vn = p.vel.norm();
      if (vn > cap) p.vel = (cap / vn) * p.vel;
    }
    Vec2 next = p.pos + dt * p.vel;
    if (next.y < -half_w + p.radius || next.y > half_w - p.radius) {
      p.vel.y = -p.vel.y;
      p.goal.y = -p.goal.y;
      next = p.pos;
    }
    if (next.x < 0.0 || next.x > w.spec.extent) {
      p.vel.x = -p.vel.x;
      p.goal.x = 2.0 * p.pos.x - p.goal.x;
      next = p.pos;
    }
    if (ped_blocked(w, next, p.radius)) {
      if (w.spec.ped_model == PedModel::constant_velocity) p.vel = -1.0 * p.vel;
      else p.vel = {};
      continue;
    }
    p.pos = next;
  }
}

std::vector<Point3f> render_pointcloud(const World& w, const Pose2D& pose, const SensorConfig& sensor) {
  std::vector<Point3f> pts;
  const Vec2 o = pose.position();
  for (int r = 0; r < sensor.rays; ++r) {
    const double a = pose.theta - kPi + 2.0 * kPi * r / sensor.rays;
    const Vec2 d{std::cos(a), std::sin(a)};
    double best = sensor.max_range;
    double height = 0.0;
    for (const auto& b : w.boxes)
      if (auto t = ray_box(o, d, b); t && *t < best) {
        best = *t;
        height = b.height;
      }
    for (const auto& p : w.peds)
      if (auto t = ray_circle(o, d, p.pos, p.radius); t && *t < best) {
        best = *t;
        height = p.height;
      }
    if (height <= 0.0) continue;
    const Vec2 hit = to_robot_frame(o + best * d, pose);
    for (double z = 0.5 * sensor.height_step; z < height; z += sensor.height_step)
      pts.push_back({static_cast<float>(hit.x), static_cast<float>(hit.y), static_cast<float>(z)});
  }
  return pts;
}

Image render_image(const World& w, const Pose2D& pose, const SensorConfig& sensor) {
  Image img = Image::filled(sensor.background[0], sensor.background[1], sensor.background[2]);
  const double sx = (sensor.image_x_max - sensor.image_x_min) / kImageHeight;
  const double sy = 2.0 * sensor.image_half_width / kImageWidth;
  for (int r = 0; r < kImageHeight; ++r) {
    const double x = sensor.image_x_max - (r + 0.5) * sx;
    for (int c = 0; c < kImageWidth; ++c) {
      const double y = sensor.image_half_width - (c + 0.5) * sy;
      const Vec2 p = to_world_frame({x, y}, pose);
      const Color* color = nullptr;
      for (const auto& z : w.zones)
        if (z.contains(p)) color = &z.color;
      if (w.spec.image_shows_geometry)
        for (const auto& b : w.boxes)
          if (point_in_box(p, b)) color = &sensor.obstacle;
      if (w.spec.image_shows_pedestrians)
        for (const auto& q : w.peds)
          if (distance(p, q.pos) <= q.radius) color = &sensor.pedestrian;
      if (!color) continue;
      std::uint8_t* px = &img.pixels[(static_cast<std::size_t>(r) * kImageWidth + c) * 3];
      px[0] = (*color)[0];
      px[1] = (*color)[1];
      px[2] = (*color)[2];
    }
  }
  return img;
}

double expert_speed(const World& w, Vec2 position, const ExpertConfig& e) {
  double v = e.v_nominal;
  for (const auto& p : w.peds)
    if (distance(p.pos, position) <= e.slow_radius) {
      v *= 0.5;
      break;
    }
  if (e.zone_obedience)
    for (const auto& z : w.zones)
      if (z.contains(position)) {
        v *= z.speed_factor;
        break;
      }
  return v;
}

namespace {

// Detour target beside the first obstacle blocking the straight line to the goal.
class Pilot {
 public:
  Pilot(const World& w, const ExpertConfig& e) : w_(w), e_(e) {}

  Vec2 target(Vec2 robot) {
    if (via_) {
      const Vec2 to_via = *via_ - robot;
      if (to_via.norm() < 0.6 || dot(to_via, w_.goal - robot) <= 0.0) via_.reset();
    }
    if (!via_) via_ = plan(robot, w_.goal, 0);
    return via_ ? *via_ : w_.goal;
  }

 private:
  struct Disc {
    Vec2 c;
    double r;
  };

  // Boxes (by bounding circle) and standing pedestrians, inflated by the robot.
  std::vector<Disc> obstacles() const {
    std::vector<Disc> out;
    const double pad = e_.robot_radius + e_.avoid_margin;
    for (const auto& b : w_.boxes)
      if (!b.wall) out.push_back({b.center, box_radius(b) + pad});
    for (const auto& p : w_.peds)
      if (p.vel.norm() < 0.05) out.push_back({p.pos, p.radius + pad});
    return out;
  }

  std::optional<Vec2> plan(Vec2 from, Vec2 to, int depth) const {
    const Vec2 u0 = to - from;
    const double len = u0.norm();
    if (len < 1e-9) return std::nullopt;
    const Vec2 u = (1.0 / len) * u0;
    std::optional<Disc> first;
    double first_t = std::numeric_limits<double>::infinity();
    for (const auto& d : obstacles()) {
      if (segment_point_distance(from, to, d.c) >= d.r) continue;
      if (distance(from, d.c) < d.r) continue;  // already skirting it
      const double t = dot(d.c - from, u);
      if (t > 0.0 && t < first_t) {
        first_t = t;
        first = d;
      }
    }
    if (!first) return std::nullopt;
    const Vec2 n{-u.y, u.x};
    const double s = dot(first->c - from, n);
    const double lane = w_.spec.hall_half_width > 0.0 ? w_.spec.hall_half_width : w_.spec.width / 2.0;
    const double off = first->r + 0.1;
    Vec2 via = first->c - ((s >= 0.0 ? 1.0 : -1.0) * off) * n;
    if (std::abs(via.y) > lane - e_.robot_radius) via = first->c + ((s >= 0.0 ? 1.0 : -1.0) * off) * n;
    if (depth < 3)
      if (auto nested = plan(from, via, depth + 1)) return nested;
    return via;
  }

  const World& w_;
  const ExpertConfig& e_;
  std::optional<Vec2> via_;
};

}  // namespace

Episode simulate_episode(const World& world, const ExpertConfig& expert, double duration, double dt,
                         const std::string& id, const SensorConfig& sensor) {
  expert.validate();
  if (!(dt > 0.0) || !(duration / dt >= 1.0)) throw ValidationError("simulate_episode: need at least 2 frames");
  World w = world;
  Episode ep;
  ep.id = id.empty() ? w.spec.scenario + "_" + std::to_string(w.spec.seed) : id;
  ep.scenario = w.spec.scenario;
  ep.rate_hz = 1.0 / dt;
  Pose2D pose = w.start;
  pose.theta = normalize_angle(pose.theta);
  Pilot pilot(w, expert);
  const int steps = static_cast<int>(std::floor(duration / dt + 1e-9));
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    pose.stamp = t;
    const Vec2 target = pilot.target(pose.position());
    const double heading = std::atan2(target.y - pose.y, target.x - pose.x);
    const double err = normalize_angle(heading - pose.theta);
    const double omega = std::clamp(expert.heading_gain * err, -expert.omega_max, expert.omega_max);
    const double v = expert_speed(w, pose.position(), expert);

    Frame f;
    f.stamp = t;
    f.odom = pose;
    f.action = {v, omega};
    f.points = render_pointcloud(w, pose, sensor);
    f.image = render_image(w, pose, sensor);
    ep.frames.push_back(std::move(f));
    if (distance(pose.position(), w.goal) < expert.goal_tolerance) break;

    // Exact unicycle step.
    if (std::abs(omega) < 1e-12) {
      pose.x += v * dt * std::cos(pose.theta);
      pose.y += v * dt * std::sin(pose.theta);
    } else {
      const double th1 = pose.theta + omega * dt;
      pose.x += v / omega * (std::sin(th1) - std::sin(pose.theta));
      pose.y -= v / omega * (std::cos(th1) - std::cos(pose.theta));
      pose.theta = normalize_angle(th1);
    }
    step_pedestrians(w, pose.position(), dt);
  }
  return ep;
}

WorldSpec preset(std::string_view scenario, std::uint64_t seed) {
  WorldSpec s;
  s.seed = seed;
  s.scenario = std::string(scenario);
  if (scenario == "with_traffic") {
    s.n_static = 3;
    s.n_peds = 6;
    s.ped_flow = PedFlow::with;
    s.ped_model = PedModel::social_force_lite;
  } else if (scenario == "against_traffic") {
    s.n_static = 3;
    s.n_peds = 6;
    s.ped_flow = PedFlow::against;
    s.ped_model = PedModel::social_force_lite;
  } else if (scenario == "street_crossing") {
    s.n_static = 2;
    s.n_peds = 6;
    s.ped_flow = PedFlow::crossing;
    s.ped_model = PedModel::constant_velocity;
  } else if (scenario == "narrow_hall") {
    s.n_static = 2;
    s.n_peds = 2;
    s.hall_half_width = 1.8;
    s.ped_flow = PedFlow::against;
    s.ped_speed = 0.8;
    s.ped_model = PedModel::social_force_lite;
  } else if (scenario == "zone_semantic") {
    s.n_static = 3;
    s.n_random_zones = 3;
    s.zone_speed_factor = 0.4;
    s.image_shows_geometry = false;
    s.image_shows_pedestrians = false;
  } else if (scenario == "geometry_maze") {
    s.n_static = 6;
    s.obstacle_lane = 1.2;
    s.n_peds = 3;
    s.ped_flow = PedFlow::standing;
    s.ped_speed = 0.0;
    s.ped_model = PedModel::constant_velocity;
    s.image_shows_geometry = false;
    s.image_shows_pedestrians = false;
  } else {
    throw ValidationError("unknown scenario preset '" + std::string(scenario) + "'");
  }
  return s;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"with_traffic", "against_traffic", "street_crossing",
                                              "narrow_hall",  "zone_semantic",   "geometry_maze"};
  return names;
}

}  // namespace socnav
