#pragma once

#include <cmath>
#include <numbers>

namespace socnav {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;

  double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(a, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

}  // namespace socnav
