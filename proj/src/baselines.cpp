#include "socnav/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "socnav/errors.hpp"

namespace socnav {

std::string to_string(BaselineKind k) { return k == BaselineKind::dwa_lite ? "dwa_lite" : "straight_pursuit"; }

BaselineKind parse_baseline_kind(std::string_view s) {
  if (s == "straight_pursuit") return BaselineKind::straight_pursuit;
  if (s == "dwa_lite") return BaselineKind::dwa_lite;
  throw ValidationError("unknown baseline kind '" + std::string(s) + "'");
}

void BaselineConfig::validate() const {
  if (!(v_nominal > 0.0)) throw ValidationError("baseline: v_nominal must be positive");
  if (dwa.v_samples < 3 || dwa.omega_samples < 3) throw ValidationError("baseline: sample counts must be >= 3");
  if (!(dwa.robot_radius_m > 0.0)) throw ValidationError("baseline: robot_radius_m must be positive");
  if (!(dwa.horizon_s > 0.0) || !(dwa.path_step > 0.0) || !(dwa.omega_max >= 0.0))
    throw ValidationError("baseline: horizon_s and path_step must be positive, omega_max non-negative");
  if (dwa.clearance_weight < 0.0 || dwa.goal_weight < 0.0)
    throw ValidationError("baseline: weights must be non-negative");
}

NetworkOutput straight_pursuit_plan(Vec2 goal, const BaselineConfig& config) {
  const double d2 = goal.x * goal.x + goal.y * goal.y;
  if (!(d2 > 0.0) || !std::isfinite(d2)) throw InputError("straight_pursuit: degenerate goal at the origin");
  const double len = std::sqrt(d2);
  const Vec2 dir{goal.x / len, goal.y / len};
  NetworkOutput out;
  for (int i = 0; i < kPlanLength; ++i) out.waypoints[i] = (kWaypointSpacing * (i + 1)) * dir;
  const double v = config.v_nominal;
  out.action = {v, 2.0 * v * goal.y / d2};
  return out;
}

Vec2 arc_point(double v, double omega, double s) {
  if (omega == 0.0) return {s, 0.0};
  const double k = omega / v;  // curvature
  const double a = k * s;
  return {std::sin(a) / k, (1.0 - std::cos(a)) / k};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform of a sampled function along one axis (lower
// envelope of parabolas). Empty cells carry kFar instead of infinity.
constexpr double kFar = 1e20;

void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  auto meet = [&](int q, int p) {
    return ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) / (2.0 * (q - p));
  };
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    double s = meet(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = meet(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// Column occupancy of the voxel grid with a Euclidean distance field in cell units.
class ClearanceField {
 public:
  explicit ClearanceField(const VoxelGrid& grid) : spec_(grid.spec()), nx_(grid.dims()[0]), ny_(grid.dims()[1]) {
    const int nz = grid.dims()[2];
    std::vector<double> sq(static_cast<std::size_t>(nx_) * ny_, kFar);
    for (std::uint32_t cell : grid.occupied()) {
      const int i = static_cast<int>(cell / (static_cast<std::uint32_t>(ny_) * nz));
      const int j = static_cast<int>((cell / nz) % ny_);
      sq[static_cast<std::size_t>(i) * ny_ + j] = 0.0;
      any_ = true;
    }
    if (!any_) return;
    const int n = std::max(nx_, ny_);
    std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n)), z(static_cast<std::size_t>(n) + 1);
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < nx_; ++i) {
      f.assign(sq.begin() + static_cast<long>(i) * ny_, sq.begin() + static_cast<long>(i + 1) * ny_);
      d.resize(static_cast<std::size_t>(ny_));
      v.resize(static_cast<std::size_t>(ny_));
      z.resize(static_cast<std::size_t>(ny_) + 1);
      edt_1d(f, d, v, z);
      std::copy(d.begin(), d.end(), sq.begin() + static_cast<long>(i) * ny_);
    }
    f.resize(static_cast<std::size_t>(nx_));
    d.resize(static_cast<std::size_t>(nx_));
    v.resize(static_cast<std::size_t>(nx_));
    z.resize(static_cast<std::size_t>(nx_) + 1);
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) f[static_cast<std::size_t>(i)] = sq[static_cast<std::size_t>(i) * ny_ + j];
      edt_1d(f, d, v, z);
      for (int i = 0; i < nx_; ++i) sq[static_cast<std::size_t>(i) * ny_ + j] = d[static_cast<std::size_t>(i)];
    }
    dist_.resize(sq.size());
    for (std::size_t c = 0; c < sq.size(); ++c) dist_[c] = std::sqrt(sq[c]);
  }

  bool empty() const { return !any_; }

  /// Lower bound on the distance in meters from p to any occupied column.
  ///
  /// Coordinates are measured in cells from the lateral centre line so that a
  /// scene mirrored about the x axis yields bit-identical bounds.
  double lower_bound(Vec2 p) const {
    if (!any_) return kInf;
    const double u = (p.x - spec_.x_min) / spec_.voxel;
    const double w = p.y / spec_.voxel - 0.5 * (spec_.y_min + spec_.y_max) / spec_.voxel;
    const int i = std::clamp(static_cast<int>(std::floor(u)), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>(std::floor(w + 0.5 * ny_)), 0, ny_ - 1);
    const double cu = i + 0.5;
    const double cw = j + 0.5 - 0.5 * ny_;
    const double off = std::hypot(u - cu, w - cw);
    // Triangle inequality through the cell centre, then from centres to squares.
    const double cells = dist_[static_cast<std::size_t>(i) * ny_ + j] - off - std::numbers::sqrt2 / 2.0;
    return cells * spec_.voxel;
  }

 private:
  GridSpec spec_;
  int nx_, ny_;
  bool any_ = false;
  std::vector<double> dist_;
};

struct Candidate {
  double v = 0.0;
  double omega = 0.0;
  double score = -kInf;
  double clearance = 0.0;
};

bool better(const Candidate& a, const Candidate& b, double v_nominal) {
  if (a.score != b.score) return a.score > b.score;
  if (std::abs(a.omega) != std::abs(b.omega)) return std::abs(a.omega) < std::abs(b.omega);
  if (std::abs(a.v - v_nominal) != std::abs(b.v - v_nominal)) return std::abs(a.v - v_nominal) < std::abs(b.v - v_nominal);
  return a.omega > b.omega;
}

}  // namespace

DwaPlan dwa_lite_plan(const NavigationInput& input, const BaselineConfig& config) {
  config.validate();
  const DwaConfig& d = config.dwa;
  const ClearanceField field(input.voxels);
  const double v_max = d.v_max > 0.0 ? d.v_max : config.v_nominal;

  Candidate best;
  bool found = false;
  for (int a = 1; a <= d.v_samples; ++a) {
    const double v = v_max * a / d.v_samples;
    const double length = v * d.horizon_s;
    const int steps = std::max(1, static_cast<int>(std::ceil(length / d.path_step)));
    const double gap = length / steps;
    for (int b = 0; b < d.omega_samples; ++b) {
      const double omega = d.omega_max * (2 * b - (d.omega_samples - 1)) / (d.omega_samples - 1);
      // Every point of the arc lies within gap/2 of a probe.
      double clearance = kInf;
      bool hit = false;
      for (int s = 0; s <= steps && !hit; ++s) {
        const double c = field.lower_bound(arc_point(v, omega, length * s / steps)) - 0.5 * gap - d.robot_radius_m;
        clearance = std::min(clearance, c);
        hit = !(c > 0.0);
      }
      if (hit) continue;
      Candidate cand{v, omega, 0.0, clearance};
      const Vec2 end = arc_point(v, omega, length);
      cand.score = -d.goal_weight * distance(end, input.goal) + d.clearance_weight * std::min(clearance, d.clearance_cap);
      if (!found || better(cand, best, config.v_nominal)) best = cand;
      found = true;
    }
  }

  DwaPlan plan;
  if (!found) {
    plan.blocked = true;
    return plan;
  }
  const double length = best.v * d.horizon_s;
  const double spacing = std::min(kWaypointSpacing, length / kPlanLength);
  for (int i = 0; i < kPlanLength; ++i) plan.output.waypoints[i] = arc_point(best.v, best.omega, spacing * (i + 1));
  plan.output.action = {best.v, best.omega};
  plan.clearance = best.clearance;
  return plan;
}

NetworkOutput baseline_plan(const NavigationInput& input, const BaselineConfig& config) {
  if (config.kind == BaselineKind::dwa_lite) return dwa_lite_plan(input, config).output;
  return straight_pursuit_plan(input.goal, config);
}

EvalReport score_baseline(const BaselineConfig& config, const std::vector<TrainingSample>& samples, double lambda,
                          int epoch) {
  config.validate();
  if (samples.empty()) throw InputError("score_baseline: no samples");
  std::vector<NetworkOutput> preds;
  preds.reserve(samples.size());
  for (const auto& s : samples) preds.push_back(baseline_plan(s.input, config));
  return score_predictions(samples, preds, lambda, epoch, "baseline:" + to_string(config.kind));
}

}  // namespace socnav
