#pragma once

// Kinematic series and the fixed 31-component feature vector of a mouse action.
//
// Component order (serialized matrices depend on it):
//   mean/std/min/max of vx, vy, v, a, jerk, omega   (indices 0..23)
//   duration, path_length, endpoint_distance, straightness,
//   sum_of_angles, max_deviation, direction          (indices 24..30)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "mousedyn/action_segmenter.hpp"

namespace mousedyn {

/// Lower bound on inter-event time, in seconds. Guards repeated timestamps.
inline constexpr double kMinInterval = 1e-4;

inline constexpr std::size_t kFeatureCount = 31;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "vx_mean",       "vx_std",        "vx_min",        "vx_max",
    "vy_mean",       "vy_std",        "vy_min",        "vy_max",
    "v_mean",        "v_std",         "v_min",         "v_max",
    "a_mean",        "a_std",         "a_min",         "a_max",
    "jerk_mean",     "jerk_std",      "jerk_min",      "jerk_max",
    "omega_mean",    "omega_std",     "omega_min",     "omega_max",
    "duration",      "path_length",   "endpoint_distance", "straightness",
    "sum_of_angles", "max_deviation", "direction"};

/// Offsets of the per-quantity aggregate blocks and the scalar features.
namespace feature {
inline constexpr std::size_t kVx = 0, kVy = 4, kV = 8, kAccel = 12, kJerk = 16, kOmega = 20;
inline constexpr std::size_t kMean = 0, kStd = 1, kMin = 2, kMax = 3;
inline constexpr std::size_t kDuration = 24, kPathLength = 25, kEndpointDistance = 26,
                             kStraightness = 27, kSumOfAngles = 28, kMaxDeviation = 29,
                             kDirection = 30;
}  // namespace feature

using FeatureVector = std::array<double, kFeatureCount>;

struct KinematicSeries {
  std::vector<double> dt, dx, dy;  // L-1
  std::vector<double> vx, vy, v;   // L-1
  std::vector<double> theta;       // L-1, (-pi, pi]
  std::vector<double> dtheta;      // L-2, (-pi, pi]
  std::vector<double> omega;       // L-2
  std::vector<double> accel;       // L-2, tangential
  std::vector<double> jerk;        // L-3
};

/// Wraps an angle difference into (-pi, pi].
inline double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  angle = std::remainder(angle, 2.0 * pi);
  if (angle <= -pi) angle += 2.0 * pi;
  return angle;
}

inline double heading(double dx, double dy) {
  if (dx == 0.0 && dy == 0.0) return 0.0;
  const double angle = std::atan2(dy, dx);
  return angle == -std::numbers::pi ? std::numbers::pi : angle;
}

inline KinematicSeries compute_kinematics(std::span<const MouseEvent> events) {
  KinematicSeries k;
  const std::size_t n = events.size();
  if (n < 2) return k;
  const std::size_t m = n - 1;
  for (auto* series : {&k.dt, &k.dx, &k.dy, &k.vx, &k.vy, &k.v, &k.theta}) series->resize(m);

  for (std::size_t i = 0; i < m; ++i) {
    k.dt[i] = std::max(events[i + 1].timestamp - events[i].timestamp, kMinInterval);
    k.dx[i] = static_cast<double>(events[i + 1].x - events[i].x);
    k.dy[i] = static_cast<double>(events[i + 1].y - events[i].y);
    k.vx[i] = k.dx[i] / k.dt[i];
    k.vy[i] = k.dy[i] / k.dt[i];
    k.v[i] = std::sqrt(k.vx[i] * k.vx[i] + k.vy[i] * k.vy[i]);
    k.theta[i] = heading(k.dx[i], k.dy[i]);
  }
  for (std::size_t i = 0; i + 1 < m; ++i) {
    const double dtheta = wrap_angle(k.theta[i + 1] - k.theta[i]);
    k.dtheta.push_back(dtheta);
    k.omega.push_back(dtheta / k.dt[i + 1]);
    k.accel.push_back((k.v[i + 1] - k.v[i]) / k.dt[i + 1]);
  }
  for (std::size_t i = 0; i + 1 < k.accel.size(); ++i) {
    k.jerk.push_back((k.accel[i + 1] - k.accel[i]) / k.dt[i + 2]);
  }
  return k;
}

inline KinematicSeries compute_kinematics(const MouseAction& action) {
  return compute_kinematics(std::span<const MouseEvent>(action.events));
}

namespace detail {

// mean, population std, min, max. An empty series aggregates to zeros.
inline void aggregate_into(std::span<const double> values, double* out) {
  if (values.empty()) {
    out[0] = out[1] = out[2] = out[3] = 0.0;
    return;
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double sum = 0.0;
  for (double x : values) sum += x;
  const double n = static_cast<double>(values.size());
  const double mean = std::clamp(sum / n, *lo, *hi);
  double ss = 0.0;
  for (double x : values) ss += (x - mean) * (x - mean);
  out[0] = mean;
  out[1] = std::sqrt(ss / n);
  out[2] = *lo;
  out[3] = *hi;
}

}  // namespace detail

inline FeatureVector extract_features(std::span<const MouseEvent> events) {
  namespace f = feature;
  FeatureVector out{};
  const KinematicSeries k = compute_kinematics(events);

  detail::aggregate_into(k.vx, &out[f::kVx]);
  detail::aggregate_into(k.vy, &out[f::kVy]);
  detail::aggregate_into(k.v, &out[f::kV]);
  detail::aggregate_into(k.accel, &out[f::kAccel]);
  detail::aggregate_into(k.jerk, &out[f::kJerk]);
  detail::aggregate_into(k.omega, &out[f::kOmega]);

  if (events.empty()) return out;

  out[f::kDuration] = events.back().timestamp - events.front().timestamp;

  double path = 0.0;
  for (std::size_t i = 0; i < k.dx.size(); ++i) path += std::hypot(k.dx[i], k.dy[i]);
  const double ex = static_cast<double>(events.back().x - events.front().x);
  const double ey = static_cast<double>(events.back().y - events.front().y);
  const double chord = std::hypot(ex, ey);
  // Rounding can push a collinear chord one ulp past the path.
  const double endpoint = std::min(chord, path);
  out[f::kPathLength] = path;
  out[f::kEndpointDistance] = endpoint;
  out[f::kStraightness] = path > 0.0 ? std::min(1.0, endpoint / path) : 0.0;

  double angle_sum = 0.0;
  for (double d : k.dtheta) angle_sum += d;
  out[f::kSumOfAngles] = angle_sum;

  // Perpendicular distance of interior points from the start->end chord; plain
  // distance from the start point when the chord is degenerate.
  double deviation = 0.0;
  for (std::size_t i = 1; i + 1 < events.size(); ++i) {
    const double rx = static_cast<double>(events[i].x - events.front().x);
    const double ry = static_cast<double>(events[i].y - events.front().y);
    const double d = chord > 0.0 ? std::abs(ex * ry - ey * rx) / chord : std::hypot(rx, ry);
    deviation = std::max(deviation, d);
  }
  out[f::kMaxDeviation] = deviation;
  out[f::kDirection] = heading(ex, ey);
  return out;
}

inline FeatureVector extract_features(const MouseAction& action) {
  return extract_features(std::span<const MouseEvent>(action.events));
}

inline std::vector<FeatureVector> extract_all(std::span<const MouseAction> actions) {
  std::vector<FeatureVector> out;
  out.reserve(actions.size());
  for (const auto& a : actions) out.push_back(extract_features(a));
  return out;
}

}  // namespace mousedyn
