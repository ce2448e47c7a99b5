#pragma once

// Seeded synthetic sessions: a bounded, correlated random walk per user.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"
#include "mousedyn/event_model.hpp"

namespace mousedyn {

struct UserProfile {
  std::int64_t user_id = 0;
  double base_speed = 600.0;        ///< px/s
  double speed_jitter = 0.1;        ///< relative std of per-step speed
  double turn_rate = 0.1;           ///< std of heading change per step, rad
  double tremor = 0.5;              ///< positional noise std, px
  double sample_interval = 0.01;    ///< mean seconds between events
  double interval_jitter = 0.1;     ///< relative std of the interval
  double pause_probability = 0.01;  ///< per-step chance of starting a stationary run
  int screen_width = 1920;
  int screen_height = 1080;

  void validate() const {
    if (!(base_speed > 0.0)) throw Error("base_speed must be positive");
    if (!(sample_interval > 0.0)) throw Error("sample_interval must be positive");
    if (speed_jitter < 0.0 || turn_rate < 0.0 || tremor < 0.0 || interval_jitter < 0.0) {
      throw Error("noise levels must be non-negative");
    }
    if (!(pause_probability >= 0.0 && pause_probability <= 1.0)) {
      throw Error("pause_probability must be in [0,1]");
    }
    if (screen_width < 1 || screen_height < 1) throw Error("screen must be at least 1x1");
  }

  friend bool operator==(const UserProfile&, const UserProfile&) = default;
};

/// Speeds grow geometrically with the id (x1.25 per step, cycling every 16 ids)
/// and carry at most 4% seeded jitter, so ids 0..15 differ pairwise by >= 20%.
inline UserProfile generate_profile(std::int64_t user_id, std::uint64_t seed) {
  std::mt19937_64 rng(detail::derive_seed(seed, static_cast<std::uint64_t>(user_id), 0x9f0f11e));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  UserProfile p;
  p.user_id = user_id;
  const auto rank = static_cast<double>(static_cast<std::uint64_t>(user_id) % 16);
  p.base_speed = 150.0 * std::pow(1.25, rank) * between(1.0, 1.04);
  p.speed_jitter = between(0.05, 0.3);
  p.turn_rate = between(0.03, 0.4);
  p.tremor = between(0.0, 1.5);
  p.sample_interval = between(0.010, 0.020);
  p.interval_jitter = between(0.05, 0.25);
  p.pause_probability = between(0.0, 0.05);
  return p;
}

namespace detail {

// Reflects a coordinate into [0, hi]; flips direction_sign once per wall hit.
inline double reflect(double v, double hi, double& direction_sign) {
  if (hi <= 0.0) return 0.0;
  if (v >= 0.0 && v <= hi) return v;
  const double crossings = v < 0.0 ? std::floor(-v / hi) + 1.0 : std::floor(v / hi);
  if (std::fmod(crossings, 2.0) == 1.0) direction_sign = -direction_sign;
  double m = std::fmod(v, 2.0 * hi);
  if (m < 0.0) m += 2.0 * hi;
  return std::clamp(m <= hi ? m : 2.0 * hi - m, 0.0, hi);
}

}  // namespace detail

/// Simulates `duration` seconds of movement events (event type -1).
inline SessionLog generate_session(const UserProfile& profile, double duration, std::uint64_t seed) {
  profile.validate();
  if (!(duration > 0.0)) throw Error("duration must be positive");

  std::mt19937_64 rng(detail::derive_seed(seed, static_cast<std::uint64_t>(profile.user_id), 0x5e55));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pause_length(3, 20);

  const double max_x = profile.screen_width - 1;
  const double max_y = profile.screen_height - 1;
  double px = max_x * unit(rng);
  double py = max_y * unit(rng);
  double heading = 2.0 * std::numbers::pi * unit(rng);

  SessionLog log;
  log.user_id = profile.user_id;
  const double t0 = 1616440000.0 + 3600.0 * static_cast<double>(profile.user_id);
  double t = t0;
  int last_x = static_cast<int>(std::lround(px));
  int last_y = static_cast<int>(std::lround(py));
  log.events.push_back({t, last_x, last_y, kMovementEvent, profile.user_id});
  int paused = 0;

  for (;;) {
    const double step = profile.sample_interval * std::max(0.2, 1.0 + profile.interval_jitter * gauss(rng));
    t += step;
    if (t - t0 > duration) break;

    if (paused == 0 && profile.pause_probability > 0.0 && unit(rng) < profile.pause_probability) {
      paused = pause_length(rng);
    }
    if (paused > 0) {
      --paused;
      log.events.push_back({t, last_x, last_y, kMovementEvent, profile.user_id});
      continue;
    }

    heading += profile.turn_rate * gauss(rng);
    const double speed = profile.base_speed * std::max(0.0, 1.0 + profile.speed_jitter * gauss(rng));
    double sx = 1.0, sy = 1.0;
    px = detail::reflect(px + speed * step * std::cos(heading), max_x, sx);
    py = detail::reflect(py + speed * step * std::sin(heading), max_y, sy);
    if (sx < 0.0) heading = std::numbers::pi - heading;
    if (sy < 0.0) heading = -heading;

    const double nx = profile.tremor > 0.0 ? px + profile.tremor * gauss(rng) : px;
    const double ny = profile.tremor > 0.0 ? py + profile.tremor * gauss(rng) : py;
    last_x = static_cast<int>(std::clamp(std::lround(nx), 0L, static_cast<long>(max_x)));
    last_y = static_cast<int>(std::clamp(std::lround(ny), 0L, static_cast<long>(max_y)));
    log.events.push_back({t, last_x, last_y, kMovementEvent, profile.user_id});
  }
  return log;
}

}  // namespace mousedyn
