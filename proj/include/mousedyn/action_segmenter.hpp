#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "mousedyn/error.hpp"
#include "mousedyn/event_model.hpp"

namespace mousedyn {

/// A window of exactly `sequence_length` consecutive (filtered) events.
struct MouseAction {
  std::int64_t user_id = 0;
  std::vector<MouseEvent> events;
  double start_time = 0.0;
  double end_time = 0.0;
  std::size_t ordinal = 0;  ///< index of the action within its session
};

struct SegmenterConfig {
  std::size_t sequence_length = 10;
  std::size_t stride = 10;
  std::set<int> event_filter{kMovementEvent};

  bool accepts(int event_type) const { return event_filter.contains(event_type); }

  void validate() const {
    if (sequence_length < 2) throw Error("sequence length must be at least 2");
    if (stride < 1) throw Error("stride must be at least 1");
  }
};

/// Number of windows a stream of `filtered` events yields.
constexpr std::size_t action_count(std::size_t filtered, std::size_t length, std::size_t stride) {
  return filtered < length ? 0 : (filtered - length) / stride + 1;
}

/// Filters `events` by type, then cuts windows starting at 0, stride, 2*stride, ...
/// A trailing partial window is dropped. Expects deduplicated, time-ordered input.
inline std::vector<MouseAction> segment_actions(std::span<const MouseEvent> events,
                                                const SegmenterConfig& config = {}) {
  config.validate();
  std::vector<MouseEvent> filtered;
  filtered.reserve(events.size());
  for (const auto& e : events) {
    if (config.accepts(e.event_type)) filtered.push_back(e);
  }

  const std::size_t count = action_count(filtered.size(), config.sequence_length, config.stride);
  std::vector<MouseAction> actions;
  actions.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto first = filtered.begin() + static_cast<std::ptrdiff_t>(k * config.stride);
    MouseAction action;
    action.events.assign(first, first + static_cast<std::ptrdiff_t>(config.sequence_length));
    action.user_id = action.events.front().user_id;
    action.start_time = action.events.front().timestamp;
    action.end_time = action.events.back().timestamp;
    action.ordinal = k;
    actions.push_back(std::move(action));
  }
  return actions;
}

}  // namespace mousedyn
