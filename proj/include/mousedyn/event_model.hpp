#pragma once

// Session-log ingestion: one mouse event per line, five fields
// (timestamp, x, y, event type, user id), separated by spaces or tabs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mousedyn/detail/numeric.hpp"
#include "mousedyn/error.hpp"

namespace mousedyn {

/// Event-type code the recorder uses for plain cursor movement.
inline constexpr int kMovementEvent = -1;

struct MouseEvent {
  double timestamp = 0.0;  ///< seconds since the UNIX epoch
  int x = 0;               ///< pixels
  int y = 0;               ///< pixels
  int event_type = kMovementEvent;
  std::int64_t user_id = 0;

  friend bool operator==(const MouseEvent&, const MouseEvent&) = default;
};

/// Events of one recording, ordered by timestamp. All events share `user_id`.
struct SessionLog {
  std::int64_t user_id = 0;
  std::vector<MouseEvent> events;

  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

struct ParseOptions {
  int max_coordinate = 8192;  ///< inclusive upper bound on x and y
};

/// A parsed log plus the number of events that had to be moved to restore time order.
struct ParsedSession {
  SessionLog log;
  std::size_t reordered_events = 0;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

inline std::string_view trim_line_end(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

}  // namespace detail

/// Parses one five-field event line. `line_number` only decorates errors.
inline MouseEvent parse_event_line(std::string_view line, std::size_t line_number = 1,
                                   const ParseOptions& options = {}) {
  const auto fields = detail::split_fields(detail::trim_line_end(line));
  if (fields.size() != 5) {
    throw ParseError("expected 5 fields, found " + std::to_string(fields.size()), line_number);
  }

  MouseEvent event;
  const auto timestamp = detail::parse_double(fields[0]);
  if (!timestamp) throw ParseError("timestamp is not a number", line_number, 1);
  if (!std::isfinite(*timestamp) || *timestamp < 0.0) {
    throw ParseError("timestamp must be finite and non-negative", line_number, 1);
  }
  event.timestamp = *timestamp;

  const auto coordinate = [&](std::size_t index, const char* name) {
    const auto value = detail::parse_int<int>(fields[index]);
    if (!value) throw ParseError(std::string(name) + " is not an integer", line_number, index + 1);
    if (*value < 0) throw ParseError(std::string(name) + " is negative", line_number, index + 1);
    if (*value > options.max_coordinate) {
      throw ParseError(std::string(name) + " exceeds the screen bound " +
                           std::to_string(options.max_coordinate),
                       line_number, index + 1);
    }
    return *value;
  };
  event.x = coordinate(1, "x");
  event.y = coordinate(2, "y");

  const auto type = detail::parse_int<int>(fields[3]);
  if (!type) throw ParseError("event type is not an integer", line_number, 4);
  event.event_type = *type;

  const auto user = detail::parse_int<std::int64_t>(fields[4]);
  if (!user) throw ParseError("user id is not an integer", line_number, 5);
  if (*user < 0) throw ParseError("user id is negative", line_number, 5);
  event.user_id = *user;
  return event;
}

/// Parses a whole session from a sequence of lines. Blank lines are skipped; a
/// first non-blank line whose first two fields are not numeric is treated as a header.
/// Out-of-order events are stably sorted and counted.
inline ParsedSession parse_session_log(std::span<const std::string> lines,
                                       const ParseOptions& options = {}) {
  ParsedSession result;
  auto& events = result.log.events;
  bool seen_content = false;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = detail::trim_line_end(lines[i]);
    const auto fields = detail::split_fields(line);
    if (fields.empty()) continue;
    if (!seen_content) {
      seen_content = true;
      const bool header = !detail::parse_double(fields[0]) &&
                          (fields.size() < 2 || !detail::parse_double(fields[1]));
      if (header) continue;
    }
    MouseEvent event = parse_event_line(line, i + 1, options);
    if (!events.empty() && event.user_id != events.front().user_id) {
      throw ParseError("mixed user ids in one session (" + std::to_string(events.front().user_id) +
                           " and " + std::to_string(event.user_id) + ")",
                       i + 1, 5);
    }
    events.push_back(event);
  }

  if (!events.empty()) result.log.user_id = events.front().user_id;

  const auto by_time = [](const MouseEvent& a, const MouseEvent& b) { return a.timestamp < b.timestamp; };
  if (!std::is_sorted(events.begin(), events.end(), by_time)) {
    const auto original = events;
    std::stable_sort(events.begin(), events.end(), by_time);
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (!(events[i] == original[i])) ++result.reordered_events;
    }
  }
  return result;
}

inline ParsedSession parse_session_log(std::istream& in, const ParseOptions& options = {}) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  return parse_session_log(std::span<const std::string>(lines), options);
}

/// Drops every event whose (x, y, event_type) repeats the previous retained event.
/// Timestamps play no part in the comparison.
inline std::vector<MouseEvent> dedupe_events(std::span<const MouseEvent> events) {
  std::vector<MouseEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) {
    if (!out.empty()) {
      const auto& last = out.back();
      if (last.x == e.x && last.y == e.y && last.event_type == e.event_type) continue;
    }
    out.push_back(e);
  }
  return out;
}

/// Writes the log in the recorder's format, with a header line.
inline void write_session_log(std::ostream& out, const SessionLog& log) {
  out << "Timestamp\tX\tY\tEvent Type\tUser ID\n";
  for (const auto& e : log.events) {
    out << detail::format_double(e.timestamp) << '\t' << e.x << '\t' << e.y << '\t' << e.event_type
        << '\t' << e.user_id << '\n';
  }
}

}  // namespace mousedyn
