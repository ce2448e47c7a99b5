#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mousedyn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed session-log input. Line and field numbers are 1-based; 0 means unknown.
class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line, std::size_t field = 0)
      : Error(format(what, line, field)), line_(line), field_(field) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t field() const noexcept { return field_; }

private:
  static std::string format(const std::string& what, std::size_t line, std::size_t field) {
    std::string msg = "line " + std::to_string(line);
    if (field != 0) msg += ", field " + std::to_string(field);
    return msg + ": " + what;
  }

  std::size_t line_;
  std::size_t field_;
};

}  // namespace mousedyn
