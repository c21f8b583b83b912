#pragma once

#include <charconv>
#include <cmath>
#include <string>
#include <system_error>

#include "koopctl/error.hpp"

namespace koopctl {

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_double(double value) {
  if (!std::isfinite(value)) {
    throw numerical_error("cannot format non-finite value");
  }
  if (value == 0.0) {
    return "0"; // folds -0 into 0 so canonical files never carry a signed zero
  }
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) {
    throw numerical_error("float formatting failed");
  }
  return {buf, ptr};
}

inline void append_double(std::string& out, double value) { out += format_double(value); }

} // namespace koopctl
