#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace crft {

// Shortest decimal form that round-trips the exact double. Used for CSV and
// JSON emission so identical runs produce identical bytes.
inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_double_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return std::string(buf);
}

}  // namespace crft
