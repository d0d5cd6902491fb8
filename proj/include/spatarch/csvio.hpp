#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "spatarch/errors.hpp"

namespace spatarch::csv {

// 17 significant digits: doubles round-trip exactly through this format.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
    out.back().pop_back();
  return out;
}

inline double parse_double(const std::string& tok, const std::string& path,
                           std::size_t lineno) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw Error(ErrorCode::config, path + ":" + std::to_string(lineno) +
                                       ": not a number: '" + tok + "'");
  return v;
}

inline long parse_long(const std::string& tok, const std::string& path,
                       std::size_t lineno) {
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0')
    throw Error(ErrorCode::config, path + ":" + std::to_string(lineno) +
                                       ": not an integer: '" + tok + "'");
  return v;
}

}  // namespace spatarch::csv
