#pragma once

#include <stdexcept>
#include <string>

namespace ropefreq {

/// Invalid parameters: bad dims, empty bands, out-of-range steps.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Mismatched vector or matrix sizes.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// A report lacks data required by the requested analysis.
class UnsupportedReport : public std::logic_error {
 public:
  explicit UnsupportedReport(const std::string& what) : std::logic_error(what) {}
};

}  // namespace ropefreq
