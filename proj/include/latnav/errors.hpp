#pragma once

#include <stdexcept>
#include <string>

namespace latnav {

// Invalid or unsatisfiable configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A required upstream artifact is missing or inconsistent (CLI exit code 3).
struct DependencyError : std::runtime_error {
  explicit DependencyError(const std::string& what) : std::runtime_error(what) {}
};

// Bounded rejection sampling ran out of attempts.
struct SamplingError : std::runtime_error {
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace latnav
