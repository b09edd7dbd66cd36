#pragma once

#include <stdexcept>
#include <string>

namespace sgbd {

/// Invalid experiment or sampler configuration (bad key, bad value, bad combination).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure while writing or reading experiment artifacts.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sgbd
