#pragma once

#include <stdexcept>
#include <string>

namespace svprobe {

// Error: every failure the toolkit reports. The message is the diagnostic
// printed by the CLI.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Error raised for bad configuration or arguments, before any I/O happens.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace svprobe
