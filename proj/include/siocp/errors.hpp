#pragma once

#include <stdexcept>
#include <string>

namespace siocp {

/// Out-of-order or gapped calls into a stateful component.
class SequencingError : public std::logic_error {
 public:
  explicit SequencingError(const std::string& what) : std::logic_error(what) {}
};

/// Non-finite or otherwise corrupt numeric input.
class DataIntegrityError : public std::invalid_argument {
 public:
  explicit DataIntegrityError(const std::string& what) : std::invalid_argument(what) {}
};

class InsufficientHistoryError : public std::runtime_error {
 public:
  explicit InsufficientHistoryError(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// The simulated vehicle left the region where the model is meaningful.
class SimulationAbort : public std::runtime_error {
 public:
  explicit SimulationAbort(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace siocp
