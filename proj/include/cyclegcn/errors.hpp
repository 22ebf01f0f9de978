#pragma once

#include <stdexcept>
#include <string>

namespace cyclegcn {

/// Malformed or inconsistent input data: bad CSV rows, unknown identifiers,
/// columns without observations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or hyperparameters supplied by the caller.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cyclegcn
