#pragma once

#include <stdexcept>
#include <string>

namespace strac {

// Shape or dimension mismatch between tensors / features / layers.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// API misuse: backward twice, stepping a finished episode, empty segment...
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN / Inf reached a place where it must not.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corrupted experience (e.g. behaviour probability of zero).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, domain spec or profile.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem output failed (curves, checkpoints, logs).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace strac
