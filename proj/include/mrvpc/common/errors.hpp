#pragma once

#include <stdexcept>
#include <string>

namespace mrvpc {

/// Bad configuration: unknown keys, invalid values, unregistered scenario names.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent data: corrupt checkpoints, bad JSONL, vocab mismatch.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values during training or evaluation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A self-check failed (e.g. a loss closure that is not deterministic).
class CheckError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mrvpc
