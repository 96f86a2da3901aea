// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ibsynth {

/// Invalid configuration or input data. Maps to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file content (manifest, concepts, scripts).
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A remote or mock provider could not produce a result.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, bool retryable = true)
      : std::runtime_error(what), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

/// Numeric precondition or contract violation inside the scoring math.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace ibsynth
