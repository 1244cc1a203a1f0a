#pragma once

#include <stdexcept>
#include <string>

namespace protonorm {

/// Broad failure categories; the CLI maps each to its own exit code.
enum class ErrorCategory { config = 2, partition = 3, numeric = 4, io = 5, contract = 6 };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorCategory::config, key.empty() ? what : key + ": " + what),
        key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class PartitionError : public Error {
 public:
  explicit PartitionError(const std::string& what) : Error(ErrorCategory::partition, what) {}
};

/// Where a non-finite value showed up. Negative fields mean "not known".
struct NumericContext {
  int round = -1;
  int client = -1;
  int batch = -1;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, NumericContext where)
      : Error(ErrorCategory::numeric, describe(what, where)), where_(where) {}

  const NumericContext& where() const noexcept { return where_; }

 private:
  static std::string describe(const std::string& what, NumericContext w) {
    return what + " (round " + std::to_string(w.round) + ", client " + std::to_string(w.client) +
           ", batch " + std::to_string(w.batch) + ")";
  }
  NumericContext where_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

/// Caller broke a documented precondition (shape mismatch, non-unit input, ...).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

}  // namespace protonorm
