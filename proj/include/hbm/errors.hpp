#pragma once

#include <stdexcept>
#include <string>

namespace hbm {

/// Failure categories surfaced by the numerical modules.
enum class ErrorCode {
  kNonConvergence,
  kTimeTooSmall,
  kDegenerateRadius,
  kOutOfTable,
  kUnsupportedOrder,
};

/// Base class for recoverable numerical failures.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class NonConvergence : public NumericalError {
 public:
  explicit NonConvergence(const std::string& what)
      : NumericalError(ErrorCode::kNonConvergence, what) {}
};

class TimeTooSmall : public NumericalError {
 public:
  explicit TimeTooSmall(const std::string& what)
      : NumericalError(ErrorCode::kTimeTooSmall, what) {}
};

class DegenerateRadius : public NumericalError {
 public:
  explicit DegenerateRadius(const std::string& what)
      : NumericalError(ErrorCode::kDegenerateRadius, what) {}
};

class OutOfTable : public NumericalError {
 public:
  explicit OutOfTable(const std::string& what)
      : NumericalError(ErrorCode::kOutOfTable, what) {}
};

class UnsupportedOrder : public NumericalError {
 public:
  explicit UnsupportedOrder(const std::string& what)
      : NumericalError(ErrorCode::kUnsupportedOrder, what) {}
};

/// Rejected configuration; `field` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace hbm
