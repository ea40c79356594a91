#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace alertsieve {

enum class ErrorCode {
  InputTooShort,
  InsufficientComplexity,
  MalformedDigest,
  EmptyCommandLine,
  UndigestibleAlert,
  MalformedRecord,
  EmptyInput,
  EmptyIndex,
  UnknownCluster,
  DegenerateContext,
  OutOfOrderBatch,
  SingleClassData,
  ImpossibleTarget,
  InvalidSpec,
  InsufficientLabeledData,
  InvalidArgument,
  BundleMismatch,
  Io,
};

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's machine-readable error line) can dispatch on it.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Error(ErrorCode code, const std::string& message, ErrorCode cause)
      : std::runtime_error(message), code_(code), cause_(cause) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  /// Underlying failure when this error wraps another (e.g. the digest
  /// failure behind UndigestibleAlert).
  [[nodiscard]] std::optional<ErrorCode> cause() const noexcept { return cause_; }

private:
  ErrorCode code_;
  std::optional<ErrorCode> cause_;
};

}  // namespace alertsieve
