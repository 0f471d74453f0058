#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace milplot {

enum class ErrorKind {
  MalformedToken,
  EmptySample,
  ClassTooSmall,
  InvalidConfig,
  EmptyInput,
  WidthMismatch,
  ShapeMismatch,
  TargetTooSmall,
  TooSmall,
  LengthMismatch,
  EmptyCorpus,
  IncompatibleCheckpoint,
  CorruptCheckpoint,
  VersionMismatch,
  Io,
  Usage,
  NumericFailure,
};

std::string_view to_string(ErrorKind kind);

// Every failure the library reports carries a kind so callers (and the CLI
// exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedToken: return "MalformedToken";
    case ErrorKind::EmptySample: return "EmptySample";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::WidthMismatch: return "WidthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::TargetTooSmall: return "TargetTooSmall";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

}  // namespace milplot
