#pragma once

#include <stdexcept>
#include <string>

namespace latmech {

enum class ErrorKind {
  EmptyMass,
  DimensionMismatch,
  TooLargeForExact,
  NotDiagonallyDominant,
  RankDeficient,
  NotPSD,
  DimensionTooLarge,
  TooLarge,
  MultiBidderUnsupported,
  InvalidArgument,
  ConfigError,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyMass: return "EmptyMass";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooLargeForExact: return "TooLargeForExact";
    case ErrorKind::NotDiagonallyDominant: return "NotDiagonallyDominant";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorKind::TooLarge: return "TooLarge";
    case ErrorKind::MultiBidderUnsupported: return "MultiBidderUnsupported";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Library-wide exception. `kind()` lets callers branch on the failure class
/// without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace latmech
