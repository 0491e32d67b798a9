// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unlearn {

enum class ErrorKind {
  InvalidArgument,
  // textsim
  MaskerUnavailable,
  // neighborset
  EmptyForgetSet,
  GenerationFailed,
  NoValidFill,
  PortUnavailable,
  // metrics
  EmptyReference,
  EmptySequence,
  ZeroVector,
  DimensionMismatch,
  EmptySet,
  ZeroBaseline,
  GroupMismatch,
  // losses
  EmptyBatch,
  WrongRole,
  MissingReference,
  LengthMismatch,
  NotNormalized,
  SupportViolation,
  // toylab
  InfeasibleSizes,
  NonConvergence,
  BandNeverReached,
  EmptyProbe,
  // clients
  Timeout,
  ProtocolError,
  FixtureMiss,
  LengthZero,
  // cli / io
  ConfigInvalid,
  Io,
};

constexpr std::string_view to_string(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MaskerUnavailable: return "MaskerUnavailable";
    case ErrorKind::EmptyForgetSet: return "EmptyForgetSet";
    case ErrorKind::GenerationFailed: return "GenerationFailed";
    case ErrorKind::NoValidFill: return "NoValidFill";
    case ErrorKind::PortUnavailable: return "PortUnavailable";
    case ErrorKind::EmptyReference: return "EmptyReference";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptySet: return "EmptySet";
    case ErrorKind::ZeroBaseline: return "ZeroBaseline";
    case ErrorKind::GroupMismatch: return "GroupMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::WrongRole: return "WrongRole";
    case ErrorKind::MissingReference: return "MissingReference";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::SupportViolation: return "SupportViolation";
    case ErrorKind::InfeasibleSizes: return "InfeasibleSizes";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::BandNeverReached: return "BandNeverReached";
    case ErrorKind::EmptyProbe: return "EmptyProbe";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::FixtureMiss: return "FixtureMiss";
    case ErrorKind::LengthZero: return "LengthZero";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
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

}  // namespace unlearn
