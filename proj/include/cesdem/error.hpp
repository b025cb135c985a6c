#pragma once

#include <stdexcept>
#include <string>

namespace cesdem {

enum class ErrorKind {
  InvalidInput,
  DegenerateDemand,
  InvalidReference,
  Bandwidth,
  OptimizationFailure,
  EstimatorFailure,
  RankDeficient,
  UnderIdentified,
  Validation,
  Io,
  Internal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::DegenerateDemand: return "degenerate-demand";
    case ErrorKind::InvalidReference: return "invalid-reference";
    case ErrorKind::Bandwidth: return "bandwidth";
    case ErrorKind::OptimizationFailure: return "optimization-failure";
    case ErrorKind::EstimatorFailure: return "estimator-failure";
    case ErrorKind::RankDeficient: return "rank-deficient";
    case ErrorKind::UnderIdentified: return "under-identified";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace cesdem
