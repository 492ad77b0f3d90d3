#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sgw {

enum class Errc {
  InvalidArgument,
  DerivativeUnstable,
  NotElliptic,
  CompatibilityViolation,
  NonPositiveComponent,
  ConfigInvariantViolated,
  QuadratureNotConverged,
  DivergentTail,
  PathsDisagree,
  EqualOrders,
  QuadratureUnderResolved,
  SolverFailure,
  ModelMismatch,
  BeyondTrustedRange,
  InsufficientData,
  OdeToleranceNotMet,
  FlowNotInvertible,
  NewtonDiverged,
  CertificateFailed,
  QuadratureBudgetExceeded,
  PhaseCoverageInsufficient,
  ContractionViolated,
  OutOfDomain,
  HessianDegenerate,
  DerivativeUnavailable,
  HypothesisFailed,
  ConfigInvalid,
  CacheCorrupt,
  StageDependencyMissing,
};

std::string_view errc_name(Errc c);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}
  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

}  // namespace sgw
