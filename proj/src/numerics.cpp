#include "sgw/numerics.hpp"

#include <thread>

namespace sgw {

std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::DerivativeUnstable: return "DerivativeUnstable";
    case Errc::NotElliptic: return "NotElliptic";
    case Errc::CompatibilityViolation: return "CompatibilityViolation";
    case Errc::NonPositiveComponent: return "NonPositiveComponent";
    case Errc::ConfigInvariantViolated: return "ConfigInvariantViolated";
    case Errc::QuadratureNotConverged: return "QuadratureNotConverged";
    case Errc::DivergentTail: return "DivergentTail";
    case Errc::PathsDisagree: return "PathsDisagree";
    case Errc::EqualOrders: return "EqualOrders";
    case Errc::QuadratureUnderResolved: return "QuadratureUnderResolved";
    case Errc::SolverFailure: return "SolverFailure";
    case Errc::ModelMismatch: return "ModelMismatch";
    case Errc::BeyondTrustedRange: return "BeyondTrustedRange";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::OdeToleranceNotMet: return "OdeToleranceNotMet";
    case Errc::FlowNotInvertible: return "FlowNotInvertible";
    case Errc::NewtonDiverged: return "NewtonDiverged";
    case Errc::CertificateFailed: return "CertificateFailed";
    case Errc::QuadratureBudgetExceeded: return "QuadratureBudgetExceeded";
    case Errc::PhaseCoverageInsufficient: return "PhaseCoverageInsufficient";
    case Errc::ContractionViolated: return "ContractionViolated";
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::HessianDegenerate: return "HessianDegenerate";
    case Errc::DerivativeUnavailable: return "DerivativeUnavailable";
    case Errc::HypothesisFailed: return "HypothesisFailed";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::CacheCorrupt: return "CacheCorrupt";
    case Errc::StageDependencyMissing: return "StageDependencyMissing";
  }
  return "Unknown";
}

FixedRule composite_gauss_legendre(double a, double b, int panels) {
  using rule = boost::math::quadrature::gauss<double, 20>;
  const auto& x = rule::abscissa();
  const auto& w = rule::weights();
  FixedRule r;
  r.x.reserve(20 * panels);
  r.w.reserve(20 * panels);
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    for (std::size_t i = x.size(); i-- > 0;) {
      r.x.push_back(c - 0.5 * h * x[i]);
      r.w.push_back(0.5 * h * w[i]);
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      r.x.push_back(c + 0.5 * h * x[i]);
      r.w.push_back(0.5 * h * w[i]);
    }
  }
  return r;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(threads > 0 ? threads : 1, n));
  if (t <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(t);
  for (std::size_t k = 0; k < t; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < n; i += t) fn(i);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(Errc::InsufficientData, "fit_line needs two or more points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) throw Error(Errc::InsufficientData, "fit_line: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace sgw
