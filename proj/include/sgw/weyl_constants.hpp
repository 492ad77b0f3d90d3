#pragma once

#include <functional>
#include <string>

#include "sgw/symbol.hpp"

namespace sgw {

struct ConstantResult {
  double value = 0;
  double error = 0;
  std::string path;
};

// Integral over R^n x S^{n-1} of f(x, s), n in {1, 2}: radial adaptive
// Gauss-Kronrod with an analytic tail bound from the measured decay rate,
// and a sum over {+1, -1} (n = 1) or a doubled trapezoid rule (n = 2) on
// the spheres.
ConstantResult sphere_bundle_integral(const HomFn& f, int n, double tol, double support = 0.0);

// d0 = (2 pi)^{-(n-1)} int int q_psi(x, s)^{-n/m'} ds dx
ConstantResult d0_constant(const HomFn& q_psi, int n, double m_prime, double tol = 1e-8);

// c0 = (2 pi)^{-(n-1)} int int H2(|xi|) q_e(s, xi)^{-n} ds dxi; H2 must vanish
// beyond `support`.
ConstantResult c0_constant(const HomFn& q_e, const std::function<double(double)>& H2, double support, int n,
                           double tol = 1e-8);

struct LeadingConstant {
  double value = 0;
  double error = 0;
  double direct = 0;
  double via_d0 = 0;
  std::string path;  // "C1" (m < mu) or "C2" (m > mu)
};

LeadingConstant leading_constant(const PrincipalTriple& p, const OrderPair& order, double tol = 1e-8);

struct RemainderExponents {
  double eps = 0;
  double remainder_exp = 0;
  double n_star = 0;
  double m_prime = 0;  // normalized order of Q = P^{1/l}
};

RemainderExponents remainder_exponents(const OrderPair& order);

struct WeylPrediction {
  double leading_coeff = 0;
  double leading_exp = 0;
  double remainder_exp = 0;
  double eps = 0;
  double n_star = 0;
  std::string provenance;
};

WeylPrediction weyl_prediction(const PrincipalTriple& p, const OrderPair& order, double tol = 1e-8);

}  // namespace sgw
