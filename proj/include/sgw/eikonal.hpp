#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgw/symbol.hpp"

namespace sgw {

// Hamiltonian q of order (m', 1), 0 < m' < 1, SG-elliptic with constant A.
struct HamiltonianFlow {
  SGSymbol q;
  double A = 1.0;
  double m = 0.5;  // order in xi

  int dim() const { return q.dim(); }
  static HamiltonianFlow from_catalog(const std::string& id);
};

struct OdeOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-12;
  double hamiltonian_tol = 1e-10;  // relative to max(1, q(y, xi))
};

// State of the characteristic through (y, xi) at time t. With x = X(t),
// the phase satisfies phi(t; x, xi) - x.xi = sigma - dx.xi, d_x phi = p and
// grad_xi phi - x = s_xi_dev - dx - x_xi^T p.
struct FlowSample {
  double t = 0;
  Vec x, p;
  Vec dx;             // X - y
  double sigma = 0;   // S - y.xi
  Mat x_y, x_xi, p_y, p_xi;
  Vec s_xi_dev;       // d_xi S - y
  double q = 0;       // q(X, P)

  double phase_dev(const Vec& xi) const { return sigma - dx.dot(xi); }
  Vec xi_grad_dev() const { return s_xi_dev - dx - x_xi.transpose() * p; }
};

struct Trajectory {
  Vec y, xi;
  std::vector<FlowSample> samples;  // in the order of the requested times
  double max_drift = 0;
};

// Characteristics of d_t phi = q(x, d_x phi): X' = -q_xi, P' = q_x,
// S' = q - P.q_xi, with variational and d_xi S equations alongside.
// Dense output of an adaptive Dormand-Prince integrator; negative times run
// backwards from 0.
Trajectory characteristics(const HamiltonianFlow& flow, const Vec& y, const Vec& xi, std::span<const double> times,
                           const OdeOptions& opt = {});

// Uniform samples t_k = k T / steps, k = 0..steps (steps >= 64).
Trajectory characteristics(const HamiltonianFlow& flow, const Vec& y, const Vec& xi, double T, int steps,
                           const OdeOptions& opt = {});

struct PhasePoint {
  double phase_dev = 0;  // phi - x.xi
  Vec dxphi;
  Vec xi_grad_dev;       // grad_xi phi - x
  Vec y;                 // foot of the characteristic
  double jacobian = 1;   // det X_y
  int iterations = 0;
};

struct InversionOptions {
  int max_iter = 12;
  double jacobian_floor = 0.1;
  OdeOptions ode;
};

// phi(t; x, xi) by Newton inversion of x = X(t; y, xi) seeded at y = x.
PhasePoint evaluate_phase(const HamiltonianFlow& flow, double t, const Vec& x, const Vec& xi,
                          const InversionOptions& opt = {});

// ---------------------------------------------------------------------------
// Lattice phase field (n = 1)

// Cubic spline with not-a-knot ends on a uniform grid, in cardinal form:
// value and derivative are linear functionals of the nodal data.
class CardinalSpline {
public:
  CardinalSpline() = default;
  CardinalSpline(double a, double b, int nodes);
  int size() const { return n_; }
  double node(int i) const { return a_ + i * h_; }
  // weights w with s(u) = w.f, s'(u) = dw.f
  void weights(double u, Eigen::VectorXd& w, Eigen::VectorXd* dw = nullptr) const;

private:
  double a_ = 0, h_ = 1;
  int n_ = 0;
  Eigen::MatrixXd second_;  // nodal second derivatives as a map of the data
};

struct LatticeSpec {
  int nt = 17, nx = 33, nxi = 33;
  double x_max = 100.0, xi_max = 100.0;  // nodes uniform in asinh x, asinh xi
  double T = 0.2;
  double min_T = 1e-3;
  bool shrink_T = true;  // halve T on FlowNotInvertible / NewtonDiverged
  int threads = 1;
  InversionOptions inversion;
};

struct PhaseField {
  double T = 0;
  LatticeSpec spec;
  std::vector<double> t, x, xi;
  // flattened (it, ix, ixi), ixi fastest
  std::vector<double> phase_dev, dxphi, xi_grad_dev, foot, q0;
  double max_residual = 0;  // |d_t phi - q(x, d_x phi)| / q at interior nodes

  std::size_t index(int it, int ix, int ixi) const {
    return (static_cast<std::size_t>(it) * x.size() + ix) * xi.size() + ixi;
  }
  double phi(int it, int ix, int ixi) const { return phase_dev[index(it, ix, ixi)] + x[ix] * xi[ixi]; }
};

PhaseField build_phase(const HamiltonianFlow& flow, const LatticeSpec& spec = {});

// Spline interpolant of phi - x xi in (t, asinh x, asinh xi).
class PhaseInterpolant {
public:
  explicit PhaseInterpolant(const PhaseField& field);
  struct Value {
    double phase_dev = 0, dt = 0, dx = 0;  // dx is d_x (phi - x xi)
  };
  Value operator()(double t, double x, double xi) const;

private:
  const PhaseField* field_;
  CardinalSpline st_, su_, sv_;
};

// max |d_t phi - q(x, d_x phi)| / q of the interpolant at cell midpoints of
// the lattice (every `stride`-th cell per axis).
double interpolation_residual(const HamiltonianFlow& flow, const PhaseField& field, int stride = 1);

struct PhaseCertificate {
  double C_grad = 0;
  double taylor_const = 0;
  double xi_grad_const = 0;
  double max_residual = 0;
  double min_ellipticity_ratio = 0;  // min A q / (<x><xi>^m) on the lattice
};

PhaseCertificate certify_phase(const HamiltonianFlow& flow, const PhaseField& phase, const EllipticityBounds& bounds);

// Same, and throws CertificateFailed if a quotient grows more than 2x from
// `coarse` to `fine`.
PhaseCertificate certify_phase(const HamiltonianFlow& flow, const PhaseField& coarse, const PhaseField& fine,
                               const EllipticityBounds& bounds);

std::string phase_csv(const PhaseField& field);

}  // namespace sgw
