#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgw/eikonal.hpp"
#include "sgw/tauberian.hpp"
#include "sgw/weyl_constants.hpp"

namespace sgw {

// a(t; x, xi) for n = 1; an empty function means a == 1.
using AmplitudeFn = std::function<double(double t, double x, double xi)>;

struct OscillatoryIntegrand {
  HamiltonianFlow flow;
  CutoffConfig config;
  std::shared_ptr<const TauberWindow> window;  // psi, on (-T, T) with T = config.T
  AmplitudeFn a;
  HomFn q_psi, q_e;  // principal parts of q, homogeneous in xi and in x

  // Catalog Hamiltonian with CutoffConfig::defaults(A, C_grad, m).
  static OscillatoryIntegrand from_catalog(const std::string& id, AmplitudeFn a = {});
  double amplitude(double t, double x, double xi) const { return a ? a(t, x, xi) : 1.0; }
};

// Integrand factors on top of psi(t) a e^{i(-t lambda + phi - x xi)}:
//   full    1
//   H1      H1(<x><xi>^m / lambda)
//   not_H1  1 - H1
//   I1      H1 H2(|xi|)
//   I2      H1 (1 - H2(|xi|))
//   V1, V2  I2 times 1 - H3, H3 of q_psi(x, xi) / lambda - 1 (= zeta / zeta0 - 1)
enum class Region { full, H1, not_H1, I1, I2, V1, V2 };

std::string region_name(Region r);

struct DirectOptions {
  double rel_tol = 1e-8;
  double abs_tol = 1e-6;
  std::size_t max_nodes = 4'000'000;  // (y, xi) nodes, each one characteristic
  int cheb_nodes = 25;                // time samples per characteristic
  int threads = 1;
  OdeOptions ode{1e-10, 1e-10, 1e-8};
};

struct DirectResult {
  cplx value{};
  double error = 0;
  std::size_t nodes = 0;
};

// Lagrangian form: x = X(t; y, xi) turns the x integral into one over the
// foot y with Jacobian X_y, so every (y, xi) node needs one characteristic
// and phi - x xi comes straight from the flow. t is innermost (fixed
// composite Gauss-Legendre sized to the phase frequency), then xi, then y
// (adaptive Gauss-Kronrod with breakpoints on energy shells of q).
DirectResult region_integral(const OscillatoryIntegrand& I, Region region, double lambda,
                             const DirectOptions& opt = {});

// lambda > 0: the H1 region; lambda < 0: the whole integrand.
DirectResult direct_I(const OscillatoryIntegrand& I, double lambda, const DirectOptions& opt = {});

struct DecayFit {
  std::vector<double> lambdas, magnitudes;
  double slope = 0;  // of log |value| against log |lambda|
};

DecayFit region_decay(const OscillatoryIntegrand& I, Region region, const std::vector<double>& lambdas,
                      const DirectOptions& opt = {});

struct SplitResult {
  DirectResult I1, I2;
  double discard_bound = 0;  // measured decay order of the not_H1 region over [lambda, 2 lambda]
};

// I1 in (zeta, sign) with y = lambda zeta sign, I2 in xi = sign (lambda zeta)^{1/m}.
SplitResult split_I(const OscillatoryIntegrand& I, double lambda, const DirectOptions& opt = {});

// lambda^n zeta^{n-1}, the measure factor of x = lambda zeta sigma
double scaled_polar_jacobian(double lambda, double zeta, int n);

// ---------------------------------------------------------------------------
// Stationary points, fixed point, Hessian

struct StationaryData {
  Eigen::Vector2d X0 = Eigen::Vector2d::Zero();       // (t0, zeta0)
  Eigen::Vector2d X0_star = Eigen::Vector2d::Zero();  // (0, zeta0*); equals X0 on the I1 branch
  Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
  double det_M = 0;
  int signature = 0;
};

// S_{T,e}(sigma, xi): exit part of d_t^2 phi(0) / 2 = q_xi . q_x / 2, degree 1 in x.
double taylor_exit_coefficient(const OscillatoryIntegrand& I, const Vec& sigma, const Vec& xi);

// F1(t, zeta) = -t + zeta t q_e(sigma, xi) + zeta t^2 S_{T,e}(sigma, xi)
double F1(const OscillatoryIntegrand& I, double t, double zeta, const Vec& sigma, const Vec& xi);

StationaryData stationary_point_I1(const OscillatoryIntegrand& I, const Vec& sigma, const Vec& xi);

// Residual maps of (x, sigma, r), r = |xi| along sigma.
using ResidualMap = std::function<double(const Vec& x, const Vec& sigma, double r)>;

// S(x, r sigma) = q_psi / q - 1, so that q(x, r sigma) = lambda iff
// zeta = zeta0 (1 + S) with r = (lambda zeta)^{1/m}, zeta0 = 1 / q_psi(x, sigma).
ResidualMap measured_S_map(const OscillatoryIntegrand& I);

struct FixedPointResult {
  double zeta0 = 0;
  double zeta0_star = 0;
  int iterations = 0;
  double contraction_estimate = 0;
  double bracket_lo = 0, bracket_hi = 0;  // I_x
};

// zeta_{k+1} = zeta0 (1 + S(x, sigma, (lambda zeta_k)^{1/m})) from zeta0,
// until a step is below 1e-14 <x>^{-1}.
FixedPointResult fixed_point_zeta(const Vec& sigma, const Vec& x, double lambda, const CutoffConfig& cfg,
                                  const HomFn& q_psi, const ResidualMap& S);

// M = [[S_T, q_psi (1 + zeta0 / zeta0* S12)], [., 0]] at r* = (lambda zeta0*)^{1/m}.
struct F2Residuals {
  ResidualMap S_T, S12;
};

// Residuals making the formula above the exact Hessian of
// F2(t, zeta) = -t + (phi(t; x, xi(zeta)) - x xi(zeta)) / lambda at the fixed point.
F2Residuals measured_residuals(const OscillatoryIntegrand& I);

StationaryData hessian_F2(const Vec& sigma, const Vec& x, double lambda, const FixedPointResult& fp,
                          const HomFn& q_psi, const F2Residuals& res, const CutoffConfig& cfg);

// F2 by pointwise phase evaluation, for finite-difference checks.
double F2(const OscillatoryIntegrand& I, double t, double zeta, const Vec& sigma, const Vec& x, double lambda);

// ---------------------------------------------------------------------------
// Stationary phase expansion in two variables

// Truncated polynomial sum c(i, j) u^i v^j over i + j <= degree.
class BivariatePoly {
public:
  explicit BivariatePoly(int degree = 0);
  int degree() const { return d_; }
  cplx& operator()(int i, int j) { return c_[idx(i, j)]; }
  cplx operator()(int i, int j) const { return c_[idx(i, j)]; }

  BivariatePoly truncated(int degree) const;
  BivariatePoly operator*(const BivariatePoly& o) const;  // truncated at min degree
  BivariatePoly operator+(const BivariatePoly& o) const;
  BivariatePoly du() const;
  BivariatePoly dv() const;

  // Taylor coefficients at 0 of exp(-|X|^2 / 2 + b.X) times u^pu v^pv.
  static BivariatePoly gaussian(int degree, double b0, double b1, int pu = 0, int pv = 0);

private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>((i + j) * (i + j + 1) / 2 + j); }
  int d_;
  std::vector<cplx> c_;
};

struct AsymptoticExpansion {
  std::string branch;
  int J = 0;
  double phase = 0;                  // F(X0)
  std::vector<cplx> coefficients;    // of lambda^{exponents[j]}
  std::vector<double> exponents;     // -1 - j
  double error_exponent = 0;         // first omitted power, -2 - J

  cplx value(double lambda) const;   // e^{i lambda F(X0)} sum_j coefficients[j] lambda^{exponents[j]}
};

// int e^{i lambda F} u dX over R^2 by the expansion at the nondegenerate
// stationary point X0 (the origin of the Taylor data):
//   e^{i lambda F(X0)} det(lambda M / 2 pi i)^{-1/2} sum_j lambda^{-j} L_j u,
//   L_j u = sum_{nu - mu = j, 2 nu >= 3 mu} i^{-j} 2^{-nu} <M^{-1} D, D>^nu (g^mu u)(X0) / (mu! nu!),
// g = F - F(X0) - <M X, X> / 2. Needs F to order 2J + 2 and u to order 2J.
AsymptoticExpansion sp_expand(const std::string& branch, const StationaryData& sd, const BivariatePoly& phase,
                              const BivariatePoly& amplitude, int J);

// ---------------------------------------------------------------------------

struct TraceConstants {
  ConstantResult c0, d0;
  int n = 1;
  double m = 0.5;
};

TraceConstants trace_constants(const OscillatoryIntegrand& I);

struct TraceAsymptotics {
  double value = 0;
  double I1_leading = 0;  // c0 lambda^{n-1}
  double I2_leading = 0;  // (n/m) d0 lambda^{n/m-1}
};

TraceAsymptotics trace_asymptotics(const TraceConstants& c, double lambda);
TraceAsymptotics trace_asymptotics(const OscillatoryIntegrand& I, double lambda);

// lambda -> trace_asymptotics value, for tauberian trace_crosscheck
TracePrediction trace_prediction(const OscillatoryIntegrand& I, const std::string& model_id);

struct ComparisonRow {
  double lambda = 0;
  cplx direct{};
  double expansion = 0, abs_err = 0, rel_err = 0;
  std::string branch;
};

std::string comparison_csv(const std::vector<ComparisonRow>& rows);

}  // namespace sgw
