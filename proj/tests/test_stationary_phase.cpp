#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "sgw/stationary_phase.hpp"

using namespace sgw;

namespace {

const OscillatoryIntegrand& qB() {
  static const OscillatoryIntegrand I = OscillatoryIntegrand::from_catalog("q-B");
  return I;
}

// q = x^2 + xi^2 with a Gaussian amplitude. The flow is a rotation by 2t, so
// phi - x xi = (sec 2t - 1) x xi + tan 2t (x^2 + xi^2) / 2 and the (x, xi)
// integral is det(s I - i B(t))^{-1/2} in closed form.
OscillatoryIntegrand rotation_integrand(double s) {
  OscillatoryIntegrand I;
  I.flow.q = catalog_symbol("oracle-H").symbol;
  I.flow.A = 1.0;
  I.flow.m = 0.5;
  I.config = CutoffConfig::defaults(1.0, 1.0, 0.5);
  I.window = std::make_shared<const TauberWindow>(I.config.T);
  I.a = [s](double, double x, double xi) { return std::exp(-0.5 * s * (x * x + xi * xi)); };
  return I;
}

cplx rotation_oracle(const TauberWindow& w, double s, double lambda) {
  auto G = [s](double t) {
    const double tn = std::tan(2 * t), se = 1.0 / std::cos(2 * t) - 1.0;
    const cplx d = (s - cplx(0, 1) * tn) * (s - cplx(0, 1) * tn) + se * se;
    return 1.0 / std::sqrt(d);
  };
  auto f = [&](double t, bool im) {
    const cplx v = w.psi(t) * std::exp(cplx(0, -lambda * t)) * G(t);
    return im ? v.imag() : v.real();
  };
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double T = w.T();
  const double re = GK::integrate([&](double t) { return f(t, false); }, -T, T, 12, 1e-14);
  const double im = GK::integrate([&](double t) { return f(t, true); }, -T, T, 12, 1e-14);
  return cplx(re, im);
}

// exact int e^{i lambda t s} e^{-|X|^2/2 + b.X} dX
cplx gaussian_exact(double lambda, double b0, double b1) {
  const double d = 1 + lambda * lambda;
  const cplx q = (b0 * b0 + b1 * b1 + cplx(0, 2 * lambda * b0 * b1)) / (2 * d);
  return two_pi / std::sqrt(d) * std::exp(q);
}

StationaryData hyperbolic() {
  StationaryData sd;
  sd.M << 0, 1, 1, 0;
  sd.det_M = -1;
  return sd;
}

BivariatePoly ts_phase(int degree, double eps = 0) {
  BivariatePoly p(degree);
  p(1, 1) = 1.0;
  if (degree >= 3) p(3, 0) = eps;
  return p;
}

double order_slope(const std::vector<double>& l, const std::vector<double>& err) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < l.size(); ++i) {
    lx.push_back(std::log(l[i]));
    ly.push_back(std::log(err[i]));
  }
  return fit_line(lx, ly).slope;
}

}  // namespace

TEST_CASE("polar Jacobian against Gaussian integrals") {
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double lambda : {1.0, 7.5, 100.0}) {
    // n = 1: two rays; n = 2: circle of length 2 pi
    const double one = 2 * ts.integrate([&](double z) { return scaled_polar_jacobian(lambda, z, 1) * std::exp(-lambda * lambda * z * z); }, 0.0, std::numeric_limits<double>::infinity());
    const double two = two_pi * ts.integrate([&](double z) { return scaled_polar_jacobian(lambda, z, 2) * std::exp(-lambda * lambda * z * z); }, 0.0, std::numeric_limits<double>::infinity());
    CHECK(one == doctest::Approx(std::sqrt(pi)).epsilon(1e-12));
    CHECK(two == doctest::Approx(pi).epsilon(1e-12));
  }
}

TEST_CASE("direct quadrature against the rotation flow") {
  const double s = 1.0;
  const OscillatoryIntegrand I = rotation_integrand(s);
  DirectOptions o;
  o.rel_tol = 1e-8;
  o.abs_tol = 1e-10;
  for (double lambda : {-25.0, 40.0}) {
    const DirectResult r = region_integral(I, Region::full, lambda, o);
    const cplx e = rotation_oracle(*I.window, s, lambda);
    CHECK(std::abs(r.value - e) <= 1e-8 * std::abs(e) + 1e-9);
    CHECK(r.nodes > 0);
  }
}

TEST_CASE("direct quadrature structure") {
  const OscillatoryIntegrand& B = qB();
  const double lambda = 1.2 * B.config.lambda0;

  OscillatoryIntegrand zero = B;
  zero.a = [](double, double, double) { return 0.0; };
  CHECK(region_integral(zero, Region::H1, lambda).value == cplx(0));

  // amplitude vanishing on |xi| <= 2 k2, the support of H2
  OscillatoryIntegrand far = B;
  const double k2 = B.config.k2;
  far.a = [k2](double, double, double xi) { return std::abs(xi) <= 2 * k2 ? 0.0 : 1.0; };
  CHECK(region_integral(far, Region::I1, lambda).value == cplx(0));

  CHECK_THROWS_AS(direct_I(B, 0.5 * B.config.lambda0), Error);
  CHECK_THROWS_AS(direct_I(B, 2500.0), Error);
  try {
    direct_I(B, 3000.0);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfDomain);
  }
  OscillatoryIntegrand two = B;
  two.flow = HamiltonianFlow::from_catalog("q-aniso-2d");
  CHECK_THROWS_AS(direct_I(two, lambda), Error);
  CHECK(region_name(Region::V1) == "V1");
}

TEST_CASE("region splitting is additive") {
  const OscillatoryIntegrand& B = qB();
  const double lambda = 1.2 * B.config.lambda0;
  DirectOptions o;
  o.rel_tol = 1e-7;
  o.abs_tol = 1e-6;
  const cplx h1 = region_integral(B, Region::H1, lambda, o).value;
  const cplx i1 = region_integral(B, Region::I1, lambda, o).value;
  const cplx i2 = region_integral(B, Region::I2, lambda, o).value;
  CHECK(std::abs(i1 + i2 - h1) <= 1e-5 * std::abs(h1));
  CHECK(std::abs(h1.imag()) <= 1e-8 * std::abs(h1));
  // leading terms: 4 pi lambda from I2, an O(1) constant from I1
  CHECK(std::abs(i2.real() - 4 * pi * lambda) <= 0.05 * 4 * pi * lambda);
  CHECK(std::abs(i1) <= 20.0);
}

TEST_CASE("stationary point of the I1 phase") {
  OscillatoryIntegrand I = qB();
  // q_e = |x| (1 + xi^2): zeta0 = 1 / (1 + xi^2), det = -(1 + xi^2)^2
  I.q_e = [](const Vec& x, const Vec& xi) { return x.norm() * (1 + xi.squaredNorm()); };
  const StationaryData a = stationary_point_I1(I, vec1(1.0), vec1(0.0));
  CHECK(a.X0[0] == 0.0);
  CHECK(a.X0[1] == doctest::Approx(1.0));
  CHECK(a.det_M == doctest::Approx(-1.0));
  const StationaryData b = stationary_point_I1(I, vec1(1.0), vec1(1.0));
  CHECK(b.X0[1] == doctest::Approx(0.5));
  CHECK(b.det_M == doctest::Approx(-4.0));
  CHECK(b.signature == 0);

  // q-B: S_Te = sigma xi / (4 <xi>), and M is the Hessian of F1
  const OscillatoryIntegrand& B = qB();
  for (double xi : {-3.0, 0.4, 2.0}) {
    const Vec s = vec1(1.0), e = vec1(xi);
    CHECK(taylor_exit_coefficient(B, s, e) == doctest::Approx(xi / (4 * jbr(xi))).epsilon(1e-6));
    const StationaryData sd = stationary_point_I1(B, s, e);
    const double t0 = sd.X0[0], z0 = sd.X0[1], h = 1e-4;
    auto f = [&](double t, double z) { return F1(B, t, z, s, e); };
    CHECK(std::abs((f(t0 + h, z0) - f(t0 - h, z0)) / (2 * h)) <= 1e-9);
    CHECK(std::abs((f(t0, z0 + h) - f(t0, z0 - h)) / (2 * h)) <= 1e-9);
    const double ftt = (f(t0 + h, z0) - 2 * f(t0, z0) + f(t0 - h, z0)) / (h * h);
    const double ftz = (f(t0 + h, z0 + h) - f(t0 + h, z0 - h) - f(t0 - h, z0 + h) + f(t0 - h, z0 - h)) / (4 * h * h);
    CHECK(ftt == doctest::Approx(sd.M(0, 0)).epsilon(1e-6));
    CHECK(ftz == doctest::Approx(sd.M(0, 1)).epsilon(1e-6));
  }
}

TEST_CASE("fixed point for zeta0*") {
  const OscillatoryIntegrand& B = qB();
  const CutoffConfig& cfg = B.config;
  const ResidualMap none = [](const Vec&, const Vec&, double) { return 0.0; };
  const FixedPointResult a = fixed_point_zeta(vec1(1.0), vec1(2.0), 1e3, cfg, B.q_psi, none);
  CHECK(a.iterations == 1);
  CHECK(a.zeta0_star == a.zeta0);
  CHECK(a.zeta0 == doctest::Approx(1.0 / std::sqrt(5.0)));

  // S = 0.1 <x>^{-1} <r>^{-1} with m = 1/2, x = 3, lambda = 1e4
  const ResidualMap weak = [](const Vec& x, const Vec&, double r) { return 0.1 / (jbr(x[0]) * jbr(r)); };
  const double x = 3.0, lambda = 1e4;
  const FixedPointResult b = fixed_point_zeta(vec1(1.0), vec1(x), lambda, cfg, B.q_psi, weak);
  auto g = [&](double z) { return z - b.zeta0 * (1 + weak(vec1(x), vec1(1.0), lambda * lambda * z * z)); };
  std::uintmax_t it = 100;
  const auto root = boost::math::tools::toms748_solve(g, b.bracket_lo, b.bracket_hi, boost::math::tools::eps_tolerance<double>(50), it);
  CHECK(b.zeta0_star == doctest::Approx(0.5 * (root.first + root.second)).epsilon(1e-13));
  CHECK(b.iterations <= 5);
  CHECK(b.zeta0_star >= b.bracket_lo);
  CHECK(b.zeta0_star <= b.bracket_hi);

  // the measured residual reproduces q(x, r* sigma) = lambda
  for (double xx : {-4.0, 0.0, 1.5}) {
    const FixedPointResult c = fixed_point_zeta(vec1(-1.0), vec1(xx), 400.0, cfg, B.q_psi, measured_S_map(B));
    const double r = std::pow(400.0 * c.zeta0_star, 1 / cfg.m);
    CHECK(B.flow.q(vec1(xx), vec1(-r)) == doctest::Approx(400.0).epsilon(1e-12));
    CHECK(c.contraction_estimate <= cfg.k0);
  }

  try {
    fixed_point_zeta(vec1(1.0), vec1(std::sqrt(std::pow(2 * cfg.kappa * 100.0, 2) - 1)), 100.0, cfg, B.q_psi, none);
    FAIL("expected OutOfDomain");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfDomain);
  }
  const double l = 100.0;
  const ResidualMap steep = [l, &cfg](const Vec&, const Vec&, double r) { return 5.0 * (std::pow(r, cfg.m) / l - 1.0); };
  try {
    fixed_point_zeta(vec1(1.0), vec1(0.0), l, cfg, B.q_psi, steep);
    FAIL("expected ContractionViolated");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ContractionViolated);
  }
}

TEST_CASE("Hessian of F2") {
  const OscillatoryIntegrand& B = qB();
  const CutoffConfig& cfg = B.config;
  const ResidualMap none = [](const Vec&, const Vec&, double) { return 0.0; };
  const F2Residuals flat{none, none};
  for (double x : {0.0, 2.0}) {
    const FixedPointResult fp = fixed_point_zeta(vec1(1.0), vec1(x), 500.0, cfg, B.q_psi, none);
    const StationaryData sd = hessian_F2(vec1(1.0), vec1(x), 500.0, fp, B.q_psi, flat, cfg);
    const double qp = B.q_psi(vec1(x), vec1(1.0));
    CHECK(sd.M(0, 0) == 0.0);
    CHECK(sd.M(0, 1) == doctest::Approx(qp));
    CHECK(sd.M(1, 1) == 0.0);
    CHECK(sd.det_M == doctest::Approx(-jbr(x) * jbr(x)));
  }
  const ResidualMap huge = [](const Vec&, const Vec&, double) { return 10.0; };
  const FixedPointResult fp0 = fixed_point_zeta(vec1(1.0), vec1(0.0), 500.0, cfg, B.q_psi, none);
  CHECK_THROWS_AS(hessian_F2(vec1(1.0), vec1(0.0), 500.0, fp0, B.q_psi, F2Residuals{none, huge}, cfg), Error);

  // measured residuals against finite differences of F2 built from the flow
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-5.0, 5.0), ul(100.0, 1000.0);
  const F2Residuals res = measured_residuals(B);
  const ResidualMap S = measured_S_map(B);
  for (int k = 0; k < 20; ++k) {
    const Vec x = vec1(ux(rng)), s = vec1(k % 2 ? 1.0 : -1.0);
    const double lambda = ul(rng);
    const FixedPointResult fp = fixed_point_zeta(s, x, lambda, cfg, B.q_psi, S);
    const StationaryData sd = hessian_F2(s, x, lambda, fp, B.q_psi, res, cfg);
    const double z = fp.zeta0_star, ht = 2e-3, hz = 2e-3 * z;
    auto F = [&](double t, double zz) { return F2(B, t, zz, s, x, lambda); };
    const double ftt = (F(ht, z) - 2 * F(0, z) + F(-ht, z)) / (ht * ht);
    const double ftz = (F(ht, z + hz) - F(ht, z - hz) - F(-ht, z + hz) + F(-ht, z - hz)) / (4 * ht * hz);
    const double scale = sd.M.cwiseAbs().maxCoeff();
    CHECK(std::abs(ftt - sd.M(0, 0)) <= 1e-6 * scale);
    CHECK(std::abs(ftz - sd.M(0, 1)) <= 1e-6 * scale);
    CHECK(std::abs((F(ht, z) - F(-ht, z)) / (2 * ht)) <= 1e-6 * scale);
  }
}

TEST_CASE("bivariate polynomials") {
  BivariatePoly p(3);
  p(1, 0) = 2.0;
  p(0, 2) = cplx(0, 1);
  BivariatePoly q(3);
  q(0, 0) = 1.0;
  q(1, 1) = 3.0;
  const BivariatePoly r = p * q;
  CHECK(r(1, 0) == cplx(2.0));
  CHECK(r(2, 1) == cplx(6.0));
  CHECK(r(0, 2) == cplx(0, 1));
  CHECK(p.du()(0, 0) == cplx(2.0));
  CHECK(p.dv()(0, 1) == cplx(0, 2));
  const BivariatePoly g = BivariatePoly::gaussian(4, 0.5, -1.0);
  // exp(0.5 u - u^2/2): u^2 coefficient 0.125 - 0.5
  CHECK(g(2, 0).real() == doctest::Approx(-0.375));
  CHECK(g(1, 1).real() == doctest::Approx(-0.5));
  CHECK(BivariatePoly::gaussian(3, 0, 0, 1, 1)(1, 1).real() == 1.0);
}

TEST_CASE("expansion against the Gaussian oracle") {
  const StationaryData sd = hyperbolic();
  const double b0 = 0.3, b1 = -0.7;
  const std::vector<double> ls{100.0, 200.0, 400.0};
  for (int J = 0; J <= 2; ++J) {
    const AsymptoticExpansion e = sp_expand("gauss", sd, ts_phase(2 * J + 2), BivariatePoly::gaussian(2 * J, b0, b1), J);
    std::vector<double> err;
    for (double l : ls) err.push_back(std::abs(e.value(l) - gaussian_exact(l, b0, b1)) / std::abs(gaussian_exact(l, b0, b1)));
    CHECK(-order_slope(ls, err) >= J + 0.8);
    CHECK(e.error_exponent == -2.0 - J);
  }

  // leading term for a definite quadratic: int e^{i lambda (t^2 + 2 s^2)} = i pi / (lambda sqrt 2)
  StationaryData d;
  d.M << 2, 0, 0, 4;
  BivariatePoly ph(2);
  ph(2, 0) = 1.0;
  ph(0, 2) = 2.0;
  BivariatePoly one(0);
  one(0, 0) = 1.0;
  const AsymptoticExpansion q = sp_expand("quad", d, ph, one, 0);
  CHECK(std::abs(q.value(50.0) - cplx(0, pi / (50.0 * std::sqrt(2.0)))) <= 1e-14);

  CHECK_THROWS_AS(sp_expand("x", sd, ts_phase(3), BivariatePoly::gaussian(2, 0, 0), 1), Error);
  BivariatePoly wrong = ts_phase(4);
  wrong(1, 1) = 2.0;
  CHECK_THROWS_AS(sp_expand("x", sd, wrong, BivariatePoly::gaussian(2, 0, 0), 1), Error);
}

TEST_CASE("expansion against a cubic phase") {
  const double eps = 0.5;
  const std::vector<double> ls{100.0, 200.0, 400.0};
  // int e^{i lambda (t s + eps t^3)} e^{-|X|^2/2} dX reduces to one variable
  auto exact = [eps](double l) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    const double w = 12.0 / std::sqrt(l * l + 1);
    auto f = [&](double t, bool im) {
      const cplx v = std::sqrt(two_pi) * std::exp(cplx(-(l * l + 1) * t * t / 2, l * eps * t * t * t));
      return im ? v.imag() : v.real();
    };
    return cplx(GK::integrate([&](double t) { return f(t, false); }, -w, w, 15, 1e-15),
                GK::integrate([&](double t) { return f(t, true); }, -w, w, 15, 1e-15));
  };
  for (int J = 0; J <= 2; ++J) {
    const AsymptoticExpansion e = sp_expand("cubic", hyperbolic(), ts_phase(2 * J + 2, eps), BivariatePoly::gaussian(2 * J, 0, 0), J);
    std::vector<double> err;
    for (double l : ls) err.push_back(std::abs(e.value(l) - exact(l)) / std::abs(exact(l)));
    CHECK(-order_slope(ls, err) >= J + 0.8);
  }
}

TEST_CASE("amplitude vanishing at the stationary point gains a power") {
  const double b0 = 0.2, b1 = 0.9;
  const std::vector<double> ls{100.0, 200.0, 400.0};
  std::vector<double> mag, err;
  const AsymptoticExpansion e = sp_expand("lemma", hyperbolic(), ts_phase(4), BivariatePoly::gaussian(3, b0, b1, 1, 0), 1);
  CHECK(std::abs(e.coefficients[0]) == 0.0);
  for (double l : ls) {
    // d/db0 of the Gaussian formula
    const cplx ex = (b0 + cplx(0, l * b1)) / (1 + l * l) * gaussian_exact(l, b0, b1);
    mag.push_back(std::abs(ex));
    err.push_back(std::abs(e.value(l) - ex) / std::abs(ex));
  }
  CHECK(order_slope(ls, mag) == doctest::Approx(-2.0).epsilon(0.01));
  CHECK(-order_slope(ls, err) >= 0.8);
}

TEST_CASE("trace asymptotics") {
  const OscillatoryIntegrand& B = qB();
  const TraceConstants c = trace_constants(B);
  CHECK(c.d0.value == doctest::Approx(two_pi).epsilon(1e-8));
  // c0 = sum over sigma = +-1 of int H2(|xi|) <xi>^{-1/2} dxi
  const CutoffSet cut = make_cutoffs(B.config);
  boost::math::quadrature::tanh_sinh<double> ts;
  const double c0 = 4 * ts.integrate([&](double r) { return cut.H2(r) / std::pow(jbr(r), 0.5); }, 0.0, 2 * B.config.k2);
  CHECK(c.c0.value == doctest::Approx(c0).epsilon(1e-7));
  for (double l : {100.0, 400.0}) {
    const TraceAsymptotics t = trace_asymptotics(c, l);
    CHECK(t.I2_leading == doctest::Approx(4 * pi * l).epsilon(1e-8));
    CHECK(t.I1_leading == doctest::Approx(c0).epsilon(1e-7));
    CHECK(t.value == t.I1_leading + t.I2_leading);
  }
  CHECK(trace_prediction(B, "q-B").value(100.0) == trace_asymptotics(c, 100.0).value);

  const std::string csv = comparison_csv({{100.0, cplx(1, 0), 2.0, 1.0, 1.0, "I1+I2"}});
  CHECK(csv.rfind("lambda,direct_re,direct_im,expansion,abs_err,rel_err,branch\n100,1,0,2,1,1,I1+I2\n", 0) == 0);
}
