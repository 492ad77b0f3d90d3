#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "sgw/weyl_constants.hpp"

using namespace sgw;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

const HomFn qpsi_B = [](const Vec& x, const Vec& s) { return jbr(x.norm()) * std::sqrt(s.norm()); };

}  // namespace

TEST_CASE("d0 for the Q of model B") {
  auto r = d0_constant(qpsi_B, 1, 0.5);
  // 2 * int <x>^{-2} dx = 2 (atan(+inf) - atan(-inf))
  CHECK(std::abs(r.value - 2.0 * (std::atan(inf) - std::atan(-inf))) <= 1e-8);
  CHECK(r.error <= 1e-8);

  HomFn doubled = [](const Vec& x, const Vec& s) { return 2.0 * qpsi_B(x, s); };
  CHECK(d0_constant(doubled, 1, 0.5).value == doctest::Approx(r.value / 4.0).epsilon(1e-9));

  HomFn slow = [](const Vec& x, const Vec& s) { return std::sqrt(jbr(x.norm())) * std::sqrt(s.norm()); };
  try {
    d0_constant(slow, 1, 0.5);
    FAIL("expected DivergentTail");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DivergentTail);
  }
}

TEST_CASE("d0 in two dimensions against closed forms") {
  // (2 pi)^{-1} * 2 pi * 2 pi * int r <r>^{-4} dr = pi
  auto r = d0_constant(qpsi_B, 2, 0.5);
  CHECK(std::abs(r.value - pi) <= 1e-7);
  // anisotropic sphere factor: int dtheta / (cos^2 + 2 sin^2) = 2 pi / sqrt 2
  HomFn aniso = [](const Vec& x, const Vec& s) {
    return jbr(x.norm()) * std::pow(s[0] * s[0] + 2.0 * s[1] * s[1], 0.25);
  };
  CHECK(std::abs(d0_constant(aniso, 2, 0.5).value - pi / std::sqrt(2.0)) <= 1e-7);
}

TEST_CASE("c0 constant") {
  HomFn qe = [](const Vec& s, const Vec& xi) {
    (void)s;
    return 1.0 + xi.squaredNorm();
  };
  double prev = 0;
  for (double k2 : {4.0, 16.0, 64.0, 256.0}) {
    CutoffConfig cfg = CutoffConfig::defaults(1.0, 1.0, 0.5);
    cfg.k2 = k2;
    cfg.lambda0 = 1.25 * 2 * cfg.k1 * std::pow(jbr(2 * k2), cfg.m);
    cfg.kappa = cfg.kappa_exact();
    const SmoothCutoff H2(CutoffKind::H2, cfg);
    auto c = c0_constant(qe, [&](double r) { return H2(r); }, 2 * k2, 1);
    // independent 1-D oracle
    boost::math::quadrature::tanh_sinh<double> ts;
    const double oracle =
        2.0 * 2.0 * (ts.integrate([&](double t) { return 1.0 / (1.0 + t * t); }, 0.0, k2) +
                     ts.integrate([&](double t) { return H2(t) / (1.0 + t * t); }, k2, 2 * k2));
    CHECK(c.value == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(c.value > prev);
    CHECK(std::abs(c.value - two_pi) <= 4.0 / k2);
    prev = c.value;
  }
  auto zero = c0_constant(qe, [](double) { return 0.0; }, 8.0, 1);
  CHECK(zero.value == 0.0);

  auto H = [](double r) { return r <= 3.0 ? 1.0 : 0.0; };
  HomFn qe2 = [&](const Vec& s, const Vec& xi) { return 2.0 * qe(s, xi); };
  CHECK(c0_constant(qe2, H, 3.0, 1).value == doctest::Approx(c0_constant(qe, H, 3.0, 1).value / 2.0).epsilon(1e-10));
}

TEST_CASE("leading constants of the model operators") {
  auto ta = principal_triple(*catalog_symbol("model-A").classical);
  auto tb = principal_triple(*catalog_symbol("model-B").classical);
  auto a = leading_constant(ta, {2, 1, 1});
  auto b = leading_constant(tb, {1, 2, 1});
  CHECK(a.path == "C2");
  CHECK(b.path == "C1");
  // (2 pi)^{-1} * 2 * (atan(inf) - atan(-inf)) = 1
  CHECK(std::abs(a.value - 1.0) <= 1e-6);
  CHECK(std::abs(b.value - 1.0) <= 1e-6);
  CHECK(std::abs(a.direct - a.via_d0) <= 1e-6 * a.direct);
  CHECK(std::abs(b.direct - b.via_d0) <= 1e-6 * b.direct);

  for (double s : {2.0, 5.0}) {
    CHECK(leading_constant(scale_triple(ta, s), {2, 1, 1}).value ==
          doctest::Approx(a.value * std::pow(s, -1.0)).epsilon(1e-8));
    CHECK(leading_constant(scale_triple(tb, s), {1, 2, 1}).value ==
          doctest::Approx(b.value * std::pow(s, -1.0)).epsilon(1e-8));
  }
  CHECK_THROWS_AS(leading_constant(ta, {1, 1, 1}), Error);
}

TEST_CASE("constants decrease when the symbol grows") {
  HomFn q11 = [](const Vec& x, const Vec& s) { return 1.1 * qpsi_B(x, s); };
  CHECK(d0_constant(q11, 1, 0.5).value < d0_constant(qpsi_B, 1, 0.5).value);
  HomFn qe = [](const Vec&, const Vec& xi) { return std::sqrt(1.0 + xi.squaredNorm()); };
  HomFn qe11 = [&](const Vec& s, const Vec& xi) { return 1.1 * qe(s, xi); };
  auto H = [](double r) { return r <= 2.5 ? 1.0 : 0.0; };
  CHECK(c0_constant(qe11, H, 2.5, 1).value < c0_constant(qe, H, 2.5, 1).value);
}

TEST_CASE("remainder exponents") {
  auto r1 = remainder_exponents({2, 1, 1});
  CHECK(r1.eps == doctest::Approx(0.5));
  CHECK(r1.remainder_exp == doctest::Approx(0.5));
  CHECK(r1.n_star == doctest::Approx(1.0));
  auto r2 = remainder_exponents({1, 2, 1});
  CHECK(r2.eps == doctest::Approx(0.5));
  CHECK(r2.remainder_exp == doctest::Approx(0.5));
  auto r3 = remainder_exponents({1, 4, 3});
  CHECK(r3.eps == doctest::Approx(0.25));
  CHECK(r3.remainder_exp == doctest::Approx(2.75));
  // ratio 4 exceeds 1 + 1/n, so n/m - 1/mu dominates n/mu
  CHECK(3.0 / 1.0 - 1.0 / 4.0 > 3.0 / 4.0);
  try {
    remainder_exponents({1, 1, 1});
    FAIL("expected EqualOrders");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EqualOrders);
  }
}

TEST_CASE("remainder order boundary as an arithmetic identity") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int k = 0; k < 2000; ++k) {
    const int n = 1 + k % 3;
    const double m = u(rng), mu = u(rng);
    if (m == mu) continue;
    auto r = remainder_exponents({m, mu, n});
    CHECK(r.eps > 0);
    CHECK(n / std::min(m, mu) > r.remainder_exp);
    if (m < mu) {
      const bool boundary = mu / m <= 1.0 + 1.0 / n;
      CHECK(boundary == (n / m - 1.0 / mu <= n / mu + 1e-12));
      if (boundary) CHECK(r.remainder_exp == doctest::Approx(n / mu));
    } else {
      const bool boundary = m / mu <= 1.0 + 1.0 / n;
      CHECK(boundary == (n / mu - 1.0 / m <= n / m + 1e-12));
      if (boundary) CHECK(r.remainder_exp == doctest::Approx(n / m));
    }
  }
}
