#include <doctest.h>

#include <cmath>
#include <random>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "sgw/tauberian.hpp"

using namespace sgw;

namespace {

SpectrumDataset sqrt_spectrum(long count, const std::string& id = "synthetic") {
  SpectrumDataset d;
  d.model_id = id;
  for (long j = 1; j <= count; ++j) d.etas.push_back(std::sqrt(static_cast<double>(j)));
  d.basis_dim = static_cast<int>(count);
  d.trusted_count = d.basis_dim;
  return d;
}

}  // namespace

TEST_CASE("window structure") {
  for (double T : {0.2, 8.0}) {
    const TauberWindow w = make_window(T);
    CHECK(w.psi(0.0) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(w.psi(T) == 0.0);
    CHECK(w.grid_psi().front() == 0.0);
    CHECK(w.grid_psi().back() == 0.0);
    const auto& g = w.grid_psi();
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(g[g.size() - 1 - i]).epsilon(1e-14));
    for (double tau : {0.0, 1.0, 10.0 / T, 1e3 / T, 1e5 / T, 1e7}) CHECK(w.psi_hat(tau) >= 0.0);
    CHECK(w.psi_hat(0.0) > 0.0);

    QuadOptions q;
    q.abs_tol = 1e-12;
    q.rel_tol = 1e-12;
    const double mass = 2.0 * integrate([&](double s) { return w.psi_hat(s); }, 0.0, w.tail_cut(), q).value;
    CHECK(std::abs(mass - two_pi) <= 1e-6);
    CHECK(w.psi_hat(w.tail_cut() * 1.05) < 1e-14 * w.psi_hat(0.0));
    CHECK(w.margin(1e-6) < w.margin(1e-10));
    CHECK(w.margin(1e-10) <= w.tail_cut());
  }
}

TEST_CASE("psi_hat against independent transforms") {
  const double T = 8.0;
  const TauberWindow w = make_window(T);
  boost::math::quadrature::tanh_sinh<double> ts;
  for (double tau : {0.0, 0.7, 3.0, 9.5}) {
    // chi_hat by tanh-sinh on the support
    const double c = ts.integrate([&](double t) { return w.chi(t) * std::cos(tau * t); }, -T / 2, T / 2);
    CHECK(w.chi_hat(tau) == doctest::Approx(c).epsilon(1e-10));
    // psi_hat from the convolved psi on its uniform grid (trapezoid is
    // spectrally accurate for smooth compactly supported integrands)
    const auto& t = w.grid_t();
    const auto& p = w.grid_psi();
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += p[i] * std::cos(tau * t[i]);
    s *= t[1] - t[0];
    CHECK(std::abs(s - w.psi_hat(tau)) <= 1e-10 * w.psi_hat(0.0));
  }
}

TEST_CASE("smoothed counts") {
  const TauberWindow w = make_window(8.0);
  SpectrumDataset one;
  one.model_id = "single";
  one.etas = {50.0, 1000.0};
  one.trusted_count = 2;
  CHECK(smoothed_count(one, w, 50.0) == doctest::Approx(w.psi_hat(0.0)).epsilon(1e-14));

  const SpectrumDataset d = sqrt_spectrum(40000);
  const double s = smoothed_count(d, w, 100.0);
  CHECK(std::abs(s - 4 * pi * 100) <= 0.02 * 4 * pi * 100);
  // brute-force sum over the whole spectrum, no truncation
  double brute = 0;
  for (double e : d.etas) brute += w.psi_hat(100.0 - e);
  CHECK(s == doctest::Approx(brute).epsilon(1e-12));
  CHECK(smoothed_count(d, w, -50.0) <= 1e-10);
  CHECK_THROWS_AS(smoothed_count(d, w, 199.0), Error);

  // modulus of continuity against sum |psi_hat'| over the window
  double dmax = 0;
  for (double tau = 0; tau <= w.tail_cut(); tau += 0.01)
    dmax = std::max(dmax, std::abs(w.psi_hat(tau + 1e-4) - w.psi_hat(tau - 1e-4)) / 2e-4);
  const CountingFunction cf(d);
  for (double l : {60.0, 87.3, 120.0}) {
    const double delta = 1e-3;
    const long inwin = window_count(cf, l, w.tail_cut() + delta, 1, 0.5).count;
    CHECK(std::abs(smoothed_count(d, w, l + delta) - smoothed_count(d, w, l)) <= delta * dmax * inwin);
  }
}

TEST_CASE("tauber_recover on a synthetic staircase") {
  const TauberWindow w = make_window(8.0);
  const SpectrumDataset d = sqrt_spectrum(250000);
  const CountingFunction cf(d);
  std::vector<double> grid;
  for (double l = 20; l <= 200; l += 10) grid.push_back(l);
  const auto samples = smoothed_samples(d, w, grid);
  TauberOptions opt;
  opt.count_lo = 25;
  opt.count_hi = 200;
  const TauberRecovery r = tauber_recover(samples, cf, two_pi, 1, 0.5, opt);
  CHECK(r.verified);
  CHECK(r.max_rel_dev <= 0.02);
  CHECK(r.n_star == 1.0);
  CHECK(r.residual_slope <= 1.1);
  try {
    tauber_recover(samples, cf, 1.2 * two_pi, 1, 0.5, opt);
    FAIL("expected HypothesisFailed");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::HypothesisFailed);
    CHECK(std::string(e.what()).find("(a)") != std::string::npos);
  }
  opt.throw_on_failure = false;
  CHECK_FALSE(tauber_recover(samples, cf, 1.2 * two_pi, 1, 0.5, opt).verified);
}

TEST_CASE("window counts and the window-count constant") {
  const SpectrumDataset d = sqrt_spectrum(40000);
  const CountingFunction cf(d);
  const WindowCount w = window_count(cf, 100.0, 1.0, 1, 0.5);
  // j with 99 <= sqrt j <= 101: 101^2 - 99^2 + 1 integers (both ends are squares)
  CHECK(w.count == 101 * 101 - 99 * 99 + 1);
  CHECK(w.bound_constant == doctest::Approx(w.count / (4.0 * 101.0)));
  CHECK(window_count(cf, 100.0, 0.0, 1, 0.5).count == 1);
  CHECK(window_count(cf, 100.5, 0.0, 1, 0.5).count == 0);
  CHECK_THROWS_AS(window_count(cf, 199.5, 1.0, 1, 0.5), Error);

  const WindowBound b = window_count_bound(cf, 10.0, 190.0, 19, {0.5, 1.0, 2.0, 4.0}, 1, 0.5);
  CHECK(b.stable);
  CHECK(b.C_doubled >= b.C);

  SpectrumDataset dup;
  dup.etas = {1.0, 2.0, 2.0, 2.0, 3.0, 9.0};
  dup.trusted_count = 6;
  CHECK(window_count(CountingFunction(dup), 2.0, 0.0, 1, 0.5).count == 3);
}

TEST_CASE("monotone comparison used by the Tauberian argument") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  SpectrumDataset d;
  for (int i = 0; i < 3000; ++i) d.etas.push_back(u(rng));
  std::sort(d.etas.begin(), d.etas.end());
  d.trusted_count = 3000;
  const CountingFunction N(d);
  for (int k = 0; k < 500; ++k) {
    const double l = 10 + 0.8 * u(rng) * 0.9, tau = 0.1 * u(rng) - 5.0;
    CHECK(N(l + std::abs(tau)) - N(l - std::abs(tau)) >= std::abs(N(l - tau) - N(l)));
  }
}

TEST_CASE("trace cross-check on an exact Weyl spectrum") {
  const TauberWindow w = make_window(8.0);
  const SpectrumDataset d = sqrt_spectrum(40000, "weyl");
  const TracePrediction pred{"weyl", [](double l) { return 4 * pi * l; }};
  const TraceReport r = trace_crosscheck(d, w, pred, {40.0, 80.0, 160.0});
  for (const auto& row : r.rows) CHECK(row.rel_dev <= 0.02);
  const TracePrediction off{"weyl", [](double l) { return 4 * pi * l + 10.0; }};
  const TraceReport ro = trace_crosscheck(d, w, off, {40.0, 80.0, 160.0});
  CHECK(ro.decreasing);
  CHECK(ro.deviation_slope == doctest::Approx(-1.0).epsilon(0.01));
  CHECK_THROWS_AS(trace_crosscheck(d, w, TracePrediction{"other", pred.value}, {40.0}), Error);
  const std::string csv = trace_csv(r);
  CHECK(csv.rfind("lambda,smoothed,predicted,rel_dev\n", 0) == 0);
}
