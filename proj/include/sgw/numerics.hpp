#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <queue>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "sgw/error.hpp"

namespace sgw {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Japanese bracket <x> = (1 + |x|^2)^{1/2}.
template <class T>
T jbr(const T& x) {
  using std::sqrt;
  return sqrt(T(1) + x * x);
}

// Value with first and second derivative, enough to push cutoffs through
// compositions without finite differences.
struct Jet2 {
  double v = 0, d1 = 0, d2 = 0;
  Jet2() = default;
  Jet2(double c) : v(c) {}
  Jet2(double v_, double d1_, double d2_) : v(v_), d1(d1_), d2(d2_) {}
  static Jet2 variable(double x) { return {x, 1.0, 0.0}; }
};

inline Jet2 operator+(Jet2 a, Jet2 b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
inline Jet2 operator-(Jet2 a, Jet2 b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
inline Jet2 operator-(Jet2 a) { return {-a.v, -a.d1, -a.d2}; }
inline Jet2 operator*(Jet2 a, Jet2 b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1, a.d2 * b.v + 2 * a.d1 * b.d1 + a.v * b.d2};
}
inline Jet2 operator/(Jet2 a, Jet2 b) {
  const double r = 1.0 / b.v;
  Jet2 inv{r, -b.d1 * r * r, (2 * b.d1 * b.d1 * r - b.d2) * r * r};
  return a * inv;
}
inline Jet2 exp(Jet2 a) {
  const double e = std::exp(a.v);
  return {e, e * a.d1, e * (a.d2 + a.d1 * a.d1)};
}
inline Jet2 abs(Jet2 a) { return a.v < 0 ? -a : a; }
inline bool operator<(Jet2 a, Jet2 b) { return a.v < b.v; }
inline bool operator<=(Jet2 a, Jet2 b) { return a.v <= b.v; }

// Smooth step built from g(s) = exp(-1/s): 0 for u <= 0, 1 for u >= 1.
template <class T>
T smooth_step(const T& u) {
  if (u <= T(0)) return T(0);
  if (T(1) <= u) return T(1);
  using std::exp;
  const T a = exp(T(-1) / u);
  const T b = exp(T(-1) / (T(1) - u));
  return a / (a + b);
}

struct QuadOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  std::size_t max_evals = 4'000'000;
  Errc on_budget = Errc::QuadratureNotConverged;
};

template <class T>
struct QuadResult {
  T value{};
  double error = 0;
  std::size_t evals = 0;
};

namespace detail {

template <class T>
struct Panel {
  double a, b;
  T value;
  double error;
};

template <class F>
auto gk21_panel(F& f, double a, double b) {
  using K = decltype(f(0.0));
  using rule = boost::math::quadrature::gauss_kronrod<double, 21>;
  using gauss = boost::math::quadrature::gauss<double, 10>;
  const auto& x = rule::abscissa();
  const auto& wk = rule::weights();
  const auto& wg = gauss::weights();
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  K kr = f(c) * wk[0];
  K ga{};
  for (std::size_t i = 1; i < x.size(); ++i) {
    const K s = f(c + h * x[i]) + f(c - h * x[i]);
    kr += s * wk[i];
    if (i % 2 == 1) ga += s * wg[i / 2];
  }
  using std::abs;
  return Panel<K>{a, b, kr * h, static_cast<double>(abs((kr - ga) * h))};
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod (21 point) over the union of the panels
// given by consecutive breakpoints. Works for real and complex integrands.
// The panel with the largest error is bisected until the summed error
// meets max(abs_tol, rel_tol * |I|). Deterministic for a given input.
template <class F>
auto integrate(F&& f, std::span<const double> breaks, const QuadOptions& opt = {})
    -> QuadResult<decltype(f(0.0))> {
  using K = decltype(f(0.0));
  using P = detail::Panel<K>;
  if (breaks.size() < 2) throw Error(Errc::InvalidArgument, "integrate: need two breakpoints");
  auto cmp = [](const P& l, const P& r) {
    return l.error < r.error || (l.error == r.error && l.a > r.a);
  };
  std::priority_queue<P, std::vector<P>, decltype(cmp)> open(cmp);
  std::vector<P> done;
  std::size_t evals = 0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    if (!(breaks[i + 1] > breaks[i])) continue;
    open.push(detail::gk21_panel(f, breaks[i], breaks[i + 1]));
    evals += 21;
  }
  auto totals = [&](K& v, double& e) {
    std::vector<P> all(done);
    auto copy = open;
    while (!copy.empty()) {
      all.push_back(copy.top());
      copy.pop();
    }
    std::sort(all.begin(), all.end(), [](const P& l, const P& r) { return l.a < r.a; });
    v = K{};
    e = 0;
    for (const auto& p : all) {
      v += p.value;
      e += p.error;
    }
  };
  K value{};
  double err = 0;
  totals(value, err);
  using std::abs;
  std::size_t since = 0;
  while (!open.empty()) {
    if (since >= 256) {
      totals(value, err);
      since = 0;
    }
    const double target = std::max(opt.abs_tol, opt.rel_tol * static_cast<double>(abs(value)));
    if (err <= target) break;
    if (evals >= opt.max_evals)
      throw Error(opt.on_budget, "adaptive quadrature exceeded its node budget (error " +
                                     std::to_string(err) + ", target " + std::to_string(target) + ")");
    P worst = open.top();
    open.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b) || (worst.b - worst.a) < 1e-13 * (1 + std::abs(mid))) {
      done.push_back(worst);
      continue;
    }
    P left = detail::gk21_panel(f, worst.a, mid);
    P right = detail::gk21_panel(f, mid, worst.b);
    evals += 42;
    value += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    open.push(left);
    open.push(right);
    ++since;
  }
  totals(value, err);
  return {value, err, evals};
}

template <class F>
auto integrate(F&& f, double a, double b, const QuadOptions& opt = {}) {
  const double br[2] = {a, b};
  return integrate(std::forward<F>(f), std::span<const double>(br, 2), opt);
}

// Composite 20-point Gauss-Legendre rule on [a, b] with `panels` panels.
struct FixedRule {
  std::vector<double> x, w;
};
FixedRule composite_gauss_legendre(double a, double b, int panels);

// Runs fn(i) for i in [0, n) over `threads` workers with static chunking.
// Callers write into per-index slots, so results do not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// Least-squares slope and intercept of y against x.
struct LineFit {
  double slope = 0, intercept = 0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace sgw
