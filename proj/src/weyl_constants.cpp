#include "sgw/weyl_constants.hpp"

#include <cmath>
#include <sstream>

namespace sgw {

namespace {

struct SphereRule {
  std::vector<Vec> nodes;
  double weight = 0;
};

SphereRule circle_rule(int n, int count) {
  SphereRule r;
  if (n == 1) {
    r.nodes = {vec1(1.0), vec1(-1.0)};
    r.weight = 1.0;
    return r;
  }
  for (int k = 0; k < count; ++k) {
    const double a = two_pi * (k + 0.5) / count;
    r.nodes.push_back(vec2(std::cos(a), std::sin(a)));
  }
  r.weight = two_pi / count;
  return r;
}

// Integral over both spheres at radius r, without the r^{n-1} Jacobian.
double sphere_sum(const HomFn& f, const SphereRule& sr, double r) {
  double s = 0;
  for (const auto& th : sr.nodes) {
    double inner = 0;
    for (const auto& sg : sr.nodes) inner += f(th * r, sg);
    s += inner * sr.weight;
  }
  return s * sr.weight;
}

// Doubles the trapezoid count until the sphere sums settle at probe radii.
SphereRule choose_sphere_rule(const HomFn& f, int n) {
  if (n == 1) return circle_rule(1, 2);
  int count = 16;
  for (; count <= 2048; count *= 2) {
    const auto a = circle_rule(2, count), b = circle_rule(2, 2 * count);
    bool settled = true;
    for (double r : {0.0, 0.5, 3.0, 40.0, 900.0}) {
      const double sa = sphere_sum(f, a, r), sb = sphere_sum(f, b, r);
      if (std::abs(sa - sb) > 1e-13 * std::abs(sb)) settled = false;
    }
    if (settled) return b;
  }
  throw Error(Errc::QuadratureNotConverged, "sphere trapezoid rule did not settle");
}

}  // namespace

ConstantResult sphere_bundle_integral(const HomFn& f, int n, double tol, double support) {
  if (n < 1 || n > 2) throw Error(Errc::InvalidArgument, "sphere quadrature implemented for n = 1, 2");
  const SphereRule sr = choose_sphere_rule(f, n);
  auto g = [&](double r) { return sphere_sum(f, sr, r) * (n == 2 ? r : 1.0); };
  auto ghat = [&](double r) { return sphere_sum(f, sr, r); };

  double R = 64.0;
  double tail = 0.0;
  if (support > 0) {
    R = support;
  } else {
    for (;;) {
      const double a = ghat(R), b = ghat(2 * R);
      if (a == 0 && b == 0) break;
      const double p = std::log2(a / b);
      if (!(p >= n + 0.1)) {
        std::ostringstream os;
        os << "measured decay |x|^-" << p << " is not integrable against |x|^" << (n - 1) << " dx";
        throw Error(Errc::DivergentTail, os.str());
      }
      tail = a * std::pow(R, n) / (p - n);
      if (tail < 0.1 * tol) break;
      R *= 2;
      if (R > 1e19) throw Error(Errc::QuadratureNotConverged, "radial tail did not fall below tolerance");
    }
  }
  std::vector<double> br{0.0};
  for (double r = 1.0; r < R; r *= 2) br.push_back(r);
  br.push_back(R);
  QuadOptions opt;
  opt.abs_tol = 0.5 * tol;
  opt.rel_tol = 1e-15;
  opt.on_budget = Errc::QuadratureNotConverged;
  const auto res = integrate(g, br, opt);
  return ConstantResult{res.value + tail, res.error + 0.1 * tail, ""};
}

ConstantResult d0_constant(const HomFn& q_psi, int n, double m_prime, double tol) {
  if (!(m_prime > 0)) throw Error(Errc::InvalidArgument, "d0_constant needs m' > 0");
  const double e = -n / m_prime;
  HomFn f = [&](const Vec& x, const Vec& s) { return std::pow(q_psi(x, s), e); };
  const double pref = std::pow(two_pi, -(n - 1));
  auto r = sphere_bundle_integral(f, n, tol / pref);
  r.value *= pref;
  r.error *= pref;
  r.path = "d0";
  return r;
}

ConstantResult c0_constant(const HomFn& q_e, const std::function<double(double)>& H2, double support, int n,
                           double tol) {
  HomFn f = [&](const Vec& xi, const Vec& s) {
    const double h = H2(xi.norm());
    return h == 0.0 ? 0.0 : h * std::pow(q_e(s, xi), -n);
  };
  const double pref = std::pow(two_pi, -(n - 1));
  auto r = sphere_bundle_integral(f, n, tol / pref, support);
  r.value *= pref;
  r.error *= pref;
  r.path = "c0";
  return r;
}

LeadingConstant leading_constant(const PrincipalTriple& p, const OrderPair& order, double tol) {
  const double m = order.m, mu = order.mu;
  const int n = order.n;
  if (!(m > 0 && mu > 0)) throw Error(Errc::InvalidArgument, "leading_constant needs m, mu > 0");
  if (m == mu) throw Error(Errc::EqualOrders, "m = mu is the logarithmic case");
  const double pref = std::pow(two_pi, -n);
  LeadingConstant out;
  ConstantResult direct;
  ConstantResult route;
  if (m < mu) {
    out.path = "C1";
    HomFn f = [&](const Vec& x, const Vec& w) { return std::pow(p.psi(x, w), -n / m); };
    direct = sphere_bundle_integral(f, n, tol / pref);
    // Q = P^{1/mu} has order (m/mu, 1); N_P(lambda) = N_Q(lambda^{1/mu})
    const auto q = power_triple(p, 1.0 / mu);
    route = d0_constant(q.psi, n, m / mu, tol);
  } else {
    out.path = "C2";
    // x and xi exchange roles
    HomFn f = [&](const Vec& xi, const Vec& th) { return std::pow(p.e(th, xi), -n / mu); };
    direct = sphere_bundle_integral(f, n, tol / pref);
    const auto q = power_triple(p, 1.0 / m);
    HomFn qe = [q](const Vec& xi, const Vec& th) { return q.e(th, xi); };
    route = d0_constant(qe, n, mu / m, tol);
  }
  out.direct = direct.value * pref;
  out.via_d0 = route.value / two_pi;
  out.value = out.direct;
  out.error = direct.error * pref;
  if (std::abs(out.direct - out.via_d0) > 1e-6 * std::abs(out.direct)) {
    std::ostringstream os;
    os << "direct " << out.direct << " vs d0 route " << out.via_d0;
    throw Error(Errc::PathsDisagree, os.str());
  }
  return out;
}

RemainderExponents remainder_exponents(const OrderPair& o) {
  if (!(o.m > 0 && o.mu > 0)) throw Error(Errc::InvalidArgument, "orders must be positive");
  if (o.m == o.mu) throw Error(Errc::EqualOrders, "m = mu");
  const double n = o.n;
  RemainderExponents r;
  if (o.m < o.mu) {
    r.eps = std::min(1.0 / o.mu, n * (1.0 / o.m - 1.0 / o.mu));
    r.remainder_exp = n / o.m - r.eps;
  } else {
    r.eps = std::min(1.0 / o.m, n * (1.0 / o.mu - 1.0 / o.m));
    r.remainder_exp = n / o.mu - r.eps;
  }
  r.m_prime = std::min(o.m, o.mu) / std::max(o.m, o.mu);
  r.n_star = std::min(n, n / r.m_prime - 1.0);
  return r;
}

WeylPrediction weyl_prediction(const PrincipalTriple& p, const OrderPair& order, double tol) {
  const auto lc = leading_constant(p, order, tol);
  const auto re = remainder_exponents(order);
  WeylPrediction w;
  w.leading_coeff = lc.value;
  w.leading_exp = order.n / std::min(order.m, order.mu);
  w.remainder_exp = re.remainder_exp;
  w.eps = re.eps;
  w.n_star = re.n_star;
  w.provenance = lc.path + " direct quadrature, checked against the d0 route";
  return w;
}

}  // namespace sgw
