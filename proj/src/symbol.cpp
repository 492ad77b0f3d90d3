#include "sgw/symbol.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace sgw {

Vec vec1(double a) {
  Vec v(1);
  v << a;
  return v;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// ---------------------------------------------------------------------------
// PowerWeight

namespace {

double quad_form(const PowerWeight& w, const Vec& y) {
  double u = w.c;
  for (int i = 0; i < y.size(); ++i) u += w.d[i] * y[i] * y[i];
  return u;
}

}  // namespace

double PowerWeight::value(const Vec& y) const {
  if (p == 0.0) return 1.0;
  const double u = quad_form(*this, y);
  if (p == 2.0) return u;
  return std::pow(u, 0.5 * p);
}

Vec PowerWeight::gradient(const Vec& y) const {
  Vec g = Vec::Zero(y.size());
  if (p == 0.0) return g;
  const double u = quad_form(*this, y);
  const double f = p * std::pow(u, 0.5 * p - 1.0);
  for (int i = 0; i < y.size(); ++i) g[i] = f * d[i] * y[i];
  return g;
}

Mat PowerWeight::hessian(const Vec& y) const {
  const int n = static_cast<int>(y.size());
  Mat h = Mat::Zero(n, n);
  if (p == 0.0) return h;
  const double u = quad_form(*this, y);
  const double f1 = p * std::pow(u, 0.5 * p - 1.0);
  const double f2 = p * (p - 2.0) * std::pow(u, 0.5 * p - 2.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      h(i, j) = (i == j ? f1 * d[i] : 0.0) + f2 * d[i] * y[i] * d[j] * y[j];
  return h;
}

double PowerWeight::partial(const Vec& y, const MultiIndex& a) const {
  const int k = order_of(a);
  if (k == 0) return value(y);
  if (k == 1) return gradient(y)[a[0] == 1 ? 0 : 1];
  const Mat h = hessian(y);
  if (a[0] == 2) return h(0, 0);
  if (a[1] == 2) return h(1, 1);
  return h(0, 1);
}

// ---------------------------------------------------------------------------
// Symbol models

SymbolDerivs SymbolModel::derivs(const Vec& x, const Vec& xi) const {
  SGSymbol s(OrderPair{0, 0, dim()}, std::shared_ptr<const SymbolModel>(this, [](const SymbolModel*) {}));
  const int n = dim();
  SymbolDerivs d;
  d.v = value(x, xi);
  d.gx = Vec::Zero(n);
  d.gxi = Vec::Zero(n);
  d.xx = Mat::Zero(n, n);
  d.xxi = Mat::Zero(n, n);
  d.xixi = Mat::Zero(n, n);
  auto unit = [](int i) { return i == 0 ? MultiIndex{1, 0} : MultiIndex{0, 1}; };
  auto add = [](MultiIndex a, MultiIndex b) { return MultiIndex{a[0] + b[0], a[1] + b[1]}; };
  const MultiIndex z{0, 0};
  for (int i = 0; i < n; ++i) {
    d.gx[i] = s.partial(x, xi, z, unit(i));
    d.gxi[i] = s.partial(x, xi, unit(i), z);
    for (int j = 0; j < n; ++j) {
      d.xx(i, j) = s.partial(x, xi, z, add(unit(i), unit(j)));
      d.xixi(i, j) = s.partial(x, xi, add(unit(i), unit(j)), z);
      d.xxi(i, j) = s.partial(x, xi, unit(j), unit(i));
    }
  }
  return d;
}

ProductSymbol::ProductSymbol(int n, std::vector<Term> terms, std::string name)
    : n_(n), terms_(std::move(terms)), name_(std::move(name)) {
  if (n_ < 1 || n_ > 2) throw Error(Errc::InvalidArgument, "ProductSymbol supports n = 1, 2");
}

double ProductSymbol::value(const Vec& x, const Vec& xi) const {
  double s = 0;
  for (const auto& t : terms_) s += t.coeff * t.fx.value(x) * t.fxi.value(xi);
  return s;
}

std::optional<double> ProductSymbol::partial(const Vec& x, const Vec& xi, const MultiIndex& alpha,
                                             const MultiIndex& beta) const {
  if (order_of(alpha) > 2 || order_of(beta) > 2) return std::nullopt;
  double s = 0;
  for (const auto& t : terms_) s += t.coeff * t.fx.partial(x, beta) * t.fxi.partial(xi, alpha);
  return s;
}

SymbolDerivs ProductSymbol::derivs(const Vec& x, const Vec& xi) const {
  SymbolDerivs d;
  d.v = 0;
  d.gx = Vec::Zero(n_);
  d.gxi = Vec::Zero(n_);
  d.xx = Mat::Zero(n_, n_);
  d.xxi = Mat::Zero(n_, n_);
  d.xixi = Mat::Zero(n_, n_);
  for (const auto& t : terms_) {
    const double f = t.fx.value(x), g = t.fxi.value(xi);
    const Vec fg = t.fx.gradient(x), gg = t.fxi.gradient(xi);
    d.v += t.coeff * f * g;
    d.gx += t.coeff * g * fg;
    d.gxi += t.coeff * f * gg;
    d.xx += t.coeff * g * t.fx.hessian(x);
    d.xixi += t.coeff * f * t.fxi.hessian(xi);
    d.xxi += t.coeff * fg * gg.transpose();
  }
  return d;
}

std::shared_ptr<ProductSymbol> ProductSymbol::scaled(double s) const {
  auto terms = terms_;
  for (auto& t : terms) t.coeff *= s;
  return std::make_shared<ProductSymbol>(n_, std::move(terms), name_);
}

SGSymbol SGSymbol::from_function(OrderPair order, FunctionSymbol::Fn f, std::string name) {
  return SGSymbol(order, std::make_shared<FunctionSymbol>(order.n, std::move(f), std::move(name)));
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

// Tensor product of 1-D fourth-order central stencils; slot k < n is xi_k,
// slot n + k is x_k.
double fd_tensor(const SymbolModel& m, const Vec& x, const Vec& xi, const MultiIndex& alpha,
                 const MultiIndex& beta, double h0) {
  const int n = m.dim();
  struct Slot {
    bool is_x;
    int coord;
    int order;
    double h;
  };
  std::vector<Slot> slots;
  // steps follow the SG scale of the whole point, not of one coordinate
  const double sx = 1.0 + x.norm(), sxi = 1.0 + xi.norm();
  for (int k = 0; k < n; ++k)
    if (alpha[k] > 0) slots.push_back({false, k, alpha[k], h0 * sxi});
  for (int k = 0; k < n; ++k)
    if (beta[k] > 0) slots.push_back({true, k, beta[k], h0 * sx});
  for (const auto& s : slots)
    if (s.order > 2) throw Error(Errc::DerivativeUnavailable, "finite differences limited to order 2 per coordinate");

  static const double d1w[5] = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  static const double d2w[5] = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};

  std::function<double(std::size_t, Vec&, Vec&)> rec = [&](std::size_t i, Vec& xx, Vec& xxi) -> double {
    if (i == slots.size()) return m.value(xx, xxi);
    const Slot& s = slots[i];
    const double* w = s.order == 1 ? d1w : d2w;
    double& c = s.is_x ? xx[s.coord] : xxi[s.coord];
    const double c0 = c;
    double acc = 0;
    for (int j = 0; j < 5; ++j) {
      if (w[j] == 0.0) continue;
      c = c0 + (j - 2) * s.h;
      acc += w[j] * rec(i + 1, xx, xxi);
    }
    c = c0;
    return acc / std::pow(s.h, s.order);
  };
  Vec xx = x, xxi = xi;
  return rec(0, xx, xxi);
}

double fd_step(int total_order) {
  switch (total_order) {
    case 0:
    case 1: return 1e-4;
    case 2: return 1e-3;
    case 3: return 3e-3;
    default: return 1e-2;
  }
}

}  // namespace

double SGSymbol::fd_partial(const Vec& x, const Vec& xi, const MultiIndex& alpha, const MultiIndex& beta) const {
  const int k = order_of(alpha) + order_of(beta);
  if (k == 0) return value(x, xi);
  const double h = fd_step(k);
  const double a = fd_tensor(*model_, x, xi, alpha, beta, h);
  const double b = fd_tensor(*model_, x, xi, alpha, beta, 2 * h);
  // SG-natural size of this derivative; differences far below it are noise
  const double scale = std::abs(value(x, xi)) * std::pow(1.0 + x.norm(), -order_of(beta)) *
                       std::pow(1.0 + xi.norm(), -order_of(alpha));
  if (std::abs(a - b) > 1e-3 * std::max(std::abs(a), std::abs(b)) + 1e-6 * scale) {
    std::ostringstream os;
    os << "finite differences disagree across steps (" << a << " vs " << b << ")";
    throw Error(Errc::DerivativeUnstable, os.str());
  }
  return a;
}

double SGSymbol::partial(const Vec& x, const Vec& xi, const MultiIndex& alpha, const MultiIndex& beta) const {
  if (auto v = model_->partial(x, xi, alpha, beta)) return *v;
  return fd_partial(x, xi, alpha, beta);
}

// ---------------------------------------------------------------------------
// Probe grid

ProbeGrid ProbeGrid::standard(int n, double rmax) {
  ProbeGrid g;
  g.n = n;
  g.radii.push_back(0.0);
  for (double r = 1.0; r <= rmax * (1 + 1e-12); r *= 2.0) g.radii.push_back(r);
  g.directions = 32;
  return g;
}

std::vector<Vec> ProbeGrid::shell(double r) const {
  std::vector<Vec> pts;
  if (n == 1) {
    pts.push_back(vec1(r));
    if (r > 0) pts.push_back(vec1(-r));
    return pts;
  }
  if (r == 0) {
    pts.push_back(vec2(0, 0));
    return pts;
  }
  for (int k = 0; k < directions; ++k) {
    const double th = two_pi * k / directions;
    pts.push_back(vec2(r * std::cos(th), r * std::sin(th)));
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Orders and ellipticity

namespace {

std::vector<MultiIndex> indices_upto2(int n) {
  std::vector<MultiIndex> out;
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; b <= 2 - a; ++b) {
      if (n == 1 && b > 0) continue;
      out.push_back({a, b});
    }
  return out;
}

double weight_pow(const Vec& y, double p) {
  double s = 1.0;
  for (int i = 0; i < y.size(); ++i) s += y[i] * y[i];
  return std::pow(s, 0.5 * p);
}

double snap_order(double slope) { return std::ceil(24.0 * (slope - 0.02)) / 24.0; }

}  // namespace

OrderEstimate estimate_order(const SGSymbol& p, const ProbeGrid& grid) {
  const int n = grid.n;
  const auto idx = indices_upto2(n);
  const std::size_t R = grid.radii.size();
  if (R < 4) throw Error(Errc::InsufficientData, "probe grid needs at least four shells");
  std::vector<std::vector<Vec>> shells(R);
  for (std::size_t i = 0; i < R; ++i) shells[i] = grid.shell(grid.radii[i]);

  // G[a][b][i][j]: max over directions of |D^a_xi D^b_x p| <xi>^|a| <x>^|b|
  // at |x| = r_i, |xi| = r_j.
  struct Table {
    MultiIndex a, b;
    std::vector<double> g;  // R*R
  };
  std::vector<Table> tables;
  for (const auto& a : idx)
    for (const auto& b : idx) {
      Table t{a, b, std::vector<double>(R * R, 0.0)};
      for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < R; ++j) {
          double mx = 0;
          for (const auto& x : shells[i])
            for (const auto& xi : shells[j]) {
              const double d = std::abs(p.partial(x, xi, a, b));
              const double q = d * weight_pow(xi, order_of(a)) * weight_pow(x, order_of(b));
              // values at difference-noise level relative to |p| count as zero
              if (q > 1e-9 * std::abs(p(x, xi))) mx = std::max(mx, q);
            }
          t.g[i * R + j] = mx;
        }
      tables.push_back(std::move(t));
    }

  double m_hat = -1e300, mu_hat = -1e300;
  std::vector<double> lx(3), ly(3);
  for (const auto& t : tables) {
    double scale = 0;
    for (double v : t.g) scale = std::max(scale, v);
    if (scale == 0) continue;
    for (std::size_t i = 0; i < R; ++i) {
      bool ok = true;
      for (int k = 0; k < 3; ++k) {
        const double v = t.g[i * R + (R - 3 + k)];
        if (!(v > 1e-12 * scale)) ok = false;
        lx[k] = std::log(jbr(grid.radii[R - 3 + k]));
        ly[k] = ok ? std::log(v) : 0.0;
      }
      if (ok) m_hat = std::max(m_hat, fit_line(lx, ly).slope);
    }
    for (std::size_t j = 0; j < R; ++j) {
      bool ok = true;
      for (int k = 0; k < 3; ++k) {
        const double v = t.g[(R - 3 + k) * R + j];
        if (!(v > 1e-12 * scale)) ok = false;
        lx[k] = std::log(jbr(grid.radii[R - 3 + k]));
        ly[k] = ok ? std::log(v) : 0.0;
      }
      if (ok) mu_hat = std::max(mu_hat, fit_line(lx, ly).slope);
    }
  }
  if (m_hat < -1e299) m_hat = 0;
  if (mu_hat < -1e299) mu_hat = 0;

  OrderEstimate est;
  est.order = OrderPair{snap_order(m_hat), snap_order(mu_hat), n};
  for (const auto& t : tables) {
    const int ka = order_of(t.a), kb = order_of(t.b);
    double c = 0;
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < R; ++j) {
        const double wx = std::pow(jbr(grid.radii[i]), est.order.mu);
        const double wxi = std::pow(jbr(grid.radii[j]), est.order.m);
        c = std::max(c, t.g[i * R + j] / (wx * wxi));
      }
    est.constants(ka, kb) = std::max(est.constants(ka, kb), c);
  }
  return est;
}

EllipticityBounds check_ellipticity(const SGSymbol& q, const OrderPair& order, const ProbeGrid& grid) {
  const std::size_t R = grid.radii.size();
  std::vector<std::vector<Vec>> shells(R);
  for (std::size_t i = 0; i < R; ++i) shells[i] = grid.shell(grid.radii[i]);
  // Directions per shell are index-aligned (same angle list), so a fixed
  // direction index traces a ray across shells.
  auto point = [&](std::size_t shell, std::size_t dir) -> const Vec& {
    const auto& s = shells[shell];
    return s[std::min(dir, s.size() - 1)];
  };
  const std::size_t D = shells.back().size();
  std::vector<double> ratio(R * D * R * D);
  double A = 1.0;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t di = 0; di < D; ++di)
      for (std::size_t j = 0; j < R; ++j)
        for (std::size_t dj = 0; dj < D; ++dj) {
          const Vec& x = point(i, di);
          const Vec& xi = point(j, dj);
          const double v = q(x, xi);
          if (!(v > 0) || !std::isfinite(v)) {
            std::ostringstream os;
            os << "symbol not positive at |x| = " << grid.radii[i] << ", |xi| = " << grid.radii[j];
            throw Error(Errc::NotElliptic, os.str());
          }
          const double w = weight_pow(x, order.mu) * weight_pow(xi, order.m);
          const double r = std::max(v / w, w / v);
          ratio[((i * D + di) * R + j) * D + dj] = r;
          A = std::max(A, r);
        }
  auto grows = [](double a, double b, double c) { return b > 1.5 * a && c > 1.5 * b; };
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t di = 0; di < D; ++di)
      for (std::size_t dj = 0; dj < D; ++dj) {
        auto at = [&](std::size_t j) { return ratio[((i * D + di) * R + j) * D + dj]; };
        if (grows(at(R - 3), at(R - 2), at(R - 1)))
          throw Error(Errc::NotElliptic, "weight ratio unbounded along a xi-shell sequence");
      }
  for (std::size_t j = 0; j < R; ++j)
    for (std::size_t dj = 0; dj < D; ++dj)
      for (std::size_t di = 0; di < D; ++di) {
        auto at = [&](std::size_t i) { return ratio[((i * D + di) * R + j) * D + dj]; };
        if (grows(at(R - 3), at(R - 2), at(R - 1)))
          throw Error(Errc::NotElliptic, "weight ratio unbounded along an x-shell sequence");
      }
  EllipticityBounds b;
  b.A = A;
  b.R = 0.0;
  return b;
}

// ---------------------------------------------------------------------------
// Principal triples

namespace {

Vec scaled(const Vec& v, double s) { return v * s; }

double richardson3(double f1, double f2, double f4) { return (f1 - 6.0 * f2 + 8.0 * f4) / 3.0; }

std::vector<std::pair<Vec, Vec>> off_axis_samples(int n) {
  std::vector<std::pair<Vec, Vec>> out;
  const double rs[] = {0.5, 1.0, 3.0, 10.0, 100.0};
  for (double rx : rs)
    for (double rxi : rs)
      for (int k = 0; k < (n == 1 ? 2 : 6); ++k) {
        if (n == 1) {
          const double sx = (k & 1) ? -1.0 : 1.0;
          out.emplace_back(vec1(sx * rx), vec1((k == 0 ? 1.0 : -1.0) * rxi));
          out.emplace_back(vec1(-sx * rx), vec1((k == 0 ? 1.0 : -1.0) * rxi));
        } else {
          const double a = 0.7 + 1.1 * k, b = 2.3 * k + 0.4;
          out.emplace_back(vec2(rx * std::cos(a), rx * std::sin(a)), vec2(rxi * std::cos(b), rxi * std::sin(b)));
        }
      }
  return out;
}

}  // namespace

double limit_x_ray(const HomFn& f, double degree, const Vec& x, const Vec& xi) {
  const double s = 1e4;
  auto g = [&](double t) { return f(scaled(x, t), xi) * std::pow(t, -degree); };
  return richardson3(g(s), g(2 * s), g(4 * s));
}

double limit_xi_ray(const HomFn& f, double degree, const Vec& x, const Vec& xi) {
  const double s = 1e4;
  auto g = [&](double t) { return f(x, scaled(xi, t)) * std::pow(t, -degree); };
  return richardson3(g(s), g(2 * s), g(4 * s));
}

PrincipalTriple principal_triple(const ClassicalSpec& spec) {
  if (!spec.psi || !spec.e) throw Error(Errc::InvalidArgument, "principal_triple needs psi and e");
  PrincipalTriple t;
  t.n = spec.n;
  t.m = spec.m;
  t.mu = spec.mu;
  t.psi = spec.psi;
  t.e = spec.e;
  for (const auto& [x, xi] : off_axis_samples(spec.n)) {
    const double a = limit_x_ray(spec.psi, spec.mu, x, xi);  // sigma_e(sigma_psi p)
    const double b = limit_xi_ray(spec.e, spec.m, x, xi);    // sigma_psi(sigma_e p)
    const double scale = std::max(std::abs(a), std::abs(b));
    if (!(scale > 0) || std::abs(a - b) > 1e-8 * scale) {
      std::ostringstream os;
      os << "corner limits disagree: " << a << " vs " << b;
      throw Error(Errc::CompatibilityViolation, os.str());
    }
    if (spec.psie) {
      const double c = spec.psie(x, xi);
      if (std::abs(c - a) > 1e-8 * scale)
        throw Error(Errc::CompatibilityViolation, "supplied psie does not match the ray limits");
    }
  }
  if (spec.psie) {
    t.psie = spec.psie;
  } else {
    auto psi = spec.psi;
    const double mu = spec.mu;
    t.psie = [psi, mu](const Vec& x, const Vec& xi) { return limit_x_ray(psi, mu, x, xi); };
  }
  return t;
}

PrincipalTriple power_triple(const PrincipalTriple& t, double s) {
  if (!(s > 0)) throw Error(Errc::InvalidArgument, "power_triple needs s > 0");
  for (const auto& [x, xi] : off_axis_samples(t.n)) {
    if (!(t.psi(x, xi) > 0) || !(t.e(x, xi) > 0) || !(t.psie(x, xi) > 0))
      throw Error(Errc::NonPositiveComponent, "triple component not positive off its zero set");
  }
  PrincipalTriple r;
  r.n = t.n;
  r.m = t.m * s;
  r.mu = t.mu * s;
  auto pw = [s](HomFn f) { return [f, s](const Vec& x, const Vec& xi) { return std::pow(f(x, xi), s); }; };
  r.psi = pw(t.psi);
  r.e = pw(t.e);
  r.psie = pw(t.psie);
  return r;
}

PrincipalTriple scale_triple(const PrincipalTriple& t, double s) {
  PrincipalTriple r = t;
  auto sc = [s](HomFn f) { return [f, s](const Vec& x, const Vec& xi) { return s * f(x, xi); }; };
  r.psi = sc(t.psi);
  r.e = sc(t.e);
  r.psie = sc(t.psie);
  return r;
}

namespace {

template <class Eval>
double homogeneity_defect(int n, int samples, unsigned seed, Eval eval) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10.0, 10.0), r(0.1, 10.0), ang(0.0, two_pi);
  double worst = 0;
  for (int k = 0; k < samples; ++k) {
    Vec x(n), dir(n);
    for (int i = 0; i < n; ++i) x[i] = u(rng);
    if (n == 1) {
      dir[0] = u(rng) < 0 ? -1.0 : 1.0;
    } else {
      const double a = ang(rng);
      dir << std::cos(a), std::sin(a);
    }
    worst = std::max(worst, eval(x, Vec(dir * r(rng))));
  }
  return worst;
}

}  // namespace

double homogeneity_defect_psi(const PrincipalTriple& t, double s, int samples, unsigned seed) {
  return homogeneity_defect(t.n, samples, seed, [&](const Vec& x, const Vec& xi) {
    const double a = t.psi(x, s * xi), b = std::pow(s, t.m) * t.psi(x, xi);
    return std::abs(a - b) / std::abs(b);
  });
}

double homogeneity_defect_e(const PrincipalTriple& t, double s, int samples, unsigned seed) {
  return homogeneity_defect(t.n, samples, seed, [&](const Vec& xi, const Vec& x) {
    const double a = t.e(s * x, xi), b = std::pow(s, t.mu) * t.e(x, xi);
    return std::abs(a - b) / std::abs(b);
  });
}

// ---------------------------------------------------------------------------
// Cutoffs

CutoffConfig CutoffConfig::defaults(double A, double C, double m, double T) {
  CutoffConfig c;
  c.A = A;
  c.C = C;
  c.m = m;
  c.T = T;
  c.B = 1.0;
  c.eps = 0.4;
  c.k0 = 0.5;
  c.k1 = 1.25 * 4.0 * A * C;
  c.k2 = 1.25 * std::max(c.B, 1.0);
  c.lambda0 = 1.25 * 2.0 * c.k1 * std::pow(jbr(2.0 * c.k2), m);
  c.kappa = c.kappa_exact();
  return c;
}

double CutoffConfig::kappa_exact() const { return (1.0 - eps / 2.0) / (A * std::pow(2.0 * k2, m)); }

void CutoffConfig::validate() const {
  std::vector<std::string> bad;
  if (!(B > 0)) bad.push_back("B > 0");
  if (!(k1 > 4.0 * A * C)) bad.push_back("k1 > 4AC");
  if (!(k2 > std::max(B, 1.0))) bad.push_back("k2 > max(B, 1)");
  if (!(eps > 0 && eps < 0.5)) bad.push_back("eps in (0, 1/2)");
  if (!(lambda0 > 2.0 * k1 * std::pow(jbr(2.0 * k2), m))) bad.push_back("lambda0 > 2 k1 <2 k2>^m");
  if (!(k0 > 0 && k0 < 1)) bad.push_back("k0 in (0, 1)");
  if (!(T > 0)) bad.push_back("T > 0");
  if (!(A >= 1)) bad.push_back("A >= 1");
  if (std::abs(kappa - kappa_exact()) > 1e-12 * kappa_exact()) bad.push_back("kappa = (1 - eps/2) / (A (2 k2)^m)");
  if (!bad.empty()) {
    std::string msg = "violated:";
    for (const auto& s : bad) msg += " [" + s + "]";
    throw Error(Errc::ConfigInvariantViolated, msg);
  }
}

SmoothCutoff::SmoothCutoff(CutoffKind kind, const CutoffConfig& cfg)
    : kind_(kind), B_(cfg.B), k1_(cfg.k1), k2_(cfg.k2), eps_(cfg.eps) {}

template <class J>
J SmoothCutoff::eval(J u) const {
  using std::abs;
  const J a = abs(u);
  switch (kind_) {
    case CutoffKind::omega:
      return smooth_step((a - J(B_)) / J(B_));
    case CutoffKind::H1: {
      if (u <= J(0.0)) return J(0.0);
      const double lo = 1.0 / (2.0 * k1_), hi = 1.0 / k1_;
      const J rise = smooth_step((u - J(lo)) / J(hi - lo));
      const J fall = J(1.0) - smooth_step((u - J(k1_)) / J(k1_));
      return rise * fall;
    }
    case CutoffKind::H2:
      return J(1.0) - smooth_step((a - J(k2_)) / J(k2_));
    case CutoffKind::H3:
      return J(1.0) - smooth_step((a - J(1.5 * eps_)) / J(0.5 * eps_));
  }
  return J(0.0);
}

template Jet2 SmoothCutoff::eval(Jet2) const;
template double SmoothCutoff::eval(double) const;

CutoffSet make_cutoffs(const CutoffConfig& cfg) {
  cfg.validate();
  return CutoffSet{SmoothCutoff(CutoffKind::omega, cfg), SmoothCutoff(CutoffKind::H1, cfg),
                   SmoothCutoff(CutoffKind::H2, cfg), SmoothCutoff(CutoffKind::H3, cfg)};
}

// ---------------------------------------------------------------------------
// Catalog

namespace {

PowerWeight bracket(double p, double d0 = 1.0, double d1 = 1.0) { return PowerWeight{1.0, p, {d0, d1}}; }
PowerWeight homog(double p, double d0 = 1.0, double d1 = 1.0) { return PowerWeight{0.0, p, {d0, d1}}; }
PowerWeight one() { return PowerWeight{1.0, 0.0, {1.0, 1.0}}; }

HomFn product_fn(PowerWeight fx, PowerWeight fxi) {
  return [fx, fxi](const Vec& x, const Vec& xi) { return fx.value(x) * fxi.value(xi); };
}

CatalogSymbol single(const std::string& id, OrderPair ord, PowerWeight fx, PowerWeight fxi,
                     std::optional<ClassicalSpec> cls) {
  auto model = std::make_shared<ProductSymbol>(ord.n, std::vector<ProductSymbol::Term>{{1.0, fx, fxi}}, id);
  return CatalogSymbol{id, SGSymbol(ord, model), std::move(cls)};
}

// Triple of <x>^mu-type times <xi>^m-type product symbols.
ClassicalSpec product_spec(int n, double m, double mu, PowerWeight fx, PowerWeight fxi) {
  PowerWeight hx = fx, hxi = fxi;
  hx.c = 0.0;
  hxi.c = 0.0;
  ClassicalSpec s;
  s.n = n;
  s.m = m;
  s.mu = mu;
  s.psi = product_fn(fx, hxi);
  s.e = product_fn(hx, fxi);
  s.psie = product_fn(hx, hxi);
  return s;
}

}  // namespace

std::vector<std::string> catalog_ids() {
  return {"model-A", "model-B", "oracle-H", "q-A", "q-B", "q-aniso-2d", "q-free", "q-potential"};
}

CatalogSymbol catalog_symbol(const std::string& id) {
  if (id == "model-A")
    return single(id, {2.0, 1.0, 1}, bracket(1.0), bracket(2.0), product_spec(1, 2.0, 1.0, bracket(1.0), bracket(2.0)));
  if (id == "model-B")
    return single(id, {1.0, 2.0, 1}, bracket(2.0), bracket(1.0), product_spec(1, 1.0, 2.0, bracket(2.0), bracket(1.0)));
  if (id == "q-A")
    return single(id, {1.0, 0.5, 1}, bracket(0.5), bracket(1.0), product_spec(1, 1.0, 0.5, bracket(0.5), bracket(1.0)));
  if (id == "q-B")
    return single(id, {0.5, 1.0, 1}, bracket(1.0), bracket(0.5), product_spec(1, 0.5, 1.0, bracket(1.0), bracket(0.5)));
  if (id == "q-aniso-2d")
    return single(id, {0.5, 1.0, 2}, bracket(1.0), bracket(0.5, 1.0, 2.0),
                  product_spec(2, 0.5, 1.0, bracket(1.0), bracket(0.5, 1.0, 2.0)));
  if (id == "q-free") return single(id, {0.5, 0.0, 1}, one(), bracket(0.5), std::nullopt);
  if (id == "q-potential") return single(id, {0.0, 1.0, 1}, bracket(1.0), one(), std::nullopt);
  if (id == "oracle-H") {
    auto model = std::make_shared<ProductSymbol>(
        1, std::vector<ProductSymbol::Term>{{1.0, homog(2.0), one()}, {1.0, one(), homog(2.0)}}, id);
    return CatalogSymbol{id, SGSymbol({2.0, 2.0, 1}, model), std::nullopt};
  }
  throw Error(Errc::ConfigInvalid, "unknown model id '" + id + "'");
}

}  // namespace sgw
