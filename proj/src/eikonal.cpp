#include "sgw/eikonal.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include <boost/numeric/odeint.hpp>

namespace sgw {

HamiltonianFlow HamiltonianFlow::from_catalog(const std::string& id) {
  const CatalogSymbol c = catalog_symbol(id);
  HamiltonianFlow f;
  f.q = c.symbol;
  f.m = c.symbol.order().m;
  if (!(f.m >= 0 && f.m < 1) || c.symbol.order().mu != 1.0)
    throw Error(Errc::InvalidArgument, "'" + id + "' is not of order (m', 1) with 0 <= m' < 1");
  f.A = check_ellipticity(f.q, c.symbol.order(), ProbeGrid::standard(f.dim())).A;
  return f;
}

// ---------------------------------------------------------------------------
// Characteristics

namespace {

using State = std::vector<double>;

struct Layout {
  int n;
  int dx() const { return 0; }
  int p() const { return n; }
  int sigma() const { return 2 * n; }
  int jac() const { return 2 * n + 1; }  // 2n x 2n, column major
  int sxi() const { return 2 * n + 1 + 4 * n * n; }
  int size() const { return sxi() + n; }
};

Mat jac_block(const State& s, const Layout& L, int row0, int col0) {
  const int n = L.n, N = 2 * n;
  Mat b(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) b(i, j) = s[L.jac() + (col0 + j) * N + row0 + i];
  return b;
}

Vec segment(const State& s, int off, int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = s[off + i];
  return v;
}

struct Rhs {
  const SGSymbol* q;
  Layout L;
  Vec y;

  void operator()(const State& s, State& ds, double) const {
    const int n = L.n, N = 2 * n;
    const Vec X = y + segment(s, L.dx(), n);
    const Vec P = segment(s, L.p(), n);
    const SymbolDerivs d = q->derivs(X, P);
    for (int i = 0; i < n; ++i) {
      ds[L.dx() + i] = -d.gxi[i];
      ds[L.p() + i] = d.gx[i];
    }
    ds[L.sigma()] = d.v - P.dot(d.gxi);
    // [X_*; P_*]' = [[-q_xix, -q_xixi], [q_xx, q_xxi]] [X_*; P_*]
    for (int c = 0; c < N; ++c) {
      const double* col = &s[L.jac() + c * N];
      for (int i = 0; i < n; ++i) {
        double vx = 0, vp = 0;
        for (int k = 0; k < n; ++k) {
          vx -= d.xxi(k, i) * col[k] + d.xixi(i, k) * col[n + k];
          vp += d.xx(i, k) * col[k] + d.xxi(i, k) * col[n + k];
        }
        ds[L.jac() + c * N + i] = vx;
        ds[L.jac() + c * N + n + i] = vp;
      }
    }
    const Mat Xxi = jac_block(s, L, 0, n), Pxi = jac_block(s, L, n, n);
    const Vec g = Xxi.transpose() * (d.gx - d.xxi * P) - Pxi.transpose() * (d.xixi * P);
    for (int i = 0; i < n; ++i) ds[L.sxi() + i] = g[i];
  }
};

FlowSample unpack(const State& s, const Layout& L, const Vec& y, double t, const SGSymbol& q) {
  const int n = L.n;
  FlowSample f;
  f.t = t;
  f.dx = segment(s, L.dx(), n);
  f.x = y + f.dx;
  f.p = segment(s, L.p(), n);
  f.sigma = s[L.sigma()];
  f.x_y = jac_block(s, L, 0, 0);
  f.x_xi = jac_block(s, L, 0, n);
  f.p_y = jac_block(s, L, n, 0);
  f.p_xi = jac_block(s, L, n, n);
  f.s_xi_dev = segment(s, L.sxi(), n);
  f.q = q(f.x, f.p);
  return f;
}

}  // namespace

Trajectory characteristics(const HamiltonianFlow& flow, const Vec& y, const Vec& xi, std::span<const double> times,
                           const OdeOptions& opt) {
  using namespace boost::numeric::odeint;
  const int n = flow.dim();
  if (y.size() != n || xi.size() != n) throw Error(Errc::InvalidArgument, "characteristics: dimension mismatch");
  const Layout L{n};
  Trajectory tr;
  tr.y = y;
  tr.xi = xi;
  tr.samples.resize(times.size());
  const double q0 = flow.q(y, xi);

  State s0(L.size(), 0.0);
  for (int i = 0; i < n; ++i) {
    s0[L.p() + i] = xi[i];
    s0[L.jac() + i * 2 * n + i] = 1.0;
    s0[L.jac() + (n + i) * 2 * n + n + i] = 1.0;
  }
  const Rhs rhs{&flow.q, L, y};

  for (int dir : {+1, -1}) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < times.size(); ++k)
      if (dir > 0 ? times[k] >= 0 : times[k] < 0) idx.push_back(k);
    if (idx.empty()) continue;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return dir * times[a] < dir * times[b]; });
    std::vector<double> ts{0.0};
    for (auto k : idx) ts.push_back(times[k]);
    // odeint wants strictly monotone times; repeated requests share one sample
    std::vector<double> uniq{0.0};
    std::vector<std::size_t> slot(ts.size(), 0);
    for (std::size_t k = 1; k < ts.size(); ++k) {
      if (ts[k] != uniq.back()) uniq.push_back(ts[k]);
      slot[k] = uniq.size() - 1;
    }
    std::vector<State> out(uniq.size());
    std::size_t at = 0;
    State s = s0;
    if (uniq.size() > 1) {
      const double dt0 = dir * std::min(1e-3, std::abs(uniq[1]));
      integrate_times(make_dense_output(opt.abs_tol, opt.rel_tol, runge_kutta_dopri5<State>()), rhs, s, uniq.begin(),
                      uniq.end(), dt0, [&](const State& st, double) { out[at++] = st; });
    } else {
      out[0] = s0;
    }
    for (std::size_t k = 1; k < ts.size(); ++k) tr.samples[idx[k - 1]] = unpack(out[slot[k]], L, y, ts[k], flow.q);
  }
  for (const auto& f : tr.samples) tr.max_drift = std::max(tr.max_drift, std::abs(f.q - q0));
  if (!(tr.max_drift <= opt.hamiltonian_tol * std::max(1.0, q0)))
    throw Error(Errc::OdeToleranceNotMet, "Hamiltonian drift " + std::to_string(tr.max_drift));
  return tr;
}

Trajectory characteristics(const HamiltonianFlow& flow, const Vec& y, const Vec& xi, double T, int steps,
                           const OdeOptions& opt) {
  if (steps < 64) throw Error(Errc::InvalidArgument, "characteristics: steps >= 64");
  std::vector<double> ts(steps + 1);
  for (int k = 0; k <= steps; ++k) ts[k] = T * k / steps;
  return characteristics(flow, y, xi, std::span<const double>(ts), opt);
}

PhasePoint evaluate_phase(const HamiltonianFlow& flow, double t, const Vec& x, const Vec& xi,
                          const InversionOptions& opt) {
  PhasePoint pp;
  if (t == 0.0) {
    pp.dxphi = xi;
    pp.xi_grad_dev = Vec::Zero(x.size());
    pp.y = x;
    return pp;
  }
  Vec y = x;
  const double tol = 1e-12 * (1.0 + x.norm());
  const double ts[1] = {t};
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Trajectory tr = characteristics(flow, y, xi, std::span<const double>(ts, 1), opt.ode);
    const FlowSample& f = tr.samples[0];
    const double det = f.x_y.determinant();
    if (!(det >= opt.jacobian_floor))
      throw Error(Errc::FlowNotInvertible, "det X_y = " + std::to_string(det) + " at t = " + std::to_string(t));
    const Vec r = f.x - x;
    if (r.norm() <= tol) {
      // first-order transfer from the foot y to the exact foot y - X_y^{-1} r
      const Vec shift = f.x_y.inverse() * r;
      pp.phase_dev = f.phase_dev(xi) - (f.p - xi).dot(r);
      pp.dxphi = f.p - f.p_y * shift;
      pp.xi_grad_dev = f.xi_grad_dev();
      pp.y = y - shift;
      pp.jacobian = det;
      pp.iterations = it;
      return pp;
    }
    y -= f.x_y.inverse() * r;
  }
  throw Error(Errc::NewtonDiverged, "no convergence in " + std::to_string(opt.max_iter) + " Newton steps");
}

// ---------------------------------------------------------------------------
// Splines

CardinalSpline::CardinalSpline(double a, double b, int nodes) : a_(a), h_((b - a) / (nodes - 1)), n_(nodes) {
  if (nodes < 4) throw Error(Errc::InvalidArgument, "CardinalSpline: at least 4 nodes");
  const int n = nodes;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n), B = Eigen::MatrixXd::Zero(n, n);
  // not-a-knot: continuous third derivative at the second and penultimate nodes
  A(0, 0) = 1;
  A(0, 1) = -2;
  A(0, 2) = 1;
  A(n - 1, n - 3) = 1;
  A(n - 1, n - 2) = -2;
  A(n - 1, n - 1) = 1;
  const double c = 6.0 / (h_ * h_);
  for (int i = 1; i < n - 1; ++i) {
    A(i, i - 1) = 1;
    A(i, i) = 4;
    A(i, i + 1) = 1;
    B(i, i - 1) = c;
    B(i, i) = -2 * c;
    B(i, i + 1) = c;
  }
  second_ = A.partialPivLu().solve(B);
}

void CardinalSpline::weights(double u, Eigen::VectorXd& w, Eigen::VectorXd* dw) const {
  const double r = (u - a_) / h_;
  const int k = std::clamp(static_cast<int>(std::floor(r)), 0, n_ - 2);
  const double s = r - k, sb = 1.0 - s;
  const double h2 = h_ * h_ / 6.0;
  w = h2 * ((sb * sb * sb - sb) * second_.row(k) + (s * s * s - s) * second_.row(k + 1)).transpose();
  w[k] += sb;
  w[k + 1] += s;
  if (dw) {
    *dw = (h_ / 6.0) * (-(3 * sb * sb - 1) * second_.row(k) + (3 * s * s - 1) * second_.row(k + 1)).transpose();
    (*dw)[k] -= 1.0 / h_;
    (*dw)[k + 1] += 1.0 / h_;
  }
}

// ---------------------------------------------------------------------------
// Lattice

namespace {

std::vector<double> sinh_nodes(double max, int count) {
  const double U = std::asinh(max);
  std::vector<double> v(count);
  for (int i = 0; i < count; ++i) v[i] = std::sinh(-U + 2.0 * U * i / (count - 1));
  if (count % 2) v[count / 2] = 0.0;
  return v;
}

bool try_build(const HamiltonianFlow& flow, const LatticeSpec& spec, double T, PhaseField& f, std::string& why) {
  f = PhaseField{};
  f.T = T;
  f.spec = spec;
  f.spec.T = T;
  f.t.resize(spec.nt);
  for (int i = 0; i < spec.nt; ++i) f.t[i] = -T + 2.0 * T * i / (spec.nt - 1);
  if (spec.nt % 2) f.t[spec.nt / 2] = 0.0;
  f.x = sinh_nodes(spec.x_max, spec.nx);
  f.xi = sinh_nodes(spec.xi_max, spec.nxi);
  const std::size_t total = static_cast<std::size_t>(spec.nt) * spec.nx * spec.nxi;
  f.phase_dev.assign(total, 0.0);
  f.dxphi.assign(total, 0.0);
  f.xi_grad_dev.assign(total, 0.0);
  f.foot.assign(total, 0.0);
  f.q0.assign(static_cast<std::size_t>(spec.nx) * spec.nxi, 0.0);

  const std::size_t cols = static_cast<std::size_t>(spec.nx) * spec.nxi;
  std::vector<std::string> errors(cols);
  std::vector<double> resid(cols, 0.0);
  parallel_for(cols, spec.threads, [&](std::size_t c) {
    const int ix = static_cast<int>(c / spec.nxi), iv = static_cast<int>(c % spec.nxi);
    const Vec x = vec1(f.x[ix]), xi = vec1(f.xi[iv]);
    f.q0[c] = flow.q(x, xi);
    try {
      for (int it = 0; it < spec.nt; ++it) {
        const PhasePoint p = evaluate_phase(flow, f.t[it], x, xi, spec.inversion);
        const std::size_t k = f.index(it, ix, iv);
        f.phase_dev[k] = p.phase_dev;
        f.dxphi[k] = p.dxphi[0];
        f.xi_grad_dev[k] = p.xi_grad_dev[0];
        f.foot[k] = p.y[0];
      }
      // eikonal residual at interior nodes: 5-point difference in t of the
      // pointwise phase
      if (ix == 0 || iv == 0 || ix == spec.nx - 1 || iv == spec.nxi - 1) return;
      const double h = 2e-3 * T;
      for (int it = 1; it + 1 < spec.nt; ++it) {
        const double t = f.t[it];
        double dt = 0;
        const double cs[4] = {1.0, -8.0, 8.0, -1.0};
        const double off[4] = {-2.0, -1.0, 1.0, 2.0};
        for (int j = 0; j < 4; ++j) dt += cs[j] * evaluate_phase(flow, t + off[j] * h, x, xi, spec.inversion).phase_dev;
        dt /= 12.0 * h;
        const double qv = flow.q(x, vec1(f.dxphi[f.index(it, ix, iv)]));
        resid[c] = std::max(resid[c], std::abs(dt - qv) / qv);
      }
    } catch (const Error& e) {
      if (e.code() != Errc::FlowNotInvertible && e.code() != Errc::NewtonDiverged) throw;
      errors[c] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) {
      why = e;
      return false;
    }
  f.max_residual = *std::max_element(resid.begin(), resid.end());
  return true;
}

}  // namespace

PhaseField build_phase(const HamiltonianFlow& flow, const LatticeSpec& spec) {
  if (flow.dim() != 1) throw Error(Errc::InvalidArgument, "build_phase: lattice fields are one-dimensional");
  if (spec.nt < 5 || spec.nx < 4 || spec.nxi < 4) throw Error(Errc::InvalidArgument, "build_phase: lattice too small");
  PhaseField f;
  std::string why;
  for (double T = spec.T; T >= spec.min_T; T *= 0.5) {
    if (try_build(flow, spec, T, f, why)) return f;
    if (!spec.shrink_T) break;
  }
  throw Error(Errc::FlowNotInvertible, "no admissible T: " + why);
}

PhaseInterpolant::PhaseInterpolant(const PhaseField& field)
    : field_(&field),
      st_(field.t.front(), field.t.back(), static_cast<int>(field.t.size())),
      su_(std::asinh(field.x.front()), std::asinh(field.x.back()), static_cast<int>(field.x.size())),
      sv_(std::asinh(field.xi.front()), std::asinh(field.xi.back()), static_cast<int>(field.xi.size())) {}

PhaseInterpolant::Value PhaseInterpolant::operator()(double t, double x, double xi) const {
  Eigen::VectorXd wt, dwt, wu, dwu, wv;
  st_.weights(t, wt, &dwt);
  su_.weights(std::asinh(x), wu, &dwu);
  sv_.weights(std::asinh(xi), wv);
  const PhaseField& f = *field_;
  const int nt = st_.size(), nu = su_.size(), nv = sv_.size();
  Value r;
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nu; ++j) {
      const Eigen::Map<const Eigen::VectorXd> row(&f.phase_dev[f.index(i, j, 0)], nv);
      const double s = wv.dot(row);
      r.phase_dev += wt[i] * wu[j] * s;
      r.dt += dwt[i] * wu[j] * s;
      r.dx += wt[i] * dwu[j] * s;
    }
  }
  r.dx /= jbr(x);
  return r;
}

double interpolation_residual(const HamiltonianFlow& flow, const PhaseField& field, int stride) {
  // probes at one third of every stride-th cell; for a lattice refined by
  // bisection these stay off the finer nodes
  const PhaseInterpolant ip(field);
  auto probes = [&](const std::vector<double>& nodes, bool asinh_axis) {
    std::vector<double> p;
    for (std::size_t i = 0; i + stride < nodes.size(); i += stride) {
      const double a = asinh_axis ? std::asinh(nodes[i]) : nodes[i];
      const double b = asinh_axis ? std::asinh(nodes[i + stride]) : nodes[i + stride];
      const double c = a + (b - a) / 3.0;
      p.push_back(asinh_axis ? std::sinh(c) : c);
    }
    return p;
  };
  const auto pt = probes(field.t, false), px = probes(field.x, true), pv = probes(field.xi, true);
  double worst = 0;
  for (double t : pt)
    for (double x : px)
      for (double xi : pv) {
        const auto v = ip(t, x, xi);
        const double qv = flow.q(vec1(x), vec1(xi + v.dx));
        worst = std::max(worst, std::abs(v.dt - qv) / qv);
      }
  return worst;
}

PhaseCertificate certify_phase(const HamiltonianFlow& flow, const PhaseField& phase, const EllipticityBounds& bounds) {
  PhaseCertificate c;
  c.max_residual = phase.max_residual;
  c.min_ellipticity_ratio = std::numeric_limits<double>::infinity();
  const double m = flow.m;
  for (std::size_t ix = 0; ix < phase.x.size(); ++ix)
    for (std::size_t iv = 0; iv < phase.xi.size(); ++iv) {
      const double x = phase.x[ix], xi = phase.xi[iv];
      const double q = phase.q0[ix * phase.xi.size() + iv];
      c.min_ellipticity_ratio = std::min(c.min_ellipticity_ratio, bounds.A * q / (jbr(x) * std::pow(jbr(xi), m)));
      for (std::size_t it = 0; it < phase.t.size(); ++it) {
        const std::size_t k = phase.index(static_cast<int>(it), static_cast<int>(ix), static_cast<int>(iv));
        const double ratio = jbr(phase.dxphi[k]) / jbr(xi);
        c.C_grad = std::max({c.C_grad, ratio, 1.0 / ratio});
        const double t = phase.t[it];
        if (t == 0.0) continue;
        c.taylor_const = std::max(
            c.taylor_const, std::abs(phase.phase_dev[k] - t * q) / (t * t * jbr(x) * std::pow(jbr(xi), 2 * m - 1)));
        c.xi_grad_const = std::max(c.xi_grad_const, std::abs(phase.xi_grad_dev[k]) / (std::abs(t) * jbr(x)));
      }
    }
  if (c.min_ellipticity_ratio < 1.0 - 1e-12)
    throw Error(Errc::CertificateFailed, "q below A^{-1}<x><xi>^m on the lattice");
  return c;
}

PhaseCertificate certify_phase(const HamiltonianFlow& flow, const PhaseField& coarse, const PhaseField& fine,
                               const EllipticityBounds& bounds) {
  const PhaseCertificate a = certify_phase(flow, coarse, bounds);
  const PhaseCertificate b = certify_phase(flow, fine, bounds);
  auto grows = [](double lo, double hi) { return hi > 2.0 * lo && hi > 1e-12; };
  if (grows(a.C_grad, b.C_grad)) throw Error(Errc::CertificateFailed, "C_grad grows under refinement");
  if (grows(a.taylor_const, b.taylor_const)) throw Error(Errc::CertificateFailed, "taylor_const grows under refinement");
  if (grows(a.xi_grad_const, b.xi_grad_const))
    throw Error(Errc::CertificateFailed, "xi_grad_const grows under refinement");
  return b;
}

std::string phase_csv(const PhaseField& f) {
  std::string out = "t,x,xi,phi,dphix\n";
  char buf[160];
  for (std::size_t it = 0; it < f.t.size(); ++it)
    for (std::size_t ix = 0; ix < f.x.size(); ++ix)
      for (std::size_t iv = 0; iv < f.xi.size(); ++iv) {
        const std::size_t k = f.index(static_cast<int>(it), static_cast<int>(ix), static_cast<int>(iv));
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", f.t[it], f.x[ix], f.xi[iv],
                      f.phase_dev[k] + f.x[ix] * f.xi[iv], f.dxphi[k]);
        out += buf;
      }
  return out;
}

}  // namespace sgw
