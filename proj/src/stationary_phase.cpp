#include "sgw/stationary_phase.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

namespace sgw {

OscillatoryIntegrand OscillatoryIntegrand::from_catalog(const std::string& id, AmplitudeFn a) {
  const CatalogSymbol c = catalog_symbol(id);
  if (!c.classical) throw Error(Errc::InvalidArgument, "'" + id + "' has no principal parts");
  OscillatoryIntegrand I;
  I.flow = HamiltonianFlow::from_catalog(id);
  const EllipticityBounds b = check_ellipticity(c.symbol, c.symbol.order(), ProbeGrid::standard(I.flow.dim()));
  I.config = CutoffConfig::defaults(std::max(1.0, I.flow.A), b.C_grad, I.flow.m);
  I.config.validate();
  I.window = std::make_shared<const TauberWindow>(I.config.T);
  I.a = std::move(a);
  I.q_psi = c.classical->psi;
  I.q_e = c.classical->e;
  return I;
}

std::string region_name(Region r) {
  switch (r) {
    case Region::full: return "full";
    case Region::H1: return "H1";
    case Region::not_H1: return "not_H1";
    case Region::I1: return "I1";
    case Region::I2: return "I2";
    case Region::V1: return "V1";
    case Region::V2: return "V2";
  }
  return "?";
}

double scaled_polar_jacobian(double lambda, double zeta, int n) { return std::pow(lambda, n) * std::pow(zeta, n - 1); }

// ---------------------------------------------------------------------------
// Direct quadrature

namespace {

// Value with an attached error, so the inner quadrature errors integrate
// alongside the values in the outer rule.
struct ValErr {
  cplx v{};
  double e = 0;
};
ValErr operator+(ValErr a, ValErr b) { return {a.v + b.v, a.e + b.e}; }
ValErr operator-(ValErr a, ValErr b) { return {a.v - b.v, a.e - b.e}; }
ValErr& operator+=(ValErr& a, ValErr b) { return a = a + b; }
ValErr operator*(ValErr a, double w) { return {a.v * w, a.e * w}; }
[[maybe_unused]] double abs(const ValErr& a) { return std::abs(a.v); }

constexpr int min_panels = 8;

std::vector<double> lobatto_nodes(double T, int N) {
  std::vector<double> v(N);
  for (int k = 0; k < N; ++k) v[k] = T * std::cos(pi * k / (N - 1));
  if (N % 2) v[N / 2] = 0.0;
  return v;
}

// Barycentric interpolation from Chebyshev-Lobatto values to the points `at`.
Eigen::MatrixXd bary_matrix(const std::vector<double>& nodes, const std::vector<double>& at) {
  const int N = static_cast<int>(nodes.size());
  Eigen::VectorXd w(N);
  for (int k = 0; k < N; ++k) w[k] = (k % 2 ? -1.0 : 1.0) * (k == 0 || k == N - 1 ? 0.5 : 1.0);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(at.size()), N);
  for (std::size_t i = 0; i < at.size(); ++i) {
    int hit = -1;
    for (int k = 0; k < N; ++k)
      if (at[i] == nodes[k]) hit = k;
    if (hit >= 0) {
      B(static_cast<Eigen::Index>(i), hit) = 1.0;
      continue;
    }
    double s = 0;
    for (int k = 0; k < N; ++k) s += w[k] / (at[i] - nodes[k]);
    for (int k = 0; k < N; ++k) B(static_cast<Eigen::Index>(i), k) = w[k] / (at[i] - nodes[k]) / s;
  }
  return B;
}

struct TimeRule {
  int panels = 0;
  std::vector<double> t, wpsi;  // nodes and weights times psi
  Eigen::MatrixXd B;            // Chebyshev values -> node values
};

// Rules depend only on (T, panels, Chebyshev count); psi costs a convolution
// per node, so they are shared across calls.
std::shared_ptr<const TimeRule> time_rule(const TauberWindow& w, int panels, const std::vector<double>& cheb) {
  static std::mutex mu;
  static std::map<std::tuple<double, int, int>, std::shared_ptr<const TimeRule>> cache;
  thread_local std::map<std::tuple<double, int, int>, std::shared_ptr<const TimeRule>> local;
  const auto key = std::make_tuple(w.T(), panels, static_cast<int>(cheb.size()));
  if (auto it = local.find(key); it != local.end()) return it->second;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return local[key] = it->second;
  }
  auto r = std::make_shared<TimeRule>();
  r->panels = panels;
  const FixedRule f = composite_gauss_legendre(-w.T(), w.T(), panels);
  r->t = f.x;
  r->wpsi.resize(f.x.size());
  for (std::size_t i = 0; i < f.x.size(); ++i) r->wpsi[i] = f.w[i] * w.psi(f.x[i]);
  r->B = bary_matrix(cheb, f.x);
  std::lock_guard<std::mutex> lock(mu);
  return local[key] = cache.emplace(key, r).first->second;
}

int ladder_panels(int need) {
  int p = min_panels;
  while (p < need) p = p < 16 ? p + 4 : p + p / 4;
  return p;
}

// Bisection for f(r) = level on [a, b] with f(a) and f(b) on opposite sides.
template <class F>
double bisect(F& f, double a, double b, double level) {
  const bool up = f(a) < level;
  for (int i = 0; i < 80 && b - a > 1e-14 * std::max(1.0, std::abs(b)); ++i) {
    const double c = 0.5 * (a + b);
    ((f(c) < level) == up ? a : b) = c;
  }
  return 0.5 * (a + b);
}

// Crossings of the levels by f on [0, hi], hi itself, and the first crossing of lo.
template <class F>
std::vector<double> level_crossings(F& f, double hi, const std::vector<double>& levels) {
  constexpr int K = 96;
  std::vector<double> g{0.0};
  for (int j = 0; j <= K; ++j) g.push_back(hi * std::pow(10.0, -9.0 + 9.0 * j / K));
  std::vector<double> fv(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) fv[j] = f(g[j]);
  std::vector<double> out;
  for (std::size_t j = 0; j + 1 < g.size(); ++j)
    for (double L : levels)
      if ((fv[j] < L) != (fv[j + 1] < L)) out.push_back(bisect(f, g[j], g[j + 1], L));
  std::sort(out.begin(), out.end());
  return out;
}

// Smallest r with f(r) >= level, for f growing without bound.
template <class F>
double reach(F& f, double level) {
  if (f(0.0) >= level) return 0.0;
  double r = 1.0;
  while (f(r) < level) {
    r *= 2.0;
    if (r > 1e18) throw Error(Errc::InvalidArgument, "energy shell out of reach");
  }
  return bisect(f, r / 2 > 1.0 ? r / 2 : 0.0, r, level);
}

bool has_H1(Region r) { return r != Region::full && r != Region::not_H1; }

class Engine {
public:
  Engine(const OscillatoryIntegrand& I, Region region, double lambda, const DirectOptions& opt)
      : I_(I), region_(region), lambda_(lambda), opt_(opt), cut_(make_cutoffs(I.config)) {
    if (I.flow.dim() != 1) throw Error(Errc::InvalidArgument, "direct quadrature is shipped for n = 1");
    if (!I.window) throw Error(Errc::InvalidArgument, "integrand has no time window");
    if (opt.cheb_nodes < 9) throw Error(Errc::InvalidArgument, "cheb_nodes >= 9");
    T_ = I.window->T();
    m_ = I.flow.m;
    // characteristics whose energy sits further than band_ from lambda carry
    // less than psi_hat's tail mass there, scaled below abs_tol
    band_ = I.window->margin(std::clamp(0.01 * opt.abs_tol / std::max(1.0, std::abs(lambda)), 1e-14, 1e-3));
    const double k1 = I.config.k1, A = I.config.A;
    if (has_H1(region)) {
      E_lo_ = lambda / (1.5 * 2 * k1 * A);
      E_hi_ = 1.5 * 2 * k1 * A * lambda;
    } else {
      E_lo_ = std::max(lambda - band_, 0.0);
      E_hi_ = std::max(std::max(lambda, 0.0) + band_, 4 * pi / T_);
    }
    polar_outer_ = region == Region::I1;
    zeta_inner_ = region == Region::I2 || region == Region::V1 || region == Region::V2;
    if (region == Region::I1) r_max_ = 2.0 * I.config.k2;
    if (zeta_inner_) r_min_ = I.config.k2;

    const double W = pi / T_;
    for (double k = 0; W * k <= E_hi_ + std::abs(lambda); k = k < 2 ? k + 1 : 2 * k)
      for (double s : {-1.0, 1.0}) levels_.push_back(lambda + s * W * k);
    if (!has_H1(region))
      for (double e = W / 4; e < E_hi_; e *= 2) levels_.push_back(e);
    if (lambda > 0)
      for (double e : {lambda / (2 * k1), lambda / k1, k1 * lambda, 2 * k1 * lambda}) levels_.push_back(e);
    levels_.push_back(E_lo_);
    std::sort(levels_.begin(), levels_.end());
    std::vector<double> kept;
    for (double L : levels_)
      if (L > 0 && L >= E_lo_ && L < E_hi_ && (kept.empty() || L - kept.back() > W / 4)) kept.push_back(L);
    levels_ = kept;

    for (int N : {opt.cheb_nodes, 2 * opt.cheb_nodes - 1}) {
      Sampling sm;
      sm.cheb = lobatto_nodes(T_, N);
      std::vector<double> checks{T_ * std::cos(pi * 2.5 / (N - 1)), T_ * std::cos(pi * (N - 3.5) / (N - 1))};
      sm.check_B = bary_matrix(sm.cheb, checks);
      sm.times = sm.cheb;
      sm.times.insert(sm.times.end(), checks.begin(), checks.end());
      sampling_.push_back(std::move(sm));
    }
  }

  DirectResult run() {
    DirectResult out;
    if (has_H1(region_) && lambda_ <= 0) return out;
    auto g = [&](double y) { return I_.flow.q(vec1(y), vec1(0.0)); };
    auto gm = [&](double y) { return g(-y); };
    const double Yp = reach(g, E_hi_), Ym = reach(gm, E_hi_);
    if (Yp == 0.0 && Ym == 0.0) return out;
    inner_abs_ = 0.1 * opt_.abs_tol / (Yp + Ym);

    const auto cp = level_crossings(g, Yp, levels_), cm = level_crossings(gm, Ym, levels_);
    std::vector<std::pair<std::vector<double>, int>> pieces;  // breakpoints, outer sign (0: asinh over R)
    if (polar_outer_) {
      std::vector<double> bp{0.0}, bm{0.0};
      for (double c : cp) bp.push_back(c / lambda_);
      bp.push_back(Yp / lambda_);
      for (double c : cm) bm.push_back(c / lambda_);
      bm.push_back(Ym / lambda_);
      pieces.push_back({bp, +1});
      pieces.push_back({bm, -1});
    } else {
      std::vector<double> b;
      b.push_back(-std::asinh(Ym));
      for (auto it = cm.rbegin(); it != cm.rend(); ++it) b.push_back(-std::asinh(*it));
      b.push_back(0.0);
      for (double c : cp) b.push_back(std::asinh(c));
      b.push_back(std::asinh(Yp));
      pieces.push_back({b, 0});
    }
    for (auto& p : pieces) {
      auto& b = p.first;
      std::sort(b.begin(), b.end());
      b.erase(std::unique(b.begin(), b.end()), b.end());
    }

    // one task per outer panel when threaded, else one global adaptive run
    struct Task {
      std::vector<double> breaks;
      int sign;
    };
    std::vector<Task> tasks;
    for (const auto& [b, s] : pieces) {
      if (b.size() < 2) continue;
      if (opt_.threads > 1) {
        for (std::size_t i = 0; i + 1 < b.size(); ++i) tasks.push_back({{b[i], b[i + 1]}, s});
      } else {
        tasks.push_back({b, s});
      }
    }
    std::vector<QuadResult<ValErr>> res(tasks.size());
    QuadOptions q;
    q.abs_tol = opt_.abs_tol / std::max<std::size_t>(1, tasks.size());
    q.rel_tol = opt_.rel_tol;
    q.max_evals = opt_.max_nodes;
    q.on_budget = Errc::QuadratureBudgetExceeded;
    parallel_for(tasks.size(), opt_.threads, [&](std::size_t i) {
      const Task& t = tasks[i];
      auto f = [&](double v) -> ValErr {
        if (t.sign == 0) return inner(std::sinh(v)) * std::cosh(v);
        return inner(t.sign * lambda_ * v) * lambda_;
      };
      res[i] = integrate(f, std::span<const double>(t.breaks), q);
    });
    for (const auto& r : res) {
      out.value += r.value.v;
      out.error += r.error + r.value.e;
    }
    out.nodes = nodes_.load();
    return out;
  }

private:
  double weight(double x, double xi, double xi_pow) const {
    if (region_ == Region::full) return 1.0;
    const double h1 = lambda_ > 0 ? cut_.H1(jbr(x) * xi_pow / lambda_) : 0.0;
    switch (region_) {
      case Region::H1: return h1;
      case Region::not_H1: return 1.0 - h1;
      case Region::I1: return h1 == 0.0 ? 0.0 : h1 * cut_.H2(std::abs(xi));
      default: break;
    }
    if (h1 == 0.0) return 0.0;
    const double base = h1 * (1.0 - cut_.H2(std::abs(xi)));
    if (region_ == Region::I2 || base == 0.0) return base;
    const double h3 = cut_.H3(I_.q_psi(vec1(x), vec1(xi)) / lambda_ - 1.0);
    return region_ == Region::V1 ? base * (1.0 - h3) : base * h3;
  }

  struct Sampling {
    std::vector<double> cheb, times;  // times: Chebyshev nodes, then two check points
    Eigen::MatrixXd check_B;
  };

  // Columns phase_dev, X_y, X at the Chebyshev nodes; false when the
  // interpolant misses a check point by more than the ODE noise allows.
  bool sample(double y, const Vec& vxi, const Sampling& sm, Eigen::MatrixXd& V) const {
    const Trajectory tr = characteristics(I_.flow, vec1(y), vxi, std::span<const double>(sm.times), opt_.ode);
    const int N = static_cast<int>(sm.cheb.size());
    V.resize(N, 3);
    double pmax = 0, jmax = 0;
    for (int k = 0; k < N; ++k) {
      const FlowSample& s = tr.samples[k];
      V(k, 0) = s.phase_dev(vxi);
      V(k, 1) = s.x_y(0, 0);
      V(k, 2) = s.x[0];
      if (!(V(k, 1) > 0))
        throw Error(Errc::FlowNotInvertible, "X_y <= 0 at y = " + std::to_string(y) + ", xi = " + std::to_string(vxi[0]));
      pmax = std::max(pmax, std::abs(V(k, 0)));
      jmax = std::max(jmax, V(k, 1));
    }
    const Eigen::MatrixXd C = sm.check_B * V;
    const double ptol = 1e-8 + 50.0 * opt_.ode.rel_tol * pmax;
    for (int c = 0; c < 2; ++c) {
      const FlowSample& s = tr.samples[N + c];
      if (std::abs(C(c, 0) - s.phase_dev(vxi)) > ptol || std::abs(C(c, 1) - s.x_y(0, 0)) > 1e-9 * jmax) return false;
    }
    return true;
  }

  // (2 pi)^{-1} int psi(t) a w X_y e^{i(-t lambda + phi - x xi)} dt along the
  // characteristic through (y, xi)
  cplx t_integral(double y, double xi) {
    if (nodes_.fetch_add(1) + 1 > opt_.max_nodes)
      throw Error(Errc::QuadratureBudgetExceeded, "direct quadrature exceeded " + std::to_string(opt_.max_nodes) +
                                                      " characteristics");
    const Vec vxi = vec1(xi);
    Eigen::MatrixXd V;
    const Sampling* sm = nullptr;
    for (const Sampling& cand : sampling_)
      if (sample(y, vxi, cand, V)) {
        sm = &cand;
        break;
      }
    if (!sm) {
      std::ostringstream os;
      os << "Chebyshev interpolation of the characteristic through (" << y << ", " << xi
         << ") misses its check points at " << sampling_.back().cheb.size() << " nodes";
      throw Error(Errc::QuadratureUnderResolved, os.str());
    }
    const std::vector<double>& cheb = sm->cheb;
    const int N = static_cast<int>(cheb.size());
    double omega = 0, offset = std::numeric_limits<double>::infinity();
    for (int k = 0; k + 1 < N; ++k) {
      const double d = std::abs((V(k + 1, 0) - V(k, 0)) / (cheb[k + 1] - cheb[k]) - lambda_);
      omega = std::max(omega, d);
      offset = std::min(offset, d);
    }
    // the whole t integrand sits beyond the energy band
    if (offset > band_) return 0.0;
    omega = 1.1 * omega + 4.0 / T_;
    const int need = static_cast<int>(std::ceil(omega * 2 * T_ / 20.0)) + min_panels;
    const auto rule = time_rule(*I_.window, ladder_panels(need), cheb);
    const Eigen::MatrixXd D = rule->B * V;
    const double xi_pow = std::pow(jbr(xi), m_);
    const bool plain = region_ == Region::full && !I_.a;
    cplx s = 0;
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
      const double t = rule->t[i];
      double w = rule->wpsi[i] * D(i, 1);
      if (!plain) {
        w *= I_.amplitude(t, D(i, 2), xi) * weight(D(i, 2), xi, xi_pow);
        if (w == 0.0) continue;
      }
      const double ph = -lambda_ * t + D(i, 0);
      s += w * cplx(std::cos(ph), std::sin(ph));
    }
    return s / two_pi;
  }

  // int over xi at fixed foot y, both signs
  ValErr inner(double y) {
    ValErr total;
    const Vec vy = vec1(y);
    for (int sgn : {+1, -1}) {
      auto f = [&](double r) { return I_.flow.q(vy, vec1(sgn * r)); };
      if (f(0.0) >= E_hi_) continue;
      const double r_hi = std::min(reach(f, E_hi_), r_max_);
      const double r_lo = std::max(f(0.0) < E_lo_ ? reach(f, E_lo_) : 0.0, r_min_);
      if (!(r_hi > r_lo)) continue;
      std::vector<double> b{r_lo, r_hi};
      for (double c : level_crossings(f, r_hi, levels_))
        if (c > r_lo && c < r_hi) b.push_back(c);
      std::sort(b.begin(), b.end());
      QuadOptions q;
      q.abs_tol = 0.5 * inner_abs_;
      q.rel_tol = 0.1 * opt_.rel_tol;
      q.max_evals = opt_.max_nodes;
      q.on_budget = Errc::QuadratureBudgetExceeded;
      QuadResult<cplx> r;
      if (zeta_inner_) {
        for (double& v : b) v = std::pow(v, m_) / lambda_;
        auto g = [&](double z) {
          const double rr = std::pow(lambda_ * z, 1.0 / m_);
          return t_integral(y, sgn * rr) * (rr / (m_ * z));
        };
        r = integrate(g, std::span<const double>(b), q);
      } else {
        auto g = [&](double rr) { return t_integral(y, sgn * rr); };
        r = integrate(g, std::span<const double>(b), q);
      }
      total.v += r.value;
      total.e += r.error;
    }
    return total;
  }

  const OscillatoryIntegrand& I_;
  Region region_;
  double lambda_;
  DirectOptions opt_;
  CutoffSet cut_;
  double T_ = 0, m_ = 0, E_lo_ = 0, E_hi_ = 0, band_ = 0;
  double r_min_ = 0, r_max_ = std::numeric_limits<double>::infinity();
  bool polar_outer_ = false, zeta_inner_ = false;
  std::vector<double> levels_;
  std::vector<Sampling> sampling_;
  double inner_abs_ = 0;
  std::atomic<std::size_t> nodes_{0};
};

}  // namespace

DirectResult region_integral(const OscillatoryIntegrand& I, Region region, double lambda, const DirectOptions& opt) {
  const double l = std::abs(lambda);
  if (!(l >= I.config.lambda0 && l <= 2000.0)) {
    std::ostringstream os;
    os << "|lambda| = " << l << " outside [lambda0, 2000] = [" << I.config.lambda0 << ", 2000]";
    throw Error(Errc::OutOfDomain, os.str());
  }
  Engine e(I, region, lambda, opt);
  return e.run();
}

DirectResult direct_I(const OscillatoryIntegrand& I, double lambda, const DirectOptions& opt) {
  return region_integral(I, lambda > 0 ? Region::H1 : Region::full, lambda, opt);
}

DecayFit region_decay(const OscillatoryIntegrand& I, Region region, const std::vector<double>& lambdas,
                      const DirectOptions& opt) {
  if (lambdas.size() < 2) throw Error(Errc::InvalidArgument, "region_decay: at least two lambdas");
  DecayFit d;
  std::vector<double> lx, ly;
  for (double l : lambdas) {
    const double v = std::abs(region_integral(I, region, l, opt).value);
    d.lambdas.push_back(l);
    d.magnitudes.push_back(v);
    lx.push_back(std::log(std::abs(l)));
    ly.push_back(std::log(std::max(v, 1e-300)));
  }
  d.slope = fit_line(lx, ly).slope;
  return d;
}

SplitResult split_I(const OscillatoryIntegrand& I, double lambda, const DirectOptions& opt) {
  if (!(lambda > 0)) throw Error(Errc::InvalidArgument, "split_I: lambda > 0");
  SplitResult s;
  s.I1 = region_integral(I, Region::I1, lambda, opt);
  s.I2 = region_integral(I, Region::I2, lambda, opt);
  DirectOptions d = opt;
  d.abs_tol = 1e-30;
  d.rel_tol = 1e-3;
  s.discard_bound = -region_decay(I, Region::not_H1, {lambda, 2 * lambda}, d).slope;
  return s;
}

// ---------------------------------------------------------------------------
// Stationary points

double taylor_exit_coefficient(const OscillatoryIntegrand& I, const Vec& sigma, const Vec& xi) {
  const SGSymbol& q = I.flow.q;
  HomFn f = [&q](const Vec& x, const Vec& e) {
    const SymbolDerivs d = q.derivs(x, e);
    return 0.5 * d.gxi.dot(d.gx);
  };
  return limit_x_ray(f, 1.0, sigma, xi);
}

double F1(const OscillatoryIntegrand& I, double t, double zeta, const Vec& sigma, const Vec& xi) {
  const double qe = I.q_e(sigma, xi);
  return -t + zeta * t * qe + zeta * t * t * taylor_exit_coefficient(I, sigma, xi);
}

StationaryData stationary_point_I1(const OscillatoryIntegrand& I, const Vec& sigma, const Vec& xi) {
  const double qe = I.q_e(sigma, xi);
  if (!(qe > 0)) throw Error(Errc::InvalidArgument, "q_e must be positive at Y");
  StationaryData s;
  s.X0 = {0.0, 1.0 / qe};
  s.X0_star = s.X0;
  s.M << 2.0 * taylor_exit_coefficient(I, sigma, xi) / qe, qe, qe, 0.0;
  s.det_M = -qe * qe;
  s.signature = 0;
  return s;
}

ResidualMap measured_S_map(const OscillatoryIntegrand& I) {
  const SGSymbol q = I.flow.q;
  const HomFn qp = I.q_psi;
  return [q, qp](const Vec& x, const Vec& sigma, double r) {
    const Vec xi = r * sigma;
    return qp(x, xi) / q(x, xi) - 1.0;
  };
}

FixedPointResult fixed_point_zeta(const Vec& sigma, const Vec& x, double lambda, const CutoffConfig& cfg,
                                  const HomFn& q_psi, const ResidualMap& S) {
  const double jx = std::sqrt(1.0 + x.squaredNorm());
  if (!(lambda >= cfg.lambda0)) throw Error(Errc::OutOfDomain, "lambda below lambda0");
  if (jx > cfg.kappa * lambda) {
    std::ostringstream os;
    os << "<x> = " << jx << " exceeds kappa lambda = " << cfg.kappa * lambda;
    throw Error(Errc::OutOfDomain, os.str());
  }
  FixedPointResult fp;
  fp.zeta0 = 1.0 / q_psi(x, sigma);
  fp.bracket_lo = (1.0 - cfg.eps / 2) / (cfg.A * jx);
  fp.bracket_hi = cfg.A * (1.0 + cfg.eps / 2) / jx;
  auto G = [&](double z) { return fp.zeta0 * (1.0 + S(x, sigma, std::pow(lambda * z, 1.0 / cfg.m))); };

  constexpr int samples = 17;
  double prev = G(fp.bracket_lo), zp = fp.bracket_lo;
  for (int i = 1; i < samples; ++i) {
    const double z = fp.bracket_lo + (fp.bracket_hi - fp.bracket_lo) * i / (samples - 1);
    const double g = G(z);
    fp.contraction_estimate = std::max(fp.contraction_estimate, std::abs(g - prev) / (z - zp));
    prev = g;
    zp = z;
  }
  if (fp.contraction_estimate > cfg.k0) {
    std::ostringstream os;
    os << "|G'| ~ " << fp.contraction_estimate << " > k0 = " << cfg.k0 << " on I_x";
    throw Error(Errc::ContractionViolated, os.str());
  }

  double z = fp.zeta0;
  for (int it = 1; it <= 200; ++it) {
    const double zn = G(z);
    const double step = std::abs(zn - z);
    z = zn;
    if (step <= 1e-14 / jx) {
      fp.iterations = it;
      break;
    }
  }
  fp.zeta0_star = z;
  std::ostringstream os;
  if (fp.iterations == 0) os << "no convergence in 200 iterations";
  else if (z < fp.bracket_lo || z > fp.bracket_hi) os << "zeta0* = " << z << " left I_x";
  else if (std::abs(z - fp.zeta0) > cfg.A * cfg.eps / 2 / jx) os << "|zeta0* - zeta0| above (A eps / 2) / <x>";
  if (!os.str().empty()) throw Error(Errc::ContractionViolated, os.str());
  return fp;
}

F2Residuals measured_residuals(const OscillatoryIntegrand& I) {
  const SGSymbol q = I.flow.q;
  const HomFn qp = I.q_psi;
  const double m = I.flow.m;
  F2Residuals r;
  r.S_T = [q](const Vec& x, const Vec& sigma, double rr) {
    const SymbolDerivs d = q.derivs(x, rr * sigma);
    return d.gxi.dot(d.gx) / d.v;
  };
  r.S12 = [q, qp, m](const Vec& x, const Vec& sigma, double rr) {
    const Vec xi = rr * sigma;
    const SymbolDerivs d = q.derivs(x, xi);
    const double s = qp(x, xi) / d.v - 1.0;
    return (d.gxi.dot(sigma) * std::pow(rr, 1.0 - m) / (m * qp(x, sigma)) - 1.0) * (1.0 + s);
  };
  return r;
}

StationaryData hessian_F2(const Vec& sigma, const Vec& x, double lambda, const FixedPointResult& fp,
                          const HomFn& q_psi, const F2Residuals& res, const CutoffConfig& cfg) {
  const double jx = std::sqrt(1.0 + x.squaredNorm());
  const double r = std::pow(lambda * fp.zeta0_star, 1.0 / cfg.m);
  const double qp = q_psi(x, sigma);
  StationaryData s;
  s.X0 = {0.0, fp.zeta0};
  s.X0_star = {0.0, fp.zeta0_star};
  const double m12 = qp * (1.0 + fp.zeta0 / fp.zeta0_star * res.S12(x, sigma, r));
  s.M << res.S_T(x, sigma, r), m12, m12, 0.0;
  s.det_M = -m12 * m12;
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(s.M).eigenvalues();
  s.signature = (ev[0] > 0) + (ev[1] > 0) - (ev[0] < 0) - (ev[1] < 0);
  const double A2 = cfg.A * cfg.A;
  const double norm = ev.cwiseAbs().maxCoeff() / jx, det = std::abs(s.det_M) / (jx * jx);
  std::ostringstream os;
  if (!(s.det_M < 0)) os << "det M = " << s.det_M << " is not negative";
  else if (norm < 0.5 / A2 || norm > 2 * A2) os << "|M| / <x> = " << norm << " outside [A^-2/2, 2A^2]";
  else if (det < 0.25 / (A2 * A2) || det > 4 * A2 * A2) os << "|det M| / <x>^2 = " << det << " outside [A^-4/4, 4A^4]";
  if (!os.str().empty()) throw Error(Errc::HessianDegenerate, os.str());
  return s;
}

double F2(const OscillatoryIntegrand& I, double t, double zeta, const Vec& sigma, const Vec& x, double lambda) {
  if (t == 0.0) return 0.0;
  const Vec xi = std::pow(lambda * zeta, 1.0 / I.flow.m) * sigma;
  return -t + evaluate_phase(I.flow, t, x, xi).phase_dev / lambda;
}

// ---------------------------------------------------------------------------
// Expansion

BivariatePoly::BivariatePoly(int degree) : d_(degree) {
  if (degree < 0) throw Error(Errc::InvalidArgument, "BivariatePoly: degree >= 0");
  c_.assign(static_cast<std::size_t>((degree + 1) * (degree + 2) / 2), cplx(0));
}

BivariatePoly BivariatePoly::truncated(int degree) const {
  BivariatePoly p(degree);
  for (int k = 0; k <= std::min(degree, d_); ++k)
    for (int j = 0; j <= k; ++j) p(k - j, j) = (*this)(k - j, j);
  return p;
}

BivariatePoly BivariatePoly::operator*(const BivariatePoly& o) const {
  BivariatePoly p(std::min(d_, o.d_));
  for (int k1 = 0; k1 <= d_; ++k1)
    for (int j1 = 0; j1 <= k1; ++j1) {
      const cplx a = (*this)(k1 - j1, j1);
      if (a == cplx(0)) continue;
      for (int k2 = 0; k1 + k2 <= p.d_; ++k2)
        for (int j2 = 0; j2 <= k2; ++j2) p(k1 - j1 + k2 - j2, j1 + j2) += a * o(k2 - j2, j2);
    }
  return p;
}

BivariatePoly BivariatePoly::operator+(const BivariatePoly& o) const {
  BivariatePoly p(std::min(d_, o.d_));
  for (std::size_t i = 0; i < p.c_.size(); ++i) p.c_[i] = c_[i] + o.c_[i];
  return p;
}

BivariatePoly BivariatePoly::du() const {
  BivariatePoly p(std::max(d_ - 1, 0));
  for (int k = 0; k < d_; ++k)
    for (int j = 0; j <= k; ++j) p(k - j, j) = static_cast<double>(k - j + 1) * (*this)(k - j + 1, j);
  return p;
}

BivariatePoly BivariatePoly::dv() const {
  BivariatePoly p(std::max(d_ - 1, 0));
  for (int k = 0; k < d_; ++k)
    for (int j = 0; j <= k; ++j) p(k - j, j) = static_cast<double>(j + 1) * (*this)(k - j, j + 1);
  return p;
}

BivariatePoly BivariatePoly::gaussian(int degree, double b0, double b1, int pu, int pv) {
  // exp(b s - s^2 / 2) = sum_k h_k s^k
  auto series = [degree](double b) {
    std::vector<double> e(degree + 1), g(degree + 1, 0.0), h(degree + 1, 0.0);
    e[0] = 1;
    for (int k = 1; k <= degree; ++k) e[k] = e[k - 1] * b / k;
    double gl = 1;
    for (int l = 0; 2 * l <= degree; ++l) {
      g[2 * l] = gl;
      gl *= -0.5 / (l + 1);
    }
    for (int i = 0; i <= degree; ++i)
      for (int j = 0; i + j <= degree; ++j) h[i + j] += e[i] * g[j];
    return h;
  };
  const auto hu = series(b0), hv = series(b1);
  BivariatePoly p(degree);
  for (int i = 0; i + pu <= degree; ++i)
    for (int j = 0; i + pu + j + pv <= degree; ++j) p(i + pu, j + pv) = hu[i] * hv[j];
  return p;
}

cplx AsymptoticExpansion::value(double lambda) const {
  cplx s = 0;
  for (std::size_t j = 0; j < coefficients.size(); ++j) s += coefficients[j] * std::pow(lambda, exponents[j]);
  return std::exp(cplx(0, lambda * phase)) * s;
}

AsymptoticExpansion sp_expand(const std::string& branch, const StationaryData& sd, const BivariatePoly& phase,
                              const BivariatePoly& amplitude, int J) {
  if (J < 0 || J > 2) throw Error(Errc::InvalidArgument, "sp_expand: 0 <= J <= 2");
  if (phase.degree() < 2 * J + 2 || amplitude.degree() < 2 * J) {
    std::ostringstream os;
    os << "J = " << J << " needs the phase to order " << 2 * J + 2 << " and the amplitude to order " << 2 * J
       << "; got " << phase.degree() << " and " << amplitude.degree();
    throw Error(Errc::DerivativeUnavailable, os.str());
  }
  const Eigen::Matrix2d& M = sd.M;
  const double scale = M.cwiseAbs().maxCoeff();
  if (std::abs(phase(1, 0)) + std::abs(phase(0, 1)) > 1e-10 * scale)
    throw Error(Errc::InvalidArgument, "sp_expand: the Taylor data is not centred at a stationary point");
  if (std::abs(phase(2, 0) - 0.5 * M(0, 0)) + std::abs(phase(1, 1) - M(0, 1)) + std::abs(phase(0, 2) - 0.5 * M(1, 1)) >
      1e-10 * scale)
    throw Error(Errc::InvalidArgument, "sp_expand: Hessian of the Taylor data differs from M");
  const double det = M.determinant();
  if (!(std::abs(det) > 0)) throw Error(Errc::HessianDegenerate, "sp_expand: det M = 0");
  const Eigen::Matrix2d Mi = M.inverse();

  BivariatePoly g = phase;
  g(0, 0) = g(1, 0) = g(0, 1) = g(2, 0) = g(1, 1) = g(0, 2) = 0.0;
  // <M^{-1} D, D> = -sum M^{-1}_{ab} d_a d_b
  auto P = [&Mi](const BivariatePoly& h) {
    const BivariatePoly hu = h.du(), hv = h.dv();
    BivariatePoly r = hu.du();
    const BivariatePoly uv = hu.dv(), vv = hv.dv();
    for (int k = 0; k <= r.degree(); ++k)
      for (int j = 0; j <= k; ++j)
        r(k - j, j) = -(Mi(0, 0) * r(k - j, j) + 2.0 * Mi(0, 1) * uv(k - j, j) + Mi(1, 1) * vv(k - j, j));
    return r;
  };

  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(M).eigenvalues();
  const int sgn = (ev[0] > 0) + (ev[1] > 0) - (ev[0] < 0) - (ev[1] < 0);
  const cplx pref = two_pi / std::sqrt(std::abs(det)) * std::exp(cplx(0, pi * sgn / 4.0));

  AsymptoticExpansion e;
  e.branch = branch;
  e.J = J;
  e.phase = phase(0, 0).real();
  e.error_exponent = -2.0 - J;
  const cplx minus_i(0, -1);
  for (int j = 0; j <= J; ++j) {
    cplx L = 0;
    for (int mu = 0; mu <= 2 * j; ++mu) {
      const int nu = j + mu;
      BivariatePoly h = amplitude.truncated(2 * nu);
      for (int k = 0; k < mu; ++k) h = (h * g.truncated(2 * nu)).truncated(2 * nu);
      // amplitude degrees above its order never reach degree 2 nu here
      for (int k = 0; k < nu; ++k) h = P(h);
      L += std::pow(minus_i, j) * std::pow(0.5, nu) / (std::tgamma(mu + 1.0) * std::tgamma(nu + 1.0)) * h(0, 0);
    }
    e.coefficients.push_back(pref * L);
    e.exponents.push_back(-1.0 - j);
  }
  return e;
}

// ---------------------------------------------------------------------------

TraceConstants trace_constants(const OscillatoryIntegrand& I) {
  const CutoffSet cut = make_cutoffs(I.config);
  TraceConstants c;
  c.n = I.flow.dim();
  c.m = I.flow.m;
  c.c0 = c0_constant(I.q_e, [&cut](double r) { return cut.H2(r); }, 2.0 * I.config.k2, c.n);
  c.d0 = d0_constant(I.q_psi, c.n, c.m);
  return c;
}

TraceAsymptotics trace_asymptotics(const TraceConstants& c, double lambda) {
  TraceAsymptotics t;
  t.I1_leading = c.c0.value * std::pow(lambda, c.n - 1);
  t.I2_leading = c.n / c.m * c.d0.value * std::pow(lambda, c.n / c.m - 1.0);
  t.value = t.I1_leading + t.I2_leading;
  return t;
}

TraceAsymptotics trace_asymptotics(const OscillatoryIntegrand& I, double lambda) {
  return trace_asymptotics(trace_constants(I), lambda);
}

TracePrediction trace_prediction(const OscillatoryIntegrand& I, const std::string& model_id) {
  const TraceConstants c = trace_constants(I);
  return TracePrediction{model_id, [c](double l) { return trace_asymptotics(c, l).value; }};
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  std::string out = "lambda,direct_re,direct_im,expansion,abs_err,rel_err,branch\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.lambda, r.direct.real(),
                  r.direct.imag(), r.expansion, r.abs_err, r.rel_err);
    out += buf;
    out += r.branch + "\n";
  }
  return out;
}

}  // namespace sgw
