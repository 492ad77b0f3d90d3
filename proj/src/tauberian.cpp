#include "sgw/tauberian.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sgw {

namespace {

double bump(double s) { return std::abs(s) >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - s * s)); }

// 20-point panels integrate cos(tau t) well while tau h <= 20.
int panels_for(double tau_max, double length) {
  return std::max(32, static_cast<int>(std::ceil(tau_max * length / 20.0)) + 8);
}

}  // namespace

TauberWindow::TauberWindow(double T) : T_(T) {
  if (!(T > 0)) throw Error(Errc::InvalidArgument, "make_window: T > 0");
  const FixedRule full = composite_gauss_legendre(-T / 2, T / 2, 64);
  double norm = 0;
  for (std::size_t i = 0; i < full.x.size(); ++i) norm += full.w[i] * std::pow(bump(2 * full.x[i] / T), 2);
  c_ = 1.0 / std::sqrt(norm);

  // chi_hat ~ exp(-sqrt(tau T / 2)); sqrt(2 T tau) = 60 is far below 1e-14
  tau_rule_ = 2.0 * 1800.0 / T;
  half_rule_ = rule_for(tau_rule_);
  chi_w_.resize(half_rule_.x.size());
  for (std::size_t i = 0; i < chi_w_.size(); ++i) chi_w_[i] = half_rule_.w[i] * chi(half_rule_.x[i]);

  const double thr = 1e-14 * psi_hat(0.0);
  const double step = pi / (2.0 * T);
  double last = 0;
  std::vector<double> taus{0.0}, vals{psi_hat(0.0)};
  for (double tau = step; tau < tau_rule_; tau += step) {
    const double v = psi_hat(tau);
    taus.push_back(tau);
    vals.push_back(v);
    if (v >= thr) last = tau;
    if (tau > 2.0 * last + 20.0 * step) break;
  }
  tail_cut_ = last + step;
  // everyday evaluations stay inside the tail cut; a smaller rule suffices there
  tau_rule_ = 2.0 * tail_cut_;
  half_rule_ = rule_for(tau_rule_);
  chi_w_.resize(half_rule_.x.size());
  for (std::size_t i = 0; i < chi_w_.size(); ++i) chi_w_[i] = half_rule_.w[i] * chi(half_rule_.x[i]);

  // one-sided tail mass int_tau^inf psi_hat on the scan nodes
  tail_tau_ = taus;
  tail_mass_.assign(taus.size(), 0.0);
  QuadOptions q;
  q.abs_tol = 1e-18;
  q.rel_tol = 1e-12;
  for (std::size_t k = taus.size() - 1; k-- > 0;) {
    const double seg = integrate([&](double s) { return psi_hat(s); }, taus[k], taus[k + 1], q).value;
    tail_mass_[k] = tail_mass_[k + 1] + seg;
  }

  grid_t_.resize(grid_points);
  grid_psi_.resize(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    grid_t_[i] = -T + 2.0 * T * i / (grid_points - 1);
    grid_psi_[i] = psi(grid_t_[i]);
  }
}

FixedRule TauberWindow::rule_for(double tau_max) const { return composite_gauss_legendre(0.0, T_ / 2, panels_for(tau_max, T_ / 2)); }

double TauberWindow::chi(double t) const { return c_ * bump(2.0 * t / T_); }

double TauberWindow::psi(double t) const {
  const double a = std::abs(t);
  if (a >= T_) return 0.0;
  const FixedRule r = composite_gauss_legendre(a - T_ / 2, T_ / 2, 32);
  double s = 0;
  for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * chi(r.x[i]) * chi(r.x[i] - a);
  return s;
}

double TauberWindow::chi_hat(double tau) const {
  const double a = std::abs(tau);
  double s = 0;
  if (a <= tau_rule_) {
    for (std::size_t i = 0; i < chi_w_.size(); ++i) s += chi_w_[i] * std::cos(a * half_rule_.x[i]);
  } else {
    const FixedRule r = rule_for(a);
    for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * chi(r.x[i]) * std::cos(a * r.x[i]);
  }
  return 2.0 * s;
}

double TauberWindow::psi_hat(double tau) const {
  const double c = chi_hat(tau);
  return c * c;
}

double TauberWindow::margin(double rel_mass) const {
  for (std::size_t k = 0; k < tail_tau_.size(); ++k)
    if (2.0 * tail_mass_[k] <= rel_mass * two_pi) return tail_tau_[k];
  return tail_cut_;
}

TauberWindow make_window(double T) { return TauberWindow(T); }

// ---------------------------------------------------------------------------

double smoothed_count(const SpectrumDataset& d, const TauberWindow& w, double lambda, double tail_mass) {
  const CountingFunction cf(d);
  const double top = cf.max_trusted();
  if (lambda + w.margin(tail_mass) > top) {
    std::ostringstream os;
    os << "smoothed_count: lambda = " << lambda << " plus the window margin " << w.margin(tail_mass)
       << " exceeds the largest trusted eigenvalue " << top;
    throw Error(Errc::BeyondTrustedRange, os.str());
  }
  const auto& e = cf.etas();
  auto lo = std::lower_bound(e.begin(), e.end(), lambda - w.tail_cut());
  auto hi = std::upper_bound(e.begin(), e.end(), lambda + w.tail_cut());
  double s = 0;
  for (auto it = lo; it != hi; ++it) s += w.psi_hat(lambda - *it);
  return s;
}

std::vector<SmoothedSample> smoothed_samples(const SpectrumDataset& d, const TauberWindow& w,
                                             const std::vector<double>& lambdas, double tail_mass) {
  std::vector<SmoothedSample> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) out.push_back({l, smoothed_count(d, w, l, tail_mass)});
  return out;
}

TauberRecovery tauber_recover(const std::vector<SmoothedSample>& samples, const CountingFunction& cf, double d0,
                              int n, double m_prime, const TauberOptions& opt) {
  TauberRecovery r;
  const double a = n / m_prime;
  r.n_star = std::min<double>(n, a - 1.0);
  std::ostringstream why;

  for (const auto& s : samples) {
    const double pred = a * d0 * std::pow(s.lambda, a - 1.0);
    const double dev = std::abs(s.value - pred) / pred;
    if (dev > r.max_rel_dev) {
      r.max_rel_dev = dev;
      if (dev > opt.rel_tol && why.str().empty())
        why << "(a) relative deviation " << dev << " at lambda = " << s.lambda;
    }
  }

  const double hi = opt.count_hi > 0 ? opt.count_hi : cf.max_trusted();
  const double lo = opt.count_lo > 0 ? opt.count_lo : hi / 8.0;
  std::vector<double> lx, ly;
  for (double b = lo; b * 2.0 <= hi * (1 + 1e-12); b *= 2.0) {
    const double sup = max_residual_ratio(cf, d0 / two_pi, a, 0.0, b, std::min(2.0 * b, hi));
    lx.push_back(std::log(b * std::sqrt(2.0)));
    ly.push_back(std::log(std::max(sup, 1e-300)));
  }
  if (lx.size() < 2) throw Error(Errc::InsufficientData, "tauber_recover: fewer than two dyadic blocks");
  r.residual_slope = fit_line(lx, ly).slope;
  if (r.residual_slope > r.n_star + opt.slope_slack) {
    if (!why.str().empty()) why << "; ";
    why << "(b) residual slope " << r.residual_slope << " above n* + " << opt.slope_slack << " on [" << lo << ", "
        << hi << "]";
  }
  r.failure = why.str();
  r.verified = r.failure.empty();
  if (!r.verified && opt.throw_on_failure) throw Error(Errc::HypothesisFailed, r.failure);
  return r;
}

WindowCount window_count(const CountingFunction& cf, double lambda, double K, int n, double m_prime) {
  if (!(K >= 0)) throw Error(Errc::InvalidArgument, "window_count: K >= 0");
  if (lambda + K > cf.max_trusted()) {
    std::ostringstream os;
    os << "window [" << lambda - K << ", " << lambda + K << "] leaves the trusted range";
    throw Error(Errc::BeyondTrustedRange, os.str());
  }
  const auto& e = cf.etas();
  WindowCount w;
  w.count = std::upper_bound(e.begin(), e.end(), lambda + K) - std::lower_bound(e.begin(), e.end(), lambda - K);
  const double a = n / m_prime;
  w.bound_constant = w.count / (std::pow(1.0 + K, a) * std::pow(1.0 + std::abs(lambda), a - 1.0));
  return w;
}

WindowBound window_count_bound(const CountingFunction& cf, double lambda_lo, double lambda_hi, int lambda_nodes,
                               const std::vector<double>& Ks, int n, double m_prime) {
  if (lambda_nodes < 2) throw Error(Errc::InvalidArgument, "window_count_bound: at least two lambda nodes");
  auto sweep = [&](int nodes) {
    double C = 0;
    for (int i = 0; i < nodes; ++i) {
      const double l = lambda_lo + (lambda_hi - lambda_lo) * i / (nodes - 1);
      for (double K : Ks) C = std::max(C, window_count(cf, l, K, n, m_prime).bound_constant);
    }
    return C;
  };
  WindowBound b;
  b.C = sweep(lambda_nodes);
  b.C_doubled = sweep(2 * lambda_nodes - 1);
  b.stable = b.C > 0 && std::abs(b.C_doubled - b.C) < 0.1 * b.C;
  return b;
}

TraceReport trace_crosscheck(const SpectrumDataset& d, const TauberWindow& w, const TracePrediction& prediction,
                             const std::vector<double>& lambdas, double tail_mass) {
  if (d.model_id != prediction.model_id)
    throw Error(Errc::ModelMismatch, "dataset '" + d.model_id + "' vs prediction '" + prediction.model_id + "'");
  TraceReport r;
  std::vector<double> lx, ly;
  for (double l : lambdas) {
    TraceRow row;
    row.lambda = l;
    row.smoothed = smoothed_count(d, w, l, tail_mass);
    row.predicted = prediction.value(l);
    row.rel_dev = std::abs(row.smoothed - row.predicted) / std::abs(row.smoothed);
    r.rows.push_back(row);
    lx.push_back(std::log(l));
    ly.push_back(std::log(std::max(row.rel_dev, 1e-300)));
  }
  if (r.rows.size() >= 2) {
    r.deviation_slope = fit_line(lx, ly).slope;
    r.decreasing = r.deviation_slope < 0 && r.rows.back().rel_dev < r.rows.front().rel_dev;
  }
  return r;
}

std::string trace_csv(const TraceReport& r) {
  std::string out = "lambda,smoothed,predicted,rel_dev\n";
  char buf[128];
  for (const auto& row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", row.lambda, row.smoothed, row.predicted, row.rel_dev);
    out += buf;
  }
  return out;
}

}  // namespace sgw
