#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sgw/spectral.hpp"

namespace sgw {

// psi = chi * chi for the even bump chi(t) = c exp(-1 / (1 - (2t/T)^2)) on
// (-T/2, T/2), with c fixed by psi(0) = 1. psi_hat = |chi_hat|^2.
class TauberWindow {
public:
  explicit TauberWindow(double T);

  double T() const { return T_; }
  double chi(double t) const;
  double psi(double t) const;  // convolution by Gauss-Legendre on the overlap
  double psi_hat(double tau) const;
  double chi_hat(double tau) const;

  // psi on the uniform grid of `grid_points` nodes over [-T, T]
  const std::vector<double>& grid_t() const { return grid_t_; }
  const std::vector<double>& grid_psi() const { return grid_psi_; }

  // psi_hat < 1e-14 psi_hat(0) for |tau| >= tail_cut()
  double tail_cut() const { return tail_cut_; }
  // smallest tau with int_{|s| > tau} psi_hat <= rel_mass * 2 pi
  double margin(double rel_mass) const;

  static constexpr int grid_points = 2001;

private:
  FixedRule rule_for(double tau_max) const;
  double T_, c_ = 1.0;
  FixedRule half_rule_;  // [0, T/2], resolves cos(tau t) up to tau_rule_
  std::vector<double> chi_w_;  // weights times chi at the half_rule_ nodes
  double tau_rule_ = 0;
  double tail_cut_ = 0;
  std::vector<double> grid_t_, grid_psi_;
  std::vector<double> tail_tau_, tail_mass_;  // cumulative tail mass table
};

TauberWindow make_window(double T);

// sum over trusted eta_j of psi_hat(lambda - eta_j). Requires lambda +
// margin(tail_mass) <= largest trusted eta.
double smoothed_count(const SpectrumDataset& d, const TauberWindow& w, double lambda, double tail_mass = 1e-6);

struct SmoothedSample {
  double lambda = 0, value = 0;
};

std::vector<SmoothedSample> smoothed_samples(const SpectrumDataset& d, const TauberWindow& w,
                                             const std::vector<double>& lambdas, double tail_mass = 1e-6);

struct TauberOptions {
  double rel_tol = 0.05;       // check (a)
  double slope_slack = 0.1;    // check (b): envelope slope <= n* + slack
  double count_lo = 0, count_hi = 0;  // check (b) window; 0: top three dyadic blocks
  bool throw_on_failure = true;
};

struct TauberRecovery {
  bool verified = false;
  double max_rel_dev = 0;
  double residual_slope = 0;
  double n_star = 0;
  std::string failure;
};

// (a) smoothed samples against (n/m') d0 lambda^{n/m' - 1};
// (b) N(lambda) - d0/(2 pi) lambda^{n/m'} grows at most like lambda^{n* + slack}
//     with n* = min(n, n/m' - 1), measured on dyadic-block maxima.
TauberRecovery tauber_recover(const std::vector<SmoothedSample>& samples, const CountingFunction& cf, double d0,
                              int n, double m_prime, const TauberOptions& opt = {});

struct WindowCount {
  long count = 0;
  double bound_constant = 0;  // count / ((1 + K)^{n/m'} (1 + |lambda|)^{n/m' - 1})
};

WindowCount window_count(const CountingFunction& cf, double lambda, double K, int n, double m_prime);

struct WindowBound {
  double C = 0;          // sup over the lattice
  double C_doubled = 0;  // sup over the lattice with twice the lambda nodes
  bool stable = false;   // relative change < 10%
};

WindowBound window_count_bound(const CountingFunction& cf, double lambda_lo, double lambda_hi, int lambda_nodes,
                               const std::vector<double>& Ks, int n, double m_prime);

struct TracePrediction {
  std::string model_id;
  std::function<double(double)> value;
};

struct TraceRow {
  double lambda = 0, smoothed = 0, predicted = 0, rel_dev = 0;
};

struct TraceReport {
  std::vector<TraceRow> rows;
  double deviation_slope = 0;  // of log rel_dev against log lambda
  bool decreasing = false;     // last deviation below first, negative slope
};

TraceReport trace_crosscheck(const SpectrumDataset& d, const TauberWindow& w, const TracePrediction& prediction,
                             const std::vector<double>& lambdas, double tail_mass = 1e-6);

std::string trace_csv(const TraceReport& r);

}  // namespace sgw
