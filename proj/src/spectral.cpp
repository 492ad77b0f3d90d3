#include "sgw/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <boost/numeric/odeint.hpp>

namespace sgw {

namespace {

constexpr double kRescale = 1e100;
const double kLogRescale = std::log(kRescale);

// pi^{-1/4}
const double kH0 = std::pow(pi, -0.25);

}  // namespace

GaussHermiteRule gauss_hermite(int M) {
  if (M < 2) throw Error(Errc::InvalidArgument, "gauss_hermite needs M >= 2");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(M);
  Eigen::VectorXd sub(M - 1);
  for (int k = 1; k < M; ++k) sub[k - 1] = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(Errc::SolverFailure, "Golub-Welsch eigenvalues");
  Eigen::VectorXd x = es.eigenvalues();
  for (int i = 0; i < M / 2; ++i) {
    const double a = 0.5 * (x[M - 1 - i] - x[i]);
    x[i] = -a;
    x[M - 1 - i] = a;
  }
  if (M % 2) x[M / 2] = 0.0;

  GaussHermiteRule rule;
  rule.nodes.resize(M);
  rule.log_weights.resize(M);
  for (int i = 0; i < M; ++i) {
    double xi = x[i];
    // Newton on h_M, using h_M' = sqrt(2M) h_{M-1} - x h_M
    for (int it = 0; it < 3 && xi != 0.0; ++it) {
      double a = kH0, b = 0;
      for (int k = 1; k <= M; ++k) {
        const double c = std::sqrt(2.0 / k) * xi * a - std::sqrt((k - 1.0) / k) * b;
        b = a;
        a = c;
        if (std::abs(a) > kRescale) {
          a /= kRescale;
          b /= kRescale;
        }
      }
      const double step = a / (std::sqrt(2.0 * M) * b - xi * a);
      xi -= step;
      if (std::abs(step) <= 1e-16 * (1 + std::abs(xi))) break;
    }
    // Christoffel weight W = 1 / sum_{k<M} h_k(x)^2
    double a = kH0, b = 0, ls = -0.5 * xi * xi, sum = a * a;
    for (int k = 1; k < M; ++k) {
      const double c = std::sqrt(2.0 / k) * xi * a - std::sqrt((k - 1.0) / k) * b;
      b = a;
      a = c;
      if (std::abs(a) > kRescale) {
        a /= kRescale;
        b /= kRescale;
        sum /= kRescale * kRescale;
        ls += kLogRescale;
      }
      sum += a * a;
    }
    rule.nodes[i] = xi;
    rule.log_weights[i] = -(std::log(sum) + 2 * ls);
  }
  for (int i = 0; i < M / 2; ++i) {
    rule.nodes[i] = -rule.nodes[M - 1 - i];
    rule.log_weights[i] = rule.log_weights[M - 1 - i];
  }
  return rule;
}

void hermite_table(const Eigen::VectorXd& x, const Eigen::VectorXd& half_log_weight, int cols, Eigen::MatrixXd& H,
                   Eigen::MatrixXd* dH, int first, int step) {
  const Eigen::Index n = x.size();
  const int stored = first < cols ? (cols - first + step - 1) / step : 0;
  H.resize(n, stored);
  if (dH) dH->resize(n, stored);
  auto slot = [&](int k) { return (k >= first && (k - first) % step == 0) ? (k - first) / step : -1; };
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x[i];
    double ls = -0.5 * xi * xi + half_log_weight[i];
    double scale = std::exp(ls);
    double a = kH0, b = 0;
    // true (scaled) values of h_{k-2}, h_{k-1}, h_k
    double hm2 = 0, hm1 = 0, h0 = a * scale;
    auto emit_value = [&](int k, double v) {
      const int s = slot(k);
      if (s >= 0) H(i, s) = v;
    };
    auto emit_deriv = [&](int k, double below, double above) {
      if (!dH) return;
      const int s = slot(k);
      if (s >= 0) (*dH)(i, s) = std::sqrt(0.5 * k) * below - std::sqrt(0.5 * (k + 1)) * above;
    };
    emit_value(0, h0);
    const int last = dH ? cols : cols - 1;
    for (int k = 1; k <= last; ++k) {
      const double c = std::sqrt(2.0 / k) * xi * a - std::sqrt((k - 1.0) / k) * b;
      b = a;
      a = c;
      if (std::abs(a) > kRescale) {
        a /= kRescale;
        b /= kRescale;
        ls += kLogRescale;
        scale = std::exp(ls);
      }
      hm2 = hm1;
      hm1 = h0;
      h0 = a * scale;
      if (k < cols) emit_value(k, h0);
      emit_deriv(k - 1, hm2, h0);
    }
  }
}

Eigen::MatrixXd merge_parity(const ParityBlocks& b) {
  const Eigen::Index ne = b.even.rows(), no = b.odd.rows(), N = ne + no;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index j = 0; j < ne; ++j)
    for (Eigen::Index k = 0; k < ne; ++k) A(2 * j, 2 * k) = b.even(j, k);
  for (Eigen::Index j = 0; j < no; ++j)
    for (Eigen::Index k = 0; k < no; ++k) A(2 * j + 1, 2 * k + 1) = b.odd(j, k);
  return A;
}

ParityBlocks leading_blocks(const ParityBlocks& b, int N) {
  const int ne = (N + 1) / 2, no = N / 2;
  if (ne > b.even.rows() || no > b.odd.rows()) throw Error(Errc::InvalidArgument, "leading_blocks: N too large");
  return {b.even.topLeftCorner(ne, ne), b.odd.topLeftCorner(no, no), b.quad_nodes};
}

namespace {

struct HalfRule {
  Eigen::VectorXd sigma, half_log_weight;
};

// Positive half of an even-sized rule; the factor 2 of folding is in the weight.
HalfRule half_rule(int M) {
  M += M % 2;
  const auto r = gauss_hermite(M);
  HalfRule h;
  h.sigma = r.nodes.tail(M / 2);
  h.half_log_weight = 0.5 * (r.log_weights.tail(M / 2).array() + std::log(2.0));
  return h;
}

struct Block {
  Eigen::MatrixXd H, D;
  Eigen::VectorXd V;
};

Block form_block(const FormCoeffs& fc, const HalfRule& hr, int N, int parity) {
  Block b;
  Eigen::MatrixXd dH;
  hermite_table(hr.sigma, hr.half_log_weight, N, b.H, &dH, parity, 2);
  b.D = fc.c1.asDiagonal() * dH;
  b.D += fc.c0.asDiagonal() * b.H;
  b.V = fc.V;
  return b;
}

Eigen::MatrixXd gram(const Block& b) {
  Eigen::MatrixXd A(b.H.cols(), b.H.cols());
  A.setZero();
  A.selfadjointView<Eigen::Lower>().rankUpdate(b.D.transpose());
  const Eigen::MatrixXd HV = b.V.cwiseSqrt().asDiagonal() * b.H;
  A.selfadjointView<Eigen::Lower>().rankUpdate(HV.transpose());
  A.triangularView<Eigen::StrictlyUpper>() = A.transpose();
  return A;
}

std::vector<Eigen::Index> sample_rows(Eigen::Index n) {
  std::vector<Eigen::Index> r{0, 1, n / 3, (2 * n) / 3, n - 2, n - 1};
  std::erase_if(r, [n](Eigen::Index i) { return i < 0 || i >= n; });
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

void check_block(const Eigen::MatrixXd& A, const Block& fine, double tol, const char* which) {
  const auto rows = sample_rows(A.rows());
  for (Eigen::Index r : rows) {
    const Eigen::VectorXd dr = fine.D.transpose() * fine.D.col(r);
    const Eigen::VectorXd vr = fine.H.transpose() * (fine.V.asDiagonal() * fine.H.col(r));
    for (Eigen::Index k = 0; k < A.cols(); ++k) {
      const double fineval = dr[k] + vr[k];
      const double scale = std::sqrt(std::abs(A(r, r) * A(k, k)));
      if (std::abs(fineval - A(r, k)) > tol * scale) {
        std::ostringstream os;
        os << which << " block entry (" << r << ", " << k << ") moved by " << std::abs(fineval - A(r, k))
           << " (scale " << scale << ") with 50% more nodes";
        throw Error(Errc::QuadratureUnderResolved, os.str());
      }
    }
  }
}

}  // namespace

ParityBlocks assemble_form(const FormFn& form, int N, const AssemblyOptions& opt) {
  if (N < 2) throw Error(Errc::InvalidArgument, "assemble_form needs N >= 2");
  int M = opt.nodes > 0 ? opt.nodes : 3 * N + 64;
  M += M % 2;
  if (M < 2 * N + 32) throw Error(Errc::InvalidArgument, "quadrature node count below 2N + 32");
  const HalfRule hr = half_rule(M);
  const FormCoeffs fc = form(hr.sigma);
  ParityBlocks out;
  out.quad_nodes = M;
  {
    const Block be = form_block(fc, hr, N, 0);
    out.even = gram(be);
  }
  {
    const Block bo = form_block(fc, hr, N, 1);
    out.odd = gram(bo);
  }
  if (opt.check_resolution) {
    const int M2 = (3 * M) / 2;
    const HalfRule fine = half_rule(M2);
    const FormCoeffs ff = form(fine.sigma);
    check_block(out.even, form_block(ff, fine, N, 0), opt.resolution_tol, "even");
    if (out.odd.size() > 0) check_block(out.odd, form_block(ff, fine, N, 1), opt.resolution_tol, "odd");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model catalog

namespace {

struct Weight {
  std::function<double(double)> w, dw;
};

const Weight kJapanese{[](double x) { return jbr(x); }, [](double x) { return x / jbr(x); }};

// Liouville map s = int_0^x w^{-1/2}, tabulated at increasing s >= 0.
Eigen::VectorXd x_of_s(const Weight& wt, const Eigen::VectorXd& s) {
  using namespace boost::numeric::odeint;
  using State = std::array<double, 1>;
  Eigen::VectorXd x(s.size());
  std::vector<double> times{0.0};
  for (Eigen::Index i = 0; i < s.size(); ++i) times.push_back(s[i]);
  State st{0.0};
  std::size_t idx = 0;
  auto rhs = [&](const State& y, State& dy, double) { dy[0] = std::sqrt(wt.w(y[0])); };
  auto obs = [&](const State& y, double) {
    if (idx > 0) x[idx - 1] = y[0];
    ++idx;
  };
  integrate_times(make_dense_output(1e-14, 1e-14, runge_kutta_dopri5<State>()), rhs, st, times.begin(),
                  times.end(), 1e-3, obs);
  return x;
}

// Mapped basis: v = w^{1/4} g(s), g in sqrt(beta) h_k(beta s). The operator
// w^{1/2}(1 - d^2)w^{1/2} becomes int (g' + a g)^2 + w g^2 ds, a = w'/(4 w^{1/2}).
FormFn mapped_sandwich(const Weight& wt) {
  return [wt](const Eigen::VectorXd& sigma) {
    const double beta = std::sqrt(0.5);
    const Eigen::VectorXd x = x_of_s(wt, sigma / beta);
    FormCoeffs fc;
    fc.c1 = Eigen::VectorXd::Constant(sigma.size(), beta);
    fc.c0.resize(sigma.size());
    fc.V.resize(sigma.size());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      const double w = wt.w(x[i]);
      fc.c0[i] = wt.dw(x[i]) / (4 * std::sqrt(w));
      fc.V[i] = w;
    }
    return fc;
  };
}

// Plain basis s^{-1/2} h_k(x / s): int (w^{1/2} u)'^2 + w u^2.
FormFn plain_sandwich(const Weight& wt, double scale) {
  return [wt, scale](const Eigen::VectorXd& sigma) {
    FormCoeffs fc;
    fc.c1.resize(sigma.size());
    fc.c0.resize(sigma.size());
    fc.V.resize(sigma.size());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      const double x = scale * sigma[i], w = wt.w(x);
      fc.c1[i] = std::sqrt(w) / scale;
      fc.c0[i] = wt.dw(x) / (2 * std::sqrt(w));
      fc.V[i] = w;
    }
    return fc;
  };
}

FormFn multiplication(std::function<double(double)> f) {
  return [f](const Eigen::VectorXd& sigma) {
    FormCoeffs fc;
    fc.c1 = Eigen::VectorXd::Zero(sigma.size());
    fc.c0 = Eigen::VectorXd::Zero(sigma.size());
    fc.V = sigma.unaryExpr(f);
    return fc;
  };
}

ParityBlocks bessel_blocks(int N, double scale) {
  auto b = assemble_form(multiplication([scale](double s) { return jbr(s / scale); }), N);
  for (Eigen::MatrixXd* blk : {&b.even, &b.odd})
    for (Eigen::Index j = 0; j < blk->rows(); ++j)
      for (Eigen::Index k = 0; k < blk->cols(); ++k)
        if ((j - k) % 2) (*blk)(j, k) = -(*blk)(j, k);
  return b;
}

// <x> S <x> truncated to N, with the inner sum over N + pad basis functions.
ParityBlocks plain_model_B(int N, double scale, int pad) {
  const int Ne = N + pad;
  const auto mx = assemble_form(multiplication([scale](double s) { return jbr(scale * s); }), Ne);
  const auto S = bessel_blocks(Ne, scale);
  ParityBlocks out;
  out.quad_nodes = mx.quad_nodes;
  const int ne = (N + 1) / 2, no = N / 2;
  out.even = mx.even.leftCols(ne).transpose() * S.even * mx.even.leftCols(ne);
  out.odd = mx.odd.leftCols(no).transpose() * S.odd * mx.odd.leftCols(no);
  return out;
}

void symmetrize(Eigen::MatrixXd& A) {
  A = 0.5 * (A + A.transpose()).eval();
}

}  // namespace

Eigen::MatrixXd bessel_potential_matrix(int N, double scale) { return merge_parity(bessel_blocks(N, scale)); }

std::vector<std::string> model_ids() { return {"model-A", "model-B", "oracle-H"}; }

ModelOperator model_operator(const std::string& id, BasisKind basis) {
  ModelOperator op;
  op.id = id;
  op.n = 1;
  op.basis = basis;
  if (id == "model-A" || id == "model-B") {
    const bool isA = id == "model-A";
    op.order = isA ? OrderPair{2, 1, 1} : OrderPair{1, 2, 1};
    op.triple = principal_triple(*catalog_symbol(id).classical);
    op.lower_bound = 1.0;
    if (basis == BasisKind::mapped) {
      // Model B = <x> S <x> is isospectral to S^{1/2} <x>^2 S^{1/2}, which the
      // Fourier transform carries to Model A; both use the same mapped form.
      op.block_builder = [](int N) { return assemble_form(mapped_sandwich(kJapanese), N); };
    } else if (isA) {
      op.block_builder = [](int N) {
        return assemble_form(plain_sandwich(kJapanese, std::pow(2.0 * N, 1.0 / 6)), N);
      };
    } else {
      op.block_builder = [](int N) {
        auto b = plain_model_B(N, std::pow(2.0 * N, -1.0 / 6), N);
        symmetrize(b.even);
        symmetrize(b.odd);
        return b;
      };
    }
  } else if (id == "oracle-H") {
    op.order = OrderPair{2, 2, 1};
    op.lower_bound = 1.0;
    op.basis = BasisKind::plain;
    op.block_builder = [](int N) {
      FormFn f = [](const Eigen::VectorXd& sigma) {
        FormCoeffs fc;
        fc.c1 = Eigen::VectorXd::Ones(sigma.size());
        fc.c0 = Eigen::VectorXd::Zero(sigma.size());
        fc.V = sigma.array().square();
        return fc;
      };
      return assemble_form(f, N);
    };
  } else {
    throw Error(Errc::InvalidArgument, "unknown model id '" + id + "'");
  }
  op.matrix_builder = [b = op.block_builder](int N) { return merge_parity(b(N)); };
  return op;
}

Eigen::MatrixXd hermite_matrix(const ModelOperator& model, int N) {
  if (N < 16) throw Error(Errc::InvalidArgument, "hermite_matrix needs N >= 16");
  return model.matrix_builder(N);
}

// ---------------------------------------------------------------------------
// Spectra

std::vector<double> eigen_spectrum(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw Error(Errc::InvalidArgument, "eigen_spectrum needs a square matrix");
  if (A.size() == 0) return {};
  const double amax = A.cwiseAbs().maxCoeff();
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * amax)
    throw Error(Errc::InvalidArgument, "eigen_spectrum needs a symmetric matrix");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error(Errc::SolverFailure, "symmetric eigensolver did not converge");
  std::vector<double> v(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<double> eigen_spectrum(const ParityBlocks& b) {
  auto e = eigen_spectrum(b.even);
  const auto o = eigen_spectrum(b.odd);
  e.insert(e.end(), o.begin(), o.end());
  std::sort(e.begin(), e.end());
  return e;
}

int convergence_trust(const SpectrumDataset& a, const SpectrumDataset& b, double rel_tol, double cap) {
  if (a.model_id != b.model_id)
    throw Error(Errc::ModelMismatch, "datasets from '" + a.model_id + "' and '" + b.model_id + "'");
  const std::size_t n = std::min(a.etas.size(), b.etas.size());
  std::size_t k = 0;
  while (k < n && std::abs(a.etas[k] - b.etas[k]) <= rel_tol * std::abs(b.etas[k])) ++k;
  const auto capped = static_cast<std::size_t>(std::floor(cap * a.etas.size()));
  return static_cast<int>(std::min(k, capped));
}

SpectrumPair compute_spectra(const ModelOperator& model, int N, double rel_tol) {
  const ParityBlocks big = model.block_builder(2 * N);
  SpectrumPair out;
  auto init = [&](SpectrumDataset& d, int dim) {
    d.model_id = model.id;
    d.basis_dim = dim;
    d.rel_tol = rel_tol;
    d.lower_bound = model.lower_bound;
    d.shift = model.shift;
    d.quad_nodes = big.quad_nodes;
    d.basis = model.basis == BasisKind::mapped ? "mapped-hermite" : "hermite";
  };
  init(out.at_N, N);
  init(out.at_2N, 2 * N);
  out.at_2N.etas = eigen_spectrum(big);
  out.at_N.etas = eigen_spectrum(leading_blocks(big, N));
  for (const auto* d : {&out.at_N, &out.at_2N})
    if (!d->etas.empty() && d->etas.front() < model.lower_bound * (1 - 1e-10)) {
      std::ostringstream os;
      os << model.id << ": lowest Ritz value " << d->etas.front() << " below the bound " << model.lower_bound;
      throw Error(Errc::SolverFailure, os.str());
    }
  out.at_N.trusted_count = convergence_trust(out.at_N, out.at_2N, rel_tol);
  // values converged at N are converged at 2N as well
  out.at_2N.trusted_count = out.at_N.trusted_count;
  return out;
}

SpectrumDataset power_dataset(const SpectrumDataset& d, double s) {
  SpectrumDataset q = d;
  for (double& e : q.etas) e = std::pow(e, s);
  q.lower_bound = std::pow(d.lower_bound, s);
  return q;
}

CountingFunction::CountingFunction(const SpectrumDataset& d)
    : etas_(d.etas.begin(), d.etas.begin() + std::min<std::size_t>(d.trusted_count, d.etas.size())) {}

long CountingFunction::operator()(double lambda) const {
  if (etas_.empty() || lambda > etas_.back()) {
    std::ostringstream os;
    os << "lambda = " << lambda << " beyond the largest trusted eigenvalue " << max_trusted();
    throw Error(Errc::BeyondTrustedRange, os.str());
  }
  return std::upper_bound(etas_.begin(), etas_.end(), lambda) - etas_.begin();
}

double max_residual_ratio(const CountingFunction& cf, double C, double a, double power, double lo, double hi) {
  const auto& e = cf.etas();
  auto ratio = [&](double lam, double count) { return std::abs(count - C * std::pow(lam, a)) / std::pow(lam, power); };
  double best = std::max(ratio(lo, cf(lo)), ratio(hi, cf(hi)));
  auto it = std::lower_bound(e.begin(), e.end(), lo);
  for (; it != e.end() && *it <= hi; ++it) {
    const double lam = *it;
    const long after = cf(lam);
    const long before = std::lower_bound(e.begin(), e.end(), lam) - e.begin();
    best = std::max({best, ratio(lam, after), ratio(lam, before)});
  }
  return best;
}

WeylFit fit_weyl(const CountingFunction& cf, const WeylPrediction& pr, double lo, double hi) {
  if (!(lo > 0 && hi > lo)) throw Error(Errc::InvalidArgument, "fit window must satisfy 0 < lo < hi");
  if (hi > cf.max_trusted()) {
    std::ostringstream os;
    os << "window end " << hi << " beyond the largest trusted eigenvalue " << cf.max_trusted();
    throw Error(Errc::BeyondTrustedRange, os.str());
  }
  const auto& e = cf.etas();
  const auto first = std::lower_bound(e.begin(), e.end(), lo);
  const auto last = std::upper_bound(e.begin(), e.end(), hi);
  WeylFit fit;
  fit.jumps = static_cast<int>(last - first);
  if (fit.jumps < 200) {
    std::ostringstream os;
    os << fit.jumps << " jump points in [" << lo << ", " << hi << "], need 200";
    throw Error(Errc::InsufficientData, os.str());
  }
  std::vector<double> lx, ly, rx, ry;
  double pinned = 0;
  for (auto it = first; it + 1 < last; ++it) {
    if (!(it[1] > it[0])) continue;
    const double mid = 0.5 * (it[0] + it[1]);
    const double count = static_cast<double>(cf(mid));
    lx.push_back(std::log(mid));
    ly.push_back(std::log(count));
    pinned += ly.back() - pr.leading_exp * lx.back();
    const double r = std::abs(count - pr.leading_coeff * std::pow(mid, pr.leading_exp));
    if (r > 0) {
      rx.push_back(lx.back());
      ry.push_back(std::log(r));
    }
  }
  const auto lf = fit_line(lx, ly);
  fit.fitted_exp = lf.slope;
  fit.fitted_coeff = std::exp(lf.intercept);
  fit.pinned_coeff = std::exp(pinned / lx.size());
  fit.residual_exp = rx.size() >= 2 ? fit_line(rx, ry).slope : std::nan("");
  fit.max_residual_ratio =
      max_residual_ratio(cf, pr.leading_coeff, pr.leading_exp, pr.remainder_exp + 0.1, lo, hi);
  return fit;
}

}  // namespace sgw
