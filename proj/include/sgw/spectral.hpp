#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgw/symbol.hpp"
#include "sgw/weyl_constants.hpp"

namespace sgw {

// ---------------------------------------------------------------------------
// Hermite functions and Gauss-Hermite quadrature

// M-point Gauss-Hermite rule for int f(s) ds, stored as nodes and the log of
// W_i = w_i exp(s_i^2) (W overflows for large M; the products W h_j h_k do not).
struct GaussHermiteRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd log_weights;
};

GaussHermiteRule gauss_hermite(int M);

// Entry (i, k) is h_k(x_i) exp(half_log_weight_i) for k < cols, h_k the
// L2-normalized Hermite functions. dH (optional) holds h_k' with the same
// scaling. Log-scaled recurrence, so large |x| neither overflows nor
// underflows prematurely.
// Only the columns k = first, first + step, ... are stored.
void hermite_table(const Eigen::VectorXd& x, const Eigen::VectorXd& half_log_weight, int cols,
                   Eigen::MatrixXd& H, Eigen::MatrixXd* dH = nullptr, int first = 0, int step = 1);

// ---------------------------------------------------------------------------
// Quadratic forms  int (c1 g' + c0 g)(c1 h' + c0 h) + V g h  in a Hermite basis

struct FormCoeffs {
  Eigen::VectorXd c1, c0, V;
};

// Coefficients at the (positive) quadrature nodes sigma.
using FormFn = std::function<FormCoeffs(const Eigen::VectorXd& sigma)>;

// Operators commuting with x -> -x split into the blocks of even and odd
// Hermite indices.
struct ParityBlocks {
  Eigen::MatrixXd even, odd;  // sizes ceil(N/2), floor(N/2)
  int quad_nodes = 0;
};

Eigen::MatrixXd merge_parity(const ParityBlocks& b);
ParityBlocks leading_blocks(const ParityBlocks& b, int N);

struct AssemblyOptions {
  int nodes = 0;           // 0: 3N + 64
  bool check_resolution = true;
  double resolution_tol = 1e-10;  // relative to sqrt(A_jj A_kk)
};

ParityBlocks assemble_form(const FormFn& form, int N, const AssemblyOptions& opt = {});

// ---------------------------------------------------------------------------
// Model operators

enum class BasisKind { mapped, plain };

struct ModelOperator {
  std::string id;
  int n = 1;
  OrderPair order;
  std::optional<PrincipalTriple> triple;
  double lower_bound = 1.0;
  double shift = 0.0;
  BasisKind basis = BasisKind::mapped;
  std::function<ParityBlocks(int)> block_builder;
  std::function<Eigen::MatrixXd(int)> matrix_builder;
};

// Catalog: "model-A", "model-B", "oracle-H". The mapped basis is the
// production one for A and B; oracle-H is always plain.
ModelOperator model_operator(const std::string& id, BasisKind basis = BasisKind::mapped);
std::vector<std::string> model_ids();

Eigen::MatrixXd hermite_matrix(const ModelOperator& model, int N);

// Matrix of (1 - d^2)^{1/2} in the basis s^{-1/2} h_k(x / s), k < N, through
// the Fourier eigenfunction property of h_k.
Eigen::MatrixXd bessel_potential_matrix(int N, double scale);

// ---------------------------------------------------------------------------
// Spectra

std::vector<double> eigen_spectrum(const Eigen::MatrixXd& A);
std::vector<double> eigen_spectrum(const ParityBlocks& b);

struct SpectrumDataset {
  std::vector<double> etas;
  std::string model_id;
  int basis_dim = 0;
  int trusted_count = 0;
  double rel_tol = 1e-6;
  double trust_cap = 0.8;
  double lower_bound = 1.0;
  double shift = 0.0;
  int quad_nodes = 0;
  std::string basis;
};

int convergence_trust(const SpectrumDataset& spec_N, const SpectrumDataset& spec_2N, double rel_tol,
                      double cap = 0.8);

struct SpectrumPair {
  SpectrumDataset at_N, at_2N;
};

// Assembles once at 2N; the N dataset is the leading block of the same
// matrix, so eta_j(2N) <= eta_j(N) holds by Cauchy interlacing.
SpectrumPair compute_spectra(const ModelOperator& model, int N, double rel_tol = 1e-6);

// Q = P^{s}: eta -> eta^s (pure relabeling of the same eigenvectors).
SpectrumDataset power_dataset(const SpectrumDataset& d, double s);

class CountingFunction {
public:
  explicit CountingFunction(const SpectrumDataset& d);
  // number of trusted eta_j <= lambda, with multiplicity
  long operator()(double lambda) const;
  const std::vector<double>& etas() const { return etas_; }
  double max_trusted() const { return etas_.empty() ? 0.0 : etas_.back(); }

private:
  std::vector<double> etas_;
};

struct WeylFit {
  double fitted_exp = 0;
  double fitted_coeff = 0;
  double pinned_coeff = 0;  // geometric-mean coefficient at the predicted exponent
  double residual_exp = 0;
  double max_residual_ratio = 0;
  int jumps = 0;
};

WeylFit fit_weyl(const CountingFunction& cf, const WeylPrediction& prediction, double lo, double hi);

// max over [lo, hi] of |N(lambda) - C lambda^a| / lambda^{power}; sup taken
// at both one-sided limits of every jump and at the ends.
double max_residual_ratio(const CountingFunction& cf, double C, double a, double power, double lo, double hi);

}  // namespace sgw
