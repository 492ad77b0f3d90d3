#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgw/numerics.hpp"

namespace sgw {

// Points in R^n for n <= 2; the fixed maximum keeps these on the stack.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;
using MultiIndex = std::array<int, 2>;

inline int order_of(const MultiIndex& a) { return a[0] + a[1]; }

Vec vec1(double a);
Vec vec2(double a, double b);

struct OrderPair {
  double m = 0;   // order in xi
  double mu = 0;  // order in x
  int n = 1;
};

// Value, gradients and Hessian blocks; xxi(i, j) = d_{x_i} d_{xi_j}.
struct SymbolDerivs {
  double v = 0;
  Vec gx, gxi;
  Mat xx, xxi, xixi;
};

class SymbolModel {
public:
  virtual ~SymbolModel() = default;
  virtual int dim() const = 0;
  virtual double value(const Vec& x, const Vec& xi) const = 0;
  // D^alpha_xi D^beta_x when available in closed form.
  virtual std::optional<double> partial(const Vec&, const Vec&, const MultiIndex&,
                                        const MultiIndex&) const {
    return std::nullopt;
  }
  virtual SymbolDerivs derivs(const Vec& x, const Vec& xi) const;
  virtual std::string name() const { return "symbol"; }
};

// (c + y^T diag(d) y)^{p/2}; c = 1 gives SG weights like <x>^p, c = 0 gives
// homogeneous factors like |xi|^p.
struct PowerWeight {
  double c = 1.0;
  double p = 0.0;
  std::array<double, 2> d{1.0, 1.0};

  double value(const Vec& y) const;
  Vec gradient(const Vec& y) const;
  Mat hessian(const Vec& y) const;
  double partial(const Vec& y, const MultiIndex& a) const;  // |a| <= 2
};

// Finite sum of coeff * f(x) * g(xi) with power-weight factors.
class ProductSymbol final : public SymbolModel {
public:
  struct Term {
    double coeff = 1.0;
    PowerWeight fx, fxi;
  };
  ProductSymbol(int n, std::vector<Term> terms, std::string name = "product");

  int dim() const override { return n_; }
  double value(const Vec& x, const Vec& xi) const override;
  std::optional<double> partial(const Vec& x, const Vec& xi, const MultiIndex& alpha,
                                const MultiIndex& beta) const override;
  SymbolDerivs derivs(const Vec& x, const Vec& xi) const override;
  std::string name() const override { return name_; }
  const std::vector<Term>& terms() const { return terms_; }

  // Componentwise power is only closed-form for single-term symbols.
  std::shared_ptr<ProductSymbol> scaled(double s) const;

private:
  int n_;
  std::vector<Term> terms_;
  std::string name_;
};

// Symbol given only by point values; derivatives come from finite differences.
class FunctionSymbol final : public SymbolModel {
public:
  using Fn = std::function<double(const Vec&, const Vec&)>;
  FunctionSymbol(int n, Fn f, std::string name = "function") : n_(n), f_(std::move(f)), name_(std::move(name)) {}
  int dim() const override { return n_; }
  double value(const Vec& x, const Vec& xi) const override { return f_(x, xi); }
  std::string name() const override { return name_; }

private:
  int n_;
  Fn f_;
  std::string name_;
};

class SGSymbol {
public:
  SGSymbol() = default;
  SGSymbol(OrderPair order, std::shared_ptr<const SymbolModel> model)
      : order_(order), model_(std::move(model)) {}

  static SGSymbol from_function(OrderPair order, FunctionSymbol::Fn f, std::string name = "function");

  const OrderPair& order() const { return order_; }
  int dim() const { return model_->dim(); }
  const SymbolModel& model() const { return *model_; }
  std::shared_ptr<const SymbolModel> model_ptr() const { return model_; }

  double operator()(const Vec& x, const Vec& xi) const { return model_->value(x, xi); }
  double value(const Vec& x, const Vec& xi) const { return model_->value(x, xi); }
  SymbolDerivs derivs(const Vec& x, const Vec& xi) const { return model_->derivs(x, xi); }

  // D^alpha_xi D^beta_x p, closed form when the model has it, else 4th-order
  // central differences with a cross-step consistency check.
  double partial(const Vec& x, const Vec& xi, const MultiIndex& alpha, const MultiIndex& beta) const;
  double fd_partial(const Vec& x, const Vec& xi, const MultiIndex& alpha, const MultiIndex& beta) const;

private:
  OrderPair order_;
  std::shared_ptr<const SymbolModel> model_;
};

// Dyadic shells in |x| and |xi| with equally spaced directions.
struct ProbeGrid {
  int n = 1;
  std::vector<double> radii;  // includes 0
  int directions = 32;

  static ProbeGrid standard(int n, double rmax = 1024.0);
  std::vector<Vec> shell(double r) const;
};

struct OrderEstimate {
  OrderPair order;
  // constants(|alpha|, |beta|) for |alpha|, |beta| <= 2
  Eigen::Matrix3d constants = Eigen::Matrix3d::Zero();
};

OrderEstimate estimate_order(const SGSymbol& p, const ProbeGrid& grid);

struct EllipticityBounds {
  double A = 1.0;
  double R = 0.0;
  double C_grad = 1.0;
};

EllipticityBounds check_ellipticity(const SGSymbol& q, const OrderPair& order, const ProbeGrid& grid);

using HomFn = std::function<double(const Vec&, const Vec&)>;

struct PrincipalTriple {
  int n = 1;
  double m = 0, mu = 0;  // homogeneity degrees of psi (in xi) and e (in x)
  HomFn psi, e, psie;
};

struct ClassicalSpec {
  int n = 1;
  double m = 0, mu = 0;
  HomFn psi, e;
  HomFn psie;  // optional; checked against both ray limits when supplied
};

// Ray limits by Richardson extrapolation at s in {1e4, 2e4, 4e4}.
double limit_x_ray(const HomFn& f, double degree, const Vec& x, const Vec& xi);
double limit_xi_ray(const HomFn& f, double degree, const Vec& x, const Vec& xi);

PrincipalTriple principal_triple(const ClassicalSpec& spec);
PrincipalTriple power_triple(const PrincipalTriple& t, double s);
PrincipalTriple scale_triple(const PrincipalTriple& t, double s);

// Max relative homogeneity defect of psi over random samples at the factor s.
double homogeneity_defect_psi(const PrincipalTriple& t, double s, int samples, unsigned seed);
double homogeneity_defect_e(const PrincipalTriple& t, double s, int samples, unsigned seed);

// ---------------------------------------------------------------------------
// Cutoffs

struct CutoffConfig {
  double B = 1.0;
  double k1 = 0, k2 = 0;
  double eps = 0.4;
  double lambda0 = 0;
  double k0 = 0.5;
  double kappa = 0;
  double T = 0.2;
  // measured inputs the inequalities refer to
  double A = 1.0, C = 1.0, m = 0.5;

  // 25% slack over each of the required inequalities.
  static CutoffConfig defaults(double A, double C, double m, double T = 0.2);
  double kappa_exact() const;
  void validate() const;  // throws ConfigInvariantViolated
};

enum class CutoffKind { omega, H1, H2, H3 };

class SmoothCutoff {
public:
  SmoothCutoff(CutoffKind kind, const CutoffConfig& cfg);
  CutoffKind kind() const { return kind_; }
  double operator()(double u) const { return eval(u); }
  Jet2 jet(double u) const { return eval(Jet2::variable(u)); }

private:
  template <class J>
  J eval(J u) const;
  CutoffKind kind_;
  double B_, k1_, k2_, eps_;
};

struct CutoffSet {
  SmoothCutoff omega, H1, H2, H3;
};

CutoffSet make_cutoffs(const CutoffConfig& cfg);

// ---------------------------------------------------------------------------
// Registered catalog

struct CatalogSymbol {
  std::string id;
  SGSymbol symbol;
  std::optional<ClassicalSpec> classical;
};

std::vector<std::string> catalog_ids();
CatalogSymbol catalog_symbol(const std::string& id);

}  // namespace sgw
