#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/factorials.hpp>
#include <boost/math/special_functions/hermite.hpp>

#include "sgw/spectral.hpp"

using namespace sgw;

namespace {

// Normalized Hermite function from Boost's physicists' polynomials.
double hermite_fn(unsigned k, double x) {
  const double norm = std::sqrt(std::pow(2.0, k) * boost::math::factorial<double>(k) * std::sqrt(pi));
  return boost::math::hermite(k, x) * std::exp(-0.5 * x * x) / norm;
}

// int f(x) h_j(x) h_k(x) dx for even integrands, by exp-sinh on [0, inf).
double even_moment(const std::function<double(double)>& f, unsigned j, unsigned k) {
  boost::math::quadrature::exp_sinh<double> es;
  // beyond |x| = 60 the Gaussian factor is below 1e-700 for every degree used here
  return 2.0 * es.integrate([&](double x) { return x > 60 ? 0.0 : f(x) * hermite_fn(j, x) * hermite_fn(k, x); });
}

SpectrumDataset dataset(std::vector<double> etas, const std::string& id = "synthetic") {
  SpectrumDataset d;
  d.etas = std::move(etas);
  d.model_id = id;
  d.basis_dim = static_cast<int>(d.etas.size());
  d.trusted_count = d.basis_dim;
  return d;
}

}  // namespace

TEST_CASE("Gauss-Hermite rule reproduces Gaussian moments") {
  for (int M : {20, 61, 500}) {
    const auto r = gauss_hermite(M);
    for (int p = 0; p <= std::min(M - 1, 8); ++p) {
      double s = 0;
      for (int i = 0; i < M; ++i)
        s += std::exp(r.log_weights[i] - r.nodes[i] * r.nodes[i]) * std::pow(r.nodes[i], 2 * p);
      CHECK(s == doctest::Approx(std::tgamma(p + 0.5)).epsilon(1e-12));
    }
  }
}

TEST_CASE("Hermite table") {
  Eigen::VectorXd x(5);
  x << -3.0, -0.5, 0.0, 1.25, 7.0;
  Eigen::MatrixXd H, dH;
  hermite_table(x, Eigen::VectorXd::Zero(5), 12, H, &dH);
  for (int i = 0; i < 5; ++i)
    for (unsigned k = 0; k < 12; ++k) {
      CHECK(H(i, k) == doctest::Approx(hermite_fn(k, x[i])).epsilon(1e-12).scale(1e-14));
      const double d = (k > 0 ? 2.0 * k * boost::math::hermite(k - 1, x[i]) : 0.0) -
                       x[i] * boost::math::hermite(k, x[i]);
      const double norm = std::sqrt(std::pow(2.0, k) * boost::math::factorial<double>(k) * std::sqrt(pi));
      const double ref = d * std::exp(-0.5 * x[i] * x[i]) / norm;
      CHECK(dH(i, k) == doctest::Approx(ref).epsilon(1e-11).scale(1e-14));
    }

  // sqrt(W_i) h_k(x_i) is an orthogonal matrix, including far-out nodes
  const int M = 800;
  const auto r = gauss_hermite(M);
  hermite_table(r.nodes, 0.5 * r.log_weights, M, H);
  const Eigen::MatrixXd G = H.transpose() * H;
  CHECK((G - Eigen::MatrixXd::Identity(M, M)).cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::MatrixXd Hodd;
  hermite_table(r.nodes, 0.5 * r.log_weights, 20, Hodd, nullptr, 1, 2);
  REQUIRE(Hodd.cols() == 10);
  CHECK((Hodd.col(3) - H.col(7)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eigen_spectrum") {
  Eigen::MatrixXd D(2, 2);
  D << 3, 0, 0, 1;
  CHECK(eigen_spectrum(D) == std::vector<double>{1.0, 3.0});

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(30, 30);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = g(rng);
  std::vector<int> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> P(30);
  for (int i = 0; i < 30; ++i) P.indices()[i] = perm[i];
  const Eigen::MatrixXd B = P * A * P.transpose();
  const auto ea = eigen_spectrum(A), eb = eigen_spectrum(B);
  for (int i = 0; i < 30; ++i) CHECK(ea[i] == doctest::Approx(eb[i]).epsilon(1e-12));

  A(0, 1) += 1.0;
  CHECK_THROWS_AS(eigen_spectrum(A), Error);
}

TEST_CASE("oracle H") {
  const auto op = model_operator("oracle-H");
  const Eigen::MatrixXd M = hermite_matrix(op, 64);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(64, 64);
  for (int k = 0; k < 64; ++k) ref(k, k) = 2 * k + 1;
  CHECK((M - ref).cwiseAbs().maxCoeff() <= 1e-10);

  const auto e = eigen_spectrum(hermite_matrix(op, 400));
  for (int k = 0; k < 50; ++k) CHECK(std::abs(e[k] - (2 * k + 1)) <= 1e-8 * (2 * k + 1));
  CHECK_THROWS_AS(hermite_matrix(op, 8), Error);
}

TEST_CASE("model matrices at N = 64") {
  const Eigen::MatrixXd A = hermite_matrix(model_operator("model-A"), 64);
  CHECK((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * A.cwiseAbs().maxCoeff());
  CHECK(A.llt().info() == Eigen::Success);

  // plain basis for model B: <x> S <x> with S the matrix of (1 - d^2)^{1/2}
  const double sc = std::pow(128.0, -1.0 / 6);
  const Eigen::MatrixXd S = bessel_potential_matrix(128, sc);
  CHECK(eigen_spectrum(S).front() >= 1 - 1e-8);
  for (unsigned j : {0u, 1u, 2u, 6u})
    for (unsigned k : {0u, 4u, 10u}) {
      if ((j + k) % 2) continue;
      const int sign = ((static_cast<int>(j) - static_cast<int>(k)) / 2) % 2 ? -1 : 1;
      const double ref = sign * even_moment([sc](double s) { return jbr(s / sc); }, j, k);
      CHECK(S(j, k) == doctest::Approx(ref).epsilon(1e-10));
    }
  const Eigen::MatrixXd B = hermite_matrix(model_operator("model-B", BasisKind::plain), 64);
  Eigen::MatrixXd Mx(128, 64);
  for (unsigned j = 0; j < 128; ++j)
    for (unsigned k = 0; k < 64; ++k)
      Mx(j, k) = (j + k) % 2 ? 0.0 : even_moment([sc](double s) { return jbr(sc * s); }, j, k);
  const Eigen::MatrixXd ref = Mx.transpose() * S * Mx;
  CHECK((B - ref).cwiseAbs().maxCoeff() <= 1e-9 * ref.cwiseAbs().maxCoeff());
}

TEST_CASE("plain Hermite bases agree with the mapped basis") {
  const auto mapped = compute_spectra(model_operator("model-A"), 200);
  for (const char* id : {"model-A", "model-B"}) {
    const auto plain = compute_spectra(model_operator(id, BasisKind::plain), 200, 1e-4);
    for (int k = 0; k < 10; ++k) CHECK(std::abs(plain.at_2N.etas[k] / mapped.at_N.etas[k] - 1) <= 1e-6);
  }
}

TEST_CASE("under-resolved quadrature is detected") {
  FormFn kink = [](const Eigen::VectorXd& s) {
    FormCoeffs fc;
    fc.c1 = Eigen::VectorXd::Ones(s.size());
    fc.c0 = Eigen::VectorXd::Zero(s.size());
    fc.V = s.array().abs() + 1.0;
    return fc;
  };
  AssemblyOptions opt;
  opt.nodes = 2 * 40 + 32;
  try {
    assemble_form(kink, 40, opt);
    FAIL("expected QuadratureUnderResolved");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::QuadratureUnderResolved);
  }
  opt.nodes = 40;
  CHECK_THROWS_AS(assemble_form(kink, 40, opt), Error);
}

TEST_CASE("convergence trust") {
  const auto d = dataset({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  CHECK(convergence_trust(d, d, 1e-6) == 8);
  auto other = d;
  other.model_id = "other";
  try {
    convergence_trust(d, other, 1e-6);
    FAIL("expected ModelMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ModelMismatch);
  }
  auto moved = d;
  moved.etas[3] *= 1 + 1e-5;
  CHECK(convergence_trust(d, moved, 1e-6) == 3);

  const auto h = compute_spectra(model_operator("oracle-H"), 200, 1e-6);
  CHECK(h.at_N.trusted_count >= 100);
}

TEST_CASE("model A spectra: Ritz monotonicity, counting, power identity") {
  const auto sp = compute_spectra(model_operator("model-A"), 300);
  const auto& a = sp.at_N;
  CHECK(a.trusted_count == 240);
  CHECK(std::is_sorted(a.etas.begin(), a.etas.end()));
  CHECK(a.etas.front() >= a.lower_bound);
  for (int j = 0; j < a.trusted_count; ++j) CHECK(sp.at_2N.etas[j] <= a.etas[j] + 1e-10);

  const CountingFunction cf(a);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, cf.max_trusted());
  std::uniform_real_distribution<double> du(0.0, 5.0);
  for (int i = 0; i < 500; ++i) {
    const double lam = u(rng), d = du(rng);
    CHECK(cf(lam) - cf(std::max(0.0, lam - d)) >= 0);
  }
  CHECK_THROWS_AS(cf(cf.max_trusted() * 1.01), Error);

  const auto q = power_dataset(a, 0.5);
  const CountingFunction cq(q);
  for (int i = 0; i < 500; ++i) {
    const double eta = std::sqrt(u(rng));
    CHECK(cq(eta) == cf(eta * eta));
  }
  for (int j = 0; j < 50; ++j) CHECK(cq(std::sqrt(a.etas[j])) == cf(a.etas[j]));
}

TEST_CASE("counting examples") {
  const CountingFunction c(dataset({1, 2, 3}));
  CHECK(c(2.5) == 2);
  CHECK(c(2.0) == 2);
  const CountingFunction m(dataset({1, 1, 2}));
  CHECK(m(1.0) == 2);
  CHECK(c(0.5) == 0);
  try {
    c(3.5);
    FAIL("expected BeyondTrustedRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::BeyondTrustedRange);
  }
}

TEST_CASE("fit_weyl on synthetic staircases") {
  std::vector<double> lin, root;
  for (int j = 1; j <= 5000; ++j) {
    lin.push_back(j);
    root.push_back(std::sqrt(static_cast<double>(j)));
  }
  WeylPrediction p;
  p.leading_coeff = 1;
  p.leading_exp = 1;
  p.remainder_exp = 0;
  const auto f1 = fit_weyl(CountingFunction(dataset(lin)), p, 500, 5000);
  CHECK(std::abs(f1.fitted_exp - 1) <= 0.01);
  CHECK(std::abs(f1.fitted_coeff - 1) <= 0.02);
  CHECK(f1.max_residual_ratio <= 1.0 / std::pow(500.0, 0.1) + 1e-12);

  p.leading_exp = 2;
  const auto f2 = fit_weyl(CountingFunction(dataset(root)), p, 40, 70);
  CHECK(std::abs(f2.fitted_exp - 2) <= 0.02);

  try {
    fit_weyl(CountingFunction(dataset(lin)), p, 100, 250);
    FAIL("expected InsufficientData");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientData);
  }
  CHECK_THROWS_AS(fit_weyl(CountingFunction(dataset(lin)), p, 100, 6000), Error);
}
