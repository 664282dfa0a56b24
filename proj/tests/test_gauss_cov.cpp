#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ckde/gauss_cov.hpp"

using namespace ckde;

namespace {

// Symmetric S = I + Delta with small off-diagonal entries and a perturbed diagonal.
Matrix random_near_identity(int n, double scale, std::uint64_t seed, bool unit_diag = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    Matrix s = Matrix::Identity(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        const double v = (i == j) ? (unit_diag ? 0.0 : 0.5 * scale * u(rng)) : scale * u(rng);
        s(i, j) += v;
        if (i != j) s(j, i) += v;
      }
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() > 0.05) return s;
  }
}

// Delta = S - I for a normalized Wishart S, which keeps I + Delta PSD.
Matrix random_delta(int n, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix a(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) a(i, j) = g(rng);
  Matrix s = a * a.transpose() / m;
  return s - Matrix::Identity(n, n);
}

Matrix uniform_offdiag(int n) {
  return (Matrix::Ones(n, n) - Matrix::Identity(n, n)) / static_cast<double>(n);
}

void expect_symmetric(const Matrix& m) {
  EXPECT_LE((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace

TEST(HadamardPower, Examples) {
  Matrix m(2, 2);
  m << 1.5, -2.0, -2.0, 0.25;
  EXPECT_EQ(hadamard_power(m, 1), m);
  const Matrix j = Matrix::Ones(3, 3);
  for (int r : {1, 2, 5}) EXPECT_EQ(hadamard_power(j, r), j);
  EXPECT_EQ(hadamard_power(2.0 * Matrix::Identity(3, 3), 3), 8.0 * Matrix::Identity(3, 3));
  Matrix cube(2, 2);
  cube << 3.375, -8.0, -8.0, 0.015625;
  EXPECT_EQ(hadamard_power(m, 3), cube);
  EXPECT_THROW(hadamard_power(m, 0), DomainError);
}

TEST(Norms, Basics) {
  Matrix m(2, 2);
  m << 3.0, 0.0, 0.0, -4.0;
  EXPECT_DOUBLE_EQ(spectral_norm(m), 4.0);
  EXPECT_DOUBLE_EQ(symmetric_spectral_norm(m), 4.0);
  EXPECT_DOUBLE_EQ(max_norm(m), 4.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(m), 5.0);
  const Matrix j = Matrix::Ones(5, 5);
  EXPECT_NEAR(spectral_norm(j), 5.0, 1e-12);
  EXPECT_NEAR(symmetric_spectral_norm(j), 5.0, 1e-12);
}

TEST(CovModel, Validation) {
  Matrix s = Matrix::Identity(3, 3);
  s(0, 1) = 0.5;
  EXPECT_THROW(CovModel(s, Activation::tanh()), DomainError);  // not symmetric
  s(1, 0) = 0.5;
  const CovModel model(s, Activation::tanh());
  EXPECT_EQ(model.delta(), s - Matrix::Identity(3, 3));
  EXPECT_DOUBLE_EQ(model.diag_delta()(2), 0.0);
  Matrix indefinite = Matrix::Identity(2, 2);
  indefinite(0, 1) = indefinite(1, 0) = 2.0;
  EXPECT_THROW(CovModel(indefinite, Activation::tanh()), DomainError);
  EXPECT_THROW(CovModel(Matrix(2, 3), Activation::tanh()), DomainError);
}

TEST(SigmaExpansion, IdentityActivationReturnsS) {
  const Matrix s = random_near_identity(6, 0.2, 3, true);
  const Matrix sigma = sigma_expansion(CovModel(s, Activation::identity()), 1);
  EXPECT_LT(max_norm(sigma - s), 1e-13);
}

TEST(SigmaExpansion, IdentityCovarianceIsDiagonal) {
  for (const Activation& f : {Activation::tanh(), Activation::centered_relu()}) {
    const Matrix sigma = sigma_expansion(CovModel(Matrix::Identity(5, 5), f), 20);
    const double norm2 = gaussian_norm_sq(f, adapted_rule(f));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) EXPECT_NEAR(sigma(i, j), i == j ? norm2 : 0.0, 1e-14);
  }
}

TEST(SigmaExpansion, Errors) {
  Matrix s = Matrix::Identity(2, 2);
  s(1, 1) = 0.0;
  EXPECT_THROW(sigma_expansion(CovModel(s, Activation::tanh()), 5), DomainError);
  EXPECT_THROW(sigma_expansion(CovModel(Matrix::Identity(2, 2), Activation::tanh()), -1), DomainError);
}

TEST(SigmaExpansion, ReportsTail) {
  const CovModel model(random_near_identity(3, 0.2, 11), Activation::tanh());
  ExpansionTail t10, t20, t40;
  sigma_expansion(model, 10, &t10);
  sigma_expansion(model, 20, &t20);
  sigma_expansion(model, 40, &t40);
  EXPECT_GE(t40.max_tail, -1e-14);
  EXPECT_LT(t20.max_tail, t10.max_tail);
  EXPECT_LT(t40.max_tail, t20.max_tail);
}

TEST(SigmaExpansion, MatchesMonteCarloSmallN) {
  // Cross-oracle agreement: n = 3 with a non-unit diagonal.
  const CovModel model(random_near_identity(3, 0.3, 21), Activation::tanh());
  const Matrix sigma = sigma_expansion(model, 20);
  const McEstimate mc = sigma_mc_oracle(model, 2'000'000, 99);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      EXPECT_LE(std::abs(sigma(i, j) - mc.mean(i, j)), 3.0 * mc.std_error(i, j)) << i << "," << j;
}

TEST(SigmaExpansion, SymmetricAndPsd) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const Activation& f : {Activation::tanh(), Activation::centered_relu()}) {
      const Matrix sigma = sigma_expansion(CovModel(random_near_identity(8, 0.15, seed), f), 30);
      expect_symmetric(sigma);
      Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
    }
  }
}

TEST(SigmaApprox, Examples) {
  const Matrix eye = Matrix::Identity(4, 4);
  const double norm2 = gaussian_norm_sq(Activation::tanh(), adapted_rule(Activation::tanh()));
  EXPECT_LT(max_norm(sigma_approx(CovModel(eye, Activation::tanh())) - norm2 * eye), 1e-15);
  const Matrix s = random_near_identity(5, 0.2, 8);
  EXPECT_LT(max_norm(sigma_approx(CovModel(s, Activation::identity())) - s), 1e-14);
  EXPECT_LT(max_norm(sigma_lin(CovModel(s, Activation::identity())) - s), 1e-14);
  EXPECT_LT(max_norm(sigma_lin(CovModel(eye, Activation::tanh())) - norm2 * eye), 1e-15);
  expect_symmetric(sigma_approx(CovModel(s, Activation::tanh())));
  expect_symmetric(sigma_lin(CovModel(s, Activation::centered_relu())));
}

TEST(SigmaApprox, RejectsNonCenteredActivation) {
  const CovModel model(Matrix::Identity(3, 3), Activation::centered_relu().scaled(2.0));
  EXPECT_THROW(sigma_approx(model), AssumptionError);
  EXPECT_THROW(sigma_lin(model), AssumptionError);
}

TEST(SigmaApprox, DifferenceFromLinearization) {
  const Matrix s = random_near_identity(6, 0.2, 4);
  for (const Activation& f : {Activation::tanh(), Activation::centered_relu()}) {
    const CovModel model(s, f);
    const auto z = hermite_coeffs(f, 3, adapted_rule(f));
    const Matrix& d = model.delta();
    const Vector& dd = model.diag_delta();
    const Matrix expected = 0.5 * z[2] * z[2] * dd * dd.transpose() + z[2] * z[2] * hadamard_power(d, 2) +
                            z[3] * z[3] * hadamard_power(d, 3);
    const Matrix diff = sigma_approx(model) - sigma_lin(model);
    EXPECT_LT(max_norm(diff - expected), 1e-14);
    if (f.name() == "tanh") {
      EXPECT_LE(symmetric_spectral_norm(diff), z[3] * z[3] * symmetric_spectral_norm(hadamard_power(d, 3)) + 1e-14);
    }
  }
}

TEST(SigmaApprox, GapShrinksWithCorrelation) {
  std::vector<double> logd, loggap, c_approx, c_lin;
  for (int n : {50, 100, 200}) {
    const CovModel model(Matrix::Identity(n, n) + uniform_offdiag(n), Activation::tanh());
    const Matrix full = sigma_expansion(model, 20);
    const double dmax = max_norm(model.delta());
    const double gap = symmetric_spectral_norm(full - sigma_approx(model));
    logd.push_back(std::log(dmax));
    loggap.push_back(std::log(gap));
    c_approx.push_back(gap / dmax);
    c_lin.push_back(max_norm(full - sigma_lin(model)) / dmax);
  }
  const double slope = (loggap.back() - loggap.front()) / (logd.back() - logd.front());
  EXPECT_GE(slope, 0.9);
  for (std::size_t k = 1; k < c_lin.size(); ++k) {
    EXPECT_LE(c_approx[k], c_approx[0] * (1.0 + 1e-6));
    EXPECT_LE(c_lin[k], c_lin[0] * (1.0 + 1e-6));
  }
  EXPECT_TRUE(std::isfinite(c_lin[0]));
}

TEST(HadamardPowerBounds, EvenPowerBound) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix d = random_delta(12, 40 + 20 * (trial % 4), rng);
    const double dmax = max_norm(d);
    const double sq = symmetric_spectral_norm(hadamard_power(d, 2));
    for (int r : {1, 2, 3}) {
      const double lhs = symmetric_spectral_norm(hadamard_power(d, 2 * r));
      EXPECT_LE(lhs, std::pow(dmax, 2 * r - 2) * sq * (1.0 + 1e-12) + 1e-15);
    }
  }
}

TEST(HadamardPowerBounds, GrowthBound) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix d = random_delta(12, 30 + 25 * (trial % 4), rng);
    const double dmax = max_norm(d);
    for (int r = 1; r <= 5; ++r) {
      const double lhs = symmetric_spectral_norm(hadamard_power(d, r + 1));
      const double rhs = (1.0 + dmax) * symmetric_spectral_norm(hadamard_power(d, r)) + std::pow(dmax, r);
      EXPECT_LE(lhs, rhs * (1.0 + 1e-12));
    }
  }
}

TEST(MonteCarlo, IdentityRecoversCovariance) {
  const Matrix s = random_near_identity(4, 0.3, 5);
  const long long samples = 1'000'000;
  const McEstimate mc = sigma_mc_oracle(CovModel(s, Activation::identity()), samples, 17);
  const double scale = s.cwiseAbs().maxCoeff();
  EXPECT_LT(max_norm(mc.mean - s), 5.0 * scale / std::sqrt(static_cast<double>(samples)));
  EXPECT_EQ(mc.samples, samples);
}

TEST(MonteCarlo, DeterministicAndWorkerIndependent) {
  const CovModel model(random_near_identity(3, 0.2, 6), Activation::tanh());
  const McEstimate a = sigma_mc_oracle(model, 200'000, 42, 1);
  const McEstimate b = sigma_mc_oracle(model, 200'000, 42, 1);
  const McEstimate c = sigma_mc_oracle(model, 200'000, 42, 4);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.mean, c.mean);
  EXPECT_EQ(a.std_error, c.std_error);
  const McEstimate other = sigma_mc_oracle(model, 200'000, 43, 1);
  EXPECT_NE(a.mean, other.mean);
}

TEST(MonteCarlo, Errors) {
  const CovModel model(Matrix::Identity(2, 2), Activation::tanh());
  EXPECT_THROW(sigma_mc_oracle(model, 0, 1), DomainError);
}

TEST(PsdSqrt, SquaresBack) {
  const Matrix s = random_near_identity(6, 0.3, 9);
  const Matrix r = psd_sqrt(s);
  EXPECT_LT(max_norm(r * r - s), 1e-13);
  expect_symmetric(r);
}
