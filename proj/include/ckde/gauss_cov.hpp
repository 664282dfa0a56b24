#pragma once

// Covariance of f(u) for a centered Gaussian vector u ~ N(0, S): the Hermite
// series, its weak-correlation simplifications and a Monte Carlo oracle.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ckde/error.hpp"
#include "ckde/hermite.hpp"
#include "ckde/parallel.hpp"
#include "ckde/random.hpp"

namespace ckde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Norms

template <class Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) return 0.0;
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a = m;
  Eigen::BDCSVD<decltype(a)> svd(a);
  return svd.singularValues()(0);
}

// Largest |eigenvalue|; exact spectral norm for symmetric input and cheaper than SVD.
inline double symmetric_spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

template <class Derived>
double max_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

template <class Derived>
double frobenius_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.norm();
}

// ---------------------------------------------------------------------------

inline Matrix hadamard_power(const Matrix& m, int r) {
  if (r < 1) throw DomainError("hadamard_power: r must be >= 1");
  Matrix out = m;
  for (int k = 1; k < r; ++k) out = out.cwiseProduct(m);
  return out;
}

// Symmetric PSD square root; eigenvalues in [-1e-10, 0) are clipped to 0.
inline Matrix psd_sqrt(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) throw DomainError("psd_sqrt: eigendecomposition failed");
  Vector ev = es.eigenvalues();
  if (ev.size() > 0 && ev.minCoeff() < -1e-10)
    throw DomainError("matrix is not positive semi-definite (min eigenvalue " + std::to_string(ev.minCoeff()) + ")");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

class CovModel {
 public:
  CovModel(Matrix s, Activation f) : S_(std::move(s)), f_(std::move(f)) {
    if (S_.rows() != S_.cols() || S_.rows() == 0) throw DomainError("CovModel: S must be square and non-empty");
    if ((S_ - S_.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw DomainError("CovModel: S must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(S_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("CovModel: S must be positive semi-definite");
    delta_ = S_ - Matrix::Identity(S_.rows(), S_.cols());
    diag_delta_ = delta_.diagonal();
  }

  const Matrix& S() const { return S_; }
  const Activation& f() const { return f_; }
  const Matrix& delta() const { return delta_; }
  const Vector& diag_delta() const { return diag_delta_; }
  Eigen::Index n() const { return S_.rows(); }

 private:
  Matrix S_;
  Activation f_;
  Matrix delta_;
  Vector diag_delta_;
};

struct ExpansionTail {
  double max_tail = 0.0;  // max_i (||f_i||^2 - sum_{r <= r_max} zeta_r(f_i)^2)
};

// Sigma = sum_r D_r S^{o r} D_r, (D_r)_i = S_ii^{-r/2} zeta_r(f_i), f_i(t) = f(sqrt(S_ii) t).
// Off-diagonal entries are truncated at r_max; diagonal entries equal the full
// series ||f_i||^2 by Parseval.
inline Matrix sigma_expansion(const CovModel& model, int r_max = 20, ExpansionTail* tail = nullptr) {
  if (r_max < 0) throw DomainError("sigma_expansion: r_max must be >= 0");
  const Eigen::Index n = model.n();
  const Matrix& S = model.S();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(S(i, i) > 0.0)) throw DomainError("sigma_expansion: diagonal of S must be positive");

  const QuadratureRule rule = adapted_rule(model.f());
  // Entries sharing a variance share coefficients.
  std::vector<double> keys;
  std::vector<std::vector<double>> zetas;
  std::vector<double> norms;
  std::vector<std::size_t> which(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = S(i, i);
    auto it = std::find(keys.begin(), keys.end(), s);
    if (it == keys.end()) {
      const Activation fi = model.f().scaled(std::sqrt(s));
      keys.push_back(s);
      zetas.push_back(hermite_coeffs(fi, r_max, rule));
      norms.push_back(gaussian_norm_sq(fi, rule));
      which[static_cast<std::size_t>(i)] = keys.size() - 1;
    } else {
      which[static_cast<std::size_t>(i)] = static_cast<std::size_t>(it - keys.begin());
    }
  }

  Matrix sigma = Matrix::Zero(n, n);
  Matrix power = Matrix::Ones(n, n);
  Vector d(n);
  for (int r = 0; r <= r_max; ++r) {
    if (r > 0) power = power.cwiseProduct(S);
    for (Eigen::Index i = 0; i < n; ++i)
      d(i) = std::pow(S(i, i), -0.5 * r) * zetas[which[static_cast<std::size_t>(i)]][static_cast<std::size_t>(r)];
    sigma += d.asDiagonal() * power * d.asDiagonal();
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    double partial = 0.0;
    for (double z : zetas[k]) partial += z * z;
    worst = std::max(worst, norms[k] - partial);
  }
  for (Eigen::Index i = 0; i < n; ++i) sigma(i, i) = norms[which[static_cast<std::size_t>(i)]];
  if (tail) tail->max_tail = worst;
  return 0.5 * (sigma + sigma.transpose());
}

namespace detail {
inline std::vector<double> centered_coeffs(const CovModel& model, int r_max, double& norm2) {
  const QuadratureRule rule = adapted_rule(model.f());
  auto z = hermite_coeffs(model.f(), r_max, rule);
  if (std::abs(z[0]) >= 1e-8)
    throw AssumptionError("activation is not Gaussian-centered: zeta_0 = " + std::to_string(z[0]));
  norm2 = gaussian_norm_sq(model.f(), rule);
  return z;
}
}  // namespace detail

// ||f||^2 I + (zeta_2^2 / 2) diag(Delta) diag(Delta)^T + sum_{r=1..3} zeta_r^2 Delta^{o r}
inline Matrix sigma_approx(const CovModel& model) {
  double norm2 = 0.0;
  const auto z = detail::centered_coeffs(model, 3, norm2);
  const Matrix& D = model.delta();
  const Vector& dd = model.diag_delta();
  const Eigen::Index n = model.n();
  Matrix out = norm2 * Matrix::Identity(n, n) + 0.5 * z[2] * z[2] * dd * dd.transpose();
  Matrix p = D;
  for (int r = 1; r <= 3; ++r) {
    if (r > 1) p = p.cwiseProduct(D);
    out += z[static_cast<std::size_t>(r)] * z[static_cast<std::size_t>(r)] * p;
  }
  return 0.5 * (out + out.transpose());
}

// ||f||^2 I + zeta_1^2 Delta
inline Matrix sigma_lin(const CovModel& model) {
  double norm2 = 0.0;
  const auto z = detail::centered_coeffs(model, 1, norm2);
  const Eigen::Index n = model.n();
  Matrix out = norm2 * Matrix::Identity(n, n) + z[1] * z[1] * model.delta();
  return 0.5 * (out + out.transpose());
}

struct McEstimate {
  Matrix mean;
  Matrix std_error;
  long long samples = 0;
};

// Empirical E[f(u) f(u)^T] with u = S^{1/2} N. Samples are split into fixed
// blocks, each with its own substream, so the result does not depend on the
// worker count.
inline McEstimate sigma_mc_oracle(const CovModel& model, long long samples, std::uint64_t seed,
                                  int workers = worker_count()) {
  if (samples < 1) throw DomainError("sigma_mc_oracle: samples must be >= 1");
  const Matrix root = psd_sqrt(model.S());
  const Eigen::Index n = model.n();
  constexpr long long kBlock = 1 << 16;
  const long long blocks = (samples + kBlock - 1) / kBlock;
  std::vector<Matrix> sum(static_cast<std::size_t>(blocks)), sumsq(static_cast<std::size_t>(blocks));
  parallel_chunks(static_cast<std::size_t>(blocks), workers, [&](std::size_t b0, std::size_t b1) {
    Vector g(n), u(n), fu(n);
    for (std::size_t b = b0; b < b1; ++b) {
      NormalStream rng(substream_seed(seed, {0x6d63ULL, b}));
      const long long count = std::min(kBlock, samples - static_cast<long long>(b) * kBlock);
      Matrix s = Matrix::Zero(n, n), q = Matrix::Zero(n, n);
      for (long long k = 0; k < count; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) g(i) = rng();
        u.noalias() = root * g;
        for (Eigen::Index i = 0; i < n; ++i) fu(i) = model.f()(u(i));
        for (Eigen::Index j = 0; j < n; ++j)
          for (Eigen::Index i = 0; i < n; ++i) {
            const double v = fu(i) * fu(j);
            s(i, j) += v;
            q(i, j) += v * v;
          }
      }
      sum[b] = std::move(s);
      sumsq[b] = std::move(q);
    }
  });
  Matrix s = Matrix::Zero(n, n), q = Matrix::Zero(n, n);
  for (std::size_t b = 0; b < sum.size(); ++b) {
    s += sum[b];
    q += sumsq[b];
  }
  const double N = static_cast<double>(samples);
  McEstimate est;
  est.samples = samples;
  est.mean = s / N;
  const Matrix var = (q / N - est.mean.cwiseProduct(est.mean)).cwiseMax(0.0) * (N / std::max(N - 1.0, 1.0));
  est.std_error = (var / N).cwiseSqrt();
  return est;
}

}  // namespace ckde
