#pragma once

// Monte Carlo sampling of random networks and their conjugate kernels.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <string>
#include <vector>

#include "ckde/detequiv.hpp"
#include "ckde/error.hpp"
#include "ckde/gauss_cov.hpp"
#include "ckde/network.hpp"
#include "ckde/random.hpp"

namespace ckde {

enum class Role : std::uint64_t { W = 1, B = 2, D = 3, X = 4 };

// Substream seed of one random matrix; layer 0 is the input data.
inline std::uint64_t matrix_seed(std::uint64_t master, std::size_t layer, Role role) {
  return substream_seed(master, {static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(role)});
}

inline Matrix sample_gaussian(Eigen::Index rows, Eigen::Index cols, double variance, std::uint64_t stream_seed) {
  if (!(variance >= 0.0)) throw DomainError("sample_gaussian: variance must be nonnegative");
  if (variance == 0.0) return Matrix::Zero(rows, cols);
  NormalStream rng(stream_seed);
  const double sd = std::sqrt(variance);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = sd * rng();
  return m;
}

// f(W X / sqrt(d_prev) + B) + D with W of size d_out x d_prev.
inline Matrix forward_layer(const Matrix& X, const LayerSpec& spec, Eigen::Index d_out, std::uint64_t master,
                            std::size_t layer) {
  spec.validate();
  if (d_out < 1) throw DomainError("forward_layer: output width must be >= 1");
  const Eigen::Index d_prev = X.rows(), n = X.cols();
  if (d_prev < 1 || n < 1) throw DomainError("forward_layer: empty input");
  const Matrix W = sample_gaussian(d_out, d_prev, spec.sigma_w2, matrix_seed(master, layer, Role::W));
  Matrix Y = (W * X) / std::sqrt(static_cast<double>(d_prev));
  Y += sample_gaussian(d_out, n, spec.sigma_b2, matrix_seed(master, layer, Role::B));
  Y = Y.unaryExpr([&](double t) { return spec.f(t); });
  Y += sample_gaussian(d_out, n, spec.sigma_d2, matrix_seed(master, layer, Role::D));
  return Y;
}

// Y^T Y / d, symmetrised.
inline Matrix conjugate_kernel(const Matrix& Y, double d) {
  if (!(d >= 1.0)) throw DomainError("conjugate_kernel: d must be >= 1");
  Matrix K = Y.transpose() * Y / d;
  return 0.5 * (K + K.transpose());
}

inline cplx empirical_stieltjes(const Vector& eigenvalues, cplx z) {
  if (!(z.imag() > 0.0)) throw DomainError("empirical_stieltjes: Im z must be positive");
  cplx s = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) s += 1.0 / (eigenvalues(i) - z);
  return s / static_cast<double>(eigenvalues.size());
}

inline cplx empirical_stieltjes(const Matrix& K, cplx z) {
  return empirical_stieltjes(Vector(SymmetricSpectrum(K).values()), z);
}

// Empirical spectral distribution of a PSD kernel. Eigenvalues within
// rel_tol * max(1, |lambda|_max) of zero are rounding noise from a null
// space and are placed exactly at 0.
inline Measure esd_measure(const Vector& eigenvalues, double rel_tol = 1e-10) {
  const double cut = rel_tol * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());
  std::vector<double> ev(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
  for (double& x : ev)
    if (std::abs(x) <= cut) x = 0.0;
  return Measure::discrete(esd_from_eigenvalues(ev));
}

inline CMatrix resolvent(const SymmetricSpectrum& spec, cplx z) {
  if (!(z.imag() > 0.0)) throw DomainError("resolvent: Im z must be positive");
  return spec.apply([z](double lam) { return 1.0 / (lam - z); });
}

inline CMatrix resolvent(const Matrix& K, cplx z) { return resolvent(SymmetricSpectrum(K), z); }

struct OrthogonalityStats {
  double max_norm = 0.0;   // ||K - sigma2 I||_max
  double diag_norm = 0.0;  // ||diag(K - sigma2 I)||_2
  double spec_norm = 0.0;  // ||K||
};

inline OrthogonalityStats orthogonality_stats(const Matrix& K, double sigma2) {
  if (K.rows() != K.cols()) throw DomainError("orthogonality_stats: K must be square");
  Matrix delta = K;
  delta.diagonal().array() -= sigma2;
  OrthogonalityStats s;
  s.max_norm = max_norm(delta);
  s.diag_norm = delta.diagonal().norm();
  s.spec_norm = symmetric_spectral_norm(K);
  return s;
}

// S^{1/2} for S = I + (J - I)/n: sqrt(1 - 1/n) (I - P) + sqrt(2 - 1/n) P with P = J/n.
inline Matrix correlated_rows_sqrt(Eigen::Index n) {
  const double nn = static_cast<double>(n);
  const double s1 = std::sqrt(1.0 - 1.0 / nn), s2 = std::sqrt(2.0 - 1.0 / nn);
  Matrix r = Matrix::Constant(n, n, (s2 - s1) / nn);
  r.diagonal().array() += s1;
  return r;
}

inline Matrix make_data(const NetworkSpec& spec, std::uint64_t master) {
  switch (spec.data.kind) {
    case DataModel::IidGaussian:
      return sample_gaussian(spec.d0, spec.n, spec.data.sigma_x2, matrix_seed(master, 0, Role::X));
    case DataModel::Explicit:
      return spec.data.X;
    case DataModel::CorrelatedRows:
      return std::sqrt(static_cast<double>(spec.d0) * spec.data.sigma_x2) * correlated_rows_sqrt(spec.n);
  }
  throw DomainError("unknown data model");
}

struct LayerSim {
  double sigma2 = 0.0;  // expected diagonal of K
  Vector eigenvalues;   // ascending
  OrthogonalityStats stats;
  std::vector<CMatrix> resolvents;               // one per requested z
  std::shared_ptr<const SymmetricSpectrum> spectrum;  // kept when requested
};

struct SimResult {
  std::uint64_t seed = 0;
  std::vector<cplx> z_grid;
  std::vector<LayerSim> layers;  // index 0 is the input kernel K_X
};

struct SimOptions {
  bool keep_spectra = false;
};

inline SimResult run_network(const NetworkSpec& spec, const std::vector<cplx>& z_grid, std::uint64_t seed,
                             const SimOptions& opt = {}) {
  spec.validate();
  for (const cplx& z : z_grid)
    if (!(z.imag() > 0.0)) throw DomainError("run_network: every z must have Im z > 0");
  SimResult res;
  res.seed = seed;
  res.z_grid = z_grid;
  Matrix X = make_data(spec, seed);
  double sx2 = spec.data.sigma_x2;

  auto record = [&](const Matrix& K, double sigma2) {
    LayerSim ls;
    ls.sigma2 = sigma2;
    auto sp = std::make_shared<const SymmetricSpectrum>(K);
    ls.eigenvalues = sp->values();
    if (ls.eigenvalues.minCoeff() < -1e-8)
      throw DomainError("conjugate kernel has a negative eigenvalue " + std::to_string(ls.eigenvalues.minCoeff()));
    ls.stats = orthogonality_stats(K, sigma2);
    for (const cplx& z : z_grid) ls.resolvents.push_back(resolvent(*sp, z));
    if (opt.keep_spectra) ls.spectrum = sp;
    res.layers.push_back(std::move(ls));
  };

  record(conjugate_kernel(X, static_cast<double>(spec.d0)), sx2);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& ly = spec.layers[l];
    const double st2 = ly.sigma_w2 * sx2 + ly.sigma_b2;
    const Activation ft = ly.f.scaled(std::sqrt(st2));
    sx2 = gaussian_norm_sq(ft, adapted_rule(ft)) + ly.sigma_d2;
    X = forward_layer(X, ly, spec.dims[l], seed, l + 1);
    record(conjugate_kernel(X, static_cast<double>(spec.dims[l])), sx2);
  }
  return res;
}

inline void write_eigenvalues_csv(const SimResult& r, std::ostream& os) {
  os << "layer,index,eigenvalue\n" << std::setprecision(17);
  for (std::size_t l = 0; l < r.layers.size(); ++l)
    for (Eigen::Index i = 0; i < r.layers[l].eigenvalues.size(); ++i)
      os << l << ',' << i << ',' << r.layers[l].eigenvalues(i) << '\n';
}

inline void write_stats_csv(const SimResult& r, std::ostream& os) {
  os << "layer,sigma2,max_norm,diag_norm,spec_norm\n" << std::setprecision(17);
  for (std::size_t l = 0; l < r.layers.size(); ++l) {
    const auto& s = r.layers[l].stats;
    os << l << ',' << r.layers[l].sigma2 << ',' << s.max_norm << ',' << s.diag_norm << ',' << s.spec_norm << '\n';
  }
}

}  // namespace ckde
