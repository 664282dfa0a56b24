#pragma once

// Deterministic equivalents of conjugate-kernel resolvents: layer constants,
// the matrix equivalent built from a covariance, its composition with an
// upstream equivalent, and the multi-layer chain.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ckde/distribution.hpp"
#include "ckde/freeconv.hpp"
#include "ckde/gauss_cov.hpp"
#include "ckde/hermite.hpp"
#include "ckde/measures.hpp"
#include "ckde/network.hpp"

namespace ckde {

using CMatrix = Eigen::MatrixXcd;

struct LayerConstants {
  double sigma_x2 = 0.0;      // input variance
  double sigma_tilde2 = 0.0;  // sigma_w2 sigma_x2 + sigma_b2
  std::vector<double> zeta;   // zeta_r(f~), r = 0 .. r_max
  double norm2 = 0.0;         // ||f~||^2
  double a = 0.0;
  double b = 0.0;
  double sigma_y2 = 0.0;      // ||f~||^2 + sigma_d2
  Activation f_tilde = Activation::identity();

  bool linear_part_vanishes() const { return b == 0.0; }
};

inline constexpr int kDefaultZetaDegree = 20;

inline LayerConstants layer_constants(const LayerSpec& spec, double sigma_x2, const QuadratureRule& rule,
                                      int r_max = kDefaultZetaDegree) {
  spec.validate();
  if (!(sigma_x2 > 0.0)) throw DomainError("layer_constants: sigma_x2 must be positive");
  LayerConstants c;
  c.sigma_x2 = sigma_x2;
  c.sigma_tilde2 = spec.sigma_w2 * sigma_x2 + spec.sigma_b2;
  const double st = std::sqrt(c.sigma_tilde2);
  c.f_tilde = spec.f.scaled(st);
  c.zeta = hermite_coeffs(c.f_tilde, r_max, rule);
  if (std::abs(c.zeta[0]) >= 1e-6) {
    throw AssumptionError("activation " + spec.f.name() + " is not centered at input scale sigma~ = " +
                          std::to_string(st) + ": zeta_0 = " + std::to_string(c.zeta[0]) +
                          "; subtract " + std::to_string(c.zeta[0]) + " from the activation");
  }
  c.norm2 = gaussian_norm_sq(c.f_tilde, rule);
  const double z1 = r_max >= 1 ? c.zeta[1] : 0.0;
  const double z1sq = std::abs(z1) < 1e-10 ? 0.0 : z1 * z1;
  c.a = c.norm2 - (spec.sigma_w2 * sigma_x2 / c.sigma_tilde2) * z1sq + spec.sigma_d2;
  c.b = z1sq * spec.sigma_w2 / c.sigma_tilde2;
  c.sigma_y2 = c.norm2 + spec.sigma_d2;
  return c;
}

inline LayerConstants layer_constants(const LayerSpec& spec, double sigma_x2, int r_max = kDefaultZetaDegree) {
  return layer_constants(spec, sigma_x2, adapted_rule(spec.f.scaled(std::sqrt(spec.sigma_w2 * sigma_x2 + spec.sigma_b2))),
                         r_max);
}

// Matrix-valued function of z in C+, safe to call concurrently.
struct MatrixFunction {
  Eigen::Index dim = 0;
  std::function<CMatrix(cplx)> eval;

  CMatrix operator()(cplx z) const { return eval(z); }
};

// Spectral data of a PSD matrix, reused across z.
class SymmetricSpectrum {
 public:
  explicit SymmetricSpectrum(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw DomainError("spectrum: matrix must be square and non-empty");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw DomainError("spectrum: eigendecomposition failed");
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
  }
  const Vector& values() const { return values_; }
  const Matrix& vectors() const { return vectors_; }
  Eigen::Index dim() const { return values_.size(); }

  // U diag(h(lambda)) U^T
  template <class H>
  CMatrix apply(H&& h) const {
    Eigen::VectorXcd d(values_.size());
    for (Eigen::Index i = 0; i < values_.size(); ++i) d(i) = h(values_(i));
    const CMatrix U = vectors_.cast<cplx>();
    return U * d.asDiagonal() * U.transpose();
  }

  // Eigenvalues as a measure on [0, inf); entries >= -1e-10 are clipped to 0.
  DiscreteMeasure psd_measure() const {
    std::vector<double> ev(values_.data(), values_.data() + values_.size());
    for (double& x : ev) {
      if (x < -1e-10) throw DomainError("matrix is not positive semi-definite (eigenvalue " + std::to_string(x) + ")");
      x = std::max(x, 0.0);
    }
    return esd_from_eigenvalues(ev);
  }

 private:
  Vector values_;
  Matrix vectors_;
};

// z -> (K - z I)^{-1}
inline MatrixFunction resolvent_function(const Matrix& k) {
  auto spec = std::make_shared<const SymmetricSpectrum>(k);
  return {spec->dim(), [spec](cplx z) {
            if (!(z.imag() > 0.0)) throw DomainError("resolvent: Im z must be positive");
            return spec->apply([z](double lam) { return 1.0 / (lam - z); });
          }};
}

// (-z g(z) Sigma - z I)^{-1}, g the Stieltjes transform of (1 - gamma) delta_0 + gamma nu.
inline CMatrix gbox_from_sigma(const SymmetricSpectrum& sigma, double gamma, cplx z, const FixedPointConfig& cfg = {}) {
  const Measure mu = Measure::discrete(sigma.psd_measure());
  const cplx l = solve_l(mu, gamma, z, cfg).l;
  // With g = -1/l the inverse is (l/z)(Sigma - l I)^{-1}.
  return sigma.apply([&](double lam) { return (l / z) / (std::max(lam, 0.0) - l); });
}

inline CMatrix gbox_from_sigma(const Matrix& sigma, double gamma, cplx z, const FixedPointConfig& cfg = {}) {
  return gbox_from_sigma(SymmetricSpectrum(sigma), gamma, z, cfg);
}

// Stieltjes transform of the law of a X, X ~ MP(gamma).
inline cplx scaled_mp_stieltjes(double a, double gamma, cplx z) {
  if (a == 0.0) return -1.0 / z;
  return mp_stieltjes_closed(gamma, z / a) / a;
}

// K(z) = (l / (b z)) H((l - a) / b), l the reciprocal Cauchy transform of the
// companion of MP(gamma) boxtimes (a + b tau). For b = 0, K(z) = g_{a MP(gamma)}(z) I.
inline CMatrix gbox_composed(const MatrixFunction& H, const Measure& tau, double a, double b, double gamma, cplx z,
                             const FixedPointConfig& cfg = {}) {
  if (!(z.imag() > 0.0)) throw DomainError("gbox_composed: Im z must be positive");
  if (b < 0.0) throw DomainError("gbox_composed: b must be nonnegative");
  if (b == 0.0) return scaled_mp_stieltjes(a, gamma, z) * CMatrix::Identity(H.dim, H.dim);
  const cplx l = solve_l(Measure::affine_push(a, b, tau), gamma, z, cfg).l;
  const cplx w = (l - a) / b;
  if (!(w.imag() > 0.0)) throw DomainError("gbox_composed: composed argument left the upper half-plane");
  return (l / (b * z)) * H(w);
}

// ---------------------------------------------------------------------------
// Multi-layer chain

class EquivalentChain {
 public:
  struct Layer {
    LayerConstants constants;
    LayerSpec spec;
    Measure chi;
  };

  EquivalentChain(Measure chi0, MatrixFunction g0, std::vector<Layer> layers, FixedPointConfig cfg)
      : chi0_(std::move(chi0)), g0_(std::move(g0)), layers_(std::move(layers)), cfg_(cfg) {}

  std::size_t depth() const { return layers_.size(); }
  const Layer& layer(std::size_t l) const { return layers_.at(l - 1); }  // 1-based
  const Measure& chi(std::size_t l) const { return l == 0 ? chi0_ : layer(l).chi; }
  Eigen::Index dim() const { return g0_.dim; }

  cplx g(std::size_t l, cplx z) const { return stieltjes(chi(l), z); }

  // G_l(z) = (l_l / (b_l z)) G_{l-1}((l_l - a_l) / b_l), unrolled so G_0 is
  // evaluated once at the fully composed argument.
  CMatrix G(std::size_t l, cplx z) const {
    if (l > depth()) throw DomainError("EquivalentChain: layer index out of range");
    if (!(z.imag() > 0.0)) throw DomainError("EquivalentChain: Im z must be positive");
    cplx factor = 1.0;
    cplx w = z;
    for (std::size_t k = l; k >= 1; --k) {
      const auto& c = layer(k).constants;
      const double gamma = layer(k).spec.gamma;
      if (c.b == 0.0) return factor * scaled_mp_stieltjes(c.a, gamma, w) * CMatrix::Identity(dim(), dim());
      const cplx lk = solve_l(Measure::affine_push(c.a, c.b, chi(k - 1)), gamma, w, cfg_).l;
      factor *= lk / (c.b * w);
      w = (lk - c.a) / c.b;
      if (!(w.imag() > 0.0)) throw DomainError("EquivalentChain: composed argument left the upper half-plane");
    }
    return factor * g0_(w);
  }

  MatrixFunction G_function(std::size_t l) const {
    auto self = std::make_shared<const EquivalentChain>(*this);
    return {dim(), [self, l](cplx z) { return self->G(l, z); }};
  }

 private:
  Measure chi0_;
  MatrixFunction g0_;
  std::vector<Layer> layers_;
  FixedPointConfig cfg_;
};

// chi_l = MP(gamma_l) boxtimes (a_l + b_l chi_{l-1}); input variances follow
// sigma_{X_l}^2 = ||f~_l||^2 + sigma_{D_l}^2.
inline EquivalentChain build_chain(const std::vector<LayerSpec>& layers, Measure chi0, MatrixFunction g0,
                                   double sigma_x2_0, const FixedPointConfig& cfg = {},
                                   int r_max = kDefaultZetaDegree) {
  if (layers.empty()) throw DomainError("build_chain: no layers");
  cfg.validate();
  std::vector<EquivalentChain::Layer> out;
  double sx2 = sigma_x2_0;
  Measure prev = chi0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    LayerConstants c;
    try {
      c = layer_constants(layers[l], sx2, r_max);
    } catch (const AssumptionError& e) {
      throw AssumptionError("layer " + std::to_string(l + 1) + ": " + e.what());
    } catch (const Error& e) {
      throw DomainError("layer " + std::to_string(l + 1) + ": " + e.what());
    }
    Measure chi = Measure::mp_boxtimes(layers[l].gamma, Measure::affine_push(c.a, c.b, prev), cfg);
    out.push_back({c, layers[l], chi});
    prev = chi;
    sx2 = c.sigma_y2;
  }
  return EquivalentChain(std::move(chi0), std::move(g0), std::move(out), cfg);
}

inline EquivalentChain build_chain(const NetworkSpec& net, Measure chi0, MatrixFunction g0, double sigma_x2_0,
                                   const FixedPointConfig& cfg = {}, int r_max = kDefaultZetaDegree) {
  net.validate();
  if (g0.dim != net.n) throw DomainError("build_chain: base equivalent has the wrong dimension");
  return build_chain(net.layers, std::move(chi0), std::move(g0), sigma_x2_0, cfg, r_max);
}

// ---------------------------------------------------------------------------
// Sigma_lin = (a + b) I + b (J - I)/n with gamma = 1. Sigma_lin has eigenvalue
// c1 = a + b - b/n on the complement of the constant vector and c2 = a + 2b - b/n
// on it, so the equivalent is alpha I + beta J/n.

struct CorrelatedExample {
  Eigen::Index n = 0;
  cplx z;
  cplx g;      // Stieltjes transform of MP(1) boxtimes mu_{Sigma_lin}
  cplx alpha;  // coefficient of I
  cplx beta;   // coefficient of J/n
  double c1 = 0.0, c2 = 0.0;

  CMatrix materialize() const {
    CMatrix m = CMatrix::Constant(n, n, beta / static_cast<double>(n));
    m.diagonal().array() += alpha;
    return m;
  }
  cplx trace() const { return static_cast<double>(n) * alpha + beta; }
};

inline CorrelatedExample correlated_example(Eigen::Index n, double a, double b, cplx z, const FixedPointConfig& cfg = {}) {
  if (n < 2) throw DomainError("correlated_example: n must be >= 2");
  if (!(z.imag() > 0.0)) throw DomainError("correlated_example: Im z must be positive");
  CorrelatedExample e;
  e.n = n;
  e.z = z;
  const double nn = static_cast<double>(n);
  e.c1 = a + b - b / nn;
  e.c2 = a + 2.0 * b - b / nn;
  DiscreteMeasure mu = (e.c1 == e.c2) ? DiscreteMeasure{{e.c1}, {1.0}}
                                      : DiscreteMeasure::make({e.c1, e.c2}, {(nn - 1.0) / nn, 1.0 / nn});
  const cplx l = solve_l(Measure::discrete(mu), 1.0, z, cfg).l;
  e.g = -1.0 / l;
  const cplx d1 = e.g * e.c1 + 1.0, d2 = e.g * e.c2 + 1.0;
  e.alpha = -1.0 / (z * d1);
  e.beta = e.g * b / (z * d1 * d2);
  return e;
}

// Sigma_lin of the worked example as a dense matrix.
inline Matrix correlated_example_sigma(Eigen::Index n, double a, double b) {
  const double nn = static_cast<double>(n);
  Matrix s = Matrix::Constant(n, n, b / nn);
  s.diagonal().array() = a + b;
  return s;
}

}  // namespace ckde
