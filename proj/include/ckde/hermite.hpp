#pragma once

// Hermite polynomials, Gaussian quadrature and Hermite coefficients of
// activation functions under the standard Gaussian weight
// e^{-t^2/2}/sqrt(2 pi).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ckde/error.hpp"

namespace ckde {

inline constexpr int kMaxHermiteDegree = 64;

// Monic probabilists' Hermite polynomial h_r(t), via
// h_{r+1} = t h_r - r h_{r-1}.
inline double hermite_h(int r, double t) {
  if (r < 0 || r > kMaxHermiteDegree)
    throw DomainError("hermite_h: degree " + std::to_string(r) + " outside [0, 64]");
  double prev = 1.0;
  if (r == 0) return prev;
  double cur = t;
  for (int k = 1; k < r; ++k) {
    const double next = t * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

// h_r / sqrt(r!). Evaluated with the normalised recurrence, which stays
// well scaled for large r.
inline double hermite_normalized(int r, double t) {
  if (r < 0 || r > kMaxHermiteDegree)
    throw DomainError("hermite_normalized: degree " + std::to_string(r) + " outside [0, 64]");
  double prev = 1.0;
  if (r == 0) return prev;
  double cur = t;
  for (int k = 1; k < r; ++k) {
    const double next = (t * cur - std::sqrt(static_cast<double>(k)) * prev) /
                        std::sqrt(static_cast<double>(k + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

namespace detail {

// All normalised Hermite values hat h_0(t) .. hat h_{rmax}(t), without the
// degree cap (quadrature construction needs up to 512).
inline void hermite_normalized_all(int rmax, double t, double* out) {
  out[0] = 1.0;
  if (rmax == 0) return;
  out[1] = t;
  for (int k = 1; k < rmax; ++k)
    out[k + 1] = (t * out[k] - std::sqrt(static_cast<double>(k)) * out[k - 1]) /
                 std::sqrt(static_cast<double>(k + 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Activation

enum class ActivationKind { Identity, Tanh, CenteredRelu, Table };

// A closed-form scalar function f(t) = scale_out * base(scale_in * t + shift_in) + shift_out.
// Tables are linearly interpolated and clamped outside their range, so
// coefficients computed from them carry an O(grid^2) interpolation bias.
class Activation {
 public:
  static Activation identity() { return Activation(ActivationKind::Identity); }
  static Activation tanh() { return Activation(ActivationKind::Tanh); }

  // max(t, 0) - E[max(N, 0)], so that zeta_0 = 0 holds exactly at unit scale.
  static Activation centered_relu() { return Activation(ActivationKind::CenteredRelu); }

  static Activation table(std::vector<double> t, std::vector<double> f) {
    if (t.size() < 2 || t.size() != f.size())
      throw DomainError("Activation::table: need >= 2 (t, f) samples of equal length");
    std::vector<std::size_t> order(t.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
    auto data = std::make_shared<TableData>();
    for (auto i : order) {
      if (!std::isfinite(t[i]) || !std::isfinite(f[i]))
        throw DomainError("Activation::table: non-finite sample");
      if (!data->t.empty() && t[i] <= data->t.back())
        throw DomainError("Activation::table: duplicate abscissa");
      data->t.push_back(t[i]);
      data->f.push_back(f[i]);
    }
    Activation a(ActivationKind::Table);
    a.table_ = std::move(data);
    return a;
  }

  static Activation from_name(const std::string& name) {
    if (name == "identity" || name == "linear") return identity();
    if (name == "tanh") return tanh();
    if (name == "centered-relu" || name == "relu") return centered_relu();
    throw DomainError("unknown activation '" + name + "'");
  }

  // t -> scale_out * f(scale_in * t + shift_in) + shift_out
  Activation scaled_shifted(double scale_in, double shift_in, double scale_out,
                            double shift_out) const {
    Activation a = *this;
    a.scale_in_ = scale_in_ * scale_in;
    a.shift_in_ = scale_in_ * shift_in + shift_in_;
    a.scale_out_ = scale_out * scale_out_;
    a.shift_out_ = scale_out * shift_out_ + shift_out;
    return a;
  }

  // f_sigma : t -> f(sigma t)
  Activation scaled(double sigma) const { return scaled_shifted(sigma, 0.0, 1.0, 0.0); }

  double operator()(double t) const {
    return scale_out_ * base(scale_in_ * t + shift_in_) + shift_out_;
  }

  double lipschitz_bound() const {
    double base_l = 1.0;
    if (kind_ == ActivationKind::Table) {
      base_l = 0.0;
      for (std::size_t i = 1; i < table_->t.size(); ++i)
        base_l = std::max(base_l, std::abs((table_->f[i] - table_->f[i - 1]) /
                                           (table_->t[i] - table_->t[i - 1])));
    }
    return std::abs(scale_out_ * scale_in_) * base_l;
  }

  // Points (in t) where f is not smooth.
  std::vector<double> kinks() const {
    std::vector<double> base_kinks;
    if (kind_ == ActivationKind::CenteredRelu) base_kinks = {0.0};
    if (kind_ == ActivationKind::Table) base_kinks = table_->t;
    std::vector<double> out;
    if (scale_in_ == 0.0) return out;
    for (double k : base_kinks) out.push_back((k - shift_in_) / scale_in_);
    std::sort(out.begin(), out.end());
    return out;
  }

  ActivationKind kind() const { return kind_; }

  std::string name() const {
    switch (kind_) {
      case ActivationKind::Identity: return "identity";
      case ActivationKind::Tanh: return "tanh";
      case ActivationKind::CenteredRelu: return "centered-relu";
      case ActivationKind::Table: return "table";
    }
    return "?";
  }

  double scale_in() const { return scale_in_; }
  double shift_in() const { return shift_in_; }
  double scale_out() const { return scale_out_; }
  double shift_out() const { return shift_out_; }
  const std::vector<double>& table_t() const;
  const std::vector<double>& table_f() const;

 private:
  struct TableData {
    std::vector<double> t, f;
  };

  explicit Activation(ActivationKind k) : kind_(k) {}

  double base(double s) const {
    switch (kind_) {
      case ActivationKind::Identity: return s;
      case ActivationKind::Tanh: return std::tanh(s);
      case ActivationKind::CenteredRelu:
        return std::max(s, 0.0) - 1.0 / std::sqrt(2.0 * std::numbers::pi);
      case ActivationKind::Table: {
        const auto& t = table_->t;
        const auto& f = table_->f;
        if (s <= t.front()) return f.front();
        if (s >= t.back()) return f.back();
        const auto it = std::upper_bound(t.begin(), t.end(), s);
        const std::size_t j = static_cast<std::size_t>(it - t.begin());
        const double w = (s - t[j - 1]) / (t[j] - t[j - 1]);
        return (1.0 - w) * f[j - 1] + w * f[j];
      }
    }
    return 0.0;
  }

  ActivationKind kind_;
  std::shared_ptr<const TableData> table_;
  double scale_in_ = 1.0;
  double shift_in_ = 0.0;
  double scale_out_ = 1.0;
  double shift_out_ = 0.0;
};

inline const std::vector<double>& Activation::table_t() const {
  static const std::vector<double> empty;
  return table_ ? table_->t : empty;
}
inline const std::vector<double>& Activation::table_f() const {
  static const std::vector<double> empty;
  return table_ ? table_->f : empty;
}

// ---------------------------------------------------------------------------
// Quadrature

// sum_i weights[i] * g(nodes[i]) approximates E[g(N)], N standard Gaussian.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  template <class G>
  double expect(G&& g) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * g(nodes[i]);
    return s;
  }

  std::size_t size() const { return nodes.size(); }
};

// m-point Gauss rule for the standard Gaussian weight, exact for polynomials
// of degree <= 2m-1. Nodes come from the Jacobi matrix eigenproblem and are
// polished by Newton on hat h_m; weights use the Christoffel formula
// w_i = 1 / sum_{k<m} hat h_k(x_i)^2.
inline QuadratureRule make_rule(int m) {
  if (m < 2 || m > 512)
    throw DomainError("make_rule: node count " + std::to_string(m) + " outside [2, 512]");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sub(m - 1);
  for (int k = 1; k < m; ++k) sub[k - 1] = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  QuadratureRule rule;
  rule.nodes.resize(m);
  rule.weights.resize(m);
  std::vector<double> h(m + 1);
  for (int i = 0; i < m; ++i) {
    double x = es.eigenvalues()[i];
    for (int it = 0; it < 3; ++it) {
      detail::hermite_normalized_all(m, x, h.data());
      const double dp = std::sqrt(static_cast<double>(m)) * h[m - 1];
      if (dp == 0.0 || !std::isfinite(dp)) break;
      const double step = h[m] / dp;
      if (!std::isfinite(step)) break;
      x -= step;
    }
    detail::hermite_normalized_all(m - 1, x, h.data());
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += h[k] * h[k];
    rule.nodes[i] = x;
    rule.weights[i] = std::isfinite(s) ? 1.0 / s : 0.0;
  }
  // Symmetrise: the rule is exactly symmetric about 0.
  for (int i = 0; i < m / 2; ++i) {
    const double x = 0.5 * (rule.nodes[m - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[m - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[m - 1 - i] = x;
    rule.weights[i] = rule.weights[m - 1 - i] = w;
  }
  if (m % 2 == 1) rule.nodes[m / 2] = 0.0;
  return rule;
}

namespace detail {

// Gauss-Legendre nodes/weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int m) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sub(m - 1);
  for (int k = 1; k < m; ++k) sub[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  std::vector<double> x(m), w(m);
  for (int i = 0; i < m; ++i) {
    x[i] = es.eigenvalues()[i];
    const double v = es.eigenvectors()(0, i);
    w[i] = 2.0 * v * v;
  }
  return {x, w};
}

}  // namespace detail

// Composite Gauss-Legendre rule on [-half_width, half_width] with the
// Gaussian density folded into the weights. Panels break at `breaks`, so
// piecewise-smooth integrands (ReLU kinks, table knots) integrate to full
// accuracy, which the plain Gauss rule cannot do across a kink.
inline QuadratureRule make_panel_rule(std::vector<double> breaks, int nodes_per_panel = 20,
                                      double half_width = 20.0, double max_panel = 1.0) {
  if (nodes_per_panel < 2 || nodes_per_panel > 128)
    throw DomainError("make_panel_rule: nodes_per_panel outside [2, 128]");
  std::vector<double> cuts{-half_width, half_width};
  for (double b : breaks)
    if (b > -half_width && b < half_width) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const auto [gx, gw] = detail::gauss_legendre(nodes_per_panel);
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  QuadratureRule rule;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double lo = cuts[c], hi = cuts[c + 1];
    const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_panel)));
    const double len = (hi - lo) / pieces;
    for (int p = 0; p < pieces; ++p) {
      const double a = lo + p * len;
      const double mid = a + 0.5 * len;
      for (int i = 0; i < nodes_per_panel; ++i) {
        const double t = mid + 0.5 * len * gx[i];
        rule.nodes.push_back(t);
        rule.weights.push_back(0.5 * len * gw[i] * inv_sqrt_2pi * std::exp(-0.5 * t * t));
      }
    }
  }
  return rule;
}

inline constexpr int kDefaultRuleSize = 128;

// The shared 128-node Gauss rule.
inline const QuadratureRule& default_rule() {
  static const QuadratureRule rule = make_rule(kDefaultRuleSize);
  return rule;
}

// Gauss rule for the identity, panel rule otherwise. Scaled tanh has poles at
// distance pi / (2 sigma) from the real axis, which slows the Gauss rule to
// about 1e-10 at sigma = sqrt(2); panels of width 1 stay near roundoff.
inline QuadratureRule adapted_rule(const Activation& f) {
  if (f.kind() == ActivationKind::Identity) return default_rule();
  return make_panel_rule(f.kinks());
}

// ---------------------------------------------------------------------------
// Coefficients

// zeta_r(f) = <f, hat h_r>
inline double hermite_coeff(const Activation& f, int r, const QuadratureRule& rule) {
  if (r < 0 || r > kMaxHermiteDegree)
    throw DomainError("hermite_coeff: degree " + std::to_string(r) + " outside [0, 64]");
  return rule.expect([&](double t) { return f(t) * hermite_normalized(r, t); });
}

// zeta_0 .. zeta_{r_max} in one pass over the nodes.
inline std::vector<double> hermite_coeffs(const Activation& f, int r_max,
                                          const QuadratureRule& rule) {
  if (r_max < 0 || r_max > kMaxHermiteDegree)
    throw DomainError("hermite_coeffs: degree " + std::to_string(r_max) + " outside [0, 64]");
  std::vector<double> zeta(r_max + 1, 0.0);
  std::vector<double> h(r_max + 1);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double w = rule.weights[i];
    if (w == 0.0) continue;
    const double fx = f(rule.nodes[i]);
    detail::hermite_normalized_all(r_max, rule.nodes[i], h.data());
    for (int r = 0; r <= r_max; ++r) zeta[r] += w * fx * h[r];
  }
  return zeta;
}

// ||f||^2 = E[f(N)^2]
inline double gaussian_norm_sq(const Activation& f, const QuadratureRule& rule) {
  return rule.expect([&](double t) {
    const double v = f(t);
    return v * v;
  });
}

// Psi_r(sigma) = sigma^{-r} E[f(sigma N) h_r(N)]
inline double psi(const Activation& f, int r, double sigma, const QuadratureRule& rule) {
  if (!(sigma > 0.0)) throw DomainError("psi: sigma must be positive");
  if (r < 0 || r > kMaxHermiteDegree)
    throw DomainError("psi: degree " + std::to_string(r) + " outside [0, 64]");
  const double e = rule.expect([&](double t) { return f(sigma * t) * hermite_h(r, t); });
  return e / std::pow(sigma, r);
}

// zeta_r(f_sigma), f_sigma(t) = f(sigma t)
inline double scaled_coeff(const Activation& f, double sigma, int r, const QuadratureRule& rule) {
  if (!(sigma > 0.0)) throw DomainError("scaled_coeff: sigma must be positive");
  return hermite_coeff(f.scaled(sigma), r, rule);
}

}  // namespace ckde
