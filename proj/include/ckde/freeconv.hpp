#pragma once

// Multiplicative free convolution with the Marchenko-Pastur law, MP(gamma) boxtimes mu,
// through the reciprocal Cauchy transform l = -1/g of the companion measure
// (1 - gamma) delta_0 + gamma nu. The transform is the unique solution in C+ of
//     l = z + gamma l + gamma l^2 g_mu(l).

#include <cassert>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "ckde/measures.hpp"

namespace ckde {

struct LSolution {
  cplx l;
  int iterations = 0;
  double residual = 0.0;
};

// Lipschitz constant of the fixed-point map on its invariant domain.
inline double contraction_constant(cplx z) {
  if (!(z.imag() > 0.0)) throw DomainError("contraction_constant: Im z must be positive");
  const double x = std::abs(z) / (z.imag() * z.imag());
  return x / (1.0 + x);
}

// Stieltjes transform of MP(gamma): root of gamma z g^2 + (z + gamma - 1) g + 1 = 0 in C+.
inline cplx mp_stieltjes_closed(double gamma, cplx z) {
  if (!(gamma > 0.0)) throw DomainError("mp_stieltjes_closed: gamma must be positive");
  if (!(z.imag() > 0.0)) throw DomainError("mp_stieltjes_closed: Im z must be positive");
  const cplx A = gamma * z;
  const cplx B = z + gamma - 1.0;
  const cplx sq = std::sqrt(B * B - 4.0 * A);
  // Pick the sign that avoids cancellation, then recover the other root from the product.
  const cplx q = (std::real(std::conj(B) * sq) >= 0.0) ? -0.5 * (B + sq) : -0.5 * (B - sq);
  const cplx r1 = q / A;
  const cplx r2 = 1.0 / q;  // C / q with C = 1
  return r1.imag() >= r2.imag() ? r1 : r2;
}

namespace detail {

// Nearest-enough point of {Im w >= Im z, Im(w / z) >= 0}.
inline cplx project_domain(cplx w, cplx z) {
  if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) return z;
  if (w.imag() < z.imag()) w.imag(z.imag());
  if ((w / z).imag() < 0.0) {
    const double r = std::max(std::abs(w), std::abs(z));
    w = r * (z / std::abs(z));
  }
  return w;
}

inline bool in_domain(cplx w, cplx z) {
  return w.imag() >= z.imag() * (1.0 - 1e-14) && (w / z).imag() >= -1e-10;
}

struct LState {
  cplx l, F, dF;
  double res;
};

struct LSolveResult {
  LSolution sol;
  cplx dF;  // derivative of the fixed-point map at the solution
};

// base(l) returns (g_mu(l), g_mu'(l)).
template <class Base>
LSolveResult solve_l_core(const Base& base, double gamma, cplx z, const FixedPointConfig& cfg,
                          std::optional<cplx> hint) {
  auto eval = [&](cplx l) {
    const auto [g, dg] = base(l);
    LState s;
    s.l = l;
    s.F = z + gamma * l + gamma * l * l * g;
    s.dF = gamma + 2.0 * gamma * l * g + gamma * l * l * dg;
    s.res = std::abs(s.F - l);
    if (!std::isfinite(s.res)) s.res = std::numeric_limits<double>::infinity();
    return s;
  };
  auto converged = [&](const LState& s) { return s.res <= cfg.tol * std::max(1.0, std::abs(s.l)); };

  LState cur = eval(hint ? project_domain(*hint, z) : z);

  constexpr double kMinDamping = 1.0 / 64.0;
  double alpha = cfg.damping;
  int it = 0;
  bool polished = false;
  while (it < cfg.max_iter) {
    if (converged(cur) && (!cfg.newton || polished)) break;
    ++it;
    if (cfg.newton) {
      const cplx denom = 1.0 - cur.dF;
      const cplx step = std::abs(denom) > 0.0 ? cur.l + (cur.F - cur.l) / denom : cplx(NAN, NAN);
      // The fixed-point equation has a second root outside the domain. A
      // Newton step that leaves the domain is heading there, so it is
      // discarded rather than projected back.
      if (std::isfinite(step.real()) && std::isfinite(step.imag()) && in_domain(step, z)) {
        LState c = eval(step);
        if (c.res < 0.9 * cur.res || (converged(cur) && c.res < cur.res)) {
          polished = converged(cur);
          cur = c;
          continue;
        }
      }
      // Newton could not improve a converged point: nothing left to gain.
      if (converged(cur)) break;
    }
    LState c = eval(project_domain((1.0 - alpha) * cur.l + alpha * cur.F, z));
    assert(in_domain(c.l, z));
    if (c.res > cur.res && alpha > kMinDamping) {
      alpha = std::max(alpha / 2.0, kMinDamping);
      continue;
    }
    cur = c;
  }
  if (!converged(cur)) {
    throw DivergenceError("fixed point for z = (" + std::to_string(z.real()) + ", " +
                              std::to_string(z.imag()) + ") did not reach tolerance after " +
                              std::to_string(it) + " iterations (residual " +
                              std::to_string(cur.res) + ")",
                          cur.res, it);
  }
  return {{cur.l, it, cur.res}, cur.dF};
}

std::pair<cplx, cplx> eval_with_derivative(const Measure& m, cplx z, WarmStart* ws);

inline void require_nonnegative_support(const Measure& mu) {
  const double lo = support_bounds(mu).first;
  if (lo < -1e-12)
    throw DomainError("measure must be supported on [0, inf); lower support bound is " + std::to_string(lo));
}

inline LSolveResult solve_l_measure(const Measure& mu, double gamma, cplx z, const FixedPointConfig& cfg,
                                    std::optional<cplx> hint, WarmStart* ws) {
  if (!(gamma > 0.0)) throw DomainError("gamma must be positive");
  if (!(z.imag() > 0.0)) throw DomainError("Im z must be positive");
  cfg.validate();
  require_nonnegative_support(mu);
  auto base = [&](cplx l) { return eval_with_derivative(mu, l, ws); };
  const double scale = std::max(1.0, std::abs(z));
  const bool near_axis = cfg.newton && z.imag() < 0.1 * scale;
  if (hint && near_axis) {
    // A stale hint is given a short budget before falling back to a cold start.
    FixedPointConfig short_cfg = cfg;
    short_cfg.max_iter = std::min(cfg.max_iter, 60);
    try {
      return solve_l_core(base, gamma, z, short_cfg, hint);
    } catch (const DivergenceError&) {
      hint.reset();
    }
  }
  // Cold starts close to the real axis walk down from a larger imaginary part,
  // each solution seeding the next.
  if (!hint && near_axis) {
    int total = 0;
    double y = scale;
    while (y > 4.0 * z.imag()) {
      const auto r = solve_l_core(base, gamma, cplx(z.real(), y), cfg, hint);
      hint = r.sol.l;
      total += r.sol.iterations;
      y /= 4.0;
    }
    auto r = solve_l_core(base, gamma, z, cfg, hint);
    r.sol.iterations += total;
    return r;
  }
  return solve_l_core(base, gamma, z, cfg, hint);
}

// g_nu and g_nu' for nu = MP(gamma) boxtimes base at z.
inline std::pair<cplx, cplx> mp_boxtimes_eval(const Measure& base, double gamma, cplx z,
                                              const FixedPointConfig& cfg, const void* key, WarmStart* ws) {
  std::optional<cplx> hint;
  if (ws && key) {
    auto it = ws->last_l.find(key);
    if (it != ws->last_l.end()) hint = it->second;
  }
  const auto r = solve_l_measure(base, gamma, z, cfg, hint, ws);
  if (ws && key) ws->last_l[key] = r.sol.l;
  const cplx l = r.sol.l;
  const cplx dl = 1.0 / (1.0 - r.dF);
  const cplx g = (-1.0 / l - (gamma - 1.0) / z) / gamma;
  const cplx dg = (dl / (l * l) + (gamma - 1.0) / (z * z)) / gamma;
  return {g, dg};
}

inline std::pair<cplx, cplx> eval_with_derivative(const Measure& m, cplx z, WarmStart* ws) {
  return std::visit(
      [&](const auto& n) -> std::pair<cplx, cplx> {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DiscreteMeasure>) {
          cplx g = 0.0, dg = 0.0;
          for (std::size_t i = 0; i < n.atoms.size(); ++i) {
            const cplx r = 1.0 / (n.atoms[i] - z);
            g += n.weights[i] * r;
            dg += n.weights[i] * r * r;
          }
          return {g, dg};
        } else if constexpr (std::is_same_v<T, AffinePushNode>) {
          if (n.b == 0.0) {
            const cplx r = 1.0 / (n.a - z);
            return {r, r * r};
          }
          const cplx w = (z - n.a) / n.b;
          if (n.b > 0.0) {
            auto [g, dg] = eval_with_derivative(n.inner, w, ws);
            return {g / n.b, dg / (n.b * n.b)};
          }
          // w lies in the lower half-plane: use g(conj w) = conj g(w).
          auto [g, dg] = eval_with_derivative(n.inner, std::conj(w), ws);
          return {std::conj(g) / n.b, std::conj(dg) / (n.b * n.b)};
        } else if constexpr (std::is_same_v<T, AtomMixNode>) {
          auto [g, dg] = eval_with_derivative(n.inner, z, ws);
          return {(1.0 - n.gamma) * (-1.0 / z) + n.gamma * g, (1.0 - n.gamma) / (z * z) + n.gamma * dg};
        } else {
          return mp_boxtimes_eval(n.base, n.gamma, z, n.solver, &n, ws);
        }
      },
      m.node().v);
}

}  // namespace detail

// Solves for l(z) starting from l0 (default z).
inline LSolution solve_l(const Measure& mu, double gamma, cplx z, const FixedPointConfig& cfg = {},
                         std::optional<cplx> l0 = std::nullopt) {
  WarmStart ws;
  return detail::solve_l_measure(mu, gamma, z, cfg, l0, &ws).sol;
}

// g_nu(z) for nu = MP(gamma) boxtimes mu.
inline cplx mp_boxtimes_stieltjes(const Measure& mu, double gamma, cplx z, const FixedPointConfig& cfg = {}) {
  const LSolution s = solve_l(mu, gamma, z, cfg);
  return (-1.0 / s.l - (gamma - 1.0) / z) / gamma;
}

inline std::pair<cplx, cplx> stieltjes_with_derivative(const Measure& m, cplx z, WarmStart* ws) {
  if (!(z.imag() > 0.0)) throw DomainError("stieltjes: Im z must be positive");
  return detail::eval_with_derivative(m, z, ws);
}

inline cplx stieltjes(const Measure& m, cplx z, WarmStart& ws) {
  const cplx g = stieltjes_with_derivative(m, z, &ws).first;
  assert(!is_probability(m) || g.imag() >= -1e-14 * std::max(1.0, std::abs(g)));
  return g;
}

inline cplx stieltjes(const Measure& m, cplx z) {
  WarmStart ws;
  return stieltjes(m, z, ws);
}

}  // namespace ckde
