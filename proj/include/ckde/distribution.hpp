#pragma once

// Densities, CDFs and Kolmogorov distances recovered from Stieltjes transforms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "ckde/freeconv.hpp"
#include "ckde/measures.hpp"
#include "ckde/parallel.hpp"

namespace ckde {

inline constexpr double kDefaultEta = 1e-3;

inline double density_from_stieltjes(const Measure& m, double x, double eta, WarmStart& ws) {
  if (!(eta > 0.0)) throw DomainError("density_from_stieltjes: eta must be positive");
  const double d = stieltjes(m, cplx(x, eta), ws).imag() / std::numbers::pi;
  return (d < 0.0 && d >= -1e-12) ? 0.0 : d;
}

inline double density_from_stieltjes(const Measure& m, double x, double eta) {
  WarmStart ws;
  return density_from_stieltjes(m, x, eta, ws);
}

namespace detail {

using CdfFn = std::function<double(double t, bool left)>;

// Continuous part of an MP-convolved measure, integrated from its smoothed
// density with the atom at 0 removed, then normalised to its exact mass.
class SmoothedCdfTable {
 public:
  SmoothedCdfTable(const Measure& m, double eta, int workers) {
    atom0_ = point_mass(m, 0.0);
    const double cont_mass = 1.0 - atom0_;
    auto [lo, hi] = support_bounds(m);
    lo = std::min(lo, 0.0) - 50.0 * eta;
    hi = hi + 50.0 * eta;
    if (cont_mass <= 1e-14) {
      xs_ = {lo, hi};
      cum_ = {0.0, 0.0};
      return;
    }

    auto density = [&](double x, WarmStart& ws) {
      const double atom_part = atom0_ * eta / (std::numbers::pi * (x * x + eta * eta));
      return std::max(0.0, density_from_stieltjes(m, x, eta, ws) - atom_part);
    };

    // Coarse scan, then refinement to step <= eta/3 wherever mass is visible.
    const std::size_t coarse = 1000;
    const double H = (hi - lo) / static_cast<double>(coarse);
    std::vector<double> cx(coarse + 1), cd(coarse + 1);
    for (std::size_t i = 0; i <= coarse; ++i) cx[i] = lo + H * static_cast<double>(i);
    parallel_blocks(coarse + 1, 64, workers, [&](std::size_t b, std::size_t e) {
      WarmStart ws;
      for (std::size_t i = b; i < e; ++i) cd[i] = density(cx[i], ws);
    });
    const double tiny = 1e-7 / (hi - lo);
    std::vector<char> flag(coarse, 0);
    for (std::size_t c = 0; c < coarse; ++c) flag[c] = std::max(cd[c], cd[c + 1]) > tiny;
    std::vector<char> refine(coarse, 0);
    for (std::size_t c = 0; c < coarse; ++c)
      refine[c] = flag[c] || (c > 0 && flag[c - 1]) || (c + 1 < coarse && flag[c + 1]);

    const std::size_t sub = static_cast<std::size_t>(std::ceil(H / (eta / 3.0)));
    std::vector<std::vector<double>> cell_x(coarse), cell_d(coarse);
    parallel_blocks(coarse, 64, workers, [&](std::size_t b, std::size_t e) {
      WarmStart ws;
      for (std::size_t c = b; c < e; ++c) {
        if (!refine[c]) continue;
        const double h = H / static_cast<double>(sub);
        cell_x[c].resize(sub - 1);
        cell_d[c].resize(sub - 1);
        for (std::size_t k = 1; k < sub; ++k) {
          const double x = cx[c] + h * static_cast<double>(k);
          cell_x[c][k - 1] = x;
          cell_d[c][k - 1] = density(x, ws);
        }
      }
    });

    xs_.push_back(cx[0]);
    std::vector<double> ds{cd[0]};
    for (std::size_t c = 0; c < coarse; ++c) {
      for (std::size_t k = 0; k < cell_x[c].size(); ++k) {
        xs_.push_back(cell_x[c][k]);
        ds.push_back(cell_d[c][k]);
      }
      xs_.push_back(cx[c + 1]);
      ds.push_back(cd[c + 1]);
    }
    cum_.assign(xs_.size(), 0.0);
    for (std::size_t i = 1; i < xs_.size(); ++i)
      cum_[i] = cum_[i - 1] + 0.5 * (ds[i] + ds[i - 1]) * (xs_[i] - xs_[i - 1]);
    raw_mass_ = cum_.back();
    if (raw_mass_ > 0.0)
      for (double& c : cum_) c *= cont_mass / raw_mass_;
  }

  double operator()(double t, bool left) const {
    // The measure lives on [0, inf); smoothed leakage below 0 is credited at 0.
    if (t < 0.0 || (t == 0.0 && left)) return 0.0;
    return atom0_ + continuous(t);
  }

  // Mass integrated before normalisation; close to 1 - atom when eta is small.
  double raw_mass() const { return raw_mass_; }

 private:
  double continuous(double t) const {
    if (t <= xs_.front()) return 0.0;
    if (t >= xs_.back()) return cum_.back();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    const double w = (t - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    return cum_[i - 1] + w * (cum_[i] - cum_[i - 1]);
  }

  double atom0_ = 0.0;
  double raw_mass_ = 0.0;
  std::vector<double> xs_, cum_;
};

inline CdfFn make_cdf(const Measure& m, double eta, int workers) {
  return std::visit(
      [&](const auto& n) -> CdfFn {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DiscreteMeasure>) {
          std::vector<double> cum(n.weights.size());
          std::partial_sum(n.weights.begin(), n.weights.end(), cum.begin());
          return [atoms = n.atoms, cum = std::move(cum)](double t, bool left) {
            const auto it = left ? std::lower_bound(atoms.begin(), atoms.end(), t)
                                 : std::upper_bound(atoms.begin(), atoms.end(), t);
            const auto k = it - atoms.begin();
            return k == 0 ? 0.0 : std::min(1.0, cum[static_cast<std::size_t>(k - 1)]);
          };
        } else if constexpr (std::is_same_v<T, AffinePushNode>) {
          const double a = n.a, b = n.b;
          if (b == 0.0) return [a](double t, bool left) { return (left ? t > a : t >= a) ? 1.0 : 0.0; };
          CdfFn inner = make_cdf(n.inner, eta / std::abs(b), workers);
          if (b > 0.0) return [a, b, inner](double t, bool left) { return inner((t - a) / b, left); };
          return [a, b, inner](double t, bool left) { return 1.0 - inner((t - a) / b, !left); };
        } else if constexpr (std::is_same_v<T, AtomMixNode>) {
          const double g = n.gamma;
          CdfFn inner = make_cdf(n.inner, eta, workers);
          return [g, inner](double t, bool left) {
            const double step = (left ? t > 0.0 : t >= 0.0) ? 1.0 : 0.0;
            return (1.0 - g) * step + g * inner(t, left);
          };
        } else {
          auto table = std::make_shared<const SmoothedCdfTable>(m, eta, workers);
          return [table](double t, bool left) { return (*table)(t, left); };
        }
      },
      m.node().v);
}

}  // namespace detail

// CDF of a probability measure; MP-convolved parts are recovered by Stieltjes
// inversion at height eta. Construction does the expensive work once.
class CdfEvaluator {
 public:
  explicit CdfEvaluator(const Measure& m, double eta = kDefaultEta, int workers = worker_count()) {
    if (!(eta > 0.0)) throw DomainError("cdf: eta must be positive");
    if (!is_probability(m)) throw DomainError("cdf: signed measures have no distribution function");
    fn_ = detail::make_cdf(m, eta, workers);
  }
  double operator()(double t) const { return fn_(t, false); }
  double left(double t) const { return fn_(t, true); }

 private:
  detail::CdfFn fn_;
};

inline double cdf(const Measure& m, double t, double eta = kDefaultEta) { return CdfEvaluator(m, eta)(t); }

inline double kolmogorov_distance(const CdfEvaluator& a, const CdfEvaluator& b, std::span<const double> grid) {
  if (grid.empty()) throw DomainError("kolmogorov_distance: empty grid");
  double d = 0.0;
  for (double t : grid) {
    d = std::max(d, std::abs(a(t) - b(t)));
    d = std::max(d, std::abs(a.left(t) - b.left(t)));
  }
  return d;
}

inline double kolmogorov_distance(const Measure& a, const Measure& b, std::span<const double> grid,
                                  double eta = kDefaultEta) {
  if (grid.empty()) throw DomainError("kolmogorov_distance: empty grid");
  return kolmogorov_distance(CdfEvaluator(a, eta), CdfEvaluator(b, eta), grid);
}

namespace detail {
inline void collect_atoms(const Measure& m, double a, double b, std::vector<double>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DiscreteMeasure>) {
          for (double x : n.atoms) out.push_back(a + b * x);
        } else if constexpr (std::is_same_v<T, AffinePushNode>) {
          collect_atoms(n.inner, a + b * n.a, b * n.b, out);
        } else if constexpr (std::is_same_v<T, AtomMixNode>) {
          out.push_back(a);
          collect_atoms(n.inner, a, b, out);
        } else {
          out.push_back(a);
        }
      },
      m.node().v);
}
}  // namespace detail

// Every atom location of either measure plus a uniform sweep of the joint support.
inline std::vector<double> kolmogorov_grid(const Measure& a, const Measure& b, std::size_t uniform_points = 4000) {
  std::vector<double> g;
  detail::collect_atoms(a, 0.0, 1.0, g);
  detail::collect_atoms(b, 0.0, 1.0, g);
  const auto [la, ha] = support_bounds(a);
  const auto [lb, hb] = support_bounds(b);
  const double lo = std::min(la, lb), hi = std::max(ha, hb);
  for (std::size_t i = 0; i <= uniform_points; ++i)
    g.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(uniform_points, 1)));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

}  // namespace ckde
