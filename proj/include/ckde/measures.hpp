#pragma once

// Real probability measures handled through their Stieltjes transforms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "ckde/error.hpp"

namespace ckde {

using cplx = std::complex<double>;

// Tolerances and limits of the reciprocal Cauchy transform solver.
struct FixedPointConfig {
  double tol = 1e-12;     // relative residual target
  int max_iter = 10000;
  double damping = 1.0;   // initial Picard damping, halved down to 1/64 on growth
  bool newton = true;     // try a Newton step before each Picard step

  void validate() const {
    if (!(tol > 0.0)) throw DomainError("FixedPointConfig: tol must be positive");
    if (max_iter < 1) throw DomainError("FixedPointConfig: max_iter must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0))
      throw DomainError("FixedPointConfig: damping must lie in (0, 1]");
  }
};

// Atoms sorted ascending with positive weights summing to one.
struct DiscreteMeasure {
  std::vector<double> atoms;
  std::vector<double> weights;

  // Sorts, merges atoms closer than 1e-12 * max(1, |x|) and renormalises
  // nothing: weights must already sum to one within 1e-12.
  static DiscreteMeasure make(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size())
      throw DomainError("DiscreteMeasure: atoms and weights must be non-empty and aligned");
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return atoms[a] < atoms[b]; });
    DiscreteMeasure m;
    double total = 0.0;
    for (auto i : order) {
      const double x = atoms[i], w = weights[i];
      if (!std::isfinite(x) || !std::isfinite(w)) throw DomainError("DiscreteMeasure: non-finite entry");
      if (!(w > 0.0)) throw DomainError("DiscreteMeasure: weights must be positive");
      total += w;
      if (!m.atoms.empty() && x - m.atoms.back() <= 1e-12 * std::max(1.0, std::abs(x))) {
        m.weights.back() += w;
      } else {
        m.atoms.push_back(x);
        m.weights.push_back(w);
      }
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw DomainError("DiscreteMeasure: weights sum to " + std::to_string(total));
    return m;
  }

  std::size_t size() const { return atoms.size(); }
};

inline DiscreteMeasure esd_from_eigenvalues(std::span<const double> ev) {
  if (ev.empty()) throw DomainError("esd_from_eigenvalues: empty input");
  std::vector<double> atoms(ev.begin(), ev.end());
  const double w = 1.0 / static_cast<double>(ev.size());
  DiscreteMeasure m;
  std::sort(atoms.begin(), atoms.end());
  for (double x : atoms) {
    if (!std::isfinite(x)) throw DomainError("esd_from_eigenvalues: non-finite eigenvalue");
    if (!m.atoms.empty() && x - m.atoms.back() <= 1e-12 * std::max(1.0, std::abs(x))) {
      m.weights.back() += w;
    } else {
      m.atoms.push_back(x);
      m.weights.push_back(w);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------

class Measure;

struct AffinePushNode;
struct AtomMixNode;
struct MpBoxtimesNode;

// Immutable handle to a measure expression tree. Copies share the tree.
class Measure {
 public:
  struct Node;

  static Measure discrete(DiscreteMeasure m);
  static Measure dirac(double a) { return discrete(DiscreteMeasure{{a}, {1.0}}); }
  // Law of a + b X, X ~ inner.
  static Measure affine_push(double a, double b, Measure inner);
  // (1 - gamma) delta_0 + gamma inner; signed when gamma > 1.
  static Measure atom_mix(double gamma, Measure inner);
  // MP(gamma) boxtimes base, evaluated through the fixed-point solver.
  static Measure mp_boxtimes(double gamma, Measure base, FixedPointConfig cfg = {});

  const Node& node() const { return *node_; }
  const void* id() const { return node_.get(); }

 private:
  explicit Measure(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

struct AffinePushNode {
  double a;
  double b;
  Measure inner;
};

struct AtomMixNode {
  double gamma;
  Measure inner;
};

struct MpBoxtimesNode {
  double gamma;
  Measure base;
  FixedPointConfig solver;
};

struct Measure::Node {
  std::variant<DiscreteMeasure, AffinePushNode, AtomMixNode, MpBoxtimesNode> v;
};

inline Measure Measure::discrete(DiscreteMeasure m) {
  if (m.atoms.empty()) throw DomainError("Measure::discrete: empty measure");
  return Measure(std::make_shared<const Node>(Node{std::move(m)}));
}

inline Measure Measure::affine_push(double a, double b, Measure inner) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("Measure::affine_push: non-finite a or b");
  return Measure(std::make_shared<const Node>(Node{AffinePushNode{a, b, std::move(inner)}}));
}

inline Measure Measure::atom_mix(double gamma, Measure inner) {
  if (!(gamma > 0.0)) throw DomainError("Measure::atom_mix: gamma must be positive");
  return Measure(std::make_shared<const Node>(Node{AtomMixNode{gamma, std::move(inner)}}));
}

inline Measure Measure::mp_boxtimes(double gamma, Measure base, FixedPointConfig cfg) {
  if (!(gamma > 0.0)) throw DomainError("Measure::mp_boxtimes: gamma must be positive");
  cfg.validate();
  return Measure(std::make_shared<const Node>(Node{MpBoxtimesNode{gamma, std::move(base), cfg}}));
}

// False when the tree contains a signed (gamma > 1) atom mixture.
inline bool is_probability(const Measure& m) {
  return std::visit(
      [](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DiscreteMeasure>) return true;
        else if constexpr (std::is_same_v<T, AffinePushNode>) return is_probability(n.inner);
        else if constexpr (std::is_same_v<T, AtomMixNode>) return n.gamma <= 1.0 && is_probability(n.inner);
        else return is_probability(n.base);
      },
      m.node().v);
}

// Interval [lo, hi] containing the support.
inline std::pair<double, double> support_bounds(const Measure& m) {
  return std::visit(
      [](const auto& n) -> std::pair<double, double> {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DiscreteMeasure>) {
          return {n.atoms.front(), n.atoms.back()};
        } else if constexpr (std::is_same_v<T, AffinePushNode>) {
          auto [lo, hi] = support_bounds(n.inner);
          const double x = n.a + n.b * lo, y = n.a + n.b * hi;
          return {std::min(x, y), std::max(x, y)};
        } else if constexpr (std::is_same_v<T, AtomMixNode>) {
          auto [lo, hi] = support_bounds(n.inner);
          return {std::min(lo, 0.0), std::max(hi, 0.0)};
        } else {
          // ||MP(gamma) boxtimes mu|| <= ||MP(gamma)|| * ||mu|| for mu on R+.
          auto [lo, hi] = support_bounds(n.base);
          const double r = 1.0 + std::sqrt(n.gamma);
          return {0.0, std::max(hi, 0.0) * r * r};
        }
      },
      m.node().v);
}

// Mass of the atom at x (0 when there is none).
inline double point_mass(const Measure& m, double x) {
  return std::visit(
      [x](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, DiscreteMeasure>) {
          const double tol = 1e-12 * std::max(1.0, std::abs(x));
          double s = 0.0;
          for (std::size_t i = 0; i < n.atoms.size(); ++i)
            if (std::abs(n.atoms[i] - x) <= tol) s += n.weights[i];
          return s;
        } else if constexpr (std::is_same_v<T, AffinePushNode>) {
          if (n.b == 0.0) return std::abs(n.a - x) <= 1e-12 * std::max(1.0, std::abs(x)) ? 1.0 : 0.0;
          return point_mass(n.inner, (x - n.a) / n.b);
        } else if constexpr (std::is_same_v<T, AtomMixNode>) {
          const double at0 = std::abs(x) <= 1e-300 ? 1.0 - n.gamma : 0.0;
          return at0 + n.gamma * point_mass(n.inner, x);
        } else {
          // MP(gamma) boxtimes mu has no atom away from 0; at 0 the mass is
          // max(MP atom, mu atom).
          if (x != 0.0) return 0.0;
          const double mp_atom = n.gamma > 1.0 ? 1.0 - 1.0 / n.gamma : 0.0;
          return std::max(mp_atom, point_mass(n.base, 0.0));
        }
      },
      m.node().v);
}

// Per-node warm starts for nested solves. Not thread-safe: one per worker.
struct WarmStart {
  std::unordered_map<const void*, cplx> last_l;
};

// Stieltjes transform g_m(z) = int m(dt) / (t - z), Im z > 0.
cplx stieltjes(const Measure& m, cplx z);
cplx stieltjes(const Measure& m, cplx z, WarmStart& ws);

// g_m(z) and g_m'(z).
std::pair<cplx, cplx> stieltjes_with_derivative(const Measure& m, cplx z, WarmStart* ws);

inline cplx stieltjes(const DiscreteMeasure& m, cplx z) {
  cplx s = 0.0;
  for (std::size_t i = 0; i < m.atoms.size(); ++i) s += m.weights[i] / (m.atoms[i] - z);
  return s;
}

// ---------------------------------------------------------------------------
// CSV: header line then "atom,weight" rows.

inline void write_discrete_csv(const DiscreteMeasure& m, std::ostream& os) {
  os << "atom,weight\n" << std::setprecision(17);
  for (std::size_t i = 0; i < m.size(); ++i) os << m.atoms[i] << ',' << m.weights[i] << '\n';
}

inline void write_discrete_csv(const DiscreteMeasure& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_discrete_csv(m, os);
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline DiscreteMeasure read_discrete_csv(std::istream& is) {
  std::string line;
  std::vector<double> a, w;
  bool header = true;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.find_first_of("0123456789") == std::string::npos || line.find("atom") != std::string::npos) continue;
    }
    std::istringstream ls(line);
    std::string xs, ws;
    if (!std::getline(ls, xs, ',') || !std::getline(ls, ws, ','))
      throw IoError("malformed measure row: '" + line + "'");
    try {
      a.push_back(std::stod(xs));
      w.push_back(std::stod(ws));
    } catch (const std::exception&) {
      throw IoError("malformed measure row: '" + line + "'");
    }
  }
  return DiscreteMeasure::make(std::move(a), std::move(w));
}

inline DiscreteMeasure read_discrete_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_discrete_csv(is);
}

}  // namespace ckde

#include "ckde/freeconv.hpp"
