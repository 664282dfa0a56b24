#pragma once

// Batch experiments behind the command-line driver. Each command returns its
// tables and a failure count; writing files is left to the caller.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ckde/config.hpp"
#include "ckde/detequiv.hpp"
#include "ckde/distribution.hpp"
#include "ckde/netsim.hpp"
#include "ckde/parallel.hpp"
#include "ckde/report.hpp"

namespace ckde {

struct CommandResult {
  std::vector<Table> tables;
  int failures = 0;  // grid points or rows that could not be computed
  std::vector<std::string> messages;
};

// ---------------------------------------------------------------------------
// coeffs

struct CoeffsRequest {
  std::string activation = "tanh";
  double sigma_w2 = 1.0;
  double sigma_x2 = 1.0;
  double sigma_b2 = 0.0;
  double sigma_d2 = 0.0;
  int r_max = 20;
};

inline CommandResult cmd_coeffs(const CoeffsRequest& req) {
  if (req.r_max < 0 || req.r_max > kMaxHermiteDegree) throw ConfigError("r_max must lie in [0, 64]");
  LayerSpec spec;
  spec.f = load_activation(req.activation);
  spec.sigma_w2 = req.sigma_w2;
  spec.sigma_b2 = req.sigma_b2;
  spec.sigma_d2 = req.sigma_d2;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!(req.sigma_x2 > 0.0)) throw ConfigError("sigma_x2 must be positive");

  const double st2 = spec.sigma_w2 * req.sigma_x2 + spec.sigma_b2;
  const Activation ft = spec.f.scaled(std::sqrt(st2));
  const QuadratureRule rule = adapted_rule(ft);
  const auto zeta = hermite_coeffs(ft, req.r_max, rule);
  const double norm2 = gaussian_norm_sq(ft, rule);

  CommandResult out;
  Table coeffs{"coeffs", {"r", "zeta_r", "zeta_r_squared", "vanishes"}, {}};
  for (int r = 0; r <= req.r_max; ++r) {
    const double z = zeta[static_cast<std::size_t>(r)];
    coeffs.add({static_cast<long long>(r), z, z * z, static_cast<long long>(std::abs(z) < 1e-12 ? 1 : 0)});
  }
  double a = std::nan(""), b = std::nan("");
  try {
    const auto c = layer_constants(spec, req.sigma_x2, rule, req.r_max);
    a = c.a;
    b = c.b;
  } catch (const AssumptionError& e) {
    out.messages.push_back(e.what());
  }
  double partial = 0.0;
  for (double z : zeta) partial += z * z;
  Table constants{"constants", {"quantity", "value"}, {}};
  constants.add({std::string("sigma_tilde2"), st2});
  constants.add({std::string("norm2"), norm2});
  constants.add({std::string("parseval_tail"), norm2 - partial});
  constants.add({std::string("a"), a});
  constants.add({std::string("b"), b});
  constants.add({std::string("sigma_y2"), norm2 + spec.sigma_d2});
  out.tables = {coeffs, constants};
  return out;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

inline MatrixFunction unavailable_matrix_function(Eigen::Index n) {
  return {n, [](cplx) -> CMatrix { throw DomainError("no matrix equivalent is available for this base"); }};
}

// Deterministic description of the input kernel used when nothing is sampled.
inline Measure data_limit_measure(const NetworkSpec& net) {
  const double s2 = net.data.sigma_x2;
  switch (net.data.kind) {
    case DataModel::IidGaussian:
      return Measure::mp_boxtimes(static_cast<double>(net.n) / static_cast<double>(net.d0), Measure::dirac(s2));
    case DataModel::CorrelatedRows: {
      const double nn = static_cast<double>(net.n);
      if (net.n == 1) return Measure::dirac(s2);
      return Measure::discrete(
          DiscreteMeasure::make({s2 * (1.0 - 1.0 / nn), s2 * (2.0 - 1.0 / nn)}, {(nn - 1.0) / nn, 1.0 / nn}));
    }
    case DataModel::Explicit: {
      const Matrix K = conjugate_kernel(net.data.X, static_cast<double>(net.d0));
      return Measure::discrete(SymmetricSpectrum(K).psd_measure());
    }
  }
  throw DomainError("unknown data model");
}

inline Measure base_measure_for_density(const ExperimentConfig& cfg, const NetworkSpec& net) {
  if (cfg.base.kind == "dirac") return Measure::dirac(cfg.base.atom);
  return data_limit_measure(net);
}

inline std::string eta_label(double eta) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", eta);
  return buf;
}

inline double std_dev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// density

inline CommandResult cmd_density(const ExperimentConfig& cfg, int workers = worker_count()) {
  const NetworkSpec net = network_spec(cfg);
  const Measure chi0 = detail::base_measure_for_density(cfg, net);
  const EquivalentChain chain =
      build_chain(net.layers, chi0, detail::unavailable_matrix_function(net.n), net.data.sigma_x2, cfg.solver);
  const Measure& chi = chain.chi(chain.depth());
  const std::vector<double> xs = cfg.z_grid.xs();

  CommandResult out;
  Table t{"density", {"x"}, {}};
  std::vector<std::vector<double>> dens, cdfs;
  for (double eta : cfg.z_grid.eta) {
    t.columns.push_back("density[eta=" + detail::eta_label(eta) + "]");
    t.columns.push_back("cdf[eta=" + detail::eta_label(eta) + "]");
    std::vector<double> d(xs.size(), std::nan("")), c(xs.size(), std::nan(""));
    std::vector<int> failed(xs.size(), 0);
    parallel_blocks(xs.size(), 64, workers, [&](std::size_t b, std::size_t e) {
      WarmStart ws;
      for (std::size_t i = b; i < e; ++i) {
        try {
          d[i] = density_from_stieltjes(chi, xs[i], eta, ws);
        } catch (const DivergenceError&) {
          failed[i] = 1;
          ws = WarmStart{};
        }
      }
    });
    for (std::size_t i = 0; i < xs.size(); ++i)
      if (failed[i]) {
        ++out.failures;
        out.messages.push_back("density diverged at x = " + format_double(xs[i]) + ", eta = " + detail::eta_label(eta));
      }
    try {
      const CdfEvaluator F(chi, eta, workers);
      for (std::size_t i = 0; i < xs.size(); ++i) c[i] = F(xs[i]);
    } catch (const DivergenceError& e) {
      ++out.failures;
      out.messages.push_back(std::string("cdf unavailable at eta = ") + detail::eta_label(eta) + ": " + e.what());
    }
    dens.push_back(std::move(d));
    cdfs.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<Cell> row{xs[i]};
    for (std::size_t k = 0; k < dens.size(); ++k) {
      row.emplace_back(dens[k][i]);
      row.emplace_back(cdfs[k][i]);
    }
    t.add(std::move(row));
  }
  out.tables.push_back(std::move(t));
  return out;
}

// ---------------------------------------------------------------------------
// simulate

inline CommandResult cmd_simulate(const ExperimentConfig& cfg, int workers = worker_count()) {
  const NetworkSpec net = network_spec(cfg);
  const auto seeds = cfg.sim.effective_seeds();
  std::vector<SimResult> sims(seeds.size());
  parallel_blocks(seeds.size(), 1, workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) sims[i] = run_network(net, {}, seeds[i]);
  });
  Table eig{"eigenvalues", {"seed", "layer", "index", "eigenvalue"}, {}};
  Table st{"stats", {"seed", "layer", "sigma2", "max_norm", "diag_norm", "spec_norm"}, {}};
  for (const auto& s : sims) {
    const std::string seed = std::to_string(s.seed);
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const auto& L = s.layers[l];
      for (Eigen::Index i = 0; i < L.eigenvalues.size(); ++i)
        eig.add({seed, static_cast<long long>(l), static_cast<long long>(i), L.eigenvalues(i)});
      st.add({seed, static_cast<long long>(l), L.sigma2, L.stats.max_norm, L.stats.diag_norm, L.stats.spec_norm});
    }
  }
  CommandResult out;
  out.tables = {std::move(eig), std::move(st)};
  return out;
}

// ---------------------------------------------------------------------------
// compare

struct SeedComparison {
  std::uint64_t seed = 0;
  // [layer - 1][z index]
  std::vector<std::vector<cplx>> g_sim, g_det;
  std::vector<std::vector<double>> gap;  // max-entry |resolvent - equivalent|
  std::vector<std::vector<int>> ok;
  std::vector<double> kolmogorov;        // per layer, NaN on failure
  std::vector<OrthogonalityStats> stats;  // per layer (0 = input)
  std::vector<LayerConstants> constants;
};

inline SeedComparison compare_one_seed(const ExperimentConfig& cfg, const NetworkSpec& net, std::uint64_t seed,
                                       const std::vector<cplx>& zs) {
  SimOptions opt;
  opt.keep_spectra = true;
  const SimResult sim = run_network(net, {}, seed, opt);
  Measure chi0 = Measure::dirac(cfg.base.atom);
  MatrixFunction g0;
  if (cfg.base.kind == "dirac") {
    const double c = cfg.base.atom;
    g0 = {net.n, [c, n = net.n](cplx z) -> CMatrix { return (1.0 / (c - z)) * CMatrix::Identity(n, n); }};
  } else {
    auto sp = sim.layers[0].spectrum;
    chi0 = Measure::discrete(sp->psd_measure());
    g0 = {net.n, [sp](cplx z) { return resolvent(*sp, z); }};
  }
  const EquivalentChain chain = build_chain(net, chi0, g0, net.data.sigma_x2, cfg.solver);

  SeedComparison r;
  r.seed = seed;
  const std::size_t L = chain.depth();
  r.g_sim.assign(L, std::vector<cplx>(zs.size()));
  r.g_det.assign(L, std::vector<cplx>(zs.size(), cplx(std::nan(""), std::nan(""))));
  r.gap.assign(L, std::vector<double>(zs.size(), std::nan("")));
  r.ok.assign(L, std::vector<int>(zs.size(), 1));
  for (const auto& ls : sim.layers) r.stats.push_back(ls.stats);
  for (std::size_t l = 1; l <= L; ++l) {
    r.constants.push_back(chain.layer(l).constants);
    const auto& ly = sim.layers[l];
    for (std::size_t k = 0; k < zs.size(); ++k) {
      r.g_sim[l - 1][k] = empirical_stieltjes(ly.eigenvalues, zs[k]);
      try {
        r.g_det[l - 1][k] = chain.g(l, zs[k]);
        r.gap[l - 1][k] = max_norm(resolvent(*ly.spectrum, zs[k]) - chain.G(l, zs[k]));
      } catch (const DivergenceError&) {
        r.ok[l - 1][k] = 0;
      }
    }
    try {
      const Measure esd = esd_measure(ly.eigenvalues);
      const auto grid = kolmogorov_grid(esd, chain.chi(l));
      r.kolmogorov.push_back(kolmogorov_distance(CdfEvaluator(esd), CdfEvaluator(chain.chi(l), cfg.cdf_eta, 1), grid));
    } catch (const DivergenceError&) {
      r.kolmogorov.push_back(std::nan(""));
    }
  }
  return r;
}

inline CommandResult cmd_compare(const ExperimentConfig& cfg, int workers = worker_count()) {
  const NetworkSpec net = network_spec(cfg);
  const auto seeds = cfg.sim.effective_seeds();
  const std::vector<cplx> zs = cfg.z_grid.points();
  std::vector<SeedComparison> per(seeds.size());
  parallel_blocks(seeds.size(), 1, workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) per[i] = compare_one_seed(cfg, net, seeds[i], zs);
  });

  CommandResult out;
  const std::size_t L = net.depth();
  Table rows{"comparison",
             {"layer", "z_re", "z_im", "g_sim_mean_re", "g_sim_mean_im", "g_sim_std_re", "g_sim_std_im", "g_det_re",
              "g_det_im", "abs_dg", "max_entry_gap", "status"},
             {}};
  Table detail_rows{"comparison_seeds",
                    {"seed", "layer", "z_re", "z_im", "g_sim_re", "g_sim_im", "g_det_re", "g_det_im", "abs_dg",
                     "max_entry_gap", "status"},
                    {}};
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < zs.size(); ++k) {
      std::vector<double> sre, sim_im;
      cplx gs = 0.0, gd = 0.0;
      double gap = 0.0;
      int bad = 0;
      for (const auto& p : per) {
        sre.push_back(p.g_sim[l][k].real());
        sim_im.push_back(p.g_sim[l][k].imag());
        gs += p.g_sim[l][k];
        gd += p.g_det[l][k];
        gap = std::max(gap, p.gap[l][k]);
        if (!p.ok[l][k]) ++bad;
        const bool ok = p.ok[l][k] != 0;
        detail_rows.add({std::to_string(p.seed), static_cast<long long>(l + 1), zs[k].real(), zs[k].imag(),
                         p.g_sim[l][k].real(), p.g_sim[l][k].imag(), p.g_det[l][k].real(), p.g_det[l][k].imag(),
                         ok ? std::abs(p.g_sim[l][k] - p.g_det[l][k]) : std::nan(""), p.gap[l][k],
                         std::string(ok ? "ok" : "diverged")});
      }
      const double m = static_cast<double>(per.size());
      gs /= m;
      gd /= m;
      if (bad) {
        gap = std::nan("");
        out.failures += bad;
        out.messages.push_back("layer " + std::to_string(l + 1) + ": solver diverged at z = (" +
                               format_double(zs[k].real()) + ", " + format_double(zs[k].imag()) + ") for " +
                               std::to_string(bad) + " seed(s)");
      }
      rows.add({static_cast<long long>(l + 1), zs[k].real(), zs[k].imag(), gs.real(), gs.imag(), detail::std_dev(sre),
                detail::std_dev(sim_im), gd.real(), gd.imag(), bad ? std::nan("") : std::abs(gs - gd), gap,
                std::string(bad ? "diverged" : "ok")});
    }
  }

  Table summary{"layer_summary",
                {"layer", "a", "b", "sigma_y2", "kolmogorov_mean", "kolmogorov_max", "max_norm_mean", "diag_norm_mean",
                 "spec_norm_mean"},
                {}};
  for (std::size_t l = 0; l <= L; ++l) {
    double kmean = 0.0, kmax = 0.0, mx = 0.0, dg = 0.0, sp = 0.0;
    for (const auto& p : per) {
      if (l > 0) {
        kmean += p.kolmogorov[l - 1];
        kmax = std::max(kmax, p.kolmogorov[l - 1]);
        if (std::isnan(p.kolmogorov[l - 1])) kmax = std::nan("");
      }
      mx += p.stats[l].max_norm;
      dg += p.stats[l].diag_norm;
      sp += p.stats[l].spec_norm;
    }
    const double m = static_cast<double>(per.size());
    const double nan = std::nan("");
    const LayerConstants* c = l > 0 ? &per.front().constants[l - 1] : nullptr;
    summary.add({static_cast<long long>(l), c ? c->a : nan, c ? c->b : nan,
                 c ? c->sigma_y2 : net.data.sigma_x2, l > 0 ? kmean / m : nan, l > 0 ? kmax : nan, mx / m, dg / m,
                 sp / m});
    if (l > 0)
      for (const auto& p : per)
        if (std::isnan(p.kolmogorov[l - 1])) {
          ++out.failures;
          out.messages.push_back("layer " + std::to_string(l) + ": Kolmogorov distance unavailable for seed " +
                                 std::to_string(p.seed));
        }
  }
  out.tables = {std::move(rows), std::move(detail_rows), std::move(summary)};
  return out;
}

// ---------------------------------------------------------------------------
// example55

// Layer constants of tanh with unit weight, data, bias and noise variances.
inline std::pair<double, double> correlated_example_default_constants() {
  LayerSpec s;
  s.f = Activation::tanh();
  s.sigma_w2 = s.sigma_b2 = s.sigma_d2 = 1.0;
  const auto c = layer_constants(s, 1.0);
  return {c.a, c.b};
}

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double md = static_cast<double>(m);
  return (md * sxy - sx * sy) / (md * sxx - sx * sx);
}

inline CommandResult cmd_example55(const ExperimentConfig& cfg, int workers = worker_count()) {
  auto [a, b] = correlated_example_default_constants();
  if (cfg.example55.a) a = *cfg.example55.a;
  if (cfg.example55.b) b = *cfg.example55.b;
  const std::vector<cplx> zs = cfg.z_grid.points();

  CommandResult out;
  Table cmp{"example55",
            {"n", "z_re", "z_im", "g_re", "g_im", "agreement_fro", "trace_gap_closed", "trace_gap_generic"},
            {}};
  for (int n : cfg.example55.n) {
    const SymmetricSpectrum spec(correlated_example_sigma(n, a, b));
    std::vector<std::vector<Cell>> rows(zs.size());
    std::vector<int> failed(zs.size(), 0);
    parallel_blocks(zs.size(), 1, workers, [&](std::size_t s, std::size_t e) {
      for (std::size_t k = s; k < e; ++k) {
        try {
          const CorrelatedExample ex = correlated_example(n, a, b, zs[k], cfg.solver);
          const CMatrix generic = gbox_from_sigma(spec, 1.0, zs[k], cfg.solver);
          const double nn = static_cast<double>(n);
          rows[k] = {static_cast<long long>(n), zs[k].real(), zs[k].imag(), ex.g.real(), ex.g.imag(),
                     (ex.materialize() - generic).norm(), std::abs(ex.trace() / nn - ex.g),
                     std::abs(generic.trace() / nn - ex.g)};
        } catch (const DivergenceError&) {
          failed[k] = 1;
          const double nan = std::nan("");
          rows[k] = {static_cast<long long>(n), zs[k].real(), zs[k].imag(), nan, nan, nan, nan, nan};
        }
      }
    });
    for (std::size_t k = 0; k < zs.size(); ++k) {
      if (failed[k]) ++out.failures;
      cmp.add(std::move(rows[k]));
    }
  }

  Table sweep{"example55_sweep", {"n", "z_re", "z_im", "g_re", "g_im", "gap_to_limit"}, {}};
  Table slope{"example55_slope", {"z_re", "z_im", "loglog_slope"}, {}};
  for (const cplx& z : zs) {
    std::vector<double> ns, gaps;
    try {
      const cplx ginf = scaled_mp_stieltjes(a + b, 1.0, z);
      for (int n : cfg.example55.sweep) {
        const cplx g = correlated_example(n, a, b, z, cfg.solver).g;
        sweep.add({static_cast<long long>(n), z.real(), z.imag(), g.real(), g.imag(), std::abs(g - ginf)});
        ns.push_back(n);
        gaps.push_back(std::abs(g - ginf));
      }
      slope.add({z.real(), z.imag(), ns.size() >= 2 ? loglog_slope(ns, gaps) : std::nan("")});
    } catch (const DivergenceError&) {
      ++out.failures;
      slope.add({z.real(), z.imag(), std::nan("")});
    }
  }
  out.tables = {std::move(cmp), std::move(sweep), std::move(slope)};
  return out;
}

}  // namespace ckde
