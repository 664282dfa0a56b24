// Command-line driver: coeffs, density, simulate, compare, example55.
//
// Exit codes: 0 success, 1 unexpected error, 2 configuration error,
// 3 solver divergence (results are still written, failed points are flagged),
// 4 I/O error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ckde/ckde.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format;
  bool no_timestamp = false;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config_path, "experiment configuration (JSON)");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "master seed, replaces sim.seeds");
  sub->add_option("--out", c.out, "output directory, replaces output.directory");
  sub->add_option("--format", c.format, "output format, replaces output.formats")->check(CLI::IsMember({"csv", "json"}));
  sub->add_flag("--no-timestamp", c.no_timestamp, "omit the generation timestamp for byte-identical reruns");
}

ckde::ExperimentConfig resolve(const Common& c) {
  ckde::ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    try {
      cfg = ckde::load_config(c.config_path);
    } catch (const ckde::IoError& e) {
      // An unreadable configuration is a configuration problem, not an output failure.
      throw ckde::ConfigError(e.what());
    }
  }
  if (c.seed) cfg.sim.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output.directory = c.out;
  if (!c.format.empty()) cfg.output.formats = {c.format};
  cfg.validate();
  return cfg;
}

int finish(const ckde::CommandResult& r, const std::string& dir, const std::vector<std::string>& formats,
           bool timestamp) {
  for (const auto& m : r.messages) std::cerr << "ckde: " << m << '\n';
  for (const auto& t : r.tables)
    for (const auto& p : ckde::write_table(t, dir, formats, {timestamp})) std::cout << p << '\n';
  if (r.failures > 0) {
    std::cerr << "ckde: " << r.failures << " point(s) failed to converge\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic equivalents for conjugate kernels of deep random networks"};
  app.require_subcommand(1);

  Common cc, dc, sc, pc, ec;
  ckde::CoeffsRequest creq;
  auto* coeffs = app.add_subcommand("coeffs", "normalized Hermite coefficients and layer constants");
  add_common(coeffs, cc, false);
  coeffs->add_option("--activation", creq.activation, "identity, tanh, relu or a table:<path>");
  coeffs->add_option("--sigma-w2", creq.sigma_w2, "weight variance");
  coeffs->add_option("--sigma-x2", creq.sigma_x2, "input variance");
  coeffs->add_option("--sigma-b2", creq.sigma_b2, "bias variance");
  coeffs->add_option("--sigma-d2", creq.sigma_d2, "additive noise variance");
  coeffs->add_option("--r-max", creq.r_max, "highest coefficient degree");

  auto* density = app.add_subcommand("density", "limiting spectral density and CDF of the final layer");
  add_common(density, dc, true);
  auto* simulate = app.add_subcommand("simulate", "sample conjugate kernel spectra");
  add_common(simulate, sc, true);
  auto* compare = app.add_subcommand("compare", "simulation against the deterministic equivalents");
  add_common(compare, pc, true);
  auto* example = app.add_subcommand("example55", "linear-covariance worked example and its large-n limit");
  add_common(example, ec, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (coeffs->parsed()) {
      const auto cfg = resolve(cc);
      return finish(ckde::cmd_coeffs(creq), cfg.output.directory, cfg.output.formats, !cc.no_timestamp);
    }
    const Common& c = density->parsed() ? dc : simulate->parsed() ? sc : compare->parsed() ? pc : ec;
    const auto cfg = resolve(c);
    ckde::CommandResult r;
    if (density->parsed()) r = ckde::cmd_density(cfg);
    else if (simulate->parsed()) r = ckde::cmd_simulate(cfg);
    else if (compare->parsed()) r = ckde::cmd_compare(cfg);
    else r = ckde::cmd_example55(cfg);
    return finish(r, cfg.output.directory, cfg.output.formats, !c.no_timestamp);
  } catch (const ckde::ConfigError& e) {
    std::cerr << "ckde: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ckde::AssumptionError& e) {
    std::cerr << "ckde: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ckde::DivergenceError& e) {
    std::cerr << "ckde: solver diverged: " << e.what() << '\n';
    return 3;
  } catch (const ckde::IoError& e) {
    std::cerr << "ckde: I/O error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "ckde: error: " << e.what() << '\n';
    return 1;
  }
}
