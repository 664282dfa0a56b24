#pragma once

// Experiment configuration: a JSON document with a fixed schema. Unknown keys
// are rejected so that a typo cannot silently change an experiment.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ckde/error.hpp"
#include "ckde/measures.hpp"
#include "ckde/network.hpp"
#include "ckde/random.hpp"

namespace ckde {

using json = nlohmann::ordered_json;

struct LayerConfig {
  int width = 1;
  std::string activation = "identity";
  double sigma_w2 = 1.0;
  double sigma_b2 = 0.0;
  double sigma_d2 = 0.0;
};

struct DataConfig {
  std::string model = "iid-gaussian";
  double sigma_x2 = 1.0;
  std::string path;  // CSV of X (d0 rows, n columns) for the explicit model
};

struct NetworkConfig {
  int n = 100;
  int d0 = 100;
  DataConfig data;
  std::vector<LayerConfig> layers;
};

struct ZGridConfig {
  double x_min = 0.0;
  double x_max = 4.0;
  double step = 0.01;
  std::vector<double> eta{1e-3};

  std::vector<double> xs() const {
    std::vector<double> out;
    const auto count = static_cast<long long>(std::floor((x_max - x_min) / step + 1e-9));
    for (long long i = 0; i <= count; ++i) out.push_back(x_min + step * static_cast<double>(i));
    return out;
  }
  // Every (x, eta) pair, eta-major.
  std::vector<cplx> points() const {
    std::vector<cplx> out;
    for (double e : eta)
      for (double x : xs()) out.emplace_back(x, e);
    return out;
  }
};

struct SimConfig {
  std::vector<std::uint64_t> seeds{1};
  int replicas = 1;

  // seeds x replicas; replica 0 keeps the listed seed.
  std::vector<std::uint64_t> effective_seeds() const {
    std::vector<std::uint64_t> out;
    for (auto s : seeds)
      for (int r = 0; r < replicas; ++r)
        out.push_back(r == 0 ? s : substream_seed(s, {0x7265706cULL, static_cast<std::uint64_t>(r)}));
    return out;
  }
};

// Base measure of the chain. "data" uses the input kernel: its limit for
// density, the sampled kernel for comparisons. "dirac" uses delta_atom.
struct BaseConfig {
  std::string kind = "data";
  double atom = 1.0;
};

struct OutputConfig {
  std::string directory = ".";
  std::vector<std::string> formats{"csv"};
};

struct Example55Config {
  std::vector<int> n{100};
  std::vector<int> sweep{100, 1000, 10000};
  std::optional<double> a;  // default: constants of tanh with unit variances
  std::optional<double> b;
};

struct ExperimentConfig {
  NetworkConfig network;
  ZGridConfig z_grid;
  SimConfig sim;
  FixedPointConfig solver;
  OutputConfig output;
  BaseConfig base;
  Example55Config example55;
  double cdf_eta = 1e-3;

  void validate() const;
};

// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  using detail::read;
  using detail::reject_unknown;
  ExperimentConfig c;
  reject_unknown(j, {"network", "z_grid", "sim", "solver", "output", "base", "example55", "cdf_eta"}, "config");
  if (j.contains("network")) {
    const json& n = j.at("network");
    reject_unknown(n, {"n", "d0", "data", "layers"}, "network");
    read(n, "n", c.network.n, "network");
    read(n, "d0", c.network.d0, "network");
    if (n.contains("data")) {
      const json& d = n.at("data");
      reject_unknown(d, {"model", "sigma_x2", "path"}, "network.data");
      read(d, "model", c.network.data.model, "network.data");
      read(d, "sigma_x2", c.network.data.sigma_x2, "network.data");
      read(d, "path", c.network.data.path, "network.data");
    }
    if (n.contains("layers")) {
      if (!n.at("layers").is_array()) throw ConfigError("network.layers: expected an array");
      for (const json& l : n.at("layers")) {
        LayerConfig lc;
        reject_unknown(l, {"width", "activation", "sigma_w2", "sigma_b2", "sigma_d2"}, "network.layers[]");
        read(l, "width", lc.width, "network.layers[]");
        read(l, "activation", lc.activation, "network.layers[]");
        read(l, "sigma_w2", lc.sigma_w2, "network.layers[]");
        read(l, "sigma_b2", lc.sigma_b2, "network.layers[]");
        read(l, "sigma_d2", lc.sigma_d2, "network.layers[]");
        c.network.layers.push_back(lc);
      }
    }
  }
  if (j.contains("z_grid")) {
    const json& g = j.at("z_grid");
    reject_unknown(g, {"x_min", "x_max", "step", "eta"}, "z_grid");
    read(g, "x_min", c.z_grid.x_min, "z_grid");
    read(g, "x_max", c.z_grid.x_max, "z_grid");
    read(g, "step", c.z_grid.step, "z_grid");
    read(g, "eta", c.z_grid.eta, "z_grid");
  }
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    reject_unknown(s, {"seeds", "replicas"}, "sim");
    read(s, "seeds", c.sim.seeds, "sim");
    read(s, "replicas", c.sim.replicas, "sim");
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    reject_unknown(s, {"tol", "max_iter", "damping", "newton"}, "solver");
    read(s, "tol", c.solver.tol, "solver");
    read(s, "max_iter", c.solver.max_iter, "solver");
    read(s, "damping", c.solver.damping, "solver");
    read(s, "newton", c.solver.newton, "solver");
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    reject_unknown(o, {"directory", "formats"}, "output");
    read(o, "directory", c.output.directory, "output");
    read(o, "formats", c.output.formats, "output");
  }
  if (j.contains("base")) {
    const json& b = j.at("base");
    reject_unknown(b, {"kind", "atom"}, "base");
    read(b, "kind", c.base.kind, "base");
    read(b, "atom", c.base.atom, "base");
  }
  if (j.contains("example55")) {
    const json& e = j.at("example55");
    reject_unknown(e, {"n", "sweep", "a", "b"}, "example55");
    read(e, "n", c.example55.n, "example55");
    read(e, "sweep", c.example55.sweep, "example55");
    double v = 0.0;
    if (e.contains("a")) {
      read(e, "a", v, "example55");
      c.example55.a = v;
    }
    if (e.contains("b")) {
      read(e, "b", v, "example55");
      c.example55.b = v;
    }
  }
  read(j, "cdf_eta", c.cdf_eta, "config");
  c.validate();
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  json layers = json::array();
  for (const auto& l : c.network.layers)
    layers.push_back({{"width", l.width},
                      {"activation", l.activation},
                      {"sigma_w2", l.sigma_w2},
                      {"sigma_b2", l.sigma_b2},
                      {"sigma_d2", l.sigma_d2}});
  json data = {{"model", c.network.data.model}, {"sigma_x2", c.network.data.sigma_x2}};
  if (!c.network.data.path.empty()) data["path"] = c.network.data.path;
  j["network"] = {{"n", c.network.n}, {"d0", c.network.d0}, {"data", data}, {"layers", layers}};
  j["z_grid"] = {{"x_min", c.z_grid.x_min}, {"x_max", c.z_grid.x_max}, {"step", c.z_grid.step}, {"eta", c.z_grid.eta}};
  j["sim"] = {{"seeds", c.sim.seeds}, {"replicas", c.sim.replicas}};
  j["solver"] = {{"tol", c.solver.tol},
                 {"max_iter", c.solver.max_iter},
                 {"damping", c.solver.damping},
                 {"newton", c.solver.newton}};
  j["output"] = {{"directory", c.output.directory}, {"formats", c.output.formats}};
  j["base"] = {{"kind", c.base.kind}, {"atom", c.base.atom}};
  json e = {{"n", c.example55.n}, {"sweep", c.example55.sweep}};
  if (c.example55.a) e["a"] = *c.example55.a;
  if (c.example55.b) e["b"] = *c.example55.b;
  j["example55"] = e;
  j["cdf_eta"] = c.cdf_eta;
  return j;
}

inline void ExperimentConfig::validate() const {
  if (network.n < 1 || network.d0 < 1) throw ConfigError("network: n and d0 must be >= 1");
  for (const auto& l : network.layers) {
    if (l.width < 1) throw ConfigError("network.layers[]: width must be >= 1");
    if (l.activation.rfind("table:", 0) == 0) continue;
    try {
      (void)Activation::from_name(l.activation);
    } catch (const Error& e) {
      throw ConfigError(std::string("network.layers[]: ") + e.what());
    }
  }
  (void)data_model_from_string(network.data.model);
  if (network.data.model == "explicit" && network.data.path.empty())
    throw ConfigError("network.data: the explicit model needs a path");
  if (!(network.data.sigma_x2 > 0.0)) throw ConfigError("network.data.sigma_x2 must be positive");
  if (!(z_grid.step > 0.0)) throw ConfigError("z_grid.step must be positive");
  if (z_grid.x_max < z_grid.x_min) throw ConfigError("z_grid: x_max must be >= x_min");
  if (z_grid.eta.empty()) throw ConfigError("z_grid.eta must not be empty");
  for (double e : z_grid.eta)
    if (!(e > 0.0)) throw ConfigError("z_grid.eta values must be positive");
  if (sim.seeds.empty()) throw ConfigError("sim.seeds must list at least one seed");
  if (sim.replicas < 1) throw ConfigError("sim.replicas must be >= 1");
  try {
    solver.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  for (const auto& f : output.formats)
    if (f != "csv" && f != "json") throw ConfigError("output.formats: unknown format '" + f + "'");
  if (output.formats.empty()) throw ConfigError("output.formats must not be empty");
  if (base.kind != "data" && base.kind != "dirac") throw ConfigError("base.kind must be 'data' or 'dirac'");
  if (base.kind == "dirac" && !(base.atom >= 0.0)) throw ConfigError("base.atom must be nonnegative");
  for (int v : example55.n)
    if (v < 2) throw ConfigError("example55.n values must be >= 2");
  for (int v : example55.sweep)
    if (v < 2) throw ConfigError("example55.sweep values must be >= 2");
  if (!(cdf_eta > 0.0)) throw ConfigError("cdf_eta must be positive");
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  ExperimentConfig c = config_from_json(j);
  // Data paths are relative to the configuration file.
  const std::filesystem::path data(c.network.data.path);
  if (!c.network.data.path.empty() && data.is_relative())
    c.network.data.path = (std::filesystem::path(path).parent_path() / data).string();
  return c;
}

// Reads a dense matrix from CSV (no header; '#' lines ignored).
inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open matrix '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        r.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError("matrix '" + path + "': bad entry '" + cell + "'");
      }
    }
    if (!rows.empty() && r.size() != rows.front().size()) throw IoError("matrix '" + path + "': ragged rows");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw IoError("matrix '" + path + "' is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  return m;
}

// Activation by name; "table:<path>" reads a two-column CSV of (t, f(t)) samples.
inline Activation load_activation(const std::string& name) {
  if (name.rfind("table:", 0) == 0) {
    const Eigen::MatrixXd m = read_matrix_csv(name.substr(6));
    if (m.cols() != 2) throw ConfigError("activation table '" + name.substr(6) + "' must have two columns");
    std::vector<double> t(m.rows()), f(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      t[static_cast<std::size_t>(i)] = m(i, 0);
      f[static_cast<std::size_t>(i)] = m(i, 1);
    }
    try {
      return Activation::table(std::move(t), std::move(f));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  try {
    return Activation::from_name(name);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

// NetworkSpec from the configuration; explicit data is loaded from disk.
inline NetworkSpec network_spec(const ExperimentConfig& c) {
  NetworkSpec s;
  s.n = c.network.n;
  s.d0 = c.network.d0;
  s.data.kind = data_model_from_string(c.network.data.model);
  s.data.sigma_x2 = c.network.data.sigma_x2;
  if (s.data.kind == DataModel::Explicit) s.data.X = read_matrix_csv(c.network.data.path);
  for (const auto& l : c.network.layers) {
    LayerSpec ls;
    ls.sigma_w2 = l.sigma_w2;
    ls.sigma_b2 = l.sigma_b2;
    ls.sigma_d2 = l.sigma_d2;
    ls.f = load_activation(l.activation);
    ls.gamma = static_cast<double>(c.network.n) / static_cast<double>(l.width);
    s.layers.push_back(ls);
    s.dims.push_back(l.width);
  }
  s.validate();
  return s;
}

}  // namespace ckde
