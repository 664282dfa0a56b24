#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ckde/ckde.hpp"

using namespace ckde;

namespace fs = std::filesystem;

namespace {

const std::string kConfigs = CKDE_EXAMPLES_DIR "/configs";

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ckde_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const Table& table(const CommandResult& r, const std::string& name) {
  for (const auto& t : r.tables)
    if (t.name == name) return t;
  throw std::runtime_error("missing table " + name);
}

std::size_t col(const Table& t, const std::string& name) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) return i;
  throw std::runtime_error("missing column " + name);
}

double num(const Cell& c) {
  if (const double* d = std::get_if<double>(&c)) return *d;
  if (const long long* i = std::get_if<long long>(&c)) return static_cast<double>(*i);
  throw std::runtime_error("not numeric");
}

double constant(const CommandResult& r, const std::string& quantity) {
  for (const auto& row : table(r, "constants").rows)
    if (std::get<std::string>(row[0]) == quantity) return num(row[1]);
  throw std::runtime_error("missing constant " + quantity);
}

std::string csv(const Table& t) {
  std::ostringstream os;
  write_csv(t, os, {false});
  return os.str();
}

ExperimentConfig small_network(const std::string& activation, const std::string& base, int n = 60) {
  json j = {{"network",
             {{"n", n},
              {"d0", n},
              {"data", {{"model", "iid-gaussian"}, {"sigma_x2", 1.0}}},
              {"layers",
               {{{"width", 2 * n}, {"activation", activation}, {"sigma_w2", 1.0}, {"sigma_b2", 0.25}, {"sigma_d2", 0.1}},
                {{"width", n}, {"activation", activation}, {"sigma_w2", 1.0}, {"sigma_b2", 0.25}, {"sigma_d2", 0.1}}}}}},
            {"z_grid", {{"x_min", 0.0}, {"x_max", 2.0}, {"step", 0.5}, {"eta", {0.1, 1.0}}}},
            {"sim", {{"seeds", {1, 2}}}},
            {"base", {{"kind", base}, {"atom", 1.0}}}};
  return config_from_json(j);
}

}  // namespace

TEST(Config, RoundTripOfShippedConfigs) {
  for (const char* name : {"tanh_three_layers.json", "correlated_rows.json", "marchenko_pastur.json"}) {
    const ExperimentConfig a = load_config(kConfigs + "/" + name);
    const json ja = config_to_json(a);
    const ExperimentConfig b = config_from_json(ja);
    EXPECT_EQ(config_to_json(b), ja) << name;
    EXPECT_NO_THROW(network_spec(a)) << name;
  }
}

TEST(Config, DefaultsAreValid) {
  const ExperimentConfig c = config_from_json(json::object());
  EXPECT_EQ(c.sim.seeds.size(), 1u);
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

TEST(Config, RejectsUnknownKeys) {
  EXPECT_THROW(config_from_json(json{{"netwrok", json::object()}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"z_grid", {{"etta", {0.1}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"network", {{"layers", {{{"width", 3}, {"sigma_w", 1.0}}}}}}}), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(config_from_json(json{{"z_grid", {{"eta", {0.0}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"z_grid", {{"eta", json::array()}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"sim", {{"seeds", json::array()}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"output", {{"formats", {"xml"}}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"solver", {{"damping", 2.0}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"z_grid", {{"step", "fast"}}}}), ConfigError);
  EXPECT_THROW(config_from_json(json{{"base", {{"kind", "uniform"}}}}), ConfigError);
}

TEST(Config, LoadErrors) {
  EXPECT_THROW(load_config("/nonexistent/ckde.json"), IoError);
  const fs::path dir = scratch_dir("badjson");
  std::ofstream(dir / "bad.json") << "{ not json";
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
}

TEST(Config, ZGrid) {
  ZGridConfig g;
  g.x_min = -1.0;
  g.x_max = 1.0;
  g.step = 0.5;
  g.eta = {0.1, 1.0};
  EXPECT_EQ(g.xs().size(), 5u);
  EXPECT_EQ(g.points().size(), 10u);
  for (const cplx& z : g.points()) EXPECT_GT(z.imag(), 0.0);
}

TEST(Report, CsvAndJson) {
  Table t{"demo", {"k", "value", "label"}, {}};
  t.add({1LL, 0.5, std::string("ok")});
  t.add({2LL, std::nan(""), std::string("diverged")});
  EXPECT_THROW(t.add({1LL}), Error);
  EXPECT_EQ(csv(t), "k,value,label\n1,0.5,ok\n2,nan,diverged\n");
  std::ostringstream with;
  write_csv(t, with);
  EXPECT_EQ(with.str().rfind("# generated ", 0), 0u);
  std::ostringstream js;
  write_json(t, js, {false});
  const json j = json::parse(js.str());
  EXPECT_EQ(j.at("table"), "demo");
  EXPECT_FALSE(j.contains("generated"));
  EXPECT_TRUE(j.at("rows")[1].at("value").is_null());
  EXPECT_EQ(j.at("rows")[0].at("k"), 1);
}

TEST(Report, WriteTable) {
  const fs::path dir = scratch_dir("report");
  Table t{"demo", {"x"}, {}};
  t.add({1.25});
  const auto paths = write_table(t, dir.string(), {"csv", "json"}, {false});
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "demo.csv"));
  EXPECT_TRUE(fs::exists(dir / "demo.json"));
  EXPECT_THROW(write_table(t, dir.string(), {"xml"}), ConfigError);
  std::ofstream(dir / "file") << "x";
  EXPECT_THROW(write_table(t, (dir / "file" / "sub").string(), {"csv"}), IoError);
}

TEST(Coeffs, TanhOddSymmetry) {
  CoeffsRequest req;
  req.activation = "tanh";
  req.sigma_b2 = 1.0;  // sigma~^2 = 2
  const CommandResult r = cmd_coeffs(req);
  const Table& c = table(r, "coeffs");
  ASSERT_EQ(c.rows.size(), 21u);
  const auto vanish = col(c, "vanishes");
  for (int k : {0, 2, 4}) EXPECT_EQ(num(c.rows[k][vanish]), 1.0);
  EXPECT_EQ(num(c.rows[1][vanish]), 0.0);
  EXPECT_NEAR(num(c.rows[1][col(c, "zeta_r")]), 0.678856810750075835, 1e-11);
  EXPECT_NEAR(constant(r, "sigma_tilde2"), 2.0, 1e-15);
  EXPECT_GT(constant(r, "a"), 0.0);
}

TEST(Coeffs, IdentityAndRelu) {
  CoeffsRequest id;
  id.activation = "identity";
  id.sigma_w2 = 3.0;
  const CommandResult ri = cmd_coeffs(id);
  const Table& c = table(ri, "coeffs");
  const auto z = col(c, "zeta_r");
  EXPECT_NEAR(num(c.rows[1][z]), std::sqrt(3.0), 1e-13);
  for (std::size_t r = 0; r < c.rows.size(); ++r) {
    if (r == 1) continue;
    EXPECT_NEAR(num(c.rows[r][z]), 0.0, 1e-13);
  }

  CoeffsRequest relu;
  relu.activation = "relu";
  const CommandResult rr = cmd_coeffs(relu);
  EXPECT_NEAR(num(table(rr, "coeffs").rows[1][z]), 0.5, 1e-12);
  EXPECT_TRUE(std::isfinite(constant(rr, "a")));

  CoeffsRequest off = relu;
  off.sigma_w2 = 2.0;  // not centered at this scale
  const CommandResult bad = cmd_coeffs(off);
  EXPECT_TRUE(std::isnan(constant(bad, "a")));
  EXPECT_FALSE(bad.messages.empty());

  CoeffsRequest unknown;
  unknown.activation = "softsign";
  EXPECT_THROW(cmd_coeffs(unknown), ConfigError);
}

TEST(Density, MarchenkoPasturLayer) {
  json j = {{"network",
             {{"n", 50},
              {"d0", 50},
              {"layers", {{{"width", 100}, {"activation", "identity"}, {"sigma_w2", 1.0}}}}}},
            {"z_grid", {{"x_min", 0.0}, {"x_max", 3.5}, {"step", 0.01}, {"eta", {0.001}}}},
            {"base", {{"kind", "dirac"}, {"atom", 1.0}}}};
  const ExperimentConfig cfg = config_from_json(j);
  const CommandResult r = cmd_density(cfg);
  EXPECT_EQ(r.failures, 0);
  const Table& t = table(r, "density");
  const auto dc = col(t, "density[eta=0.001]"), cc = col(t, "cdf[eta=0.001]");
  double gap = 0.0;
  for (const auto& row : t.rows) {
    const double x = num(row[0]);
    const double oracle = mp_stieltjes_closed(0.5, cplx(x, 0.001)).imag() / M_PI;
    gap = std::max(gap, std::abs(num(row[dc]) - oracle));
    EXPECT_GE(num(row[dc]), 0.0);
  }
  EXPECT_LT(gap, 1e-3);
  EXPECT_NEAR(num(t.rows.back()[cc]), 1.0, 5e-3);
  for (std::size_t i = 1; i < t.rows.size(); ++i) EXPECT_GE(num(t.rows[i][cc]), num(t.rows[i - 1][cc]) - 1e-9);
}

TEST(Simulate, RowCountsAndDeterminism) {
  const ExperimentConfig cfg = small_network("tanh", "data", 30);
  const CommandResult a = cmd_simulate(cfg, 1);
  const CommandResult b = cmd_simulate(cfg, 3);
  const Table& eig = table(a, "eigenvalues");
  EXPECT_EQ(eig.rows.size(), 30u * 3u * 2u);
  EXPECT_EQ(table(a, "stats").rows.size(), 3u * 2u);
  for (std::size_t i = 0; i < a.tables.size(); ++i) EXPECT_EQ(csv(a.tables[i]), csv(b.tables[i]));
}

TEST(Compare, InternalConsistency) {
  const ExperimentConfig cfg = small_network("tanh", "data");
  const CommandResult r = cmd_compare(cfg);
  EXPECT_EQ(r.failures, 0);
  const Table& t = table(r, "comparison");
  EXPECT_EQ(t.rows.size(), cfg.z_grid.points().size() * 2);
  for (const auto& row : t.rows) {
    const cplx gs(num(row[col(t, "g_sim_mean_re")]), num(row[col(t, "g_sim_mean_im")]));
    const cplx gd(num(row[col(t, "g_det_re")]), num(row[col(t, "g_det_im")]));
    EXPECT_NEAR(num(row[col(t, "abs_dg")]), std::abs(gs - gd), 1e-14);
    EXPECT_GE(num(row[col(t, "max_entry_gap")]), 0.0);
    EXPECT_GE(num(row[col(t, "g_sim_std_re")]), 0.0);
    EXPECT_EQ(std::get<std::string>(row[col(t, "status")]), "ok");
  }
  EXPECT_EQ(table(r, "comparison_seeds").rows.size(), t.rows.size() * 2);
  const Table& s = table(r, "layer_summary");
  ASSERT_EQ(s.rows.size(), 3u);
  for (std::size_t l = 1; l < 3; ++l) {
    const double k = num(s.rows[l][col(s, "kolmogorov_mean")]);
    EXPECT_GE(k, 0.0);
    EXPECT_LE(k, 1.0);
    EXPECT_GE(num(s.rows[l][col(s, "max_norm_mean")]), 0.0);
  }
}

TEST(Compare, VanishingLinearPartIgnoresBase) {
  const fs::path dir = scratch_dir("abs_table");
  const double c = std::sqrt(2.0 / M_PI);
  {
    std::ofstream os(dir / "abs.csv");
    os.precision(17);
    os << "-60," << 60.0 - c << "\n0," << -c << "\n60," << 60.0 - c << "\n";
  }
  auto make = [&](double atom) {
    json j = {{"network",
               {{"n", 40},
                {"d0", 40},
                {"layers",
                 {{{"width", 40}, {"activation", "table:" + (dir / "abs.csv").string()}, {"sigma_w2", 1.0}}}}}},
              {"z_grid", {{"x_min", 0.0}, {"x_max", 1.0}, {"step", 0.5}, {"eta", {0.5}}}},
              {"sim", {{"seeds", {3}}}},
              {"base", {{"kind", "dirac"}, {"atom", atom}}}};
    return cmd_compare(config_from_json(j));
  };
  const CommandResult one = make(1.0), two = make(2.0);
  const Table& a = table(one, "comparison");
  const Table& b = table(two, "comparison");
  EXPECT_EQ(csv(a), csv(b));
  EXPECT_EQ(num(table(one, "layer_summary").rows[1][col(table(one, "layer_summary"), "b")]), 0.0);
}

TEST(Example55, AgreementTraceAndDecay) {
  json j = {{"z_grid", {{"x_min", -1.0}, {"x_max", 3.0}, {"step", 1.0}, {"eta", {0.1, 1.0}}}},
            {"example55", {{"n", {10, 100}}, {"sweep", {100, 1000, 10000}}}}};
  const CommandResult r = cmd_example55(config_from_json(j));
  EXPECT_EQ(r.failures, 0);
  const Table& t = table(r, "example55");
  EXPECT_EQ(t.rows.size(), 2u * 10u);
  for (const auto& row : t.rows) {
    EXPECT_LT(num(row[col(t, "agreement_fro")]), 1e-9);
    EXPECT_LT(num(row[col(t, "trace_gap_closed")]), 1e-9);
    EXPECT_LT(num(row[col(t, "trace_gap_generic")]), 1e-9);
  }
  const Table& s = table(r, "example55_slope");
  for (const auto& row : s.rows) {
    if (num(row[col(s, "z_im")]) == 1.0) {
      EXPECT_NEAR(num(row[col(s, "loglog_slope")]), -1.0, 0.2);
    }
  }
}

TEST(Example55, LoglogSlope) {
  EXPECT_NEAR(loglog_slope({1.0, 10.0, 100.0}, {1.0, 0.1, 0.01}), -1.0, 1e-14);
  EXPECT_NEAR(loglog_slope({2.0, 4.0}, {3.0, 12.0}), 2.0, 1e-14);
}
