#pragma once

// Layer and network descriptions shared by the deterministic equivalents and the simulator.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ckde/error.hpp"
#include "ckde/hermite.hpp"

namespace ckde {

struct LayerSpec {
  double sigma_w2 = 1.0;
  double sigma_b2 = 0.0;
  double sigma_d2 = 0.0;
  Activation f = Activation::identity();
  double gamma = 1.0;  // n / d_l

  void validate() const {
    if (!(sigma_w2 > 0.0) || !std::isfinite(sigma_w2)) throw ConfigError("layer: sigma_w2 must be positive and finite");
    if (!(sigma_b2 >= 0.0) || !std::isfinite(sigma_b2)) throw ConfigError("layer: sigma_b2 must be nonnegative and finite");
    if (!(sigma_d2 >= 0.0) || !std::isfinite(sigma_d2)) throw ConfigError("layer: sigma_d2 must be nonnegative and finite");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("layer: gamma must be positive");
  }
};

enum class DataModel {
  IidGaussian,     // X entries i.i.d. N(0, sigma_x2)
  Explicit,        // X given (d0 x n)
  CorrelatedRows,  // X = sqrt(d0) S^{1/2} with S = sigma_x2 (I + (J - I)/n), d0 = n
};

inline std::string to_string(DataModel m) {
  switch (m) {
    case DataModel::IidGaussian: return "iid-gaussian";
    case DataModel::Explicit: return "explicit";
    case DataModel::CorrelatedRows: return "correlated-rows";
  }
  return "?";
}

inline DataModel data_model_from_string(const std::string& s) {
  if (s == "iid-gaussian") return DataModel::IidGaussian;
  if (s == "explicit") return DataModel::Explicit;
  if (s == "correlated-rows") return DataModel::CorrelatedRows;
  throw ConfigError("unknown data model '" + s + "' (expected iid-gaussian, explicit or correlated-rows)");
}

struct DataSpec {
  DataModel kind = DataModel::IidGaussian;
  double sigma_x2 = 1.0;
  Eigen::MatrixXd X;  // only for Explicit
};

struct NetworkSpec {
  int n = 0;
  int d0 = 0;
  std::vector<int> dims;  // d_1 .. d_L
  DataSpec data;
  std::vector<LayerSpec> layers;

  std::size_t depth() const { return layers.size(); }

  void validate() const {
    if (n < 1 || d0 < 1) throw ConfigError("network: n and d0 must be >= 1");
    if (layers.empty()) throw ConfigError("network: at least one layer is required");
    if (dims.size() != layers.size()) throw ConfigError("network: dims and layers must have the same length");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].validate();
      if (dims[l] < 1) throw ConfigError("network: layer widths must be >= 1");
      const double g = static_cast<double>(n) / static_cast<double>(dims[l]);
      if (std::abs(g - layers[l].gamma) > 1e-12 * std::max(1.0, g))
        throw ConfigError("network: layer " + std::to_string(l + 1) + " gamma " + std::to_string(layers[l].gamma) +
                          " does not match n/d = " + std::to_string(g));
    }
    if (!(data.sigma_x2 > 0.0)) throw ConfigError("network: data sigma_x2 must be positive");
    if (data.kind == DataModel::Explicit && (data.X.rows() != d0 || data.X.cols() != n))
      throw ConfigError("network: explicit data must be d0 x n");
    if (data.kind == DataModel::CorrelatedRows && d0 != n)
      throw ConfigError("network: the correlated-rows data model requires d0 == n");
  }
};

}  // namespace ckde
