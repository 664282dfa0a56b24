#pragma once

// Flat result tables written as CSV or JSON.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ckde/error.hpp"

namespace ckde {

using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::string name;  // file stem
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  void add(std::vector<Cell> row) {
    if (row.size() != columns.size()) throw Error("table " + name + ": row width does not match header");
    rows.push_back(std::move(row));
  }
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct WriteOptions {
  bool timestamp = true;
};

inline void write_csv(const Table& t, std::ostream& os, const WriteOptions& opt = {}) {
  if (opt.timestamp) os << "# generated " << utc_timestamp() << '\n';
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << t.columns[i];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) os << ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) os << format_double(v);
            else os << v;
          },
          r[i]);
    }
    os << '\n';
  }
}

inline void write_json(const Table& t, std::ostream& os, const WriteOptions& opt = {}) {
  nlohmann::ordered_json j;
  if (opt.timestamp) j["generated"] = utc_timestamp();
  j["table"] = t.name;
  j["columns"] = t.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json o;
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) {
              if (std::isfinite(v)) o[t.columns[i]] = v;
              else o[t.columns[i]] = nullptr;
            } else {
              o[t.columns[i]] = v;
            }
          },
          r[i]);
    }
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  os << j.dump(1) << '\n';
}

// Writes <dir>/<name>.<fmt> for each format; returns the paths written.
inline std::vector<std::string> write_table(const Table& t, const std::string& dir, const std::vector<std::string>& formats,
                                            const WriteOptions& opt = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  std::vector<std::string> written;
  for (const auto& f : formats) {
    const std::string path = (std::filesystem::path(dir) / (t.name + "." + f)).string();
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    if (f == "csv") write_csv(t, os, opt);
    else if (f == "json") write_json(t, os, opt);
    else throw ConfigError("unknown output format '" + f + "'");
    os.flush();
    if (!os) throw IoError("write failed for '" + path + "'");
    written.push_back(path);
  }
  return written;
}

}  // namespace ckde
