#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fdtlab/error.hpp"
#include "fdtlab/response.hpp"

namespace fdtlab::cli {

using json = nlohmann::json;

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<double>& row) {
    if (row.size() != header_.size()) throw NumericError("CsvTable: row width does not match header");
    rows_.push_back(row);
  }
  std::size_t rows() const { return rows_.size(); }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
    out += '\n';
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) out += ',';
        out += format_double(r[i]);
      }
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

inline CsvTable curve_table(const ResponseCurve& c) {
  CsvTable t({"t", "R", "stderr"});
  for (std::size_t i = 0; i < c.t.size(); ++i) t.add_row({c.t[i], c.value[i], c.stderr[i]});
  return t;
}

/// JSON number, with NaN and infinities as null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json vec_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(num(v[i]));
  return out;
}

inline json mat_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(num(m(r, c)));
    out.push_back(row);
  }
  return out;
}

inline json to_json(const ResponseEstimate& e) {
  const auto& p = e.provenance;
  return json{{"value", num(e.value)},
              {"stderr", num(e.stderr)},
              {"stat_stderr", num(e.stat_stderr)},
              {"systematic", num(e.systematic)},
              {"method", e.method},
              {"target", {{"system", e.target.system}, {"direction", e.target.direction}, {"observable", e.target.observable}}},
              {"provenance",
               {{"seed", p.seed},
                {"dt", num(p.dt)},
                {"scheme", p.scheme},
                {"n", p.n},
                {"burn_in", num(p.burn_in)},
                {"horizon", num(p.horizon)},
                {"delta_a", num(p.delta_a)},
                {"batches", p.batches},
                {"crn", p.crn}}},
              {"flags", e.flags}};
}

inline json to_json(const Plateau& p) {
  return json{{"value", num(p.value)},       {"stderr", num(p.stderr)},          {"stat_stderr", num(p.stat_stderr)},
              {"systematic", num(p.systematic)}, {"drift", num(p.drift)},        {"drift_stderr", num(p.drift_stderr)},
              {"t_begin", num(p.t_begin)},   {"t_end", num(p.t_end)},            {"detected", p.detected}};
}

/// Files of one run, held in memory until commit() so that a failing run
/// leaves nothing behind.
class Artifacts {
 public:
  explicit Artifacts(std::string prefix) : prefix_(std::move(prefix)) {}

  void add(const std::string& suffix, std::string content) { files_.emplace_back(prefix_ + suffix, std::move(content)); }
  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

  /// Writes every file; on the first failure removes those already written.
  void commit() const {
    std::vector<std::string> written;
    for (const auto& [path, content] : files_) {
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      if (f) f.write(content.data(), static_cast<std::streamsize>(content.size()));
      if (f) f.close();
      if (!f) {
        std::error_code ec;
        std::filesystem::remove(path, ec);
        for (const auto& w : written) std::filesystem::remove(w, ec);
        throw ConfigError("cannot write '" + path + "'");
      }
      written.push_back(path);
    }
  }

 private:
  std::string prefix_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace fdtlab::cli
