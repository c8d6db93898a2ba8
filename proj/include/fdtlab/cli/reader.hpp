#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fdtlab/error.hpp"

namespace fdtlab::cli {

using json = nlohmann::json;

inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Strict view of one JSON object. Every key must be read through get/child
/// before finish(), otherwise finish() rejects it, suggesting the nearest
/// known key. Values read (including defaults) are echoed into `echo`.
class Reader {
 public:
  Reader(const json& j, std::string path, json& echo) : j_(j), path_(std::move(path)), echo_(echo) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    if (!echo_.is_object()) echo_ = json::object();
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) {
    known_.insert(key);
    return j_.contains(key);
  }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double get_double(const std::string& key, double def) { return echo(key, has(key) ? as_double(j_[key], at(key)) : def); }
  double require_double(const std::string& key) { return echo(key, as_double(need(key), at(key))); }

  std::size_t get_size(const std::string& key, std::size_t def) {
    return echo(key, has(key) ? as_size(j_[key], at(key)) : def);
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    return echo(key, has(key) ? static_cast<std::uint64_t>(as_u64(j_[key], at(key))) : def);
  }
  bool get_bool(const std::string& key, bool def) {
    if (!has(key)) return echo(key, def);
    if (!j_[key].is_boolean()) throw ConfigError(at(key) + " must be true or false");
    return echo(key, j_[key].get<bool>());
  }
  std::string get_string(const std::string& key, const std::string& def) {
    if (!has(key)) return echo(key, def);
    return echo(key, as_string(j_[key], at(key)));
  }
  std::string require_string(const std::string& key) { return echo(key, as_string(need(key), at(key))); }

  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& def) {
    if (!has(key)) return echo(key, def);
    const json& v = j_[key];
    if (!v.is_array()) throw ConfigError(at(key) + " must be an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], at(key) + "[" + std::to_string(i) + "]"));
    return echo(key, out);
  }
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& def) {
    if (!has(key)) return echo(key, def);
    const json& v = j_[key];
    if (!v.is_array()) throw ConfigError(at(key) + " must be an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_double(v[i], at(key) + "[" + std::to_string(i) + "]"));
    return echo(key, out);
  }
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& def) {
    if (!has(key)) return echo(key, def);
    return get_indices(key);
  }
  void put(const std::string& key, json value) { echo_[key] = std::move(value); }

  std::vector<std::size_t> get_indices(const std::string& key) {
    const json& v = need(key);
    if (!v.is_array()) throw ConfigError(at(key) + " must be an array of non-negative integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_size(v[i], at(key) + "[" + std::to_string(i) + "]"));
    return echo(key, out);
  }

  Eigen::VectorXd get_vector(const std::string& key, const Eigen::VectorXd& def) {
    if (!has(key)) {
      echo_[key] = std::vector<double>(def.data(), def.data() + def.size());
      return def;
    }
    const auto v = get_doubles(key, {});
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  Eigen::VectorXd require_vector(const std::string& key) {
    need(key);
    return get_vector(key, Eigen::VectorXd());
  }

  /// Array of equal-length rows; rows are reported as <path>.row[k].
  Eigen::MatrixXd get_matrix(const std::string& key, const Eigen::MatrixXd& def) {
    if (!has(key)) {
      echo_[key] = matrix_json(def);
      return def;
    }
    const json& v = j_[key];
    if (!v.is_array() || v.empty()) throw ConfigError(at(key) + " must be a non-empty array of rows");
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    if (cols == 0) throw ConfigError(at(key) + ".row[0] must be a non-empty array of numbers");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < v.size(); ++r) {
      const std::string rp = at(key) + ".row[" + std::to_string(r) + "]";
      if (!v[r].is_array() || v[r].size() != cols)
        throw ConfigError(rp + " must be an array of " + std::to_string(cols) + " numbers");
      for (std::size_t c = 0; c < cols; ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = as_double(v[r][c], rp + "[" + std::to_string(c) + "]");
    }
    echo_[key] = matrix_json(m);
    return m;
  }
  Eigen::MatrixXd require_matrix(const std::string& key) {
    need(key);
    return get_matrix(key, Eigen::MatrixXd());
  }

  /// Nested object; a missing key reads as an empty object.
  Reader child(const std::string& key) {
    static const json empty = json::object();
    const json& v = has(key) ? j_[key] : empty;
    if (!v.is_object()) throw ConfigError(at(key) + " must be an object");
    return Reader(v, at(key), echo_[key]);
  }
  const json& raw(const std::string& key) { return need(key); }

  /// Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (known_.count(it.key())) continue;
      std::string best;
      std::size_t best_d = std::numeric_limits<std::size_t>::max();
      for (const auto& k : known_) {
        const std::size_t d = edit_distance(it.key(), k);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      std::string msg = "unknown key '" + at(it.key()) + "'";
      if (!best.empty() && best_d <= std::max<std::size_t>(2, best.size() / 3)) msg += "; did you mean '" + best + "'?";
      throw ConfigError(msg);
    }
  }

  static json matrix_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      out.push_back(row);
    }
    return out;
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& need(const std::string& key) {
    if (!has(key)) throw ConfigError("missing required key '" + at(key) + "'");
    return j_[key];
  }
  template <class T>
  T echo(const std::string& key, T value) {
    echo_[key] = value;
    return value;
  }
  static double as_double(const json& v, const std::string& p) {
    if (!v.is_number()) throw ConfigError(p + " must be a number");
    return v.get<double>();
  }
  static std::size_t as_size(const json& v, const std::string& p) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(p + " must be a non-negative integer");
    return v.get<std::size_t>();
  }
  static std::uint64_t as_u64(const json& v, const std::string& p) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(p + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  static std::string as_string(const json& v, const std::string& p) {
    if (!v.is_string()) throw ConfigError(p + " must be a string");
    return v.get<std::string>();
  }

  const json& j_;
  std::string path_;
  json& echo_;
  std::set<std::string> known_;
};

}  // namespace fdtlab::cli
