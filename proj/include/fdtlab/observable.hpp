#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"

namespace fdtlab {

/// Admissible growth of |phi| + |D phi|.
enum class Growth { bounded, polynomial, sub_gaussian };

struct Observable {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  Growth growth = Growth::polynomial;
  double growth_param = 1.0;  ///< polynomial degree, or delta for sub-gaussian

  double operator()(const Eigen::VectorXd& x) const { return value(x); }
  bool has_gradient() const { return static_cast<bool>(gradient); }
};

namespace observables {

inline void check_index(std::size_t i, std::size_t dim, const char* what) {
  if (i >= dim) throw ConfigError(std::string(what) + ": coordinate index " + std::to_string(i) + " out of range");
}

/// phi(x) = x_i (zero-based i; the name is one-based).
inline Observable coordinate(std::size_t i, std::size_t dim) {
  check_index(i, dim, "coordinate observable");
  const auto k = static_cast<Eigen::Index>(i);
  const auto d = static_cast<Eigen::Index>(dim);
  return {"x" + std::to_string(i + 1), [k](const Eigen::VectorXd& x) { return x[k]; },
          [k, d](const Eigen::VectorXd&) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
            g[k] = 1.0;
            return g;
          },
          Growth::polynomial, 1.0};
}

inline Observable squared_norm() {
  return {"norm2", [](const Eigen::VectorXd& x) { return x.squaredNorm(); },
          [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return 2.0 * x; }, Growth::polynomial, 2.0};
}

/// phi(x) = x_i x_j; i == j gives x_i^2.
inline Observable product(std::size_t i, std::size_t j, std::size_t dim) {
  check_index(i, dim, "product observable");
  check_index(j, dim, "product observable");
  const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
  const auto d = static_cast<Eigen::Index>(dim);
  const std::string name = "x" + std::to_string(i + 1) + (i == j ? "^2" : "x" + std::to_string(j + 1));
  return {name, [a, b](const Eigen::VectorXd& x) { return x[a] * x[b]; },
          [a, b, d](const Eigen::VectorXd& x) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
            g[a] += x[b];
            g[b] += x[a];
            return g;
          },
          Growth::polynomial, 2.0};
}

inline Observable tanh_coordinate(std::size_t i, std::size_t dim) {
  check_index(i, dim, "tanh observable");
  const auto k = static_cast<Eigen::Index>(i);
  const auto d = static_cast<Eigen::Index>(dim);
  return {"tanh(x" + std::to_string(i + 1) + ")", [k](const Eigen::VectorXd& x) { return std::tanh(x[k]); },
          [k, d](const Eigen::VectorXd& x) {
            Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
            const double c = std::cosh(x[k]);
            g[k] = 1.0 / (c * c);
            return g;
          },
          Growth::bounded, 0.0};
}

inline Observable constant(double c, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return {"const", [c](const Eigen::VectorXd&) { return c; },
          [d](const Eigen::VectorXd&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(d); }, Growth::bounded, 0.0};
}

/// Parses the short names used in config files: x<k>, x<k>^2, x<j>x<k>,
/// norm2, tanh(x<k>), const.
inline Observable by_name(const std::string& name, std::size_t dim) {
  auto parse_index = [&](const std::string& digits) -> std::size_t {
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("unknown observable '" + name + "'");
    const std::size_t k = std::stoul(digits);
    if (k == 0) throw ConfigError("observable '" + name + "': coordinates are numbered from 1");
    return k - 1;
  };
  if (name == "norm2") return squared_norm();
  if (name == "const") return constant(1.0, dim);
  if (name.rfind("tanh(x", 0) == 0 && name.back() == ')')
    return tanh_coordinate(parse_index(name.substr(6, name.size() - 7)), dim);
  if (name.size() >= 2 && name[0] == 'x') {
    const std::string rest = name.substr(1);
    if (rest.size() > 2 && rest.substr(rest.size() - 2) == "^2") {
      const std::size_t i = parse_index(rest.substr(0, rest.size() - 2));
      return product(i, i, dim);
    }
    const auto split = rest.find('x');
    if (split != std::string::npos)
      return product(parse_index(rest.substr(0, split)), parse_index(rest.substr(split + 1)), dim);
    return coordinate(parse_index(rest), dim);
  }
  throw ConfigError("unknown observable '" + name + "'");
}

}  // namespace observables

/// Largest relative mismatch between the declared gradient and central
/// differences of the value at the given points.
inline double gradient_mismatch(const Observable& phi, const std::vector<Eigen::VectorXd>& points, double eps = 1e-6) {
  double worst = 0.0;
  for (const auto& x : points) {
    const Eigen::VectorXd g = phi.gradient(x);
    Eigen::VectorXd fd(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += eps;
      xm[i] -= eps;
      fd[i] = (phi.value(xp) - phi.value(xm)) / (2.0 * eps);
    }
    worst = std::max(worst, (fd - g).norm() / std::max(g.norm(), 1.0));
  }
  return worst;
}

}  // namespace fdtlab
