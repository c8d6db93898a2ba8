#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"
#include "fdtlab/poly_system.hpp"

namespace fdtlab::presets {

struct Preset {
  std::string name;
  PolySystem system;
  bool hypoelliptic = true;  ///< declared to pass hypoellipticity_span
  double energy_scale = 1.0;  ///< typical |x|^2 under the invariant measure
};

/// dx = (x - x^3) dt + sigma dW.
inline PolySystem scalar_cubic(double sigma = 1.0) {
  PolySystem sys = PolySystem::zeros(1, 3, 1);
  const std::size_t i1[] = {0};
  const std::size_t i3[] = {0, 0, 0};
  sys.map(1).add_monomial(0, i1, 1.0);
  sys.map(3).add_monomial(0, i3, -1.0);
  sys.sigma()(0, 0) = sigma;
  return sys;
}

/// dx = x^3 dt + dW; violates coercivity.
inline PolySystem anti_dissipative_cubic() {
  PolySystem sys = PolySystem::zeros(1, 3, 1);
  const std::size_t i3[] = {0, 0, 0};
  sys.map(3).add_monomial(0, i3, 1.0);
  sys.sigma()(0, 0) = 1.0;
  return sys;
}

/// dx = -gamma x dt + sigma dW.
inline PolySystem scalar_ou(double gamma, double sigma) {
  PolySystem sys = PolySystem::zeros(1, 1, 1);
  const std::size_t i1[] = {0};
  sys.map(1).add_monomial(0, i1, -gamma);
  sys.sigma()(0, 0) = sigma;
  return sys;
}

/// dx = A x dt + Sigma dW.
inline PolySystem ou_nd(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Sigma) {
  if (A.rows() != A.cols()) throw ConfigError("ou_nd: A must be square");
  if (Sigma.rows() != A.rows()) throw ConfigError("ou_nd: Sigma must have d rows");
  const auto d = static_cast<std::size_t>(A.rows());
  PolySystem sys = PolySystem::zeros(d, 1, static_cast<std::size_t>(Sigma.cols()));
  sys.map(1).coefficients() = A;  // order-1 tensor entries are the matrix itself
  sys.sigma() = Sigma;
  return sys;
}

struct TriadParams {
  std::array<double, 3> b{1.0, 0.5, -1.5};
  std::array<double, 3> damping{0.5, 1.0, 1.5};
  std::array<double, 3> noise{0.5, 0.5, 0.5};
};

/// Energy-conserving quadratic triad with linear damping:
///   dx_1 = (b_1 x_2 x_3 - g_1 x_1) dt + s_1 dW_1, and cyclically.
/// b_1 + b_2 + b_3 = 0 makes <x, B(x, x)> vanish identically.
inline PolySystem triad(const TriadParams& p = {}) {
  if (std::abs(p.b[0] + p.b[1] + p.b[2]) > 1e-12) throw ConfigError("triad: b_1 + b_2 + b_3 must vanish");
  PolySystem sys = PolySystem::zeros(3, 2, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t lin[] = {i};
    sys.map(1).add_monomial(i, lin, -p.damping[i]);
    const std::size_t quad[] = {(i + 1) % 3, (i + 2) % 3};
    sys.map(2).add_monomial(i, quad, p.b[i]);
    sys.sigma()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = p.noise[i];
  }
  return sys;
}

/// 2-d system forced only in x_1, with energy-conserving quadratic coupling
/// N_2(x, x) = (-x_1 x_2, x_1^2) that carries the noise into x_2.
inline PolySystem hypoelliptic_2d() {
  PolySystem sys = PolySystem::zeros(2, 2, 1);
  const std::size_t i0[] = {0}, i1[] = {1};
  sys.map(1).add_monomial(0, i0, -1.0);
  sys.map(1).add_monomial(1, i1, -1.0);
  const std::size_t x0x1[] = {0, 1}, x0x0[] = {0, 0};
  sys.map(2).add_monomial(0, x0x1, -1.0);
  sys.map(2).add_monomial(1, x0x0, 1.0);
  sys.sigma()(0, 0) = 1.0;
  return sys;
}

inline Eigen::MatrixXd default_ou_drift() {
  Eigen::MatrixXd A(2, 2);
  A << -1.0, 0.5, -0.5, -1.5;
  return A;
}

inline double triad_energy_scale(const TriadParams& p) {
  double e = 0.0;
  for (std::size_t i = 0; i < 3; ++i) e += p.noise[i] * p.noise[i] / (2.0 * p.damping[i]);
  return e;
}

/// Catalog defaults. ou_nd uses a fixed stable 2x2 drift with identity noise.
inline std::vector<Preset> catalog() {
  std::vector<Preset> out;
  out.push_back({"scalar_cubic", scalar_cubic(), true, 0.8935});  // E x^2 under exp(x^2 - x^4 / 2)
  out.push_back({"ou_nd", ou_nd(default_ou_drift(), Eigen::MatrixXd::Identity(2, 2)), true, 1.0});
  out.push_back({"triad", triad(), true, triad_energy_scale({})});
  out.push_back({"hypoelliptic_2d", hypoelliptic_2d(), true, 1.0});
  return out;
}

}  // namespace fdtlab::presets
