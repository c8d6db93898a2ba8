#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"

namespace fdtlab::testbed {

inline void check_square(const Eigen::MatrixXd& P, const char* what) {
  if (P.rows() != P.cols() || P.rows() == 0) throw ConfigError(std::string(what) + ": matrix must be square and non-empty");
  if (!P.allFinite()) throw ConfigError(std::string(what) + ": matrix is not finite");
}

/// Rejects the first row whose sum is off by more than tol; names it as
/// "<what>.row[k]".
inline void check_row_sums(const Eigen::MatrixXd& P, double target, double tol, const std::string& what) {
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const double s = P.row(i).sum();
    if (!(std::abs(s - target) <= tol))
      throw ConfigError(what + ".row[" + std::to_string(i) + "] sums to " + std::to_string(s) + ", expected " +
                        std::to_string(target));
  }
}

inline void check_stochastic(const Eigen::MatrixXd& P, const std::string& what, double tol = 1e-12) {
  check_square(P, what.c_str());
  for (Eigen::Index i = 0; i < P.rows(); ++i)
    for (Eigen::Index j = 0; j < P.cols(); ++j)
      if (P(i, j) < 0.0)
        throw ConfigError(what + ".row[" + std::to_string(i) + "] has a negative entry at column " + std::to_string(j));
  check_row_sums(P, 1.0, tol, what);
}

/// P(a) = P0 + a dP around a_0 = 0.
class ChainFamily {
 public:
  ChainFamily(Eigen::MatrixXd P0, Eigen::MatrixXd dP) : P0_(std::move(P0)), dP_(std::move(dP)) {
    check_stochastic(P0_, "P0");
    check_square(dP_, "dP");
    if (dP_.rows() != P0_.rows()) throw ConfigError("dP must have the same shape as P0");
    check_row_sums(dP_, 0.0, 1e-12, "dP");
    a_lo_ = -std::numeric_limits<double>::infinity();
    a_hi_ = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < P0_.size(); ++i) {
      if (dP_(i) > 0.0) a_lo_ = std::max(a_lo_, -P0_(i) / dP_(i));
      if (dP_(i) < 0.0) a_hi_ = std::min(a_hi_, P0_(i) / -dP_(i));
    }
  }

  std::size_t states() const { return static_cast<std::size_t>(P0_.rows()); }
  const Eigen::MatrixXd& P0() const { return P0_; }
  const Eigen::MatrixXd& dP() const { return dP_; }
  double a_min() const { return a_lo_; }
  double a_max() const { return a_hi_; }
  bool valid(double a) const { return a >= a_lo_ && a <= a_hi_; }

  Eigen::MatrixXd at(double a) const {
    if (!valid(a))
      throw ConfigError("testbed: a = " + std::to_string(a) + " lies outside the validity interval [" +
                        std::to_string(a_lo_) + ", " + std::to_string(a_hi_) + "]");
    return P0_ + a * dP_;
  }

 private:
  Eigen::MatrixXd P0_, dP_;
  double a_lo_ = 0.0, a_hi_ = 0.0;
};

struct ChainWeights {
  Eigen::VectorXd V;

  explicit ChainWeights(Eigen::VectorXd v) : V(std::move(v)) {
    for (Eigen::Index i = 0; i < V.size(); ++i)
      if (!(V[i] >= 1.0)) throw ConfigError("testbed weights: V[" + std::to_string(i) + "] must be >= 1");
  }
  static ChainWeights ones(std::size_t S) { return ChainWeights(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(S))); }

  double norm(const Eigen::VectorXd& phi) const { return (phi.cwiseAbs().array() / V.array()).maxCoeff(); }
  double dual_norm(const Eigen::VectorXd& mu) const { return (mu.cwiseAbs().array() * V.array()).sum(); }
};

/// Number of eigenvalues within tol of 1.
inline std::size_t unit_eigenvalue_count(const Eigen::MatrixXd& P, double tol = 1e-10) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(P, false);
  if (es.info() != Eigen::Success) throw NumericError("testbed: eigenvalue computation failed");
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()[i] - std::complex<double>(1.0, 0.0)) < tol) ++n;
  return n;
}

/// Unique invariant distribution: pi >= 0, sum 1, pi^T P = pi^T.
inline Eigen::VectorXd stationary(const Eigen::MatrixXd& P) {
  check_stochastic(P, "P", 1e-10);
  const Eigen::Index S = P.rows();
  if (unit_eigenvalue_count(P) != 1)
    throw AssumptionError("testbed: the invariant distribution is not unique (eigenvalue 1 is not simple)");
  Eigen::MatrixXd sys(S + 1, S);
  sys.topRows(S) = Eigen::MatrixXd::Identity(S, S) - P.transpose();
  sys.row(S).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S + 1);
  rhs[S] = 1.0;
  Eigen::VectorXd pi = sys.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  const double residual = (P.transpose() * pi - pi).cwiseAbs().maxCoeff();
  if (!(residual < 1e-12)) throw NumericError("testbed: stationary residual " + std::to_string(residual));
  return pi;
}

inline Eigen::MatrixXd matrix_power(const Eigen::MatrixXd& P, std::size_t m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Identity(P.rows(), P.cols());
  for (std::size_t j = 0; j < m; ++j) out = (out * P).eval();
  return out;
}

/// d(P^m)/da = sum_{j<m} P0^j dP P0^{m-1-j}.
inline Eigen::MatrixXd power_derivative(const Eigen::MatrixXd& P0, const Eigen::MatrixXd& dP, std::size_t m) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(P0.rows(), P0.cols());
  for (std::size_t j = 0; j < m; ++j) out += matrix_power(P0, j) * dP * matrix_power(P0, m - 1 - j);
  return out;
}

inline double spectral_radius(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) throw NumericError("testbed: eigenvalue computation failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// < d(P^m) (1 - P0^m)^{-1} (phi - <phi, pi>), pi >.
inline double linear_response_formula(const ChainFamily& fam, const Eigen::VectorXd& phi, std::size_t m) {
  if (m < 1) throw ConfigError("linear_response_formula: m must be at least 1");
  if (static_cast<std::size_t>(phi.size()) != fam.states()) throw ConfigError("linear_response_formula: phi has the wrong length");
  const Eigen::VectorXd pi = stationary(fam.P0());
  const Eigen::Index S = fam.P0().rows();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(S);
  const Eigen::VectorXd centred = phi - pi.dot(phi) * ones;
  const Eigen::MatrixXd Pm = matrix_power(fam.P0(), m);
  // On centred functions P^m acts as P^m - 1 pi^T, whose spectrum is that of
  // P^m with the unit eigenvalue replaced by 0.
  const Eigen::MatrixXd Q = Pm - ones * pi.transpose();
  const double rho = spectral_radius(Q);
  if (!(rho < 1.0 - 1e-12))
    throw AssumptionError("linear_response_formula: P0^m has no spectral gap on centred functions (radius " +
                          std::to_string(rho) + ")");
  const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(S, S) - Q;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K);
  const auto& sv = svd.singularValues();
  const double cond = sv[0] / sv[sv.size() - 1];
  if (!(cond <= 1e12)) throw NumericError("linear_response_formula: resolvent condition number " + std::to_string(cond));
  // K psi = centred has the centred solution psi, since pi^T K = pi^T.
  const Eigen::VectorXd psi = K.partialPivLu().solve(centred);
  return pi.dot(power_derivative(fam.P0(), fam.dP(), m) * psi);
}

/// d pi / da from d pi^T (I - P0) = pi^T dP with sum(d pi) = 0.
inline Eigen::VectorXd stationary_derivative(const ChainFamily& fam) {
  const Eigen::VectorXd pi = stationary(fam.P0());
  const Eigen::Index S = fam.P0().rows();
  Eigen::MatrixXd sys(S + 1, S);
  sys.topRows(S) = Eigen::MatrixXd::Identity(S, S) - fam.P0().transpose();
  sys.row(S).setOnes();
  Eigen::VectorXd rhs(S + 1);
  rhs.head(S) = fam.dP().transpose() * pi;
  rhs[S] = 0.0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sys);
  qr.setThreshold(1e-12);
  if (qr.rank() < S) throw NumericError("exact_derivative: the stationarity-derivative system is singular");
  const Eigen::VectorXd dpi = qr.solve(rhs);
  const double residual = (sys * dpi - rhs).cwiseAbs().maxCoeff();
  if (!(residual < 1e-9)) throw NumericError("exact_derivative: residual " + std::to_string(residual));
  return dpi;
}

inline double exact_derivative(const ChainFamily& fam, const Eigen::VectorXd& phi) {
  if (static_cast<std::size_t>(phi.size()) != fam.states()) throw ConfigError("exact_derivative: phi has the wrong length");
  return phi.dot(stationary_derivative(fam));
}

/// Second-largest eigenvalue modulus.
inline double slem(const Eigen::MatrixXd& P) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(P, false);
  if (es.info() != Eigen::Success) throw NumericError("testbed: eigenvalue computation failed");
  std::vector<double> mods;
  bool skipped = false;
  Eigen::Index unit = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double dist = std::abs(es.eigenvalues()[i] - std::complex<double>(1.0, 0.0));
    if (dist < best) {
      best = dist;
      unit = i;
    }
  }
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    if (i == unit && !skipped) {
      skipped = true;
      continue;
    }
    mods.push_back(std::abs(es.eigenvalues()[i]));
  }
  return mods.empty() ? 0.0 : *std::max_element(mods.begin(), mods.end());
}

/// sup { |P phi|_V : pi^T phi = 0, |phi|_V <= 1 }. The feasible set is a
/// polytope and the objective is convex, so the supremum is attained at a
/// vertex: all but one coordinate at +-V_i, the last fixed by the
/// constraint. All vertices are enumerated.
inline double centred_contraction(const Eigen::MatrixXd& P, const Eigen::VectorXd& pi, const ChainWeights& w) {
  const Eigen::Index S = P.rows();
  if (w.V.size() != S) throw ConfigError("testbed weights: V has the wrong length");
  if (S > 20) throw ConfigError("testbed: exact contraction factor is limited to 20 states");
  if (S == 1) return 0.0;
  double best = 0.0;
  Eigen::VectorXd phi(S);
  const std::uint64_t patterns = std::uint64_t{1} << (S - 1);
  for (Eigen::Index f = 0; f < S; ++f) {
    if (!(pi[f] > 0.0)) continue;
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
      double acc = 0.0;
      Eigen::Index bit = 0;
      for (Eigen::Index i = 0; i < S; ++i) {
        if (i == f) continue;
        phi[i] = ((mask >> bit++) & 1u) ? w.V[i] : -w.V[i];
        acc += pi[i] * phi[i];
      }
      phi[f] = -acc / pi[f];
      if (std::abs(phi[f]) > w.V[f] * (1.0 + 1e-12)) continue;
      best = std::max(best, w.norm(P * phi));
    }
  }
  return best;
}

struct GapReport {
  double contraction = 0.0;  ///< V-weighted induced norm of P0 on centred functions
  double slem = 0.0;
  std::vector<double> a_list;
  std::vector<double> lipschitz_ratio;  ///< |pi_a - pi_0|_{V-dual} / |a|
  double lipschitz_max = 0.0;
};

inline GapReport gap_and_lipschitz_report(const ChainFamily& fam, const ChainWeights& w, const std::vector<double>& a_list) {
  GapReport rep;
  const Eigen::VectorXd pi0 = stationary(fam.P0());
  rep.contraction = centred_contraction(fam.P0(), pi0, w);
  rep.slem = slem(fam.P0());
  rep.a_list = a_list;
  for (double a : a_list) {
    if (a == 0.0) throw ConfigError("gap_and_lipschitz_report: a = 0 gives no difference quotient");
    const Eigen::VectorXd pia = stationary(fam.at(a));
    const double r = w.dual_norm(pia - pi0) / std::abs(a);
    rep.lipschitz_ratio.push_back(r);
    rep.lipschitz_max = std::max(rep.lipschitz_max, r);
  }
  return rep;
}

/// (<phi, pi_h> - <phi, pi_{-h}>) / 2h.
inline double central_difference(const ChainFamily& fam, const Eigen::VectorXd& phi, double h) {
  if (!(h > 0.0)) throw ConfigError("central_difference: h must be positive");
  return (phi.dot(stationary(fam.at(h))) - phi.dot(stationary(fam.at(-h)))) / (2.0 * h);
}

/// Random family with strictly positive P0 and a zero-row-sum dP scaled so
/// that every a in [-0.2, 0.2] is valid with some margin.
inline ChainFamily random_family(std::size_t S, std::uint64_t seed) {
  if (S < 1) throw ConfigError("random_family: need at least one state");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::normal_distribution<double> nd;
  const auto n = static_cast<Eigen::Index>(S);
  Eigen::MatrixXd P0(n, n), dP(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) P0(i, j) = u(gen);
    P0.row(i) /= P0.row(i).sum();
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) dP(i, j) = nd(gen);
    dP.row(i).array() -= dP.row(i).mean();
  }
  double scale = 1.0;
  for (Eigen::Index i = 0; i < P0.size(); ++i)
    if (dP(i) != 0.0) scale = std::min(scale, 4.5 * P0(i) / std::abs(dP(i)));
  dP *= scale;
  // Re-centre after scaling so row sums stay at zero to rounding.
  for (Eigen::Index i = 0; i < n; ++i) dP.row(i).array() -= dP.row(i).mean();
  return ChainFamily(P0, dP);
}

}  // namespace fdtlab::testbed
