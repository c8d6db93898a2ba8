#pragma once

#include <string>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"

namespace fdtlab {

inline void require_stable(const Eigen::MatrixXd& A, const char* what) {
  if (A.rows() != A.cols() || A.rows() == 0) throw ConfigError(std::string(what) + ": A must be square");
  if (!A.allFinite()) throw ConfigError(std::string(what) + ": A is not finite");
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigenvalue computation failed");
  if (es.eigenvalues().real().maxCoeff() >= 0.0)
    throw AssumptionError(std::string(what) + ": A has an eigenvalue with non-negative real part");
}

/// Solves A X + X A^T + Q = 0 through the Kronecker-vectorized system
/// (I (x) A + A (x) I) vec(X) = -vec(Q).
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q, const char* what) {
  require_stable(A, what);
  const Eigen::Index d = A.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d * d, d * d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) K.block(j * d, i * d, d, d) += A(j, i) * I;  // A (x) I
  for (Eigen::Index i = 0; i < d; ++i) K.block(i * d, i * d, d, d) += A;  // I (x) A
  const Eigen::Map<const Eigen::VectorXd> q(Q.data(), d * d);
  const Eigen::VectorXd x = K.fullPivLu().solve(-q);
  Eigen::MatrixXd X = Eigen::Map<const Eigen::MatrixXd>(x.data(), d, d);
  X = 0.5 * (X + X.transpose()).eval();
  return X;
}

/// Stationary covariance C of dx = A x dt + Sigma dW: A C + C A^T + Sigma Sigma^T = 0.
inline Eigen::MatrixXd stationary_covariance_reference(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Sigma) {
  if (Sigma.rows() != A.rows()) throw ConfigError("stationary_covariance_reference: Sigma must have d rows");
  const Eigen::MatrixXd Q = Sigma * Sigma.transpose();
  Eigen::MatrixXd C = solve_lyapunov(A, Q, "stationary_covariance_reference");
  const double residual = (A * C + C * A.transpose() + Q).norm();
  if (!(residual < 1e-10))
    throw NumericError("stationary_covariance_reference: residual " + std::to_string(residual) + " exceeds 1e-10");
  return C;
}

inline double lyapunov_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Sigma, const Eigen::MatrixXd& C) {
  return (A * C + C * A.transpose() + Sigma * Sigma.transpose()).norm();
}

/// Response of the stationary mean of dx = (A x + a e) dt + Sigma dW to a: -A^{-1} e.
inline Eigen::VectorXd ou_mean_response(const Eigen::MatrixXd& A, const Eigen::VectorXd& e) {
  require_stable(A, "ou_mean_response");
  return -A.fullPivLu().solve(e);
}

/// d C / d a for Sigma -> Sigma + a dSigma.
inline Eigen::MatrixXd ou_covariance_response(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Sigma,
                                              const Eigen::MatrixXd& dSigma) {
  const Eigen::MatrixXd Q = dSigma * Sigma.transpose() + Sigma * dSigma.transpose();
  return solve_lyapunov(A, Q, "ou_covariance_response");
}

}  // namespace fdtlab
