#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"
#include "fdtlab/sym_multimap.hpp"

namespace fdtlab {

/// dx = sum_k N_k(x, ..., x) dt + Sigma dW with k = 0..N and Sigma of shape d x M.
class PolySystem {
 public:
  PolySystem() = default;

  PolySystem(std::vector<SymMultiMap> maps, Eigen::MatrixXd sigma)
      : maps_(std::move(maps)), sigma_(std::move(sigma)) {
    validate();
  }

  /// All-zero drift of top degree `degree` and a zero d x channels noise matrix.
  static PolySystem zeros(std::size_t dim, std::size_t degree, std::size_t channels) {
    std::vector<SymMultiMap> maps;
    for (std::size_t k = 0; k <= degree; ++k) maps.emplace_back(k, dim);
    return PolySystem(std::move(maps),
                      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(channels)));
  }

  std::size_t dim() const { return maps_.front().dim(); }
  std::size_t degree() const { return maps_.size() - 1; }
  std::size_t noise_channels() const { return static_cast<std::size_t>(sigma_.cols()); }

  const std::vector<SymMultiMap>& maps() const { return maps_; }
  const SymMultiMap& map(std::size_t k) const { return maps_.at(k); }
  const Eigen::MatrixXd& sigma() const { return sigma_; }

  /// Mutable access for builders; callers must keep the shape intact.
  SymMultiMap& map(std::size_t k) { return maps_.at(k); }
  Eigen::MatrixXd& sigma() { return sigma_; }

  friend bool operator==(const PolySystem& a, const PolySystem& b) {
    return a.maps_ == b.maps_ && a.sigma_.rows() == b.sigma_.rows() && a.sigma_.cols() == b.sigma_.cols() &&
           a.sigma_ == b.sigma_;
  }

 private:
  void validate() const {
    if (maps_.size() < 2) throw ConfigError("PolySystem: top degree N must be at least 1");
    const std::size_t d = maps_.front().dim();
    for (std::size_t k = 0; k < maps_.size(); ++k) {
      if (maps_[k].order() != k) throw ConfigError("PolySystem: maps[" + std::to_string(k) + "] has wrong order");
      if (maps_[k].dim() != d) throw ConfigError("PolySystem: maps[" + std::to_string(k) + "] has wrong dimension");
      if (!maps_[k].all_finite()) throw ConfigError("PolySystem: maps[" + std::to_string(k) + "] is not finite");
    }
    if (static_cast<std::size_t>(sigma_.rows()) != d) throw ConfigError("PolySystem: sigma must have d rows");
    if (sigma_.cols() < 1) throw ConfigError("PolySystem: sigma must have at least one column");
    if (!sigma_.allFinite()) throw ConfigError("PolySystem: sigma is not finite");
  }

  std::vector<SymMultiMap> maps_;
  Eigen::MatrixXd sigma_;
};

/// One-parameter perturbation a -> (N + a dN, Sigma + a dSigma) around a_0 = 0.
struct ParamDirection {
  std::vector<SymMultiMap> delta_maps;
  Eigen::MatrixXd delta_sigma;

  bool perturbs_drift() const {
    for (const auto& m : delta_maps)
      if (!m.is_zero()) return true;
    return false;
  }
  bool perturbs_noise() const { return delta_sigma.size() > 0 && !delta_sigma.isZero(0.0); }

  ParamDirection scaled(double factor) const {
    ParamDirection out = *this;
    for (auto& m : out.delta_maps) m = m.scaled(factor);
    out.delta_sigma *= factor;
    return out;
  }

  /// A zero direction shaped like `sys`; fill it in with the builders below.
  static ParamDirection zero_like(const PolySystem& sys) {
    ParamDirection dir;
    for (std::size_t k = 0; k <= sys.degree(); ++k) dir.delta_maps.emplace_back(k, sys.dim());
    dir.delta_sigma = Eigen::MatrixXd::Zero(sys.sigma().rows(), sys.sigma().cols());
    return dir;
  }

  /// Constant forcing: dN_0 = e.
  static ParamDirection forcing(const PolySystem& sys, const Eigen::VectorXd& e) {
    ParamDirection dir = zero_like(sys);
    if (static_cast<std::size_t>(e.size()) != sys.dim()) throw ConfigError("forcing direction: dimension mismatch");
    dir.delta_maps[0].coefficients().col(0) = e;
    dir.check_against(sys);
    return dir;
  }

  /// Perturbs the linear coefficient of x_col in output row: dN_1 = E_{row,col}.
  static ParamDirection linear_entry(const PolySystem& sys, std::size_t row, std::size_t col, double value = 1.0) {
    ParamDirection dir = zero_like(sys);
    const std::size_t idx[] = {col};
    dir.delta_maps[1].add_monomial(row, idx, value);
    dir.check_against(sys);
    return dir;
  }

  static ParamDirection sigma_entry(const PolySystem& sys, std::size_t row, std::size_t col, double value = 1.0) {
    ParamDirection dir = zero_like(sys);
    if (row >= sys.dim() || col >= sys.noise_channels()) throw ConfigError("sigma direction: index out of range");
    dir.delta_sigma(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)) = value;
    dir.check_against(sys);
    return dir;
  }

  void check_against(const PolySystem& sys) const {
    if (delta_maps.size() != sys.maps().size()) throw ConfigError("ParamDirection: number of maps does not match system");
    for (std::size_t k = 0; k < delta_maps.size(); ++k) {
      if (!delta_maps[k].same_shape(sys.map(k)))
        throw ConfigError("ParamDirection: deltaMaps[" + std::to_string(k) + "] shape mismatch");
    }
    if (delta_sigma.rows() != sys.sigma().rows() || delta_sigma.cols() != sys.sigma().cols())
      throw ConfigError("ParamDirection: deltaSigma shape mismatch");
    if (!perturbs_drift() && !perturbs_noise()) throw ConfigError("ParamDirection: direction is identically zero");
  }
};

/// Flattened evaluation plan for sum_k N_k over full index tuples, used on the
/// integrator hot path. A single pass yields the drift, its Jacobian and the
/// Hessian tensor; zero columns are dropped at compile time.
class DriftKernel {
 public:
  DriftKernel() = default;

  explicit DriftKernel(const std::vector<SymMultiMap>& maps) {
    if (maps.empty()) return;
    dim_ = maps.front().dim();
    std::vector<Eigen::VectorXd> columns;
    std::vector<std::size_t> perm;
    for (const auto& m : maps) {
      max_order_ = std::max(max_order_, m.order());
      for (std::size_t c = 0; c < m.size(); ++c) {
        const auto col = m.coefficients().col(static_cast<Eigen::Index>(c));
        if (col.isZero(0.0)) continue;
        const int column = static_cast<int>(columns.size());
        columns.emplace_back(col);
        perm = m.multi_indices()[c];
        do {
          terms_.push_back({static_cast<int>(m.order()), static_cast<int>(flat_.size()), column});
          for (std::size_t j : perm) flat_.push_back(static_cast<int>(j));
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
    }
    cols_.resize(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) cols_.col(static_cast<Eigen::Index>(c)) = columns[c];
  }

  std::size_t dim() const { return dim_; }
  bool empty() const { return terms_.empty(); }

  void drift(const Eigen::VectorXd& x, Eigen::VectorXd& out) const { evaluate(x, &out, nullptr, nullptr); }

  /// Any output pointer may be null. `hess` is d x d^2 with column a*d+b
  /// holding D^2 N(x)(e_a, e_b).
  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* out, Eigen::MatrixXd* jac, Eigen::MatrixXd* hess) const {
    const auto d = static_cast<Eigen::Index>(dim_);
    if (out) out->setZero(d);
    if (jac) jac->setZero(d, d);
    if (hess) hess->setZero(d, d * d);
    for (const Term& term : terms_) {
      const int k = term.order;
      const int* t = flat_.data() + term.offset;
      double p2 = 1.0;
      for (int m = 0; m < k - 2; ++m) p2 *= x[t[m]];
      const double p1 = k >= 2 ? p2 * x[t[k - 2]] : 1.0;
      const double p0 = k >= 1 ? p1 * x[t[k - 1]] : 1.0;
      const auto c = cols_.col(term.column);
      if (out) out->noalias() += p0 * c;
      if (jac && k >= 1) jac->col(t[k - 1]).noalias() += (k * p1) * c;
      if (hess && k >= 2) hess->col(t[k - 2] * d + t[k - 1]).noalias() += (k * (k - 1) * p2) * c;
    }
  }

 private:
  struct Term {
    int order;
    int offset;
    int column;
  };

  std::size_t dim_ = 0;
  std::size_t max_order_ = 0;
  std::vector<Term> terms_;
  std::vector<int> flat_;
  Eigen::MatrixXd cols_;
};

inline void check_state(const PolySystem& sys, const Eigen::VectorXd& x, const char* what) {
  if (static_cast<std::size_t>(x.size()) != sys.dim())
    throw ConfigError(std::string(what) + ": expected a vector of length " + std::to_string(sys.dim()) + ", got " +
                      std::to_string(x.size()));
}

/// N(x) = sum_k N_k(x, ..., x).
inline Eigen::VectorXd eval_drift(const PolySystem& sys, const Eigen::VectorXd& x) {
  check_state(sys, x, "eval_drift");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x.size());
  for (const auto& m : sys.maps()) out += m.diagonal(x);
  return out;
}

struct DriftDerivatives {
  Eigen::MatrixXd jacobian;        ///< DN(x)
  Eigen::VectorXd second_variation;  ///< D^2 N(x)(xi, zeta)
};

inline DriftDerivatives eval_derivatives(const PolySystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& xi,
                                         const Eigen::VectorXd& zeta) {
  check_state(sys, x, "eval_derivatives(x)");
  check_state(sys, xi, "eval_derivatives(xi)");
  check_state(sys, zeta, "eval_derivatives(zeta)");
  const DriftKernel kernel(sys.maps());
  DriftDerivatives out;
  Eigen::MatrixXd hess;
  kernel.evaluate(x, nullptr, &out.jacobian, &hess);
  const auto d = static_cast<Eigen::Index>(sys.dim());
  out.second_variation = Eigen::VectorXd::Zero(d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) out.second_variation += xi[a] * zeta[b] * hess.col(a * d + b);
  return out;
}

/// (N + a dN, Sigma + a dSigma). a = 0 returns an exact copy.
inline PolySystem apply_direction(const PolySystem& sys, const ParamDirection& dir, double a) {
  dir.check_against(sys);
  if (a == 0.0) return sys;
  std::vector<SymMultiMap> maps = sys.maps();
  for (std::size_t k = 0; k < maps.size(); ++k) maps[k].coefficients() += a * dir.delta_maps[k].coefficients();
  return PolySystem(std::move(maps), sys.sigma() + a * dir.delta_sigma);
}

/// Dimension of the (N, Sigma) parameter space using the symmetric-tensor
/// count d * binom(d + k - 1, k) per degree.
inline std::size_t parameter_count(std::size_t dim, std::size_t degree, std::size_t channels) {
  std::size_t n = channels;
  for (std::size_t k = 0; k <= degree; ++k) n += multiset_count(dim, k);
  return dim * n;
}

}  // namespace fdtlab
