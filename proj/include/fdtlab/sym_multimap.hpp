#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"

namespace fdtlab {

/// Number of multisets of size r drawn from n symbols, binom(n + r - 1, r).
inline std::size_t multiset_count(std::size_t n, std::size_t r) {
  if (r == 0) return 1;
  if (n == 0) return 0;
  // binom(n + r - 1, r) computed incrementally; exact for the sizes used here.
  std::size_t result = 1;
  for (std::size_t i = 1; i <= r; ++i) result = result * (n - 1 + i) / i;
  return result;
}

/// Symmetric k-linear map R^d x ... x R^d -> R^d.
///
/// Only canonical (non-decreasing) multi-indices are stored, one column of
/// `coefficients()` per multi-index. A column holds the tensor entry
/// T[., j_1, ..., j_k] shared by every permutation of (j_1, ..., j_k), so
/// symmetry holds by construction. Note the entry is not the monomial
/// coefficient: x_1 x_2 in a quadratic map comes from two tensor slots, hence
/// add_monomial() divides by the multiplicity.
class SymMultiMap {
 public:
  SymMultiMap() = default;

  SymMultiMap(std::size_t order, std::size_t dim) : order_(order), dim_(dim) {
    if (dim == 0) throw ConfigError("SymMultiMap: dimension must be positive");
    enumerate();
    coeffs_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(indices_.size()));
  }

  std::size_t order() const { return order_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return indices_.size(); }

  const std::vector<std::vector<std::size_t>>& multi_indices() const { return indices_; }
  const Eigen::MatrixXd& coefficients() const { return coeffs_; }
  Eigen::MatrixXd& coefficients() { return coeffs_; }

  /// Position of the (sorted) multi-index in the canonical enumeration.
  std::size_t canonical_index(std::span<const std::size_t> idx) const {
    if (idx.size() != order_) throw ConfigError("SymMultiMap: multi-index length does not match order");
    std::vector<std::size_t> sorted(idx.begin(), idx.end());
    std::sort(sorted.begin(), sorted.end());
    std::size_t rank = 0;
    std::size_t lower = 0;
    for (std::size_t m = 0; m < order_; ++m) {
      if (sorted[m] >= dim_) throw ConfigError("SymMultiMap: index out of range");
      for (std::size_t u = lower; u < sorted[m]; ++u) rank += multiset_count(dim_ - u, order_ - m - 1);
      lower = sorted[m];
    }
    return rank;
  }

  double entry(std::size_t out, std::span<const std::size_t> idx) const {
    return coeffs_(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(canonical_index(idx)));
  }

  void set_entry(std::size_t out, std::span<const std::size_t> idx, double value) {
    check_out(out);
    coeffs_(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(canonical_index(idx))) = value;
  }

  /// Adds `coeff * x^idx` to output component `out` of the diagonal polynomial.
  void add_monomial(std::size_t out, std::span<const std::size_t> idx, double coeff) {
    check_out(out);
    const std::size_t c = canonical_index(idx);
    coeffs_(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(c)) +=
        coeff / static_cast<double>(multiplicity(indices_[c]));
  }

  /// Number of distinct orderings of a multi-index, k! / prod(m_i!).
  static std::size_t multiplicity(const std::vector<std::size_t>& alpha) {
    std::size_t result = 1;
    std::size_t run = 0;
    for (std::size_t m = 0; m < alpha.size(); ++m) {
      run = (m > 0 && alpha[m] == alpha[m - 1]) ? run + 1 : 1;
      result = result * (m + 1) / run;
    }
    return result;
  }

  /// Full multilinear evaluation on k (possibly distinct) arguments.
  Eigen::VectorXd operator()(std::span<const Eigen::VectorXd> args) const {
    if (args.size() != order_) throw ConfigError("SymMultiMap: wrong number of arguments");
    for (const auto& a : args) {
      if (static_cast<std::size_t>(a.size()) != dim_) throw ConfigError("SymMultiMap: argument dimension mismatch");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    std::vector<std::size_t> perm;
    for (std::size_t c = 0; c < indices_.size(); ++c) {
      const auto col = coeffs_.col(static_cast<Eigen::Index>(c));
      if (col.isZero(0.0)) continue;
      perm = indices_[c];
      double weight = 0.0;
      do {
        double prod = 1.0;
        for (std::size_t m = 0; m < order_; ++m) prod *= args[m][static_cast<Eigen::Index>(perm[m])];
        weight += prod;
      } while (std::next_permutation(perm.begin(), perm.end()));
      out += weight * col;
    }
    return out;
  }

  /// N_k(x, ..., x).
  Eigen::VectorXd diagonal(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != dim_) throw ConfigError("SymMultiMap: argument dimension mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    for (std::size_t c = 0; c < indices_.size(); ++c) {
      const auto col = coeffs_.col(static_cast<Eigen::Index>(c));
      if (col.isZero(0.0)) continue;
      double mono = static_cast<double>(multiplicity(indices_[c]));
      for (std::size_t j : indices_[c]) mono *= x[static_cast<Eigen::Index>(j)];
      out += mono * col;
    }
    return out;
  }

  bool is_zero() const { return coeffs_.isZero(0.0); }
  bool all_finite() const { return coeffs_.allFinite(); }

  SymMultiMap& operator+=(const SymMultiMap& other) {
    check_same_shape(other);
    coeffs_ += other.coeffs_;
    return *this;
  }

  SymMultiMap scaled(double factor) const {
    SymMultiMap out = *this;
    out.coeffs_ *= factor;
    return out;
  }

  bool same_shape(const SymMultiMap& other) const { return order_ == other.order_ && dim_ == other.dim_; }

  friend bool operator==(const SymMultiMap& a, const SymMultiMap& b) {
    return a.same_shape(b) && a.coeffs_ == b.coeffs_;
  }

 private:
  void enumerate() {
    indices_.clear();
    std::vector<std::size_t> cur(order_, 0);
    for (;;) {
      indices_.push_back(cur);
      // Advance to the next non-decreasing sequence in lexicographic order.
      std::size_t m = order_;
      while (m > 0 && cur[m - 1] == dim_ - 1) --m;
      if (m == 0) break;
      const std::size_t v = cur[m - 1] + 1;
      for (std::size_t j = m - 1; j < order_; ++j) cur[j] = v;
    }
  }

  void check_out(std::size_t out) const {
    if (out >= dim_) throw ConfigError("SymMultiMap: output index out of range");
  }

  void check_same_shape(const SymMultiMap& other) const {
    if (!same_shape(other)) throw ConfigError("SymMultiMap: shape mismatch");
  }

  std::size_t order_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::vector<std::size_t>> indices_;
  Eigen::MatrixXd coeffs_;
};

}  // namespace fdtlab
