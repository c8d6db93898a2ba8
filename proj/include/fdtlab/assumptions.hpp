#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include "fdtlab/error.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/rng.hpp"

namespace fdtlab {

// ---------------------------------------------------------------------------
// Coercivity: <x, N(x)> <= C - c |x|^N, checked on sampled shells.
// ---------------------------------------------------------------------------

struct CoercivityReport {
  double c_hat = 0.0;
  double C_hat = 0.0;
  Eigen::VectorXd worst_direction;
  double top_degree_radial = 0.0;  ///< max over sampled unit u of <u, N_N(u, ..., u)>
  double margin = 0.0;             ///< required negativity when N is odd
  double tolerance = 0.0;
  bool even_degree = false;
  std::size_t n_directions = 0;
  bool pass = false;
};

/// Quasi-uniform unit vectors: +-coordinate axes plus a Halton sequence pushed
/// through the inverse normal CDF. Every vector is paired with its negation.
inline std::vector<Eigen::VectorXd> sphere_directions(std::size_t dim, std::size_t n) {
  static constexpr std::uint32_t kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                                              43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};
  std::vector<Eigen::VectorXd> dirs;
  const auto d = static_cast<Eigen::Index>(dim);
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
    e[i] = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  if (dim == 1) return dirs;
  auto radical_inverse = [](std::uint64_t i, std::uint32_t base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
      r += f * static_cast<double>(i % base);
      i /= base;
      f *= inv;
    }
    return r;
  };
  for (std::uint64_t s = 1; dirs.size() < 2 * dim + 2 * n; ++s) {
    Eigen::VectorXd v(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::uint32_t base = kPrimes[static_cast<std::size_t>(j) % std::size(kPrimes)];
      const double u = radical_inverse(s, base);
      v[j] = std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0);
    }
    const double norm = v.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) continue;
    v /= norm;
    dirs.push_back(v);
    dirs.push_back(-v);
  }
  return dirs;
}

inline CoercivityReport coercivity_probe(const PolySystem& sys, std::size_t n_directions,
                                         const std::vector<double>& radii, double tol) {
  if (n_directions < 1) throw ConfigError("coercivity_probe: n_directions must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("coercivity_probe: tol must be positive");
  if (radii.empty()) throw ConfigError("coercivity_probe: need at least one radius");
  for (double r : radii)
    if (!(r > 0.0)) throw ConfigError("coercivity_probe: radii must be positive");

  const std::size_t N = sys.degree();
  const auto dirs = sphere_directions(sys.dim(), n_directions);
  const double r_max = *std::max_element(radii.begin(), radii.end());
  const double big_n = static_cast<double>(N);

  CoercivityReport rep;
  rep.even_degree = (N % 2 == 0);
  rep.tolerance = tol;
  rep.margin = tol;
  rep.n_directions = dirs.size();
  rep.top_degree_radial = -std::numeric_limits<double>::infinity();

  // Top-degree radial values and the rate on the outermost shell.
  double min_outer_rate = std::numeric_limits<double>::infinity();
  for (const auto& u : dirs) {
    const double top = u.dot(sys.map(N).diagonal(u));
    if (!std::isfinite(top)) throw NumericError("coercivity_probe: non-finite drift");
    if (top > rep.top_degree_radial) {
      rep.top_degree_radial = top;
      rep.worst_direction = u;
    }
    const Eigen::VectorXd x = r_max * u;
    const double q = x.dot(eval_drift(sys, x));
    if (!std::isfinite(q)) throw NumericError("coercivity_probe: non-finite drift");
    min_outer_rate = std::min(min_outer_rate, -q / std::pow(r_max, big_n));
  }

  // Half the observed outer rate, so the bound keeps slack on the sampled shells.
  rep.c_hat = min_outer_rate > 0.0 ? 0.5 * min_outer_rate : 0.0;
  double C = 0.0;
  for (const auto& u : dirs) {
    for (double r : radii) {
      const Eigen::VectorXd x = r * u;
      const double q = x.dot(eval_drift(sys, x));
      if (!std::isfinite(q)) throw NumericError("coercivity_probe: non-finite drift");
      C = std::max(C, q + rep.c_hat * std::pow(r, big_n));
    }
  }
  rep.C_hat = C;

  const bool top_ok = rep.even_degree ? (std::abs(rep.top_degree_radial) <= tol)
                                      : (rep.top_degree_radial <= -rep.margin);
  rep.pass = top_ok && rep.c_hat > 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Bracket-span condition: A_0 = span(Sigma), A_{k+1} = span(A_k, N_N(A_k, ..., A_k)).
// ---------------------------------------------------------------------------

enum class SpanSampling { exhaustive, randomized };

struct SpanOptions {
  double tol = 1e-10;
  SpanSampling sampling = SpanSampling::exhaustive;
  std::size_t n_random = 256;
  /// Exhaustive enumeration is used while (dim A_k)^N stays below this cap,
  /// even when `sampling` asks for it; above the cap, random tuples are drawn.
  std::size_t exhaustive_cap = 4096;
  std::uint64_t seed = 0x5eedULL;
};

struct SpanReport {
  std::vector<std::size_t> level_dims;
  Eigen::MatrixXd basis;  ///< d x dim(A), orthonormal columns
  bool full_rank = false;
  double tol = 0.0;
  bool used_random_sampling = false;
};

/// Orthonormal basis of the column span, rank decided by s_i > tol * s_max.
inline Eigen::MatrixXd orthonormal_span(const Eigen::MatrixXd& vectors, double tol) {
  const Eigen::Index d = vectors.rows();
  if (vectors.cols() == 0) return Eigen::MatrixXd(d, 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(vectors, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double s_max = s.size() > 0 ? s[0] : 0.0;
  Eigen::Index rank = 0;
  if (s_max > 0.0)
    while (rank < s.size() && s[rank] > tol * s_max) ++rank;
  return svd.matrixU().leftCols(rank);
}

inline SpanReport hypoellipticity_span(const PolySystem& sys, const SpanOptions& opt = {}) {
  if (!(opt.tol > 0.0)) throw ConfigError("hypoellipticity_span: tol must be positive");
  const std::size_t d = sys.dim();
  const std::size_t N = sys.degree();
  const SymMultiMap& top = sys.map(N);

  SpanReport rep;
  rep.tol = opt.tol;
  rep.basis = orthonormal_span(sys.sigma(), opt.tol);
  rep.level_dims.push_back(static_cast<std::size_t>(rep.basis.cols()));

  const RngStream rng(opt.seed, 0);
  std::uint64_t draw = 0;
  for (std::size_t level = 0; level < d && rep.level_dims.back() < d; ++level) {
    const auto m = static_cast<std::size_t>(rep.basis.cols());
    std::vector<Eigen::VectorXd> images;
    double tuples = 1.0;
    for (std::size_t j = 0; j < N; ++j) tuples *= static_cast<double>(m);
    const bool exhaustive = opt.sampling == SpanSampling::exhaustive
                                ? tuples <= static_cast<double>(opt.exhaustive_cap)
                                : false;
    if (m > 0 && exhaustive) {
      // Unordered tuples of basis vectors suffice: N_N is symmetric and multilinear.
      std::vector<std::size_t> pick(N, 0);
      std::vector<Eigen::VectorXd> args(N);
      for (;;) {
        for (std::size_t j = 0; j < N; ++j) args[j] = rep.basis.col(static_cast<Eigen::Index>(pick[j]));
        images.push_back(top(args));
        std::size_t p = N;
        while (p > 0 && pick[p - 1] == m - 1) --p;
        if (p == 0) break;
        const std::size_t v = pick[p - 1] + 1;
        for (std::size_t j = p - 1; j < N; ++j) pick[j] = v;
      }
    } else if (m > 0) {
      rep.used_random_sampling = true;
      std::vector<Eigen::VectorXd> args(N);
      for (std::size_t s = 0; s < opt.n_random; ++s) {
        for (std::size_t j = 0; j < N; ++j) {
          Eigen::VectorXd coef(static_cast<Eigen::Index>(m));
          for (std::size_t c = 0; c < m; ++c) coef[static_cast<Eigen::Index>(c)] = rng.normal(draw, static_cast<std::uint32_t>(c));
          ++draw;
          coef.normalize();
          args[j] = rep.basis * coef;
        }
        images.push_back(top(args));
      }
    }
    Eigen::MatrixXd stacked(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m + images.size()));
    stacked.leftCols(static_cast<Eigen::Index>(m)) = rep.basis;
    for (std::size_t i = 0; i < images.size(); ++i) stacked.col(static_cast<Eigen::Index>(m + i)) = images[i];
    rep.basis = orthonormal_span(stacked, opt.tol);
    const auto dim = static_cast<std::size_t>(rep.basis.cols());
    rep.level_dims.push_back(dim);
    if (dim == m) break;
  }
  rep.full_rank = rep.level_dims.back() == d;
  return rep;
}

}  // namespace fdtlab
