#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"
#include "fdtlab/integrator.hpp"
#include "fdtlab/observable.hpp"
#include "fdtlab/parallel.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/rng.hpp"
#include "fdtlab/statistics.hpp"

namespace fdtlab {

// ---------------------------------------------------------------------------
// Pathwise gradient of the semigroup: D(P_t phi)(x0) = E[J_{0,t}^T grad phi(x_t)].
// ---------------------------------------------------------------------------

struct GradientEstimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd stderr;
  double value_mean = 0.0;     ///< P_t phi (x0)
  double value_stderr = 0.0;
  double square_mean = 0.0;    ///< P_t phi^2 (x0)
  std::size_t n_paths = 0;
};

/// Path i uses RngStream(seed, i). Per-path results are reduced in path
/// order, so the estimate does not depend on the worker count.
inline GradientEstimate pathwise_gradient(const PolySystem& sys, const Eigen::VectorXd& x0, double t,
                                          const Observable& phi, std::size_t n_paths, const SchemeConfig& cfg,
                                          std::uint64_t seed) {
  check_state(sys, x0, "pathwise_gradient(x0)");
  if (!phi.has_gradient()) throw ConfigError("pathwise_gradient: observable '" + phi.name + "' has no gradient");
  if (!(t > 0.0)) throw ConfigError("pathwise_gradient: t must be positive");
  if (n_paths < 1) throw ConfigError("pathwise_gradient: n_paths must be at least 1");
  SchemeConfig c = cfg;
  c.track_jacobian = true;
  const auto d = static_cast<Eigen::Index>(sys.dim());
  Eigen::MatrixXd grads(d, static_cast<Eigen::Index>(n_paths));
  std::vector<double> values(n_paths);
  parallel_for(n_paths, [&](std::size_t i) {
    const auto rec = simulate_path(sys, x0, t, nullptr, c, RngStream(seed, i));
    const auto& st = rec.final_state;
    grads.col(static_cast<Eigen::Index>(i)) = st.J.transpose() * phi.gradient(st.x);
    values[i] = phi.value(st.x);
  });
  GradientEstimate out;
  out.n_paths = n_paths;
  out.mean.resize(d);
  out.stderr.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    RunningStats s;
    for (std::size_t i = 0; i < n_paths; ++i) s.add(grads(k, static_cast<Eigen::Index>(i)));
    out.mean[k] = s.mean;
    out.stderr[k] = s.stderr_of_mean();
  }
  RunningStats v, v2;
  for (double x : values) {
    v.add(x);
    v2.add(x * x);
  }
  out.value_mean = v.mean;
  out.value_stderr = v.stderr_of_mean();
  out.square_mean = v2.mean;
  return out;
}

// ---------------------------------------------------------------------------
// Weighted gradient bound |D P_t phi|^2 <= C e^{eta |x|^2} P_t phi^2.
// ---------------------------------------------------------------------------

struct GradientBoundRow {
  Eigen::VectorXd x;
  std::string observable;
  double eta = 0.0;
  double grad_norm2 = 0.0;
  double semigroup_square = 0.0;  ///< (P_t phi^2)(x)
  double ratio = 0.0;
  bool flagged = false;           ///< zero denominator; ratio not defined
};

struct GradientBoundTable {
  std::vector<GradientBoundRow> rows;
  std::vector<double> etas;
  std::vector<double> max_ratio;  ///< per eta, over unflagged rows
  std::size_t n_flagged = 0;
};

/// Each (grid point, observable) pair is estimated once with seed
/// derive_seed(seed, index) and reused for every eta, so rows for different
/// eta share their samples.
inline GradientBoundTable gradient_bound_check(const PolySystem& sys, double t, const std::vector<double>& etas,
                                               const std::vector<Observable>& observables,
                                               const std::vector<Eigen::VectorXd>& x_grid, std::size_t n_paths,
                                               const SchemeConfig& cfg, std::uint64_t seed) {
  if (etas.empty()) throw ConfigError("gradient_bound_check: need at least one eta");
  for (double e : etas)
    if (!(e > 0.0)) throw ConfigError("gradient_bound_check: eta must be positive");
  GradientBoundTable table;
  table.etas = etas;
  table.max_ratio.assign(etas.size(), 0.0);
  std::uint64_t index = 0;
  for (const auto& x : x_grid) {
    for (const auto& phi : observables) {
      const auto g = pathwise_gradient(sys, x, t, phi, n_paths, cfg, derive_seed(seed, index++));
      const double num = g.mean.squaredNorm();
      for (std::size_t k = 0; k < etas.size(); ++k) {
        GradientBoundRow row;
        row.x = x;
        row.observable = phi.name;
        row.eta = etas[k];
        row.grad_norm2 = num;
        row.semigroup_square = g.square_mean;
        const double den = std::exp(etas[k] * x.squaredNorm()) * g.square_mean;
        if (!(den > 0.0)) {
          row.flagged = true;
          row.ratio = std::numeric_limits<double>::quiet_NaN();
          ++table.n_flagged;
        } else {
          row.ratio = num / den;
          table.max_ratio[k] = std::max(table.max_ratio[k], row.ratio);
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Smallest eigenvalue of the Malliavin matrix across an ensemble.
// ---------------------------------------------------------------------------

struct MalliavinSpectrum {
  std::vector<double> lambda_min;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> p_list;
  std::vector<double> inverse_moment;  ///< E[lambda_min^{-p/2}]
  std::vector<double> inverse_moment_stderr;
  std::vector<double> hist_edges;      ///< log10 lambda_min bin edges
  std::vector<std::size_t> hist_counts;
  std::size_t n_nonpositive = 0;
};

inline MalliavinSpectrum malliavin_spectrum(const std::vector<AugmentedState>& states, const std::vector<double>& p_list,
                                            std::size_t n_bins = 20) {
  if (states.empty()) throw ConfigError("malliavin_spectrum: empty ensemble");
  if (n_bins < 1) throw ConfigError("malliavin_spectrum: n_bins must be at least 1");
  MalliavinSpectrum out;
  out.p_list = p_list;
  for (const auto& st : states) {
    if (st.M.size() == 0) throw ConfigError("malliavin_spectrum: Malliavin matrix was not tracked");
    if (!(st.t > 0.0)) throw ConfigError("malliavin_spectrum: states must be at t > 0");
    const Eigen::MatrixXd sym = 0.5 * (st.M + st.M.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    out.lambda_min.push_back(es.eigenvalues().minCoeff());
  }
  out.min = *std::min_element(out.lambda_min.begin(), out.lambda_min.end());
  out.max = *std::max_element(out.lambda_min.begin(), out.lambda_min.end());
  for (double l : out.lambda_min)
    if (!(l > 0.0)) ++out.n_nonpositive;

  for (double p : p_list) {
    RunningStats s;
    for (double l : out.lambda_min)
      s.add(l > 0.0 ? std::pow(l, -0.5 * p) : std::numeric_limits<double>::infinity());
    out.inverse_moment.push_back(s.mean);
    out.inverse_moment_stderr.push_back(s.stderr_of_mean());
  }

  if (out.min > 0.0) {
    const double lo = std::log10(out.min);
    const double hi = std::log10(out.max);
    const double width = hi > lo ? (hi - lo) / static_cast<double>(n_bins) : 1.0;
    for (std::size_t b = 0; b <= n_bins; ++b) out.hist_edges.push_back(lo + width * static_cast<double>(b));
    out.hist_counts.assign(n_bins, 0);
    for (double l : out.lambda_min) {
      auto b = static_cast<std::size_t>((std::log10(l) - lo) / width);
      out.hist_counts[std::min(b, n_bins - 1)]++;
    }
  }
  return out;
}

}  // namespace fdtlab
