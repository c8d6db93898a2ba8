#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdtlab/error.hpp"
#include "fdtlab/integrator.hpp"
#include "fdtlab/parallel.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/rng.hpp"

namespace fdtlab {

struct EnsembleConfig {
  double burn_in = 10.0;
  std::size_t n_samples = 10000;
  double thinning = 0.1;
  std::size_t n_streams = 16;
  /// Starting points, assigned to streams cyclically. Empty means the origin.
  std::vector<Eigen::VectorXd> initial_points;

  void validate(std::size_t dim) const {
    if (!(burn_in > 0.0)) throw ConfigError("ensemble.burn_in must be positive");
    if (!(thinning > 0.0)) throw ConfigError("ensemble.thinning must be positive");
    if (n_streams < 1) throw ConfigError("ensemble.n_streams must be at least 1");
    for (const auto& p : initial_points) {
      if (static_cast<std::size_t>(p.size()) != dim)
        throw ConfigError("ensemble.initial_points: expected vectors of length " + std::to_string(dim));
      if (!p.allFinite()) throw ConfigError("ensemble.initial_points: non-finite entry");
    }
  }
};

/// Stationary samples, one row per sample, grouped by stream in stream order.
struct Ensemble {
  Eigen::MatrixXd samples;                ///< n x d
  std::vector<std::size_t> stream_of_row;
  std::vector<std::size_t> stream_counts;  ///< samples contributed by each stream
  std::vector<std::size_t> stream_offsets;  ///< first row of each stream
  std::uint64_t seed = 0;
  double dt = 0.0;
  double burn_in = 0.0;
  double thinning = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_streams() const { return stream_counts.size(); }
  Eigen::VectorXd row(std::size_t i) const { return samples.row(static_cast<Eigen::Index>(i)).transpose(); }
};

/// Runs n_streams independent paths (stream s uses RngStream(seed, s)),
/// discards burn_in, then records a state every `thinning` until each stream
/// has produced its share of n_samples. Shares differ by at most one.
inline Ensemble sample_stationary(const PolySystem& sys, const SchemeConfig& cfg, const EnsembleConfig& ens,
                                  std::uint64_t seed) {
  cfg.validate();
  ens.validate(sys.dim());
  const auto d = static_cast<Eigen::Index>(sys.dim());
  Ensemble out;
  out.seed = seed;
  out.dt = cfg.dt;
  out.burn_in = ens.burn_in;
  out.thinning = ens.thinning;
  out.samples.resize(static_cast<Eigen::Index>(ens.n_samples), d);
  out.stream_counts.resize(ens.n_streams);
  out.stream_offsets.resize(ens.n_streams);
  std::size_t offset = 0;
  for (std::size_t s = 0; s < ens.n_streams; ++s) {
    out.stream_counts[s] = ens.n_samples / ens.n_streams + (s < ens.n_samples % ens.n_streams ? 1 : 0);
    out.stream_offsets[s] = offset;
    offset += out.stream_counts[s];
  }
  out.stream_of_row.resize(ens.n_samples);
  for (std::size_t s = 0; s < ens.n_streams; ++s)
    for (std::size_t k = 0; k < out.stream_counts[s]; ++k) out.stream_of_row[out.stream_offsets[s] + k] = s;
  if (ens.n_samples == 0) return out;

  SchemeConfig plain = cfg;
  plain.track_jacobian = plain.track_second_variation = plain.track_malliavin = plain.track_tangent = false;
  const std::size_t burn_steps = plain.steps_for(ens.burn_in);
  const std::size_t thin_steps = std::max<std::size_t>(1, plain.steps_for(ens.thinning));

  parallel_for(ens.n_streams, [&](std::size_t s) {
    const std::size_t count = out.stream_counts[s];
    if (count == 0) return;
    const RngStream rng(seed, s);
    Stepper stepper(sys, nullptr, plain);
    const Eigen::VectorXd x0 = ens.initial_points.empty() ? Eigen::VectorXd::Zero(d)
                                                          : ens.initial_points[s % ens.initial_points.size()];
    AugmentedState st = AugmentedState::initial(x0, plain);
    try {
      for (std::size_t i = 0; i < burn_steps; ++i) stepper.advance(st, rng);
      for (std::size_t k = 0; k < count; ++k) {
        if (k > 0)
          for (std::size_t i = 0; i < thin_steps; ++i) stepper.advance(st, rng);
        out.samples.row(static_cast<Eigen::Index>(out.stream_offsets[s] + k)) = st.x.transpose();
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("sample_stationary: stream " + std::to_string(s) + " diverged at step " +
                                std::to_string(e.step()),
                            e.last_finite_state(), e.step(), s);
    }
  });
  return out;
}

/// Evolves each start point for time T with its own stream (seed, i) and
/// returns the final augmented states in input order.
inline std::vector<AugmentedState> evolve_points(const PolySystem& sys, const std::vector<Eigen::VectorXd>& starts,
                                                 double T, const ParamDirection* dir, const SchemeConfig& cfg,
                                                 std::uint64_t seed) {
  std::vector<AugmentedState> out(starts.size());
  parallel_for(starts.size(), [&](std::size_t i) {
    out[i] = simulate_path(sys, starts[i], T, dir, cfg, RngStream(seed, i)).final_state;
  });
  return out;
}

}  // namespace fdtlab
