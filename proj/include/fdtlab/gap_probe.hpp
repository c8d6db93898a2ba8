#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/beta.hpp>

#include "fdtlab/error.hpp"
#include "fdtlab/integrator.hpp"
#include "fdtlab/parallel.hpp"
#include "fdtlab/poly_system.hpp"
#include "fdtlab/rng.hpp"

namespace fdtlab {

namespace detail {

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace detail

/// Two families of weights share (eta, beta, delta). The distance below is
/// built on the Lyapunov weight L(x) = e^{eta |x|^2}, used for both V and W
/// of the contraction argument. The norm in which the gap and the response
/// bounds are stated uses V(x) = 1 + beta L(x), W(x) = L(x) / delta and
/// U(x) = V(x) + L(x)^2. eta = 0 gives constant weights.
struct WeightConfig {
  double eta = 0.05;
  double beta = 0.1;
  double delta = 0.1;

  void validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("weights.eta must be non-negative");
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("weights.beta must lie in (0, 1]");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("weights.delta must be positive");
  }

  double log_L(const Eigen::VectorXd& x) const { return eta * x.squaredNorm(); }
  double L(const Eigen::VectorXd& x) const { return std::exp(log_L(x)); }
  double log_V(const Eigen::VectorXd& x) const { return detail::log_add_exp(0.0, std::log(beta) + eta * x.squaredNorm()); }
  double log_W(const Eigen::VectorXd& x) const { return -std::log(delta) + eta * x.squaredNorm(); }
  double log_U(const Eigen::VectorXd& x) const { return detail::log_add_exp(log_V(x), 2.0 * eta * x.squaredNorm()); }
  double V(const Eigen::VectorXd& x) const { return std::exp(log_V(x)); }
  double W(const Eigen::VectorXd& x) const { return std::exp(log_W(x)); }
  double U(const Eigen::VectorXd& x) const { return std::exp(log_U(x)); }

  /// Radius of the ball {L <= C}; infinite when eta = 0.
  double sublevel_radius(double C) const {
    if (!(C > 1.0)) throw ConfigError("probe.level must exceed 1, otherwise {L <= C} is a point");
    if (eta == 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(std::log(C) / eta);
  }
};

/// Both branches of min(rho_L / delta, 2 + beta L(x) + beta L(y)) in log
/// space. rho_L is the straight-chord integral of L, an upper bound on the
/// infimum over curves.
struct DistanceBranches {
  double log_chord = 0.0;  ///< log(rho_L / delta)
  double log_cap = 0.0;    ///< log(2 + beta L(x) + beta L(y))
  bool cap_active() const { return log_cap < log_chord; }
};

inline DistanceBranches distance_branches(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const WeightConfig& w,
                                          std::size_t quad_points = 64) {
  if (quad_points < 2) throw ConfigError("weighted_distance: quad_points must be at least 2");
  if (x.size() != y.size()) throw ConfigError("weighted_distance: points have different lengths");
  DistanceBranches b;
  const double lb = std::log(w.beta);
  b.log_cap = detail::log_add_exp(std::log(2.0), detail::log_add_exp(lb + w.log_L(x), lb + w.log_L(y)));
  const double len = (y - x).norm();
  if (len == 0.0) {
    b.log_chord = -std::numeric_limits<double>::infinity();
    return b;
  }
  const double h = 1.0 / static_cast<double>(quad_points - 1);
  double acc = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < quad_points; ++k) {
    const double s = static_cast<double>(k) * h;
    const double weight = (k == 0 || k + 1 == quad_points) ? 0.5 * h : h;
    acc = detail::log_add_exp(acc, std::log(weight) + w.log_L(x + s * (y - x)));
  }
  b.log_chord = std::log(len) + acc - std::log(w.delta);
  return b;
}

inline double weighted_distance(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const WeightConfig& w,
                                std::size_t quad_points = 64) {
  const auto b = distance_branches(x, y, w, quad_points);
  const double l = std::min(b.log_chord, b.log_cap);
  if (l > std::log(std::numeric_limits<double>::max()))
    throw NumericError("weighted_distance: value overflows a double");
  return std::exp(l);
}

/// eta = 0.05 divided by the preset's typical |x|^2 under the invariant law.
inline WeightConfig default_weights(double energy_scale) {
  if (!(energy_scale > 0.0)) throw ConfigError("default_weights: energy scale must be positive");
  WeightConfig w;
  w.eta = 0.05 / energy_scale;
  return w;
}

// ---------------------------------------------------------------------------
// Coupled-trajectory contraction.
// ---------------------------------------------------------------------------

enum class Regime { close = 0, distant_large = 1, distant_sublevel = 2 };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::close: return "close";
    case Regime::distant_large: return "distant_large_V";
    case Regime::distant_sublevel: return "distant_sublevel";
  }
  return "?";
}

struct ProbeConfig {
  Eigen::VectorXd x_star;       ///< empty means the origin
  double eps = 1.0;
  double level = 4.0;           ///< C in {L <= C}
  std::size_t n_pairs = 32;     ///< per regime
  double horizon = 1.0;
  std::size_t n_couplings = 32; ///< synchronous couplings averaged per pair
  double close_separation = 0.01;
  double far_radius = 3.0;
  /// Radius of the region sampled for close pairs, distant sublevel pairs and
  /// minorization starts; capped by the sublevel radius. 0 means use the
  /// sublevel radius alone.
  double sample_radius = 2.0;
  std::size_t n_hit_paths = 2000;
  double confidence = 0.95;
  std::size_t quad_points = 64;

  void validate() const {
    if (!(eps > 0.0)) throw ConfigError("probe.eps must be positive");
    if (!(level > 1.0)) throw ConfigError("probe.level must exceed 1");
    if (!(horizon > 0.0)) throw ConfigError("probe.horizon must be positive");
    if (n_couplings < 1) throw ConfigError("probe.n_couplings must be at least 1");
    if (!(close_separation > 0.0)) throw ConfigError("probe.close_separation must be positive");
    if (!(far_radius > 0.0)) throw ConfigError("probe.far_radius must be positive");
    if (!(sample_radius >= 0.0)) throw ConfigError("probe.sample_radius must be non-negative");
    if (n_hit_paths < 1) throw ConfigError("probe.n_hit_paths must be at least 1");
    if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("probe.confidence must lie in (0, 1)");
    if (quad_points < 2) throw ConfigError("probe.quad_points must be at least 2");
  }

  double region_radius(const WeightConfig& w) const {
    const double r = w.sublevel_radius(level);
    if (sample_radius > 0.0) return std::min(r, sample_radius);
    if (!std::isfinite(r)) throw ConfigError("probe.sample_radius is required when the sublevel set is unbounded");
    return r;
  }
};

struct CouplingPair {
  Eigen::VectorXd x, y;
  Regime regime = Regime::close;
};

struct PairResult {
  CouplingPair pair;
  double d0 = 0.0;
  double dt_mean = 0.0;  ///< mean of d(x_t, y_t) over couplings
  double ratio = 0.0;
  bool cap_active = false;
  bool skipped = false;
};

struct RegimeSummary {
  std::size_t n_pairs = 0;
  std::size_t n_skipped = 0;
  double mean_ratio = 0.0;
  double max_ratio = 0.0;
};

struct ContractionReport {
  std::vector<PairResult> pairs;
  std::array<RegimeSummary, 3> regimes;
  RegimeSummary overall;
  bool contracts = false;  ///< overall max ratio < 1
  std::size_t n_couplings = 0;
  double horizon = 0.0;
  static constexpr const char* distance_note = "chord integral is an upper bound on the infimum over curves";
};

namespace detail {

inline Eigen::VectorXd unit_direction(const RngStream& rng, std::uint64_t step, Eigen::Index d) {
  Eigen::VectorXd u(d);
  do {
    for (Eigen::Index i = 0; i < d; ++i) u[i] = rng.normal(step, static_cast<std::uint32_t>(i));
    ++step;
  } while (u.norm() == 0.0);
  return u / u.norm();
}

/// Uniform point in the ball of radius r.
inline Eigen::VectorXd ball_point(const RngStream& rng, std::uint64_t step, Eigen::Index d, double r) {
  const double u = rng.uniform(step, 0);
  return r * std::pow(u, 1.0 / static_cast<double>(d)) * unit_direction(rng, step, d);
}

inline void summarize(RegimeSummary& s, const PairResult& p) {
  ++s.n_pairs;
  if (p.skipped) {
    ++s.n_skipped;
    return;
  }
  const auto used = static_cast<double>(s.n_pairs - s.n_skipped);
  s.mean_ratio += (p.ratio - s.mean_ratio) / used;
  s.max_ratio = std::max(s.max_ratio, p.ratio);
}

}  // namespace detail

/// Draws n_pairs per regime: (i) close pairs, x uniform in the sample region
/// and y at distance <= close_separation; (ii) x, y on the sphere of radius
/// far_radius; (iii) x, y uniform in the sample region with the cap branch
/// active (rejection sampled).
inline std::vector<CouplingPair> draw_pairs(std::size_t dim, const WeightConfig& w, const ProbeConfig& probe,
                                            std::uint64_t seed) {
  w.validate();
  probe.validate();
  const auto d = static_cast<Eigen::Index>(dim);
  const double R = probe.region_radius(w);
  std::vector<CouplingPair> out;
  std::uint64_t id = 0;
  for (std::size_t k = 0; k < probe.n_pairs; ++k, ++id) {
    const RngStream rng(seed, id);
    CouplingPair p;
    p.regime = Regime::close;
    p.x = detail::ball_point(rng, 0, d, R);
    p.y = p.x + probe.close_separation * rng.uniform(100, 0) * detail::unit_direction(rng, 200, d);
    out.push_back(std::move(p));
  }
  for (std::size_t k = 0; k < probe.n_pairs; ++k, ++id) {
    const RngStream rng(seed, id);
    CouplingPair p;
    p.regime = Regime::distant_large;
    p.x = probe.far_radius * detail::unit_direction(rng, 0, d);
    p.y = d == 1 ? Eigen::VectorXd(-p.x) : Eigen::VectorXd(probe.far_radius * detail::unit_direction(rng, 100, d));
    out.push_back(std::move(p));
  }
  for (std::size_t k = 0; k < probe.n_pairs; ++k, ++id) {
    const RngStream rng(seed, id);
    CouplingPair p;
    p.regime = Regime::distant_sublevel;
    bool found = false;
    for (std::uint64_t attempt = 0; attempt < 1000 && !found; ++attempt) {
      p.x = detail::ball_point(rng, 1000 * attempt, d, R);
      p.y = detail::ball_point(rng, 1000 * attempt + 500, d, R);
      found = distance_branches(p.x, p.y, w, probe.quad_points).cap_active();
    }
    if (!found) throw ConfigError("probe: no distant pairs found in the sublevel set; reduce weights.delta");
    out.push_back(std::move(p));
  }
  return out;
}

/// Each pair is run n_couplings times; coupling c of pair p uses
/// RngStream(seed, p * n_couplings + c) for both trajectories (synchronous
/// coupling). The reported ratio is E[d(x_t, y_t)] / d(x_0, y_0), an upper
/// bound on the transported distance between the two transition laws.
inline ContractionReport contraction_from_pairs(const PolySystem& sys, const WeightConfig& w, const ProbeConfig& probe,
                                                const std::vector<CouplingPair>& pairs, const SchemeConfig& cfg,
                                                std::uint64_t seed) {
  w.validate();
  probe.validate();
  SchemeConfig plain = cfg;
  plain.validate();
  plain.track_jacobian = plain.track_second_variation = plain.track_malliavin = plain.track_tangent = false;
  for (const auto& p : pairs) {
    check_state(sys, p.x, "contraction_estimate(x)");
    check_state(sys, p.y, "contraction_estimate(y)");
  }
  const std::size_t nc = probe.n_couplings;
  const std::size_t steps = plain.steps_for(probe.horizon);
  std::vector<double> d0(pairs.size());
  std::vector<char> cap(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    d0[i] = weighted_distance(pairs[i].x, pairs[i].y, w, probe.quad_points);
    cap[i] = distance_branches(pairs[i].x, pairs[i].y, w, probe.quad_points).cap_active();
  }
  std::vector<double> dist(pairs.size() * nc, 0.0);
  parallel_for(pairs.size() * nc, [&](std::size_t task) {
    const std::size_t i = task / nc;
    if (d0[i] == 0.0) return;
    const RngStream rng(seed, task);
    Stepper stepper(sys, nullptr, plain);
    AugmentedState a = AugmentedState::initial(pairs[i].x, plain);
    AugmentedState b = AugmentedState::initial(pairs[i].y, plain);
    try {
      for (std::size_t k = 0; k < steps; ++k) {
        stepper.advance(a, rng);
        stepper.advance(b, rng);
      }
    } catch (const DivergenceError& e) {
      throw DivergenceError("contraction_estimate: pair " + std::to_string(i) + " diverged at step " +
                                std::to_string(e.step()),
                            e.last_finite_state(), e.step(), task);
    }
    dist[task] = weighted_distance(a.x, b.x, w, probe.quad_points);
  });

  ContractionReport rep;
  rep.n_couplings = nc;
  rep.horizon = probe.horizon;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PairResult r;
    r.pair = pairs[i];
    r.d0 = d0[i];
    r.cap_active = cap[i];
    r.skipped = d0[i] == 0.0;
    if (!r.skipped) {
      double m = 0.0;
      for (std::size_t c = 0; c < nc; ++c) m += dist[i * nc + c];
      r.dt_mean = m / static_cast<double>(nc);
      r.ratio = r.dt_mean / r.d0;
    }
    detail::summarize(rep.regimes[static_cast<std::size_t>(r.pair.regime)], r);
    detail::summarize(rep.overall, r);
    rep.pairs.push_back(std::move(r));
  }
  rep.contracts = rep.overall.n_pairs > rep.overall.n_skipped && rep.overall.max_ratio < 1.0;
  return rep;
}

/// Pairs from draw_pairs(derive_seed(seed, "pairs")), trajectories from
/// derive_seed(seed, "coupling").
inline ContractionReport contraction_estimate(const PolySystem& sys, const WeightConfig& w, const ProbeConfig& probe,
                                              const SchemeConfig& cfg, std::uint64_t seed) {
  const auto pairs = draw_pairs(sys.dim(), w, probe, derive_seed(seed, "pairs"));
  return contraction_from_pairs(sys, w, probe, pairs, cfg, derive_seed(seed, "coupling"));
}

// ---------------------------------------------------------------------------
// Minorization: P_t(x, B_eps(x_star)) over starts covering {L <= C}.
// ---------------------------------------------------------------------------

struct StartHits {
  Eigen::VectorXd x;
  std::size_t hits = 0;
  std::size_t n = 0;
  double probability = 0.0;
  double lower_bound = 0.0;  ///< Clopper-Pearson, one-sided at the configured confidence
  bool zero_hits = false;
};

struct MinorizationReport {
  std::vector<StartHits> starts;
  double min_probability = 0.0;
  double alpha_hat = 0.0;  ///< minimum lower bound over starts
  bool verdict = false;    ///< alpha_hat > 0
  std::size_t n_zero_hit_starts = 0;
  double confidence = 0.0;
  double radius = 0.0;
};

/// One-sided Clopper-Pearson lower bound on a binomial proportion.
inline double clopper_pearson_lower(std::size_t k, std::size_t n, double confidence) {
  if (n == 0) throw ConfigError("clopper_pearson_lower: n must be positive");
  if (k == 0) return 0.0;
  boost::math::beta_distribution<double> b(static_cast<double>(k), static_cast<double>(n - k + 1));
  return boost::math::quantile(b, 1.0 - confidence);
}

/// Regular lattice covering the ball of radius r: k points per axis with
/// k^d close to n_starts, points outside the ball dropped.
inline std::vector<Eigen::VectorXd> covering_grid(std::size_t dim, double r, std::size_t n_starts) {
  if (n_starts < 1) throw ConfigError("minorization_probe: n_starts must be at least 1");
  const auto d = static_cast<Eigen::Index>(dim);
  if (n_starts == 1) return {Eigen::VectorXd::Zero(d)};
  auto k = static_cast<std::size_t>(std::max(2.0, std::round(std::pow(static_cast<double>(n_starts), 1.0 / dim))));
  std::vector<Eigen::VectorXd> out;
  std::vector<std::size_t> idx(dim, 0);
  while (true) {
    Eigen::VectorXd x(d);
    for (std::size_t i = 0; i < dim; ++i)
      x[static_cast<Eigen::Index>(i)] = -r + 2.0 * r * static_cast<double>(idx[i]) / static_cast<double>(k - 1);
    if (x.norm() <= r * (1.0 + 1e-12)) out.push_back(x);
    std::size_t i = 0;
    while (i < dim && ++idx[i] == k) idx[i++] = 0;
    if (i == dim) break;
  }
  return out;
}

/// Start s, path j uses RngStream(seed, s * n_hit_paths + j).
inline MinorizationReport minorization_from_starts(const PolySystem& sys, const ProbeConfig& probe,
                                                   const std::vector<Eigen::VectorXd>& starts, const SchemeConfig& cfg,
                                                   std::uint64_t seed) {
  probe.validate();
  if (starts.empty()) throw ConfigError("minorization_probe: no starting points");
  SchemeConfig plain = cfg;
  plain.validate();
  plain.track_jacobian = plain.track_second_variation = plain.track_malliavin = plain.track_tangent = false;
  const auto d = static_cast<Eigen::Index>(sys.dim());
  const Eigen::VectorXd xs = probe.x_star.size() == 0 ? Eigen::VectorXd::Zero(d) : probe.x_star;
  check_state(sys, xs, "probe.x_star");
  for (const auto& s : starts) check_state(sys, s, "minorization_probe(start)");
  const std::size_t n = probe.n_hit_paths;
  const std::size_t steps = plain.steps_for(probe.horizon);
  std::vector<char> hit(starts.size() * n, 0);
  parallel_for(starts.size() * n, [&](std::size_t task) {
    const RngStream rng(seed, task);
    Stepper stepper(sys, nullptr, plain);
    AugmentedState st = AugmentedState::initial(starts[task / n], plain);
    try {
      for (std::size_t k = 0; k < steps; ++k) stepper.advance(st, rng);
    } catch (const DivergenceError& e) {
      throw DivergenceError("minorization_probe: start " + std::to_string(task / n) + " diverged at step " +
                                std::to_string(e.step()),
                            e.last_finite_state(), e.step(), task);
    }
    hit[task] = (st.x - xs).norm() < probe.eps;
  });
  MinorizationReport rep;
  rep.confidence = probe.confidence;
  rep.min_probability = std::numeric_limits<double>::infinity();
  rep.alpha_hat = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < starts.size(); ++s) {
    StartHits h;
    h.x = starts[s];
    h.n = n;
    for (std::size_t j = 0; j < n; ++j) h.hits += static_cast<std::size_t>(hit[s * n + j]);
    h.probability = static_cast<double>(h.hits) / static_cast<double>(n);
    h.lower_bound = clopper_pearson_lower(h.hits, n, probe.confidence);
    h.zero_hits = h.hits == 0;
    if (h.zero_hits) ++rep.n_zero_hit_starts;
    rep.min_probability = std::min(rep.min_probability, h.probability);
    rep.alpha_hat = std::min(rep.alpha_hat, h.lower_bound);
    rep.starts.push_back(std::move(h));
  }
  rep.verdict = rep.alpha_hat > 0.0;
  return rep;
}

inline MinorizationReport minorization_probe(const PolySystem& sys, const WeightConfig& w, const ProbeConfig& probe,
                                             std::size_t n_starts, const SchemeConfig& cfg, std::uint64_t seed) {
  w.validate();
  probe.validate();
  const double r = probe.region_radius(w);
  auto rep = minorization_from_starts(sys, probe, covering_grid(sys.dim(), r, n_starts), cfg,
                                      derive_seed(seed, "minorization"));
  rep.radius = r;
  return rep;
}

}  // namespace fdtlab
