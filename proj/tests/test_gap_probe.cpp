#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fdtlab/gap_probe.hpp"
#include "fdtlab/presets.hpp"

using namespace fdtlab;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::VectorXd random_point(std::mt19937_64& gen, Eigen::Index d, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd x(d);
  for (Eigen::Index i = 0; i < d; ++i) x[i] = nd(gen);
  return x;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

TEST(WeightedDistance, ZeroOnDiagonal) {
  const WeightConfig w;
  EXPECT_EQ(weighted_distance(vec({0.3, -1.0}), vec({0.3, -1.0}), w), 0.0);
}

TEST(WeightedDistance, ConstantWeightGivesEuclidean) {
  WeightConfig w;
  w.eta = 0.0;
  w.delta = 1.0;
  w.beta = 1.0;  // cap 2 + 1 + 1 = 4, above the separations below
  const auto x = vec({0.1, 0.2, -0.3});
  const auto y = vec({0.4, -0.2, 0.5});
  EXPECT_NEAR(weighted_distance(x, y, w), (x - y).norm(), 1e-14);
}

TEST(WeightedDistance, CapBranchForFarPoints) {
  WeightConfig w;
  w.beta = 0.01;
  const auto x = vec({-4.0});
  const auto y = vec({5.0});
  const double cap = 2.0 + w.beta * std::exp(w.eta * 16.0) + w.beta * std::exp(w.eta * 25.0);
  // Chord branch by direct fine quadrature of W along [-4, 5].
  double chord = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double s = -4.0 + 9.0 * (k + 0.5) / n;
    chord += 9.0 / n * std::exp(w.eta * s * s);
  }
  chord /= w.delta;
  ASSERT_LT(cap, chord);
  EXPECT_NEAR(weighted_distance(x, y, w), cap, 1e-13);
}

TEST(WeightedDistance, ChordMatchesFineQuadrature) {
  WeightConfig w;
  w.eta = 0.3;
  w.delta = 1.0;
  w.beta = 1.0;
  const auto x = vec({0.0});
  const auto y = vec({0.5});
  double exact = 0.0;  // series for int_0^0.5 e^{0.3 s^2} ds
  double term = 0.5;
  for (int k = 0; k < 30; ++k) {
    exact += term / (2 * k + 1);
    term *= 0.3 * 0.25 / (k + 1);
  }
  EXPECT_NEAR(weighted_distance(x, y, w, 2001), exact, 1e-8);
  // Trapezoid over a convex integrand overestimates.
  EXPECT_GE(weighted_distance(x, y, w, 5), exact);
}

TEST(WeightedDistance, SymmetryAndBounds) {
  std::mt19937_64 gen(3);
  const WeightConfig w;
  for (int r = 0; r < 200; ++r) {
    const auto x = random_point(gen, 2, 2.0);
    const auto y = random_point(gen, 2, 2.0);
    const double dxy = weighted_distance(x, y, w);
    EXPECT_NEAR(dxy, weighted_distance(y, x, w), 1e-12 * std::max(1.0, dxy));
    EXPECT_LE(dxy, 2.0 + w.beta * w.L(x) + w.beta * w.L(y) + 1e-12);
    const auto b = distance_branches(x, y, w);
    EXPECT_LE(dxy, std::exp(b.log_chord) * (1 + 1e-12));
  }
}

TEST(WeightedDistance, WeightsOrdered) {
  std::mt19937_64 gen(4);
  const WeightConfig w;
  for (int r = 0; r < 100; ++r) {
    const auto x = random_point(gen, 3, 3.0);
    EXPECT_GE(w.L(x), 1.0);
    EXPECT_GE(w.V(x), 1.0);
    EXPECT_GE(w.W(x), 1.0);
    EXPECT_GE(w.U(x), w.V(x));
  }
}

TEST(WeightedDistance, MonotoneInBeta) {
  std::mt19937_64 gen(5);
  WeightConfig lo, hi;
  lo.beta = 0.05;
  hi.beta = 0.2;
  for (int r = 0; r < 200; ++r) {
    const auto x = random_point(gen, 2, 3.0);
    const auto y = random_point(gen, 2, 3.0);
    EXPECT_LE(weighted_distance(x, y, lo), weighted_distance(x, y, hi) + 1e-12);
  }
}

TEST(WeightedDistance, SurvivesOverflowingWeights) {
  WeightConfig w;
  w.eta = 1.0;
  const auto x = vec({27.0});
  const auto y = vec({27.0 + 1e-13});
  ASSERT_TRUE(std::isinf(std::exp(w.eta * 27.0 * 27.0)));
  const double d = weighted_distance(x, y, w);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_GT(d, 0.0);
  EXPECT_THROW(weighted_distance(vec({0.0}), vec({40.0}), w), NumericError);
}

TEST(WeightedDistance, RejectsBadInput) {
  WeightConfig w;
  EXPECT_THROW(weighted_distance(vec({0.0}), vec({1.0}), w, 1), ConfigError);
  w.beta = 0.0;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(Contraction, OuSynchronousRatioIsDeterministic) {
  const double gamma = 1.0;
  const auto sys = presets::scalar_ou(gamma, 1.0);
  WeightConfig w;
  w.eta = 0.0;
  w.delta = 1.0;
  ProbeConfig probe;
  probe.horizon = 1.0;
  probe.n_couplings = 2;
  SchemeConfig cfg;
  cfg.dt = 1e-4;
  cfg.scheme = Scheme::euler;
  std::vector<CouplingPair> pairs;
  for (double x : {-1.5, -0.2, 0.0, 0.7, 2.0}) pairs.push_back({vec({x}), vec({x + 0.05}), Regime::close});
  const auto rep = contraction_from_pairs(sys, w, probe, pairs, cfg, 17);
  const double expected = std::pow(1.0 - gamma * cfg.dt, static_cast<double>(cfg.steps_for(1.0)));
  for (const auto& p : rep.pairs) EXPECT_NEAR(p.ratio, expected, 1e-10);
  EXPECT_NEAR(expected, std::exp(-gamma), 1e-4);
  EXPECT_TRUE(rep.contracts);
}

TEST(Contraction, IdenticalPairsSkipped) {
  const auto sys = presets::scalar_ou(1.0, 1.0);
  ProbeConfig probe;
  probe.n_couplings = 1;
  probe.horizon = 0.1;
  std::vector<CouplingPair> pairs;
  for (double x : {-1.0, 0.0, 1.0}) pairs.push_back({vec({x}), vec({x}), Regime::close});
  const auto rep = contraction_from_pairs(sys, WeightConfig{}, probe, pairs, SchemeConfig{}, 1);
  EXPECT_EQ(rep.overall.n_skipped, pairs.size());
  EXPECT_FALSE(rep.contracts);
}

TEST(Contraction, DrawsAllRegimes) {
  ProbeConfig probe;
  probe.n_pairs = 10;
  const WeightConfig w;
  const auto pairs = draw_pairs(2, w, probe, 9);
  ASSERT_EQ(pairs.size(), 30u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(pairs[i].regime, Regime::close);
    EXPECT_LE((pairs[i].x - pairs[i].y).norm(), probe.close_separation);
    EXPECT_EQ(pairs[10 + i].regime, Regime::distant_large);
    EXPECT_NEAR(pairs[10 + i].x.norm(), probe.far_radius, 1e-12);
    EXPECT_EQ(pairs[20 + i].regime, Regime::distant_sublevel);
    EXPECT_LE(w.L(pairs[20 + i].x), probe.level);
    EXPECT_TRUE(distance_branches(pairs[20 + i].x, pairs[20 + i].y, w).cap_active());
  }
}

// At t = 2 every regime contracts clearly. Near the unstable point x = 0 the
// synchronous ratio at t = 1 is close to 1, so the shorter horizon is left to
// the acceptance run.
TEST(Contraction, CubicContractsAtTwo) {
  const auto sys = presets::scalar_cubic();
  ProbeConfig probe;
  probe.n_pairs = 16;
  probe.n_couplings = 32;
  probe.horizon = 2.0;
  SchemeConfig cfg;
  cfg.dt = 2e-3;
  for (std::uint64_t seed : {2024u, 7u}) {
    const auto rep = contraction_estimate(sys, default_weights(1.0), probe, cfg, seed);
    EXPECT_EQ(rep.overall.n_pairs, 48u);
    EXPECT_EQ(rep.overall.n_skipped, 0u);
    EXPECT_LT(rep.overall.max_ratio, 1.0) << seed;
    EXPECT_TRUE(rep.contracts);
  }
}

TEST(Contraction, IndependentOfWorkerCount) {
  const auto sys = presets::scalar_cubic();
  ProbeConfig probe;
  probe.n_pairs = 4;
  probe.n_couplings = 4;
  probe.horizon = 0.2;
  set_worker_count(1);
  const auto a = contraction_estimate(sys, WeightConfig{}, probe, SchemeConfig{}, 5);
  set_worker_count(3);
  const auto b = contraction_estimate(sys, WeightConfig{}, probe, SchemeConfig{}, 5);
  set_worker_count(0);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) EXPECT_EQ(a.pairs[i].ratio, b.pairs[i].ratio);
}

TEST(Minorization, ClopperPearsonAllHits) {
  // For k = n the lower bound solves p^n = 1 - confidence.
  EXPECT_NEAR(clopper_pearson_lower(20, 20, 0.95), std::pow(0.05, 1.0 / 20.0), 1e-12);
  EXPECT_EQ(clopper_pearson_lower(0, 20, 0.95), 0.0);
  // k = 1: 1 - (1 - p)^n = 1 - confidence.
  EXPECT_NEAR(clopper_pearson_lower(1, 10, 0.9), 1.0 - std::pow(0.9, 0.1), 1e-12);
}

TEST(Minorization, CoveringGrid) {
  const auto g1 = covering_grid(1, 2.0, 5);
  ASSERT_EQ(g1.size(), 5u);
  EXPECT_DOUBLE_EQ(g1.front()[0], -2.0);
  EXPECT_DOUBLE_EQ(g1.back()[0], 2.0);
  const auto g2 = covering_grid(2, 1.0, 25);
  for (const auto& x : g2) EXPECT_LE(x.norm(), 1.0 + 1e-12);
  EXPECT_EQ(g2.size(), 13u);  // 5 x 5 lattice, corners and edge midpoints off the disc excluded
}

TEST(Minorization, OuMatchesGaussianTransition) {
  const auto sys = presets::scalar_ou(1.0, 1.0);
  WeightConfig w;
  w.eta = 0.0;
  ProbeConfig probe;
  probe.eps = 1.0;
  probe.horizon = 1.0;
  probe.sample_radius = 2.0;
  probe.n_hit_paths = 4000;
  SchemeConfig cfg;
  cfg.dt = 1e-2;
  const auto rep = minorization_probe(sys, w, probe, 5, cfg, 77);
  ASSERT_EQ(rep.starts.size(), 5u);
  // Exact law of the Euler chain: mean x (1 - dt)^n, variance dt sum (1 - dt)^{2k}.
  const std::size_t n = cfg.steps_for(1.0);
  const double a = 1.0 - cfg.dt;
  const double var = cfg.dt * (1.0 - std::pow(a, 2.0 * n)) / (1.0 - a * a);
  for (const auto& s : rep.starts) {
    const double m = s.x[0] * std::pow(a, static_cast<double>(n));
    const double p = normal_cdf((1.0 - m) / std::sqrt(var)) - normal_cdf((-1.0 - m) / std::sqrt(var));
    EXPECT_GT(p, 0.3);
    EXPECT_NEAR(s.probability, p, 4.0 * std::sqrt(p * (1 - p) / probe.n_hit_paths)) << s.x[0];
  }
  EXPECT_TRUE(rep.verdict);
  EXPECT_GT(rep.alpha_hat, 0.3);
}

TEST(Minorization, HugeBallAlwaysHit) {
  const auto sys = presets::scalar_cubic();
  ProbeConfig probe;
  probe.eps = 1e6;
  probe.n_hit_paths = 50;
  probe.horizon = 0.5;
  const auto rep = minorization_probe(sys, WeightConfig{}, probe, 4, SchemeConfig{}, 1);
  for (const auto& s : rep.starts) EXPECT_EQ(s.probability, 1.0);
}

TEST(Minorization, DisconnectedDeterministicSystemDetected) {
  const auto sys = presets::scalar_cubic(0.0);  // two attractors at +-1, no noise
  ProbeConfig probe;
  probe.x_star = vec({1.0});
  probe.eps = 0.5;
  probe.n_hit_paths = 20;
  probe.horizon = 5.0;
  const auto rep = minorization_probe(sys, WeightConfig{}, probe, 5, SchemeConfig{}, 1);
  EXPECT_FALSE(rep.verdict);
  EXPECT_GE(rep.n_zero_hit_starts, 2u);
  EXPECT_TRUE(rep.starts.front().zero_hits);  // start at -2 settles at -1
  EXPECT_EQ(rep.starts.back().probability, 1.0);  // start at +2 settles at +1
}
