#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fdtlab/poly_system.hpp"
#include "fdtlab/presets.hpp"

using namespace fdtlab;

namespace {

SymMultiMap random_map(std::size_t k, std::size_t d, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  SymMultiMap m(k, d);
  for (Eigen::Index i = 0; i < m.coefficients().rows(); ++i)
    for (Eigen::Index j = 0; j < m.coefficients().cols(); ++j) m.coefficients()(i, j) = nd(gen);
  return m;
}

PolySystem random_system(std::size_t d, std::size_t N, std::mt19937_64& gen) {
  std::vector<SymMultiMap> maps;
  for (std::size_t k = 0; k <= N; ++k) maps.push_back(random_map(k, d, gen));
  std::normal_distribution<double> nd;
  Eigen::MatrixXd sigma(static_cast<Eigen::Index>(d), 2);
  for (Eigen::Index i = 0; i < sigma.size(); ++i) sigma(i) = nd(gen);
  return PolySystem(std::move(maps), sigma);
}

Eigen::VectorXd random_vec(std::size_t d, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = nd(gen);
  return v;
}

// Independent oracle: loop over every full index tuple and look the entry up
// through the public accessor.
Eigen::VectorXd brute_force_diagonal(const PolySystem& sys, const Eigen::VectorXd& x) {
  const std::size_t d = sys.dim();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& m : sys.maps()) {
    const std::size_t k = m.order();
    std::vector<std::size_t> t(k, 0);
    std::size_t total = 1;
    for (std::size_t j = 0; j < k; ++j) total *= d;
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      double prod = 1.0;
      for (std::size_t j = 0; j < k; ++j) {
        t[j] = rem % d;
        rem /= d;
        prod *= x[static_cast<Eigen::Index>(t[j])];
      }
      for (std::size_t i = 0; i < d; ++i) out[static_cast<Eigen::Index>(i)] += m.entry(i, t) * prod;
    }
  }
  return out;
}

}  // namespace

TEST(SymMultiMap, CanonicalEnumerationSizes) {
  EXPECT_EQ(SymMultiMap(0, 3).size(), 1u);
  EXPECT_EQ(SymMultiMap(1, 3).size(), 3u);
  EXPECT_EQ(SymMultiMap(2, 3).size(), 6u);
  EXPECT_EQ(SymMultiMap(3, 3).size(), 10u);
  EXPECT_EQ(SymMultiMap(3, 4).size(), 20u);
}

TEST(SymMultiMap, CanonicalIndexMatchesEnumeration) {
  const SymMultiMap m(3, 4);
  for (std::size_t c = 0; c < m.size(); ++c) EXPECT_EQ(m.canonical_index(m.multi_indices()[c]), c);
}

TEST(SymMultiMap, MultiplicityAndMonomials) {
  EXPECT_EQ(SymMultiMap::multiplicity({0, 0, 0}), 1u);
  EXPECT_EQ(SymMultiMap::multiplicity({0, 0, 1}), 3u);
  EXPECT_EQ(SymMultiMap::multiplicity({0, 1, 2}), 6u);
  SymMultiMap m(2, 2);
  const std::size_t idx[] = {0, 1};
  m.add_monomial(1, idx, 3.0);  // 3 x_0 x_1 in output 1
  Eigen::VectorXd x(2);
  x << 2.0, 5.0;
  EXPECT_DOUBLE_EQ(m.diagonal(x)[1], 30.0);
  EXPECT_DOUBLE_EQ(m.diagonal(x)[0], 0.0);
}

TEST(SymMultiMap, PermutationSymmetry) {
  std::mt19937_64 gen(11);
  const SymMultiMap m = random_map(3, 3, gen);
  std::vector<Eigen::VectorXd> args{random_vec(3, gen), random_vec(3, gen), random_vec(3, gen)};
  const Eigen::VectorXd ref = m(args);
  std::vector<int> order{0, 1, 2};
  do {
    std::vector<Eigen::VectorXd> permuted{args[order[0]], args[order[1]], args[order[2]]};
    EXPECT_LT((m(permuted) - ref).norm(), 1e-14 * (1.0 + ref.norm()));
  } while (std::next_permutation(order.begin(), order.end()));
}

TEST(SymMultiMap, DiagonalMatchesMultilinear) {
  std::mt19937_64 gen(5);
  const SymMultiMap m = random_map(3, 2, gen);
  const Eigen::VectorXd x = random_vec(2, gen);
  std::vector<Eigen::VectorXd> args{x, x, x};
  EXPECT_LT((m(args) - m.diagonal(x)).norm(), 1e-13);
}

TEST(EvalDrift, CubicScalar) {
  Eigen::VectorXd x(1);
  x << 2.0;
  EXPECT_DOUBLE_EQ(eval_drift(presets::scalar_cubic(), x)[0], -6.0);
}

TEST(EvalDrift, ZeroMaps) {
  const PolySystem sys = PolySystem::zeros(3, 2, 1);
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 3.5;
  EXPECT_EQ(eval_drift(sys, x).norm(), 0.0);
}

TEST(EvalDrift, MatchesBruteForceContraction) {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 10; ++rep) {
    const PolySystem sys = random_system(3, 2, gen);
    const Eigen::VectorXd x = random_vec(3, gen);
    const Eigen::VectorXd fast = eval_drift(sys, x);
    const Eigen::VectorXd slow = brute_force_diagonal(sys, x);
    EXPECT_LT((fast - slow).norm(), 1e-14 * std::max(1.0, slow.norm()));
  }
}

TEST(EvalDrift, DimensionMismatchIsConfigError) {
  EXPECT_THROW(eval_drift(presets::scalar_cubic(), Eigen::VectorXd::Zero(2)), ConfigError);
}

TEST(EvalDrift, Multilinearity) {
  std::mt19937_64 gen(8);
  const PolySystem sys = random_system(3, 3, gen);
  const Eigen::VectorXd x = random_vec(3, gen);
  for (const auto& m : sys.maps()) {
    for (double lambda : {-2.0, -1.0, 0.5, 3.0}) {
      const Eigen::VectorXd scaled = m.diagonal(lambda * x);
      const Eigen::VectorXd expect = std::pow(lambda, static_cast<double>(m.order())) * m.diagonal(x);
      EXPECT_LT((scaled - expect).norm(), 1e-12 * std::max(1.0, expect.norm()));
    }
  }
}

TEST(EvalDerivatives, CubicJacobian) {
  Eigen::VectorXd x(1), v(1);
  x << 2.0;
  v << 1.0;
  const auto der = eval_derivatives(presets::scalar_cubic(), x, v, v);
  EXPECT_DOUBLE_EQ(der.jacobian(0, 0), -11.0);
  EXPECT_DOUBLE_EQ(der.second_variation[0], -12.0);  // -6x
}

TEST(EvalDerivatives, LinearHasNoSecondVariation) {
  std::mt19937_64 gen(2);
  const PolySystem sys = presets::ou_nd(Eigen::MatrixXd::Random(3, 3), Eigen::MatrixXd::Identity(3, 3));
  for (int i = 0; i < 5; ++i) {
    const auto der = eval_derivatives(sys, random_vec(3, gen), random_vec(3, gen), random_vec(3, gen));
    EXPECT_EQ(der.second_variation.norm(), 0.0);
  }
}

TEST(EvalDerivatives, FiniteDifferenceConsistency) {
  std::mt19937_64 gen(17);
  const double eps = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    const PolySystem sys = random_system(3, 3, gen);
    const Eigen::VectorXd x = random_vec(3, gen), xi = random_vec(3, gen), zeta = random_vec(3, gen);
    const auto der = eval_derivatives(sys, x, xi, zeta);
    const Eigen::VectorXd fd1 = (eval_drift(sys, x + eps * xi) - eval_drift(sys, x - eps * xi)) / (2 * eps);
    const Eigen::VectorXd jxi = der.jacobian * xi;
    EXPECT_LT((fd1 - jxi).norm() / jxi.norm(), 1e-6);
    // D^2 N(x)(xi, zeta) from central differences of the Jacobian action.
    const Eigen::VectorXd jp = eval_derivatives(sys, x + eps * zeta, xi, zeta).jacobian * xi;
    const Eigen::VectorXd jm = eval_derivatives(sys, x - eps * zeta, xi, zeta).jacobian * xi;
    const Eigen::VectorXd fd2 = (jp - jm) / (2 * eps);
    EXPECT_LT((fd2 - der.second_variation).norm() / der.second_variation.norm(), 1e-6);
  }
}

TEST(EvalDerivatives, QuadraticFiniteDifferenceTight) {
  std::mt19937_64 gen(99);
  const double eps = 1e-5;
  const PolySystem sys = random_system(3, 2, gen);
  const Eigen::VectorXd x = random_vec(3, gen), xi = random_vec(3, gen);
  const auto der = eval_derivatives(sys, x, xi, xi);
  const Eigen::VectorXd fd = (eval_drift(sys, x + eps * xi) - eval_drift(sys, x - eps * xi)) / (2 * eps);
  EXPECT_LT((fd - der.jacobian * xi).norm() / (der.jacobian * xi).norm(), 1e-8);
}

TEST(ApplyDirection, ZeroIsIdentity) {
  const PolySystem sys = presets::triad();
  const auto dir = ParamDirection::forcing(sys, Eigen::Vector3d(1.0, 0.0, 0.0));
  EXPECT_TRUE(apply_direction(sys, dir, 0.0) == sys);
}

TEST(ApplyDirection, ForcingShiftsConstantTermOnly) {
  const PolySystem sys = presets::triad();
  const Eigen::Vector3d e(0.0, 1.0, 0.0);
  const PolySystem shifted = apply_direction(sys, ParamDirection::forcing(sys, e), 0.3);
  EXPECT_TRUE(shifted.map(0).coefficients().col(0).isApprox(0.3 * e));
  for (std::size_t k = 1; k <= sys.degree(); ++k) EXPECT_TRUE(shifted.map(k) == sys.map(k));
  EXPECT_TRUE(shifted.sigma() == sys.sigma());
}

TEST(ApplyDirection, Composition) {
  const PolySystem sys = presets::scalar_cubic();
  const auto dir = ParamDirection::linear_entry(sys, 0, 0);
  // Dyadic steps keep the coefficient arithmetic exact.
  const PolySystem twice = apply_direction(apply_direction(sys, dir, 0.25), dir, 0.5);
  EXPECT_TRUE(twice == apply_direction(sys, dir, 0.75));
}

TEST(ApplyDirection, ShapeMismatchAndZeroDirection) {
  const PolySystem sys = presets::scalar_cubic();
  const auto dir = ParamDirection::forcing(presets::triad(), Eigen::Vector3d(1, 0, 0));
  EXPECT_THROW(apply_direction(sys, dir, 0.1), ConfigError);
  EXPECT_THROW(ParamDirection::forcing(sys, Eigen::VectorXd::Zero(1)), ConfigError);
}

TEST(PolySystem, InvariantsEnforced) {
  std::vector<SymMultiMap> maps{SymMultiMap(0, 2), SymMultiMap(2, 2)};
  EXPECT_THROW(PolySystem(maps, Eigen::MatrixXd::Identity(2, 2)), ConfigError);
  std::vector<SymMultiMap> only_const{SymMultiMap(0, 2)};
  EXPECT_THROW(PolySystem(only_const, Eigen::MatrixXd::Identity(2, 2)), ConfigError);
  std::vector<SymMultiMap> ok{SymMultiMap(0, 2), SymMultiMap(1, 2)};
  EXPECT_THROW(PolySystem(ok, Eigen::MatrixXd::Identity(3, 3)), ConfigError);
  EXPECT_THROW(PolySystem(ok, Eigen::MatrixXd(2, 0)), ConfigError);
}

TEST(ParameterCount, SymmetricTensorCount) {
  // d = 2, N = 2, M = 1: 2 * (1 + 1 + 2 + 3) = 14.
  EXPECT_EQ(parameter_count(2, 2, 1), 14u);
  EXPECT_EQ(parameter_count(1, 3, 1), 5u);
}
