#include <cmath>
#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "fdtlab/markov_testbed.hpp"

using namespace fdtlab;
using namespace fdtlab::testbed;

namespace {

Eigen::MatrixXd two_state(double p, double q) {
  Eigen::MatrixXd P(2, 2);
  P << 1 - p, p, q, 1 - q;
  return P;
}

// Complex-step derivative of <phi, pi(a)> at a = 0: solve the stationarity
// system for P0 + i h dP in complex arithmetic and read off Im / h.
double complex_step_oracle(const ChainFamily& fam, const Eigen::VectorXd& phi) {
  const double h = 1e-30;
  const Eigen::Index S = fam.P0().rows();
  Eigen::MatrixXcd P = fam.P0().cast<std::complex<double>>();
  P += std::complex<double>(0.0, h) * fam.dP().cast<std::complex<double>>();
  Eigen::MatrixXcd sys(S + 1, S);
  sys.topRows(S) = Eigen::MatrixXcd::Identity(S, S) - P.transpose();
  sys.row(S).setOnes();
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(S + 1);
  rhs[S] = 1.0;
  const Eigen::VectorXcd pi = sys.householderQr().solve(rhs);
  std::complex<double> acc = 0.0;
  for (Eigen::Index i = 0; i < S; ++i) acc += phi[i] * pi[i];
  return acc.imag() / h;
}

Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(gen);
  return v;
}

}  // namespace

TEST(Testbed, TwoStateStationaryClosedForm) {
  const double p = 0.3, q = 0.2;
  const auto pi = stationary(two_state(p, q));
  EXPECT_NEAR(pi[0], q / (p + q), 1e-14);
  EXPECT_NEAR(pi[1], p / (p + q), 1e-14);
}

TEST(Testbed, TwoStateDerivativeClosedForm) {
  const double p = 0.3, q = 0.2;
  Eigen::MatrixXd dP(2, 2);
  dP << -1, 1, 0, 0;  // d/dp
  const ChainFamily fam(two_state(p, q), dP);
  const Eigen::Vector2d phi(0.0, 1.0);
  const double expected = q / ((p + q) * (p + q));
  EXPECT_NEAR(linear_response_formula(fam, phi, 1), expected, 1e-12);
  EXPECT_NEAR(exact_derivative(fam, phi), expected, 1e-12);
}

TEST(Testbed, IdentityIsNotUnique) {
  EXPECT_THROW(stationary(Eigen::MatrixXd::Identity(3, 3)), AssumptionError);
}

TEST(Testbed, DoublyStochasticHasUniformLaw) {
  Eigen::MatrixXd P(3, 3);
  P << 0.2, 0.5, 0.3, 0.5, 0.1, 0.4, 0.3, 0.4, 0.3;
  const auto pi = stationary(P);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(pi[i], 1.0 / 3.0, 1e-14);
}

TEST(Testbed, RejectsBadRowsByName) {
  Eigen::MatrixXd P(2, 2);
  P << 0.5, 0.5, 0.4, 0.5;
  try {
    ChainFamily fam(P, Eigen::MatrixXd::Zero(2, 2));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("P0.row[1]"), std::string::npos);
  }
  Eigen::MatrixXd dP(2, 2);
  dP << 0.1, 0.0, 0.0, 0.0;
  EXPECT_THROW(ChainFamily(two_state(0.3, 0.2), dP), ConfigError);
  P << 1.2, -0.2, 0.5, 0.5;
  EXPECT_THROW(ChainFamily(P, Eigen::MatrixXd::Zero(2, 2)), ConfigError);
}

TEST(Testbed, ValidityInterval) {
  Eigen::MatrixXd dP(2, 2);
  dP << -1, 1, 0, 0;
  const ChainFamily fam(two_state(0.3, 0.2), dP);
  EXPECT_NEAR(fam.a_min(), -0.3, 1e-15);
  EXPECT_NEAR(fam.a_max(), 0.7, 1e-15);
  EXPECT_THROW(fam.at(0.71), ConfigError);
  EXPECT_NO_THROW(fam.at(0.69));
}

TEST(Testbed, RandomFamiliesMatchComplexStepOracle) {
  std::mt19937_64 gen(7);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const std::size_t S = 2 + k % 7;
    const auto fam = random_family(S, 1000 + k);
    ASSERT_LE(fam.a_min(), -0.2);
    ASSERT_GE(fam.a_max(), 0.2);
    const auto phi = random_vector(static_cast<Eigen::Index>(S), gen);
    const double oracle = complex_step_oracle(fam, phi);
    EXPECT_NEAR(linear_response_formula(fam, phi, 1), oracle, 1e-9) << "family " << k;
    EXPECT_NEAR(exact_derivative(fam, phi), oracle, 1e-9) << "family " << k;
  }
}

TEST(Testbed, FormulaIndependentOfPower) {
  const auto fam = random_family(5, 42);
  std::mt19937_64 gen(1);
  const auto phi = random_vector(5, gen);
  const double r1 = linear_response_formula(fam, phi, 1);
  for (std::size_t m : {2u, 3u, 7u}) EXPECT_NEAR(linear_response_formula(fam, phi, m), r1, 1e-11) << m;
}

TEST(Testbed, ShiftInvariance) {
  const auto fam = random_family(4, 3);
  std::mt19937_64 gen(2);
  const auto phi = random_vector(4, gen);
  const Eigen::VectorXd shifted = phi.array() + 3.7;
  EXPECT_NEAR(linear_response_formula(fam, shifted, 1), linear_response_formula(fam, phi, 1), 1e-12);
  EXPECT_NEAR(exact_derivative(fam, shifted), exact_derivative(fam, phi), 1e-12);
}

TEST(Testbed, InvariantPreservingDirectionGivesZero) {
  const auto base = random_family(5, 9);
  const auto pi = stationary(base.P0());
  const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(5, 5) - Eigen::VectorXd::Ones(5) * pi.transpose();
  const Eigen::MatrixXd dP = M * base.dP();
  const ChainFamily fam(base.P0(), dP);
  std::mt19937_64 gen(4);
  for (int r = 0; r < 5; ++r) {
    const auto phi = random_vector(5, gen);
    EXPECT_NEAR(linear_response_formula(fam, phi, 1), 0.0, 1e-12);
    EXPECT_NEAR(exact_derivative(fam, phi), 0.0, 1e-12);
  }
}

TEST(Testbed, CentralDifferenceIsSecondOrder) {
  const auto fam = random_family(6, 11);
  std::mt19937_64 gen(5);
  const auto phi = random_vector(6, gen);
  const double exact = exact_derivative(fam, phi);
  const double e1 = std::abs(central_difference(fam, phi, 0.04) - exact);
  const double e2 = std::abs(central_difference(fam, phi, 0.02) - exact);
  ASSERT_GT(e2, 0.0);
  EXPECT_NEAR(std::log2(e1 / e2), 2.0, 0.2);
}

TEST(Testbed, PeriodicChainHasNoGap) {
  Eigen::MatrixXd P(2, 2);
  P << 0, 1, 1, 0;
  Eigen::MatrixXd dP(2, 2);
  dP << 0, 0, 1, -1;
  const ChainFamily fam(P, dP);
  EXPECT_THROW(linear_response_formula(fam, Eigen::Vector2d(1.0, 0.0), 1), AssumptionError);
  EXPECT_NO_THROW(exact_derivative(fam, Eigen::Vector2d(1.0, 0.0)));
}

TEST(Testbed, TwoStateContractionAndSlem) {
  const double p = 0.3, q = 0.2;
  Eigen::MatrixXd dP(2, 2);
  dP << -1, 1, 0, 0;
  const ChainFamily fam(two_state(p, q), dP);
  const auto rep = gap_and_lipschitz_report(fam, ChainWeights::ones(2), {0.01, -0.01});
  EXPECT_NEAR(rep.contraction, std::abs(1 - p - q), 1e-13);
  EXPECT_NEAR(rep.slem, std::abs(1 - p - q), 1e-13);
}

TEST(Testbed, RankOneChainContractsToZero) {
  const Eigen::Vector3d pi(0.2, 0.3, 0.5);
  const Eigen::MatrixXd P = Eigen::Vector3d::Ones() * pi.transpose();
  EXPECT_NEAR(centred_contraction(P, pi, ChainWeights::ones(3)), 0.0, 1e-15);
  EXPECT_NEAR(slem(P), 0.0, 1e-12);
}

TEST(Testbed, ContractionMatchesRandomSearch) {
  const auto fam = random_family(4, 21);
  const auto pi = stationary(fam.P0());
  const ChainWeights w(Eigen::Vector4d(1.0, 2.0, 1.5, 3.0));
  const double exact = centred_contraction(fam.P0(), pi, w);
  std::mt19937_64 gen(8);
  double best = 0.0;
  for (int r = 0; r < 20000; ++r) {
    Eigen::VectorXd phi = random_vector(4, gen);
    phi -= pi.dot(phi) * Eigen::VectorXd::Ones(4);
    best = std::max(best, w.norm(fam.P0() * phi) / w.norm(phi));
  }
  EXPECT_LE(best, exact + 1e-12);
  EXPECT_GT(best, 0.9 * exact);
}

TEST(Testbed, LipschitzRatiosApproachDerivativeNorm) {
  const auto fam = random_family(5, 31);
  const auto w = ChainWeights::ones(5);
  const auto rep = gap_and_lipschitz_report(fam, w, {1e-4, -1e-4, 0.1});
  const double dnorm = w.dual_norm(stationary_derivative(fam));
  EXPECT_NEAR(rep.lipschitz_ratio[0], dnorm, 1e-3 * dnorm);
  EXPECT_NEAR(rep.lipschitz_ratio[1], dnorm, 1e-3 * dnorm);
  EXPECT_GE(rep.lipschitz_max, rep.lipschitz_ratio[2]);
  EXPECT_THROW(gap_and_lipschitz_report(fam, w, {0.0}), ConfigError);
}

TEST(Testbed, WeightsBelowOneRejected) {
  EXPECT_THROW(ChainWeights(Eigen::Vector2d(1.0, 0.5)), ConfigError);
}
