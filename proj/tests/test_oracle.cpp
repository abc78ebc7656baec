#include "netprice/oracle.hpp"

#include <random>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace np = netprice;
namespace oracle = np::oracle;
using np::testutil::random_vector;

TEST(FdGradient, QuadraticIsExactToSecondOrder) {
  const auto f = [](const Eigen::VectorXd& p) { return 0.5 * p.squaredNorm(); };
  Eigen::VectorXd p = Eigen::VectorXd::Zero(4);
  p[0] = 1.0;
  const Eigen::VectorXd g = oracle::fd_gradient(f, p, 1e-4);
  EXPECT_LE((g - p).cwiseAbs().maxCoeff(), 10.0 * 1e-8);
}

TEST(FdGradient, LinearIsExactToRoundoff) {
  Eigen::VectorXd a(3);
  a << 2.0, -1.0, 0.25;
  const auto f = [&](const Eigen::VectorXd& p) { return a.dot(p); };
  const Eigen::VectorXd g = oracle::fd_gradient(f, Eigen::VectorXd::Ones(3), 1e-5);
  EXPECT_LE((g - a).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FdGradient, RejectsNonpositiveStep) {
  const auto f = [](const Eigen::VectorXd& p) { return p.sum(); };
  EXPECT_THROW(oracle::fd_gradient(f, Eigen::VectorXd::Ones(2), 0.0), np::DomainError);
}

TEST(DenseReference, ToyInstanceQuantitiesAreFinite) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 50, 19);
  const auto rep = oracle::dense_reference(inst, scen, Eigen::VectorXd::Constant(16, 0.5));
  EXPECT_TRUE(std::isfinite(rep.objective));
  EXPECT_TRUE(rep.gradient.allFinite());
  EXPECT_TRUE(rep.constraint.allFinite());
  ASSERT_TRUE(rep.hessian.has_value());
  EXPECT_TRUE(rep.hessian->allFinite());
}

TEST(DenseReference, ScalarFixtureMatchesHandValues) {
  const auto inst = np::fixtures::scalar_fixture(5.0);
  np::ScenarioSet scen;
  scen.xi = Eigen::MatrixXd::Zero(1, 2);
  scen.count = 2;
  const auto rep = oracle::dense_reference(inst, scen, Eigen::VectorXd::Constant(1, -1.0));
  EXPECT_NEAR(rep.objective, 2.0, 1e-15);  // 2.5 - 0.5
}

TEST(DenseReference, AgreesWithFastPathsEverywhere) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const auto inst = np::gen_random_instance(35 + 5 * trial, 2, 60 + trial);
    const auto scen = np::sample_scenarios(inst.elasticity, 40, trial + 1);
    const Eigen::VectorXd p = random_vector(rng, inst.route_count(), 0.0, 2.0);
    const auto ref = oracle::dense_reference(inst, scen, p);
    np::Evaluator ev(inst, scen, np::Path::sparse);
    const auto fe = ev.flows(p);
    EXPECT_NEAR(ev.objective(fe, p), ref.objective,
                1e-10 * std::max(1.0, std::abs(ref.objective)));
    EXPECT_LE((ev.gradient_sparse(fe, p) - ref.gradient).norm(),
              1e-10 * std::max(1.0, ref.gradient.norm()));
    EXPECT_LE((ev.constraint(fe) - ref.constraint).norm(),
              1e-10 * std::max(1.0, ref.constraint.norm()));
    EXPECT_LE((ev.constraint_jacobian(fe) - ref.constraint_jacobian).norm(),
              1e-10 * std::max(1.0, ref.constraint_jacobian.norm()));
    EXPECT_LE((ev.hessian(fe, np::Path::sparse) - *ref.hessian).norm(),
              1e-10 * std::max(1.0, ref.hessian->norm()));
  }
}

TEST(DenseReference, CapIsEnforced) {
  const auto inst = np::gen_random_instance(50, 2, 2);
  const auto scen = np::sample_scenarios(inst.elasticity, 5, 1);
  EXPECT_THROW(oracle::dense_reference(inst, scen, Eigen::VectorXd::Zero(50), 32),
               np::CapabilityError);
}

TEST(CensoredMoment, DegenerateAndLimitCases) {
  EXPECT_DOUBLE_EQ(oracle::censored_moment_reference(0.3, 0.0, 0.0, 1.0), 0.3);
  EXPECT_DOUBLE_EQ(oracle::censored_moment_reference(-2.0, 0.0, 0.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(oracle::censored_moment_reference(9.0, 0.0, 0.0, 1.0), 1.0);
  // sigma -> 0 limit at an interior mean
  EXPECT_NEAR(oracle::censored_moment_reference(0.5, 1e-12, 0.0, 1.0), 0.5, 1e-9);
}

TEST(CensoredMoment, HalfNormalMean) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_NEAR(oracle::censored_moment_reference(0.0, 1.0, 0.0, inf),
              0.3989422804014327, 1e-12);
}

TEST(CensoredMoment, MatchesMonteCarlo) {
  // cross-check the closed form against a large sample
  np::ElasticityModel em;
  em.B = -Eigen::MatrixXd::Identity(1, 1);
  em.mu = Eigen::VectorXd::Constant(1, 0.3);
  em.sigma_factor = Eigen::MatrixXd::Constant(1, 1, 0.8);
  const int n = 2000000;
  const auto scen = np::sample_scenarios(em, n, 123);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::min(std::max(scen.xi(0, i), 0.0), 1.0);
  const double mc = acc / double(n);
  const double analytic = oracle::censored_moment_reference(0.3, 0.8, 0.0, 1.0);
  EXPECT_NEAR(mc, analytic, 4.0 / std::sqrt(double(n)));
}

TEST(CheckGradient, ToyInstanceAtInteriorPoint) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 50, 7);
  std::mt19937_64 rng(77);
  Eigen::VectorXd p;
  double prox = 0.0;
  const double guard = 10.0 * 1e-6 * inst.elasticity.B.norm();
  do {
    p = random_vector(rng, 16, 0.0, 3.0);
    prox = oracle::boundary_proximity(inst, scen, p);
  } while (prox < guard);
  const auto rep = oracle::check_gradient(inst, scen, p, 1e-6);
  EXPECT_LE(rep.max_rel_error, 1e-5);
  EXPECT_GE(rep.boundary_proximity, guard);
}
