#include "netprice/solver.hpp"

#include <random>

#include <gtest/gtest.h>

#include "netprice/oracle.hpp"
#include "test_util.hpp"

namespace np = netprice;
using np::testutil::cycle_instance;

namespace {

std::function<Eigen::VectorXd(const Eigen::VectorXd&)> matrix_op(const Eigen::MatrixXd& m) {
  return [&m](const Eigen::VectorXd& v) { return Eigen::VectorXd(m * v); };
}

}  // namespace

TEST(TrUpdate, RatioBranches) {
  np::SolverConfig cfg;
  EXPECT_DOUBLE_EQ(np::tr_update(0.9, 1.0, 1.0, cfg), 2.0);   // expand on boundary
  EXPECT_DOUBLE_EQ(np::tr_update(0.1, 1.0, 1.0, cfg), 0.25);  // shrink
  EXPECT_DOUBLE_EQ(np::tr_update(0.5, 1.0, 0.4, cfg), 1.0);   // keep (interior)
  EXPECT_DOUBLE_EQ(np::tr_update(0.9, 1.0, 0.4, cfg), 1.0);   // strong but interior
  // cap at delta_max
  cfg.delta_max = 1.5;
  EXPECT_DOUBLE_EQ(np::tr_update(0.9, 1.0, 1.0, cfg), 1.5);
}

TEST(QpSubproblem, NewtonStepInsideRegion) {
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd g(3);
  g << 0.3, -0.2, 0.1;
  const auto res = np::qp_subproblem(g, matrix_op(h), Eigen::MatrixXd(), Eigen::VectorXd(),
                                     /*delta=*/10.0);
  EXPECT_LE((res.step + g).norm(), 1e-12);
  EXPECT_FALSE(res.boundary);
  EXPECT_NEAR(res.predicted_reduction, 0.5 * g.squaredNorm(), 1e-12);
}

TEST(QpSubproblem, CauchyPointOnBoundary) {
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd g(3);
  g << 3.0, 4.0, 0.0;  // ||g|| = 5
  const double delta = 1.0;
  const auto res = np::qp_subproblem(g, matrix_op(h), Eigen::MatrixXd(), Eigen::VectorXd(),
                                     delta);
  EXPECT_TRUE(res.boundary);
  EXPECT_LE((res.step + delta * g / g.norm()).norm(), 1e-12);
}

TEST(QpSubproblem, NegativeCurvatureExitsOnBoundary) {
  const Eigen::MatrixXd h = -Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd g(3);
  g << 1.0, 0.0, 0.0;
  const double delta = 2.5;
  const auto res = np::qp_subproblem(g, matrix_op(h), Eigen::MatrixXd(), Eigen::VectorXd(),
                                     delta);
  EXPECT_TRUE(res.negative_curvature);
  EXPECT_NEAR(res.step.norm(), delta, 1e-12);
}

TEST(QpSubproblem, EqualityConstraintAndMultiplier) {
  // min 0.5||d||^2 + g.d  s.t.  d_1 = 0.5
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g(2);
  g << 1.0, 0.0;
  Eigen::MatrixXd aeq(1, 2);
  aeq << 0.0, 1.0;
  Eigen::VectorXd beq(1);
  beq << -0.5;
  const auto res = np::qp_subproblem(g, matrix_op(h), aeq, beq, 10.0);
  Eigen::VectorXd expected(2);
  expected << -1.0, 0.5;
  EXPECT_LE((res.step - expected).norm(), 1e-10);
  ASSERT_EQ(res.multipliers.size(), 1);
  EXPECT_NEAR(res.multipliers[0], -0.5, 1e-10);
  EXPECT_FALSE(res.inconsistent);
}

TEST(QpSubproblem, InconsistentRowsAreFlagged) {
  const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(2);
  Eigen::MatrixXd aeq(2, 2);
  aeq << 1.0, 0.0, 1.0, 0.0;  // duplicated normal
  Eigen::VectorXd beq(2);
  beq << 1.0, -1.0;  // contradictory right-hand sides
  const auto res = np::qp_subproblem(g, matrix_op(h), aeq, beq, 10.0);
  EXPECT_TRUE(res.inconsistent);
}

TEST(Merit, PenaltyAndViolationComposition) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 40, 4);
  const Eigen::VectorXd p = Eigen::VectorXd::Constant(16, 9.5);  // flows clip to zero
  np::Evaluator ev(inst, scen);
  const auto fe = ev.flows(p);
  const double f = ev.objective(fe, p);
  const Eigen::VectorXd c = ev.constraint(fe);
  ASSERT_GT(c.minCoeff(), 0.0);  // l > 0 and no flow: violated
  EXPECT_DOUBLE_EQ(np::merit(inst, scen, p, 0.0), f);
  const double penalty = 7.0;
  EXPECT_NEAR(np::merit(inst, scen, p, penalty), f + penalty * c.sum(), 1e-12);
  // feasible point: merit equals the objective
  const Eigen::VectorXd p0 = Eigen::VectorXd::Zero(16);
  const auto fe0 = ev.flows(p0);
  ASSERT_LE(ev.constraint(fe0).maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(np::merit(inst, scen, p0, penalty), ev.objective(fe0, p0));
}

TEST(Solve, StrictlyConvexQuadraticMatchesClosedForm) {
  // all flows strictly interior at every relevant p: the objective is an
  // exact quadratic and the solver must land on its minimizer immediately
  const int r = 6;
  auto em = np::gen_elasticity(r, 0.5, 3);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(r, -0.1);
  Eigen::VectorXd coe = Eigen::VectorXd::Constant(r, 0.05);
  auto inst = cycle_instance(r, em.B, s, coe, /*mu=*/Eigen::VectorXd::Constant(r, 10.0),
                             /*sigma=*/0.1, /*x_upper=*/100.0, /*p_lo=*/-1e9,
                             /*p_hi=*/1e9, /*lambda=*/1.0);
  const auto scen = np::sample_scenarios(inst.elasticity, 20, 9);

  // closed form: (lambda I + B^T Q B) p* = -B^T (Q zeta_bar - s)
  const Eigen::MatrixXd q = 2.0 * Eigen::MatrixXd(coe.asDiagonal());
  const Eigen::VectorXd zeta_bar = scen.xi.rowwise().mean();
  const Eigen::MatrixXd lhs =
      Eigen::MatrixXd::Identity(r, r) + inst.elasticity.B.transpose() * q * inst.elasticity.B;
  const Eigen::VectorXd rhs = -inst.elasticity.B.transpose() * (q * zeta_bar - s);
  const Eigen::VectorXd p_star = lhs.ldlt().solve(rhs);

  np::SolverConfig cfg;
  cfg.tol_kkt = 1e-10;
  cfg.delta0 = 50.0;
  const auto st = np::solve(inst, scen, cfg, Eigen::VectorXd::Zero(r));
  EXPECT_EQ(st.status, np::SolveStatus::converged);
  EXPECT_LE(st.iterations, 3);
  EXPECT_LE((st.p - p_star).norm(), 1e-8);
  // sanity: interior flows at the solution
  np::Evaluator ev(inst, scen);
  EXPECT_EQ(ev.flows(st.p).active_counts.minCoeff(), 20);
}

TEST(Solve, ToyInstanceConvergesToKktPoint) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 100, 1);
  np::SolverConfig cfg;
  cfg.tol_kkt = 1e-12;
  cfg.delta0 = 8.0;
  const auto st = np::solve(inst, scen, cfg);  // p0 defaults to the midpoint
  EXPECT_EQ(st.status, np::SolveStatus::converged);
  EXPECT_LE(st.kkt_stationarity, 1e-10);
  EXPECT_LE(st.feasibility, 1e-10);
  EXPECT_LE(st.complementarity, 1e-10);
  EXPECT_LE(st.iterations, 30);
  EXPECT_TRUE((st.p.array() >= inst.p_lower.array()).all());
  EXPECT_TRUE((st.p.array() <= inst.p_upper.array()).all());
}

TEST(Solve, InfeasibleDemandIsDetected) {
  auto inst = np::gen_toy_instance();
  // each commodity is one route capped at x_u = 1, so mean flow can never
  // reach 2
  inst.commodity.demand_lower = Eigen::VectorXd::Constant(2, 2.0);
  const auto scen = np::sample_scenarios(inst.elasticity, 60, 2);
  np::SolverConfig cfg;
  cfg.max_iter = 300;
  const auto st = np::solve(inst, scen, cfg);
  EXPECT_EQ(st.status, np::SolveStatus::infeasible);
  EXPECT_GT(st.feasibility, 1.0);
}

TEST(Solve, DeterministicTrace) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 80, 5);
  np::SolverConfig cfg;
  cfg.tol_kkt = 1e-10;
  cfg.delta0 = 8.0;
  const auto a = np::solve(inst, scen, cfg);
  const auto b = np::solve(inst, scen, cfg);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  EXPECT_TRUE((a.p.array() == b.p.array()).all());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].objective, b.trace[i].objective);
    EXPECT_EQ(a.trace[i].rho, b.trace[i].rho);
    EXPECT_EQ(a.trace[i].delta, b.trace[i].delta);
    EXPECT_EQ(a.trace[i].accepted, b.trace[i].accepted);
  }
}

TEST(Solve, DensePathMatchesSparsePath) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 100, 1);
  np::SolverConfig cfg;
  cfg.tol_kkt = 1e-12;
  cfg.delta0 = 8.0;
  auto dense_cfg = cfg;
  dense_cfg.path = np::Path::dense;
  const auto sp = np::solve(inst, scen, cfg);
  const auto dn = np::solve(inst, scen, dense_cfg);
  EXPECT_EQ(sp.status, np::SolveStatus::converged);
  EXPECT_EQ(dn.status, np::SolveStatus::converged);
  EXPECT_LE((sp.p - dn.p).norm(), 1e-8);
  EXPECT_NEAR(sp.objective, dn.objective, 1e-8 * std::max(1.0, std::abs(sp.objective)));
}

TEST(Solve, AcceptedObjectiveTrendsDownOnceFeasible) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 100, 1);
  np::SolverConfig cfg;
  cfg.tol_kkt = 1e-12;
  cfg.delta0 = 8.0;
  const auto st = np::solve(inst, scen, cfg);
  ASSERT_EQ(st.status, np::SolveStatus::converged);
  double last = std::numeric_limits<double>::infinity();
  for (const auto& rec : st.trace) {
    if (!rec.accepted || rec.violation > cfg.tol_kkt) continue;
    EXPECT_LE(rec.objective, last + 1e-9);
    last = rec.objective;
  }
}

TEST(Solve, NonsmoothKinkHandledByTrustRegion) {
  // scalar fixture with lambda = 1 started left of the kink at p = -0.5:
  // the solver must settle on the kink (the global minimizer), where both
  // one-sided directional derivatives are nonnegative
  const auto inst = np::fixtures::scalar_fixture(1.0);
  np::ScenarioSet scen;
  scen.xi = Eigen::MatrixXd::Zero(1, 1);
  scen.count = 1;
  np::SolverConfig cfg;
  cfg.max_iter = 400;
  const auto st = np::solve(inst, scen, cfg, Eigen::VectorXd::Constant(1, -0.9));
  EXPECT_NE(st.status, np::SolveStatus::numerical_failure);
  EXPECT_NEAR(st.p[0], -0.5, 1e-6);
  const auto formula = [](double p) {
    return 0.5 * p * p - std::min(0.5, std::max(0.0, -p));
  };
  const double h = 1e-7;
  const double dd_right = (formula(st.p[0] + h) - formula(st.p[0])) / h;
  const double dd_left = (formula(st.p[0] - h) - formula(st.p[0])) / h;
  EXPECT_GE(dd_right, -1e-6);
  EXPECT_GE(dd_left, -1e-6);
}

TEST(Solve, MaxIterStatusWhenBudgetTooSmall) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 50, 3);
  np::SolverConfig cfg;
  cfg.max_iter = 1;
  const auto st = np::solve(inst, scen, cfg);
  EXPECT_EQ(st.status, np::SolveStatus::max_iter);
  EXPECT_EQ(st.trace.size(), 1u);
}

TEST(Solve, RejectsOutOfBoundsStart) {
  const auto inst = np::gen_toy_instance();
  const auto scen = np::sample_scenarios(inst.elasticity, 10, 3);
  EXPECT_THROW(np::solve(inst, scen, {}, Eigen::VectorXd::Constant(16, -1.0)),
               np::DomainError);
}
