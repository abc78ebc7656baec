#pragma once

// Independent verification tools: finite differences, a dense reference
// implementation built from first principles (explicit Q, per-sample loops),
// and closed-form censored-normal moments.
//
// The reference paths here deliberately share no kernel code with the
// evaluator: Q is assembled from the route lists and cost vectors, and every
// quantity is computed by an explicit loop over samples.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "netprice/common.hpp"
#include "netprice/evaluator.hpp"
#include "netprice/problem.hpp"

namespace netprice {
namespace oracle {

struct FdReport {
  double max_rel_error = 0.0;
  int worst_index = -1;
  double boundary_proximity = 0.0;
  double step = 0.0;
};

/// Central-difference gradient of a scalar function.
template <class F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& p, double step) {
  if (!(step > 0.0)) throw DomainError("fd step must be positive");
  Eigen::VectorXd g(p.size());
  Eigen::VectorXd q = p;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    q[i] = p[i] + step;
    const double fp = f(q);
    q[i] = p[i] - step;
    const double fm = f(q);
    q[i] = p[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Central-difference Jacobian of a vector function (rows = outputs).
template <class G>
Eigen::MatrixXd fd_jacobian(G&& g, const Eigen::VectorXd& p, double step) {
  if (!(step > 0.0)) throw DomainError("fd step must be positive");
  Eigen::VectorXd q = p;
  q[0] = p[0] + step;
  Eigen::VectorXd probe = g(q);
  q[0] = p[0];
  Eigen::MatrixXd jac(probe.size(), p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    q[i] = p[i] + step;
    const Eigen::VectorXd gp = g(q);
    q[i] = p[i] - step;
    const Eigen::VectorXd gm = g(q);
    q[i] = p[i];
    jac.col(i) = (gp - gm) / (2.0 * step);
  }
  return jac;
}

/// Smallest distance of any pre-projection flow to the projection corners
/// {0, x_u}; finite-difference points this close to a kink are rejected.
inline double boundary_proximity(const ProblemInstance& inst, const ScenarioSet& scen,
                                 const Eigen::VectorXd& p) {
  Eigen::MatrixXd y = scen.xi;
  y.colwise() += (inst.elasticity.B * p).eval();
  double prox = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < y.cols(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      prox = std::min(prox,
                      std::min(std::abs(y(j, i)), std::abs(inst.x_upper[j] - y(j, i))));
  return prox;
}

/// Dense A from the route lists (no scaling).
inline Eigen::MatrixXd dense_assignment(const RouteSet& routes) {
  Eigen::MatrixXd a =
      Eigen::MatrixXd::Zero(routes.route_count(), routes.edge_count());
  for (int r = 0; r < routes.route_count(); ++r)
    for (int e : routes.routes[std::size_t(r)]) a(r, e) = 1.0;
  return a;
}

/// Ground-truth report: explicit Q = 2 A Diag(coe) A^T, per-sample loops for
/// every quantity. Caps at |R| <= cap to keep the dense algebra honest.
inline EvalReport dense_reference(const ProblemInstance& inst, const ScenarioSet& scen,
                                  const Eigen::VectorXd& p, int cap = 256) {
  inst.validate();
  const int r = inst.route_count();
  if (r > cap)
    throw CapabilityError("dense_reference: |R| exceeds cap " + std::to_string(cap));
  require_dim(p.size() == r, "p length != |R|");
  const int n = scen.count;

  Eigen::MatrixXd q;
  Eigen::VectorXd s;
  if (inst.cost.coe.size() > 0) {
    const Eigen::MatrixXd a = dense_assignment(inst.routes);
    q = 2.0 * a * inst.cost.coe.asDiagonal() * a.transpose();
    s = -a * inst.cost.offset;
  } else {
    // raw-constructed cost model (fixtures): fall back to its stored form
    const Eigen::MatrixXd at = Eigen::MatrixXd(inst.cost.scaled_assignment);
    q = 2.0 * at * at.transpose();
    s = inst.cost.linear;
  }

  const Eigen::MatrixXd& b = inst.elasticity.B;
  const Eigen::VectorXd bp = b * p;
  EvalReport rep;
  rep.path = Path::dense;
  rep.objective = 0.5 * inst.lambda * p.squaredNorm();
  Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd mean_x = Eigen::VectorXd::Zero(r);
  Eigen::VectorXd d_counts = Eigen::VectorXd::Zero(r);
  Eigen::MatrixXd h_inner = Eigen::MatrixXd::Zero(r, r);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd y = bp + scen.xi.col(i);
    Eigen::VectorXd x(r), omega(r);
    for (int j = 0; j < r; ++j) {
      const double uj = inst.x_upper[j];
      x[j] = std::min(std::max(y[j], 0.0), uj);
      const bool near = std::abs(y[j]) <= 1e-12 ||
                        std::abs(y[j] - uj) <= 1e-12 * std::max(1.0, std::abs(uj));
      omega[j] = (!near && y[j] > 0.0 && y[j] < uj) ? 1.0 : 0.0;
    }
    const Eigen::VectorXd qx = q * x;
    rep.objective += (0.5 * x.dot(qx) - s.dot(x)) / double(n);
    grad_sum += omega.asDiagonal() * (qx - s);
    mean_x += x / double(n);
    d_counts += omega;
    h_inner += omega.asDiagonal() * q * omega.asDiagonal();
  }
  rep.gradient = inst.lambda * p + b.transpose() * grad_sum / double(n);
  rep.constraint = inst.commodity.demand_lower -
                   Eigen::MatrixXd(inst.commodity.matrix) * mean_x;
  rep.constraint_jacobian = -(1.0 / double(n)) *
                            Eigen::MatrixXd(inst.commodity.matrix) *
                            d_counts.asDiagonal() * b;
  Eigen::MatrixXd hess = b.transpose() * h_inner * b / double(n);
  hess.diagonal().array() += inst.lambda;
  rep.hessian = 0.5 * (hess + hess.transpose());
  return rep;
}

/// Mean of the censored scalar normal proj_[lo, hi](N(mu, sigma^2)).
inline double censored_moment_reference(double mu, double sigma, double lo, double hi) {
  if (sigma < 0.0) throw DomainError("sigma must be nonnegative");
  if (lo > hi) throw DomainError("empty censoring interval");
  if (sigma == 0.0) return std::min(std::max(mu, lo), hi);
  const auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
  const auto pdf = [](double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
  };
  const double alpha = (lo - mu) / sigma;
  const double beta = (hi - mu) / sigma;
  double value = 0.0;
  if (std::isfinite(lo)) value += lo * cdf(alpha);
  if (std::isfinite(hi)) value += hi * (1.0 - cdf(beta));
  value += mu * (cdf(beta) - cdf(alpha)) + sigma * (pdf(alpha) - pdf(beta));
  return value;
}

/// FD-vs-analytic gradient comparison at p, with the boundary-proximity
/// guard recorded.
inline FdReport check_gradient(const ProblemInstance& inst, const ScenarioSet& scen,
                               const Eigen::VectorXd& p, double step = 1e-6,
                               Path path = Path::sparse) {
  Evaluator ev(inst, scen, path);
  const auto f = [&](const Eigen::VectorXd& q) { return ev.objective(ev.flows(q), q); };
  const Eigen::VectorXd fd = fd_gradient(f, p, step);
  const Eigen::VectorXd an = ev.gradient(ev.flows(p), p);
  FdReport rep;
  rep.step = step;
  rep.boundary_proximity = boundary_proximity(inst, scen, p);
  const double scale = std::max(1.0, an.norm());
  for (Eigen::Index i = 0; i < an.size(); ++i) {
    const double err = std::abs(fd[i] - an[i]) / scale;
    if (err > rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst_index = int(i);
    }
  }
  return rep;
}

}  // namespace oracle
}  // namespace netprice
