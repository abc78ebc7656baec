#pragma once

// Trust-region SQP for the Monte Carlo price problem:
//   min f_N(p)  s.t.  c_N(p) <= 0,  p in [p_l, p_u].
//
// Each iteration linearizes the active constraints, builds the exact
// objective Hessian in operator form (constraint curvature is identically
// zero), and solves the trust-region subproblem by a normal step plus a
// projected Steihaug-Toint CG tangential step. Steps are judged by an l1
// exact-penalty merit function; the radius follows the classic ratio rules.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "netprice/common.hpp"
#include "netprice/evaluator.hpp"
#include "netprice/problem.hpp"

namespace netprice {

enum class SolveStatus { converged, max_iter, infeasible, numerical_failure, stalled };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max-iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical-failure";
    case SolveStatus::stalled: return "stalled";
  }
  return "unknown";
}

struct SolverConfig {
  double tol_kkt = 1e-8;
  int max_iter = 200;
  double delta0 = 1.0;    // initial trust radius
  double delta_max = 1e3;
  double eta_accept = 0.1;
  double shrink = 0.25;
  double expand = 2.0;
  double merit_penalty0 = 10.0;
  enum class HessianMode { exact, regularized };
  HessianMode hessian_mode = HessianMode::regularized;
  double reg_tau0 = 1e-8;
  Path path = Path::sparse;
  int threads = 1;
  double active_tol = 1e-6;  // c_k >= -active_tol counts as active
  double delta_min = 1e-13;
  double penalty_max = 1e8;
  int max_cg = 0;  // 0: 2 * dim + 10

  void validate() const {
    if (!(tol_kkt > 0.0)) throw DomainError("tol_kkt must be positive");
    if (!(eta_accept > 0.0 && eta_accept < 1.0))
      throw DomainError("eta_accept must lie in (0, 1)");
    if (!(shrink < 1.0 && expand > 1.0)) throw DomainError("need shrink < 1 < expand");
    if (!(delta0 > 0.0 && delta_max >= delta0)) throw DomainError("bad trust radii");
    if (max_iter < 1) throw DomainError("max_iter must be >= 1");
  }
};

struct IterationRecord {
  int iter = 0;
  double objective = 0.0;
  double violation = 0.0;      // ||max(c, 0)||_inf
  double stationarity = 0.0;   // projected KKT residual
  double rho = 0.0;
  double delta = 0.0;
  double step_norm = 0.0;
  bool accepted = false;
  bool restoration = false;
  int cg_iterations = 0;
  double wall_ms = 0.0;
};

struct SolverState {
  Eigen::VectorXd p;
  Eigen::VectorXd gamma;  // commodity multipliers, >= 0
  double delta = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
  double objective = 0.0;
  Eigen::VectorXd constraint;
  double kkt_stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  std::vector<IterationRecord> trace;
};

// ---------------------------------------------------------------------------
// Trust-region subproblem

struct QpResult {
  Eigen::VectorXd step;
  double predicted_reduction = 0.0;  // m(0) - m(d)
  Eigen::VectorXd multipliers;       // least-squares estimates for Aeq rows
  bool boundary = false;
  bool negative_curvature = false;
  bool inconsistent = false;  // ||Aeq v + beq|| not reducible to ~0
  int cg_iterations = 0;
};

/// Minimize 0.5 d^T H d + g^T d subject to Aeq d + beq = 0 and ||d|| <= delta:
/// a least-norm normal step (scaled into 0.8 delta) followed by projected CG
/// on the null space of Aeq with Steihaug-Toint termination. `frozen`
/// coordinates are held at zero (active bounds).
inline QpResult qp_subproblem(const Eigen::VectorXd& g,
                              const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& hess,
                              Eigen::MatrixXd aeq, Eigen::VectorXd beq, double delta,
                              double cg_tol_rel = 1e-10, int max_cg = 0,
                              const std::vector<char>& frozen = {}) {
  if (!(delta > 0.0)) throw DomainError("trust radius must be positive");
  const Eigen::Index dim = g.size();
  const Eigen::Index m = aeq.rows();
  if (m > 0) require_dim(aeq.cols() == dim && beq.size() == m, "Aeq/beq shape mismatch");
  if (max_cg <= 0) max_cg = int(2 * dim + 10);

  const auto mask = [&](Eigen::VectorXd v) {
    if (!frozen.empty())
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (frozen[std::size_t(i)]) v[i] = 0.0;
    return v;
  };
  if (!frozen.empty())
    for (Eigen::Index i = 0; i < dim; ++i)
      if (frozen[std::size_t(i)]) aeq.col(i).setZero();

  std::optional<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>> cod;
  if (m > 0) cod.emplace(aeq);
  const auto project = [&](Eigen::VectorXd v) {  // onto null(Aeq) ∩ free coords
    v = mask(std::move(v));
    if (m > 0) v -= mask(cod->pseudoInverse() * (aeq * v));
    return v;
  };

  QpResult res;
  // normal step: least-norm solution of Aeq v = -beq, pulled into 0.8 delta
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  if (m > 0 && beq.norm() > 0.0) {
    v = mask(cod->solve(-beq));
    const double residual = (aeq * v + beq).norm();
    if (residual > std::max(1e-8 * beq.norm(), 1e-14)) res.inconsistent = true;
    const double vn = v.norm();
    if (vn > 0.8 * delta) v *= 0.8 * delta / vn;
  }

  // tangential step by projected Steihaug-Toint CG
  const double radius_t = std::sqrt(std::max(delta * delta - v.squaredNorm(), 0.0));
  Eigen::VectorXd t = Eigen::VectorXd::Zero(dim);
  if (radius_t > 1e-15 * delta) {
    Eigen::VectorXd r = project(g + hess(v));
    const double r0 = r.norm();
    const double tol = std::max(cg_tol_rel * r0, 1e-18);
    Eigen::VectorXd pdir = -r;
    double rr = r.squaredNorm();
    while (res.cg_iterations < max_cg && std::sqrt(rr) > tol) {
      ++res.cg_iterations;
      const Eigen::VectorXd hp = project(hess(pdir));
      const double kappa = pdir.dot(hp);
      const auto boundary_step = [&]() {
        // tau >= 0 with ||t + tau pdir|| = radius_t
        const double pp = pdir.squaredNorm();
        if (pp <= 0.0) return;
        const double tp = t.dot(pdir);
        const double disc = tp * tp + pp * (radius_t * radius_t - t.squaredNorm());
        const double tau = (-tp + std::sqrt(std::max(disc, 0.0))) / pp;
        t += tau * pdir;
        res.boundary = true;
      };
      if (kappa <= 1e-14 * pdir.squaredNorm()) {
        res.negative_curvature = true;
        boundary_step();
        break;
      }
      const double alpha = rr / kappa;
      if ((t + alpha * pdir).norm() >= radius_t) {
        boundary_step();
        break;
      }
      t += alpha * pdir;
      r = project(r + alpha * hp);
      const double rr_new = r.squaredNorm();
      pdir = -r + (rr_new / rr) * pdir;
      rr = rr_new;
    }
  }

  res.step = v + t;
  res.predicted_reduction = -(g.dot(res.step) + 0.5 * res.step.dot(hess(res.step)));
  if (m > 0) {
    // least-squares multipliers from stationarity of the model at d
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod_t(
        Eigen::MatrixXd(aeq.transpose()));
    res.multipliers = cod_t.solve(-(g + hess(res.step)));
  } else {
    res.multipliers = Eigen::VectorXd();
  }
  return res;
}

/// l1 exact-penalty merit: f_N(p) + penalty * || max(c_N(p), 0) ||_1, with
/// bound violations folded in the same way (zero for in-bound iterates).
inline double merit_value(double objective, const Eigen::VectorXd& constraint,
                          const Eigen::VectorXd& p, const Eigen::VectorXd& p_lower,
                          const Eigen::VectorXd& p_upper, double penalty) {
  double viol = constraint.cwiseMax(0.0).sum();
  viol += (p_lower - p).cwiseMax(0.0).sum();
  viol += (p - p_upper).cwiseMax(0.0).sum();
  return objective + penalty * viol;
}

inline double merit(const ProblemInstance& inst, const ScenarioSet& scen,
                    const Eigen::VectorXd& p, double penalty) {
  Evaluator ev(inst, scen);
  const FlowEvaluation fe = ev.flows(p);
  return merit_value(ev.objective(fe, p), ev.constraint(fe), p, inst.p_lower, inst.p_upper,
                     penalty);
}

/// Radius update: shrink on poor agreement, expand on strong agreement when
/// the step reached the boundary, otherwise keep.
inline double tr_update(double rho, double delta, double step_norm, const SolverConfig& cfg) {
  if (rho < 0.25) return delta * cfg.shrink;
  if (rho > 0.75 && step_norm >= 0.999 * delta)
    return std::min(delta * cfg.expand, cfg.delta_max);
  return delta;
}

// ---------------------------------------------------------------------------
// KKT residuals

struct KktInfo {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  Eigen::VectorXd gamma;         // full-length commodity multipliers
  Eigen::VectorXd lagrangian_grad;  // g + jac^T gamma (before bound projection)
};

/// Multiplier estimation and residuals for the three-part KKT test.
/// Commodity multipliers come from a nonnegative least-squares fit on the
/// active rows; bound multipliers are absorbed by projecting the Lagrangian
/// gradient onto the feasible directions at the bounds.
inline KktInfo kkt_residuals(const Eigen::VectorXd& g, const Eigen::MatrixXd& jac,
                             const Eigen::VectorXd& c, const Eigen::VectorXd& p,
                             const Eigen::VectorXd& p_lower, const Eigen::VectorXd& p_upper,
                             double active_tol = 1e-6) {
  KktInfo info;
  const Eigen::Index kc = c.size();
  info.gamma = Eigen::VectorXd::Zero(kc);

  std::vector<int> active;
  for (Eigen::Index k = 0; k < kc; ++k)
    if (c[k] >= -active_tol) active.push_back(int(k));

  // NNLS by active-set dropping (the row count is tiny)
  while (!active.empty()) {
    Eigen::MatrixXd jt(g.size(), active.size());
    for (std::size_t a = 0; a < active.size(); ++a)
      jt.col(Eigen::Index(a)) = jac.row(active[a]).transpose();
    Eigen::VectorXd gamma_act =
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(jt).solve(-g);
    int worst = -1;
    double worst_val = -1e-12;
    for (Eigen::Index a = 0; a < gamma_act.size(); ++a)
      if (gamma_act[a] < worst_val) {
        worst_val = gamma_act[a];
        worst = int(a);
      }
    if (worst < 0) {
      for (std::size_t a = 0; a < active.size(); ++a)
        info.gamma[active[a]] = std::max(gamma_act[Eigen::Index(a)], 0.0);
      break;
    }
    active.erase(active.begin() + worst);
  }

  info.lagrangian_grad = g + jac.transpose() * info.gamma;
  Eigen::VectorXd resid = info.lagrangian_grad;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double lo_gap = p[i] - p_lower[i];
    const double hi_gap = p_upper[i] - p[i];
    const double at_tol = 1e-9 * std::max(1.0, std::abs(p[i]));
    // at a bound, the residual component with the admissible sign is carried
    // by the bound multiplier
    if (lo_gap <= at_tol && resid[i] > 0.0) resid[i] = 0.0;
    if (hi_gap <= at_tol && resid[i] < 0.0) resid[i] = 0.0;
  }
  info.stationarity = resid.norm();

  double feas = c.size() > 0 ? c.cwiseMax(0.0).maxCoeff() : 0.0;
  feas = std::max(feas, (p_lower - p).cwiseMax(0.0).maxCoeff());
  feas = std::max(feas, (p - p_upper).cwiseMax(0.0).maxCoeff());
  info.feasibility = feas;

  for (Eigen::Index k = 0; k < kc; ++k)
    info.complementarity += std::abs(info.gamma[k] * c[k]);
  return info;
}

// ---------------------------------------------------------------------------
// Main loop

inline SolverState solve(const ProblemInstance& inst, const ScenarioSet& scen,
                         const SolverConfig& cfg = {},
                         std::optional<Eigen::VectorXd> p0 = std::nullopt) {
  cfg.validate();
  inst.validate();
  const int dim = inst.route_count();
  const Eigen::VectorXd& pl = inst.p_lower;
  const Eigen::VectorXd& pu = inst.p_upper;
  const auto clamp = [&](Eigen::VectorXd p) { return p.cwiseMax(pl).cwiseMin(pu).eval(); };
  const auto viol_inf = [](const Eigen::VectorXd& c) {
    return c.size() > 0 ? c.cwiseMax(0.0).maxCoeff() : 0.0;
  };

  Eigen::VectorXd p;
  if (p0) {
    require_dim(p0->size() == dim, "p0 length != |R|");
    if (((*p0 - pl).minCoeff() < -1e-12) || ((pu - *p0).minCoeff() < -1e-12))
      throw DomainError("p0 violates the price bounds");
    p = clamp(*p0);
  } else {
    p = 0.5 * (pl + pu);
    for (int i = 0; i < dim; ++i)
      if (!std::isfinite(p[i])) throw DomainError("default start needs finite bounds");
  }

  Evaluator ev(inst, scen, cfg.path, cfg.threads);
  SolverState st;
  st.delta = cfg.delta0;
  double penalty = cfg.merit_penalty0;

  FlowEvaluation fe = ev.flows(p);
  double f = ev.objective(fe, p);
  Eigen::VectorXd c = ev.constraint(fe);
  if (!std::isfinite(f) || !c.allFinite()) {
    st.status = SolveStatus::numerical_failure;
    st.p = p;
    st.constraint = c;
    return st;
  }

  bool restoration = false;
  int rejected_run = 0;
  bool finished = false;

  for (int iter = 1; iter <= cfg.max_iter && !finished; ++iter) {
    const auto t_start = std::chrono::steady_clock::now();
    st.iterations = iter;
    const Eigen::VectorXd g = ev.gradient(fe, p);
    const Eigen::MatrixXd jac = ev.constraint_jacobian(fe);
    if (!g.allFinite() || !jac.allFinite()) {
      st.status = SolveStatus::numerical_failure;
      break;
    }
    const KktInfo kkt = kkt_residuals(g, jac, c, p, pl, pu, cfg.active_tol);

    IterationRecord rec;
    rec.iter = iter;
    rec.objective = f;
    rec.violation = kkt.feasibility;
    rec.stationarity = kkt.stationarity;
    rec.delta = st.delta;
    rec.restoration = restoration;

    if (kkt.stationarity <= cfg.tol_kkt * (1.0 + g.norm()) &&
        kkt.feasibility <= cfg.tol_kkt && kkt.complementarity <= cfg.tol_kkt) {
      st.iterations = iter - 1;  // steps actually taken
      st.status = SolveStatus::converged;
      st.gamma = kkt.gamma;
      st.kkt_stationarity = kkt.stationarity;
      st.feasibility = kkt.feasibility;
      st.complementarity = kkt.complementarity;
      st.trace.push_back(rec);
      break;
    }

    // frozen coordinates: at a bound with the Lagrangian gradient pointing
    // outward, so the bound multiplier absorbs that component
    std::vector<char> frozen(std::size_t(dim), 0);
    for (int i = 0; i < dim; ++i) {
      const double at_tol = 1e-9 * std::max(1.0, std::abs(p[i]));
      if (p[i] - pl[i] <= at_tol && kkt.lagrangian_grad[i] > 0.0) frozen[std::size_t(i)] = 1;
      if (pu[i] - p[i] <= at_tol && kkt.lagrangian_grad[i] < 0.0) frozen[std::size_t(i)] = 1;
    }

    HessianOperator hop = ev.hessian_operator(fe, cfg.path);
    double tau = 0.0;
    const auto happly = [&hop, &tau](const Eigen::VectorXd& v) {
      return tau == 0.0 ? hop.apply(v) : (hop.apply(v) + tau * v).eval();
    };

    Eigen::VectorXd d;
    Eigen::MatrixXd jv;   // violated-row Jacobian (restoration)
    Eigen::VectorXd cv;   // violated-row values (restoration)
    if (!restoration) {
      // working set: active commodity rows with a usable linearization; rows
      // whose model multiplier comes out negative are not blocking descent
      // and get dropped before re-solving
      std::vector<int> work;
      for (Eigen::Index k = 0; k < c.size(); ++k)
        if (c[k] >= -cfg.active_tol && jac.row(k).norm() > 1e-12) work.push_back(int(k));
      const double cg_tol =
          std::clamp(kkt.stationarity / (1.0 + g.norm()), 1e-12, 1e-2);
      QpResult qp;
      for (int pass = 0;; ++pass) {
        Eigen::MatrixXd aeq(work.size(), dim);
        Eigen::VectorXd beq(work.size());
        for (std::size_t w = 0; w < work.size(); ++w) {
          aeq.row(Eigen::Index(w)) = jac.row(work[w]);
          beq[Eigen::Index(w)] = c[work[w]];
        }
        qp = qp_subproblem(g, happly, aeq, beq, st.delta, cg_tol, cfg.max_cg, frozen);
        if (cfg.hessian_mode == SolverConfig::HessianMode::regularized &&
            qp.negative_curvature) {
          for (tau = cfg.reg_tau0; tau <= 1e6; tau *= 2.0) {
            qp = qp_subproblem(g, happly, aeq, beq, st.delta, cg_tol, cfg.max_cg, frozen);
            if (!qp.negative_curvature) break;
          }
        }
        if (pass >= int(c.size())) break;
        int worst = -1;
        double worst_val = -1e-8;
        for (std::size_t w = 0; w < work.size(); ++w)
          if (qp.multipliers[Eigen::Index(w)] < worst_val &&
              c[work[w]] < cfg.active_tol) {  // strictly binding rows may stay
            worst_val = qp.multipliers[Eigen::Index(w)];
            worst = int(w);
          }
        if (worst < 0) break;
        work.erase(work.begin() + worst);
      }
      rec.cg_iterations = qp.cg_iterations;
      d = qp.step;
      if (qp.inconsistent && kkt.feasibility > cfg.tol_kkt) restoration = true;

      // penalty large enough that the merit model rewards feasibility
      const double gamma_inf =
          qp.multipliers.size() > 0 ? qp.multipliers.cwiseAbs().maxCoeff() : 0.0;
      if (penalty < gamma_inf + 1.0) penalty = std::min(gamma_inf + 10.0, cfg.penalty_max);
    } else {
      // feasibility restoration: Gauss-Newton on theta = 0.5 ||c^+||^2
      std::vector<int> violated;
      for (Eigen::Index k = 0; k < c.size(); ++k)
        if (c[k] > 0.0) violated.push_back(int(k));
      if (violated.empty()) {
        restoration = false;
        st.trace.push_back(rec);
        continue;
      }
      jv.resize(violated.size(), dim);
      cv.resize(violated.size());
      for (std::size_t w = 0; w < violated.size(); ++w) {
        jv.row(Eigen::Index(w)) = jac.row(violated[w]);
        cv[Eigen::Index(w)] = c[violated[w]];
      }
      Eigen::VectorXd grad_theta = jv.transpose() * cv;
      for (int i = 0; i < dim; ++i) {
        const double at_tol = 1e-9 * std::max(1.0, std::abs(p[i]));
        if (p[i] - pl[i] <= at_tol && grad_theta[i] > 0.0) grad_theta[i] = 0.0;
        if (pu[i] - p[i] <= at_tol && grad_theta[i] < 0.0) grad_theta[i] = 0.0;
        if (frozen[std::size_t(i)]) grad_theta[i] = 0.0;
      }
      if (grad_theta.norm() <= 1e-8 * (1.0 + cv.norm())) {
        // stationary point of the infeasibility measure, still violated
        st.status = SolveStatus::infeasible;
        st.gamma = kkt.gamma;
        st.trace.push_back(rec);
        break;
      }
      d = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(jv).solve(-cv);
      for (int i = 0; i < dim; ++i)
        if (frozen[std::size_t(i)]) d[i] = 0.0;
      if (d.norm() > st.delta) d *= st.delta / d.norm();
      // fall back to steepest descent on theta when the GN step is useless
      if ((cv + jv * d).squaredNorm() >= cv.squaredNorm()) {
        d = -grad_theta;
        if (d.norm() > st.delta) d *= st.delta / d.norm();
      }
    }

    // stay inside the box: per-coordinate projection of the trial point (a
    // uniform back-scaling would zero the whole step whenever one coordinate
    // rests exactly on its bound)
    d = (p + d).cwiseMax(pl).cwiseMin(pu) - p;
    const double step_norm = d.norm();
    rec.step_norm = step_norm;

    // model reduction of the final (clamped) step
    double pred = 0.0;
    if (step_norm > 0.0) {
      if (!restoration || cv.size() == 0) {
        pred = -(g.dot(d) + 0.5 * d.dot(happly(d)));
        if (c.size() > 0)
          pred += penalty * (c.cwiseMax(0.0).sum() - (c + jac * d).cwiseMax(0.0).sum());
      } else {
        pred = 0.5 * cv.squaredNorm() - 0.5 * (cv + jv * d).cwiseMax(0.0).squaredNorm();
      }
    }

    bool accepted = false;
    double rho = -1.0;
    if (step_norm > 1e-16 * (1.0 + p.norm()) && pred > 0.0) {
      const Eigen::VectorXd trial_p = clamp(p + d);
      FlowEvaluation trial_fe = ev.flows(trial_p);
      const double trial_f = ev.objective(trial_fe, trial_p);
      const Eigen::VectorXd trial_c = ev.constraint(trial_fe);
      if (!std::isfinite(trial_f) || !trial_c.allFinite()) {
        st.status = SolveStatus::numerical_failure;
        st.trace.push_back(rec);
        break;
      }
      double actual = 0.0;
      if (!restoration || cv.size() == 0) {
        actual = merit_value(f, c, p, pl, pu, penalty) -
                 merit_value(trial_f, trial_c, trial_p, pl, pu, penalty);
      } else {
        actual = 0.5 * c.cwiseMax(0.0).squaredNorm() -
                 0.5 * trial_c.cwiseMax(0.0).squaredNorm();
      }
      // below the evaluation noise floor the ratio is meaningless; take the
      // model's word and accept (this is the final polishing regime)
      const double noise =
          16.0 * std::numeric_limits<double>::epsilon() *
          (std::abs(f) + penalty * c.cwiseMax(0.0).sum() + 1.0);
      rho = pred <= noise ? 1.0 : actual / pred;
      accepted = rho >= cfg.eta_accept;
      if (accepted) {
        p = trial_p;
        fe = std::move(trial_fe);
        f = trial_f;
        c = trial_c;
        rejected_run = 0;
        if (restoration && viol_inf(c) <= cfg.tol_kkt) restoration = false;
      }
    }
    if (!accepted) ++rejected_run;

    st.delta = tr_update(rho, st.delta, step_norm, cfg);
    rec.rho = rho;
    rec.accepted = accepted;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
            .count();
    st.trace.push_back(rec);

    if (!restoration && rejected_run >= 8 && viol_inf(c) > cfg.tol_kkt) {
      restoration = true;
      rejected_run = 0;
      st.delta = std::max(st.delta, cfg.delta0 * 0.1);
    }
    if (st.delta < cfg.delta_min * std::max(1.0, p.norm())) {
      if (viol_inf(c) > cfg.tol_kkt) {
        if (!restoration) {
          restoration = true;
          st.delta = cfg.delta0 * 0.1;
          continue;
        }
        st.status = SolveStatus::infeasible;
      } else {
        st.status = SolveStatus::stalled;
      }
      finished = true;
    }
  }

  st.p = p;
  st.objective = f;
  st.constraint = c;
  if (st.status != SolveStatus::converged) {
    const Eigen::VectorXd g = ev.gradient(fe, p);
    const Eigen::MatrixXd jac = ev.constraint_jacobian(fe);
    const KktInfo kkt = kkt_residuals(g, jac, c, p, pl, pu, cfg.active_tol);
    st.gamma = kkt.gamma;
    st.kkt_stationarity = kkt.stationarity;
    st.feasibility = kkt.feasibility;
    st.complementarity = kkt.complementarity;
  }
  return st;
}

}  // namespace netprice
