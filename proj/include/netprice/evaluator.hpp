#pragma once

// Monte Carlo objective/constraint evaluation at a price vector: flows,
// objective, constraint, gradients and Hessian, each with a dense reference
// flavor and an active-set (sparse) fast path.

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "netprice/common.hpp"
#include "netprice/parallel.hpp"
#include "netprice/problem.hpp"

namespace netprice {

enum class Path { dense, sparse };

inline const char* to_string(Path p) { return p == Path::dense ? "dense" : "sparse"; }

/// Flows and the projection active pattern for one price vector.
///
/// omega(j, i) = 1 iff 0 < y(j, i) < x_upper[j] strictly; entries within
/// 1e-12 * max(1, |bound|) of a boundary are counted in boundary_hits and
/// treated as inactive (the measure-zero corner resolved to subgradient 0).
struct FlowEvaluation {
  Eigen::MatrixXd y;  // Y_p = B p 1^T + Xi, |R| x N
  Eigen::MatrixXd x;  // X_p = clip(Y_p), |R| x N
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> omega;
  std::vector<std::vector<int>> active_sets;   // S_i: omega(., i) support
  std::vector<std::vector<int>> support_sets;  // T_i: {j : x(j, i) > 0}
  Eigen::VectorXi active_counts;               // d = Omega * 1
  long boundary_hits = 0;

  int sample_count() const { return int(y.cols()); }
  int route_count() const { return int(y.rows()); }
};

struct EvalTimings {
  double flows_ms = 0, objective_ms = 0, constraint_ms = 0, gradient_ms = 0, hessian_ms = 0;
};

struct EvalReport {
  double objective = 0.0;
  Eigen::VectorXd constraint;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd constraint_jacobian;
  std::optional<Eigen::MatrixXd> hessian;
  Path path = Path::sparse;
  EvalTimings timings;
};

/// Hessian of the objective in operator form:
///   apply(v) = lambda v + (1/N) B^T (H_inner (B v)).
/// H_inner accumulates the per-sample masked Q contributions; the |R| x |R|
/// product B^T H_inner B is never formed when only products are needed.
struct HessianOperator {
  double lambda = 0.0;
  double inv_n = 0.0;
  const Eigen::MatrixXd* b = nullptr;
  Eigen::MatrixXd h_inner;

  Eigen::Index dim() const { return b->rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return lambda * v + inv_n * (b->transpose() * (h_inner * ((*b) * v)));
  }
};

/// Symbolic zero: the constraint Hessian vanishes almost surely, and the
/// solver treats its curvature as exactly 0.
struct ZeroHessian {
  Eigen::Index dim = 0;
};

namespace detail {

class ScopedTimer {
 public:
  explicit ScopedTimer(double* out) : out_(out), start_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    if (out_)
      *out_ += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
                   .count();
  }

 private:
  double* out_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

class Evaluator {
 public:
  Evaluator(const ProblemInstance& inst, const ScenarioSet& scen, Path path = Path::sparse,
            int threads = 1)
      : inst_(&inst), scen_(&scen), path_(path), threads_(std::max(1, threads)) {
    inst.validate();
    require_dim(scen.xi.rows() == inst.route_count(), "scenario rows != |R|");
  }

  const ProblemInstance& instance() const { return *inst_; }
  const ScenarioSet& scenarios() const { return *scen_; }
  Path path() const { return path_; }

  // -- flows ----------------------------------------------------------------

  FlowEvaluation flows(const Eigen::VectorXd& p) const {
    require_dim(p.size() == inst_->route_count(), "p length != |R|");
    const int r = inst_->route_count();
    const int n = scen_->count;
    FlowEvaluation fe;
    fe.y = scen_->xi;
    fe.y.colwise() += (inst_->elasticity.B * p).eval();
    fe.x.resize(r, n);
    fe.omega.setZero(r, n);
    fe.active_sets.assign(std::size_t(n), {});
    fe.support_sets.assign(std::size_t(n), {});
    fe.active_counts = Eigen::VectorXi::Zero(r);

    const Eigen::VectorXd& xu = inst_->x_upper;
    std::vector<long> hits(std::size_t(chunk_count(n)), 0);
    std::vector<Eigen::VectorXi> counts(std::size_t(chunk_count(n)),
                                        Eigen::VectorXi::Zero(r));
    for_each_chunk(n, threads_, [&](int chunk, int begin, int end) {
      for (int i = begin; i < end; ++i) {
        auto& active = fe.active_sets[std::size_t(i)];
        auto& support = fe.support_sets[std::size_t(i)];
        for (int j = 0; j < r; ++j) {
          const double yv = fe.y(j, i);
          const double uj = xu[j];
          const double xv = yv <= 0.0 ? 0.0 : (yv >= uj ? uj : yv);
          fe.x(j, i) = xv;
          if (xv > 0.0) support.push_back(j);
          const bool near_lo = std::abs(yv) <= 1e-12;
          const bool near_hi = std::abs(yv - uj) <= 1e-12 * std::max(1.0, std::abs(uj));
          if (near_lo || near_hi) {
            ++hits[std::size_t(chunk)];
            continue;  // boundary case: inactive by convention
          }
          if (yv > 0.0 && yv < uj) {
            fe.omega(j, i) = 1;
            active.push_back(j);
            ++counts[std::size_t(chunk)][j];
          }
        }
      }
    });
    for (std::size_t c = 0; c < hits.size(); ++c) {
      fe.boundary_hits += hits[c];
      fe.active_counts += counts[c];
    }
    return fe;
  }

  // -- objective and constraint ----------------------------------------------

  /// f_N(p) = lambda/2 ||p||^2 + (1/N) sum_i [ ||At^T x_i||^2 - <s, x_i> ].
  double objective(const FlowEvaluation& fe, const Eigen::VectorXd& p) const {
    const int n = fe.sample_count();
    const Eigen::MatrixXd g = inst_->cost.scaled_assignment.transpose() * fe.x;
    const Eigen::VectorXd& s = inst_->cost.linear;
    std::vector<double> partial(std::size_t(chunk_count(n)), 0.0);
    for_each_chunk(n, threads_, [&](int chunk, int begin, int end) {
      double acc = 0.0;
      for (int i = begin; i < end; ++i)
        acc += g.col(i).squaredNorm() - s.dot(fe.x.col(i));
      partial[std::size_t(chunk)] = acc;
    });
    double total = 0.0;
    for (double v : partial) total += v;
    return 0.5 * inst_->lambda * p.squaredNorm() + total / double(n);
  }

  /// c_N(p) = l - K * mean_i x_i; feasible iff <= 0.
  Eigen::VectorXd constraint(const FlowEvaluation& fe) const {
    const int n = fe.sample_count();
    std::vector<Eigen::VectorXd> partial(std::size_t(chunk_count(n)),
                                         Eigen::VectorXd::Zero(fe.route_count()));
    for_each_chunk(n, threads_, [&](int chunk, int begin, int end) {
      for (int i = begin; i < end; ++i) partial[std::size_t(chunk)] += fe.x.col(i);
    });
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(fe.route_count());
    for (const auto& v : partial) mean += v;
    mean /= double(n);
    return inst_->commodity.demand_lower - inst_->commodity.matrix * mean;
  }

  // -- gradient ---------------------------------------------------------------

  Eigen::VectorXd gradient(const FlowEvaluation& fe, const Eigen::VectorXd& p) const {
    return path_ == Path::dense ? gradient_dense(fe, p) : gradient_sparse(fe, p);
  }

  /// Reference path: QX through the materialized dense Q, O(N |R|^2).
  Eigen::VectorXd gradient_dense(const FlowEvaluation& fe, const Eigen::VectorXd& p) const {
    const int n = fe.sample_count();
    const Eigen::MatrixXd qx = dense_Q() * fe.x;
    const Eigen::VectorXd& s = inst_->cost.linear;
    Eigen::VectorXd acc = masked_residual_sum(
        fe, n, [&](int j, int i) { return qx(j, i) - s[j]; });
    return inst_->lambda * p +
           (inst_->elasticity.B.transpose() * acc) / double(n);
  }

  /// Active-set path. Per sample the Q x_i product is gathered over the
  /// support of x_i (active plus upper-clipped routes) and scattered over the
  /// active set; the factor 2 of Q = 2 At At^T is applied here.
  Eigen::VectorXd gradient_sparse(const FlowEvaluation& fe, const Eigen::VectorXd& p) const {
    const int n = fe.sample_count();
    const int r = fe.route_count();
    const SparseRowMat& at = inst_->cost.scaled_assignment;
    const Eigen::VectorXd& s = inst_->cost.linear;
    const int edge_count = int(at.cols());
    const auto* outer = at.outerIndexPtr();
    const auto* inner = at.innerIndexPtr();
    const auto* value = at.valuePtr();

    std::vector<Eigen::VectorXd> partial(std::size_t(chunk_count(n)));
    for_each_chunk(n, threads_, [&](int chunk, int begin, int end) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(r);
      Eigen::VectorXd u = Eigen::VectorXd::Zero(edge_count);
      std::vector<int> touched;
      touched.reserve(std::size_t(edge_count));
      for (int i = begin; i < end; ++i) {
        // gather u = At^T x_i over the support of x_i
        for (int j : fe.support_sets[std::size_t(i)]) {
          const double xv = fe.x(j, i);
          for (auto k = outer[j]; k < outer[j + 1]; ++k) {
            if (u[inner[k]] == 0.0) touched.push_back(inner[k]);
            u[inner[k]] += value[k] * xv;
          }
        }
        // scatter rows of the active set: 2 At(j,:) u - s_j
        for (int j : fe.active_sets[std::size_t(i)]) {
          double w = 0.0;
          for (auto k = outer[j]; k < outer[j + 1]; ++k) w += value[k] * u[inner[k]];
          acc[j] += 2.0 * w - s[j];
        }
        for (int e : touched) u[e] = 0.0;
        touched.clear();
      }
      partial[std::size_t(chunk)] = std::move(acc);
    });
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(r);
    for (const auto& v : partial) acc += v;
    return inst_->lambda * p +
           (inst_->elasticity.B.transpose() * acc) / double(n);
  }

  // -- constraint Jacobian ------------------------------------------------------

  /// grad c_N = -(1/N) K Diag(d) B, iterating the nonzeros of K.
  Eigen::MatrixXd constraint_jacobian(const FlowEvaluation& fe) const {
    const SparseRowMat& km = inst_->commodity.matrix;
    const double inv_n = 1.0 / double(fe.sample_count());
    Eigen::MatrixXd jac =
        Eigen::MatrixXd::Zero(km.rows(), inst_->route_count());
    for (int k = 0; k < int(km.rows()); ++k)
      for (SparseRowMat::InnerIterator it(km, k); it; ++it)
        jac.row(k) -=
            (it.value() * inv_n * double(fe.active_counts[it.col()])) *
            inst_->elasticity.B.row(it.col());
    return jac;
  }

  // -- Hessian -------------------------------------------------------------------

  /// Inner sum H = sum_i Diag(omega_i) Q Diag(omega_i); includes the factor 2.
  Eigen::MatrixXd hessian_inner(const FlowEvaluation& fe, Path mode) const {
    const int n = fe.sample_count();
    const int r = fe.route_count();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(r, r);
    if (mode == Path::dense) {
      const Eigen::MatrixXd& q = dense_Q();
      Eigen::VectorXd mask(r);
      Eigen::MatrixXd outer(r, r);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < r; ++j) mask[j] = double(fe.omega(j, i));
        outer.noalias() = mask * mask.transpose();
        h.array() += q.array() * outer.array();
      }
      return h;
    }
    // active-set accumulation: per sample, 2 At(S,:) At(S,:)^T into (S, S)
    const SparseRowMat& at = inst_->cost.scaled_assignment;
    const auto* outer = at.outerIndexPtr();
    const auto* inner = at.innerIndexPtr();
    const auto* value = at.valuePtr();
    std::vector<std::vector<std::pair<int, double>>> bucket(std::size_t(at.cols()));
    std::vector<int> touched;
    for (int i = 0; i < n; ++i) {
      for (int j : fe.active_sets[std::size_t(i)])
        for (auto k = outer[j]; k < outer[j + 1]; ++k) {
          if (bucket[std::size_t(inner[k])].empty()) touched.push_back(inner[k]);
          bucket[std::size_t(inner[k])].emplace_back(j, value[k]);
        }
      for (int e : touched) {
        auto& z = bucket[std::size_t(e)];
        for (const auto& [j1, v1] : z)
          for (const auto& [j2, v2] : z) h(j1, j2) += 2.0 * v1 * v2;
        z.clear();
      }
      touched.clear();
    }
    return h;
  }

  /// Full Hessian lambda I + (1/N) B^T H_inner B, symmetrized.
  Eigen::MatrixXd hessian(const FlowEvaluation& fe, Path mode) const {
    const Eigen::MatrixXd h_inner = hessian_inner(fe, mode);
    const Eigen::MatrixXd& b = inst_->elasticity.B;
    Eigen::MatrixXd h = (b.transpose() * h_inner * b) / double(fe.sample_count());
    h.diagonal().array() += inst_->lambda;
    return 0.5 * (h + h.transpose());
  }

  HessianOperator hessian_operator(const FlowEvaluation& fe, Path mode) const {
    HessianOperator op;
    op.lambda = inst_->lambda;
    op.inv_n = 1.0 / double(fe.sample_count());
    op.b = &inst_->elasticity.B;
    op.h_inner = hessian_inner(fe, mode);
    return op;
  }

  // -- misc -----------------------------------------------------------------------

  /// Dense Q = 2 At At^T (cached). Exists for the dense reference paths and
  /// diagnostics; the sparse paths never touch it.
  const Eigen::MatrixXd& dense_Q() const {
    if (!dense_q_) {
      Eigen::MatrixXd q = 2.0 * Eigen::MatrixXd(inst_->cost.scaled_assignment *
                                                inst_->cost.scaled_assignment.transpose());
      dense_q_ = 0.5 * (q + q.transpose());
    }
    return *dense_q_;
  }

  EvalReport report(const Eigen::VectorXd& p, bool with_hessian = false) const {
    EvalReport rep;
    rep.path = path_;
    std::optional<FlowEvaluation> fe;
    {
      detail::ScopedTimer t(&rep.timings.flows_ms);
      fe = flows(p);
    }
    {
      detail::ScopedTimer t(&rep.timings.objective_ms);
      rep.objective = objective(*fe, p);
    }
    {
      detail::ScopedTimer t(&rep.timings.constraint_ms);
      rep.constraint = constraint(*fe);
    }
    {
      detail::ScopedTimer t(&rep.timings.gradient_ms);
      rep.gradient = gradient(*fe, p);
    }
    rep.constraint_jacobian = constraint_jacobian(*fe);
    if (with_hessian) {
      detail::ScopedTimer t(&rep.timings.hessian_ms);
      rep.hessian = hessian(*fe, path_);
    }
    return rep;
  }

 private:
  template <class EntryFn>
  Eigen::VectorXd masked_residual_sum(const FlowEvaluation& fe, int n, EntryFn&& entry) const {
    std::vector<Eigen::VectorXd> partial(std::size_t(chunk_count(n)));
    for_each_chunk(n, threads_, [&](int chunk, int begin, int end) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(fe.route_count());
      for (int i = begin; i < end; ++i)
        for (int j : fe.active_sets[std::size_t(i)]) acc[j] += entry(j, i);
      partial[std::size_t(chunk)] = std::move(acc);
    });
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(fe.route_count());
    for (const auto& v : partial) acc += v;
    return acc;
  }

  const ProblemInstance* inst_;
  const ScenarioSet* scen_;
  Path path_;
  int threads_;
  mutable std::optional<Eigen::MatrixXd> dense_q_;
};

// ---------------------------------------------------------------------------
// Free-function forms

inline FlowEvaluation eval_flows(const ProblemInstance& inst, const ScenarioSet& scen,
                                 const Eigen::VectorXd& p) {
  return Evaluator(inst, scen).flows(p);
}

inline double eval_objective(const ProblemInstance& inst, const ScenarioSet& scen,
                             const FlowEvaluation& fe, const Eigen::VectorXd& p) {
  return Evaluator(inst, scen).objective(fe, p);
}

inline Eigen::VectorXd eval_constraint(const ProblemInstance& inst, const ScenarioSet& scen,
                                       const FlowEvaluation& fe) {
  return Evaluator(inst, scen).constraint(fe);
}

inline Eigen::VectorXd grad_f_dense(const ProblemInstance& inst, const ScenarioSet& scen,
                                    const FlowEvaluation& fe, const Eigen::VectorXd& p) {
  return Evaluator(inst, scen).gradient_dense(fe, p);
}

inline Eigen::VectorXd grad_f_sparse(const ProblemInstance& inst, const ScenarioSet& scen,
                                     const FlowEvaluation& fe, const Eigen::VectorXd& p) {
  return Evaluator(inst, scen).gradient_sparse(fe, p);
}

inline Eigen::MatrixXd grad_c(const ProblemInstance& inst, const ScenarioSet& scen,
                              const FlowEvaluation& fe) {
  return Evaluator(inst, scen).constraint_jacobian(fe);
}

inline Eigen::MatrixXd hess_f(const ProblemInstance& inst, const ScenarioSet& scen,
                              const FlowEvaluation& fe, const Eigen::VectorXd& p, Path mode) {
  (void)p;  // the Hessian depends on p only through the flows
  return Evaluator(inst, scen).hessian(fe, mode);
}

inline ZeroHessian hess_c(const ProblemInstance& inst) {
  return ZeroHessian{inst.route_count()};
}

/// Lemma-style worst-case curvature bound lambda_min(Q) * sigma_min(B)^2 for
/// an arbitrary symmetric Q and square B.
inline double convexity_threshold(const Eigen::MatrixXd& q, const Eigen::MatrixXd& b) {
  require_dim(q.rows() == q.cols() && b.rows() == b.cols() && q.rows() == b.rows(),
              "convexity_threshold: Q and B must be square and same size");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (q + q.transpose()));
  const double lambda_min = es.eigenvalues().minCoeff();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
  const double sigma_min = svd.singularValues().minCoeff();
  return lambda_min * sigma_min * sigma_min;
}

inline double convexity_threshold(const ProblemInstance& inst, int dense_cap = 512) {
  if (inst.route_count() > dense_cap)
    throw CapabilityError(
        "convexity_threshold: |R| exceeds the dense materialization cap (" +
        std::to_string(dense_cap) + "); use the dense oracle on a smaller instance");
  Eigen::MatrixXd q = 2.0 * Eigen::MatrixXd(inst.cost.scaled_assignment *
                                            inst.cost.scaled_assignment.transpose());
  return convexity_threshold(q, inst.elasticity.B);
}

}  // namespace netprice
