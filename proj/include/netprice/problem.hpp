#pragma once

// Problem assembly: congestion cost coefficients, price elasticity, noise
// model, bounds, and the scenario sampler. The quadratic coefficient matrix
// Q = 2 * At * At^T (At the sqrt-cost-scaled assignment) is represented only
// through apply_Q; it is never materialized here.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "netprice/common.hpp"
#include "netprice/network.hpp"
#include "netprice/rng.hpp"

namespace netprice {

// ---------------------------------------------------------------------------
// Cost model

/// Quadratic congestion cost in implicit form.
///
/// scaled_assignment holds At = A * Diag(sqrt(coe)) so that
/// Q = 2 * At * At^T, and linear holds s = -A * offset. Consumers apply Q
/// through apply_Q; the factor 2 lives there and in the sparse kernels only.
struct CostModel {
  Eigen::VectorXd coe;             // per-edge cost rate, >= 0
  Eigen::VectorXd offset;          // per-edge constant cost, >= 0
  SparseRowMat scaled_assignment;  // |R| x |E|
  Eigen::VectorXd linear;          // s, length |R|

  int route_count() const { return int(scaled_assignment.rows()); }

  /// Regular construction from nonnegative per-edge vectors.
  static CostModel from_vectors(const RouteSet& routes, const Eigen::VectorXd& coe,
                                const Eigen::VectorXd& offset) {
    const Eigen::Index edge_count = routes.assignment.cols();
    require_dim(coe.size() == edge_count, "coe length must be |E|");
    require_dim(offset.size() == edge_count, "offset length must be |E|");
    if ((coe.array() < 0.0).any()) throw DomainError("coe must be nonnegative");
    if ((offset.array() < 0.0).any()) throw DomainError("offset must be nonnegative");
    CostModel cm;
    cm.coe = coe;
    cm.offset = offset;
    cm.scaled_assignment =
        routes.assignment * coe.array().sqrt().matrix().asDiagonal();
    cm.scaled_assignment.makeCompressed();
    cm.linear = -(routes.assignment * offset);
    return cm;
  }

  /// Direct construction from a pre-scaled assignment and a linear term.
  /// Bypasses the sign conventions of from_vectors; meant for analytic
  /// fixtures and test harnesses that need an arbitrary s.
  static CostModel from_raw(SparseRowMat scaled_assignment, Eigen::VectorXd linear) {
    require_dim(scaled_assignment.rows() == linear.size(),
                "scaled assignment row count must match linear term length");
    CostModel cm;
    cm.scaled_assignment = std::move(scaled_assignment);
    cm.scaled_assignment.makeCompressed();
    cm.linear = std::move(linear);
    cm.coe = Eigen::VectorXd();
    cm.offset = Eigen::VectorXd();
    return cm;
  }
};

/// Q * X computed as 2 * At * (At^T * X), without forming Q. Accepts a
/// vector or a matrix of stacked columns.
template <class Derived>
Eigen::MatrixXd apply_Q(const CostModel& cost, const Eigen::MatrixBase<Derived>& x) {
  require_dim(x.rows() == cost.scaled_assignment.rows(),
              "apply_Q: X must have |R| rows");
  return 2.0 * (cost.scaled_assignment * (cost.scaled_assignment.transpose() * x));
}

// ---------------------------------------------------------------------------
// Elasticity and noise

/// Price elasticity B plus the Gaussian noise model zeta ~ N(mu, Sigma).
/// Sigma is carried as a factor L with Sigma = L * L^T.
struct ElasticityModel {
  Eigen::MatrixXd B;             // |R| x |R|
  Eigen::VectorXd mu;            // length |R|
  Eigen::MatrixXd sigma_factor;  // L, |R| x |R|

  int route_count() const { return int(B.rows()); }
};

/// Factor a symmetric PSD matrix as L L^T via eigenvalue decomposition.
/// Slightly negative eigenvalues (>= -tol * scale) are clamped to zero;
/// anything more negative is rejected.
inline Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& sigma, double tol = 1e-10) {
  require_dim(sigma.rows() == sigma.cols(), "sigma must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sigma + sigma.transpose()));
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -tol * scale)
      throw DomainError("sigma is not positive semi-definite within tolerance");
    ev[i] = std::max(ev[i], 0.0);
  }
  return es.eigenvectors() * ev.array().sqrt().matrix().asDiagonal();
}

inline ElasticityModel make_elasticity(Eigen::MatrixXd b, Eigen::VectorXd mu,
                                       const Eigen::MatrixXd& sigma) {
  require_dim(b.rows() == b.cols() && b.rows() == mu.size() && sigma.rows() == b.rows(),
              "elasticity dimensions inconsistent");
  ElasticityModel em;
  em.sigma_factor = psd_factor(sigma);
  em.B = std::move(b);
  em.mu = std::move(mu);
  return em;
}

namespace detail {

/// Largest eigenvalue by power iteration with a deterministic start vector.
inline double power_lambda_max(const Eigen::MatrixXd& m, int max_iter = 500,
                               double rel_tol = 1e-13) {
  const Eigen::Index n = m.rows();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd w = m * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    w /= norm;
    const double next = w.dot(m * w);
    if (it > 0 && std::abs(next - lambda) <= rel_tol * std::abs(next)) return next;
    lambda = next;
    v = std::move(w);
  }
  return lambda;
}

}  // namespace detail

/// B = -I + eps * zero_diagonal(S S^T), S with i.i.d. Uniform[0,1] entries,
/// eps = eps_fraction / lambda_max(zero_diagonal(S S^T)). The symmetric part
/// of the result has all eigenvalues <= eps_fraction - 1 < 0.
inline ElasticityModel gen_elasticity(int route_count, double eps_fraction,
                                      std::uint64_t seed) {
  if (route_count < 1) throw DomainError("route_count must be >= 1");
  if (!(eps_fraction > 0.0 && eps_fraction < 1.0))
    throw DomainError("eps_fraction must lie in (0, 1)");
  const Eigen::Index r = route_count;
  Eigen::MatrixXd s(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      s(i, j) = counter_uniform(seed, streams::kElasticity,
                                std::uint64_t(i) * std::uint64_t(r) + std::uint64_t(j));
  Eigen::MatrixXd m = s * s.transpose();
  m.diagonal().setZero();
  const double lmax = r == 1 ? 0.0 : detail::power_lambda_max(m);
  const double eps = lmax > 0.0 ? eps_fraction / lmax : 0.0;
  ElasticityModel em;
  em.B = -Eigen::MatrixXd::Identity(r, r) + eps * m;
  em.mu = Eigen::VectorXd::Zero(r);
  em.sigma_factor = Eigen::MatrixXd::Identity(r, r);
  return em;
}

// ---------------------------------------------------------------------------
// Scenarios

/// N noise draws, one per column, with the seed that produced them.
/// Column i depends only on (seed, i): regeneration is bit-exact and columns
/// may be produced in any order.
struct ScenarioSet {
  Eigen::MatrixXd xi;  // |R| x N
  std::uint64_t seed = 0;
  int count = 0;
};

inline ScenarioSet sample_scenarios(const ElasticityModel& model, int n, std::uint64_t seed) {
  if (n < 1) throw DomainError("scenario count must be >= 1");
  const Eigen::Index r = model.B.rows();
  const std::uint64_t blocks_per_col = (std::uint64_t(r) + 1) / 2;
  Eigen::MatrixXd z(r, n);
  for (int i = 0; i < n; ++i) {
    for (std::uint64_t blk = 0; blk < blocks_per_col; ++blk) {
      const auto pair = counter_gaussian_pair(seed, streams::kScenario,
                                              std::uint64_t(i) * blocks_per_col + blk);
      const Eigen::Index j = Eigen::Index(2 * blk);
      z(j, i) = pair[0];
      if (j + 1 < r) z(j + 1, i) = pair[1];
    }
  }
  ScenarioSet scen;
  scen.xi = model.sigma_factor * z;
  scen.xi.colwise() += model.mu;
  scen.seed = seed;
  scen.count = n;
  return scen;
}

// ---------------------------------------------------------------------------
// Problem instance

/// Everything the evaluator and solver need: network + routes + commodities
/// + cost + elasticity + scalars. Immutable in practice; validate() checks
/// mutual dimension consistency.
struct ProblemInstance {
  Network network;
  RouteSet routes;
  CommoditySpec commodity;
  CostModel cost;
  ElasticityModel elasticity;
  double lambda = 0.0;
  Eigen::VectorXd p_lower, p_upper;  // price bounds
  Eigen::VectorXd x_upper;           // flow cap, > 0

  int route_count() const { return routes.route_count(); }
  int commodity_count() const { return commodity.commodity_count(); }
  int scenario_dim() const { return int(elasticity.B.rows()); }

  void validate() const {
    const int r = routes.route_count();
    require_dim(cost.scaled_assignment.rows() == r, "cost rows != |R|");
    require_dim(cost.linear.size() == r, "linear term length != |R|");
    require_dim(elasticity.B.rows() == r && elasticity.B.cols() == r, "B is not |R| x |R|");
    require_dim(elasticity.mu.size() == r, "mu length != |R|");
    require_dim(elasticity.sigma_factor.rows() == r, "sigma factor rows != |R|");
    require_dim(commodity.matrix.cols() == r, "K columns != |R|");
    require_dim(commodity.demand_lower.size() == commodity.matrix.rows(),
                "l length != |K|");
    require_dim(p_lower.size() == r && p_upper.size() == r && x_upper.size() == r,
                "bound vector length != |R|");
    if (lambda < 0.0) throw DomainError("lambda must be nonnegative");
    if ((p_lower.array() > p_upper.array()).any())
      throw DomainError("p_lower must not exceed p_upper");
    if ((x_upper.array() <= 0.0).any()) throw DomainError("x_upper must be positive");
  }
};

// ---------------------------------------------------------------------------
// Fixtures and generators

namespace fixtures {

/// 3-node graph used for Q-structure tests. Not strongly connected, so it is
/// built with connectivity checking disabled and exists only for tests.
inline Network three_node_network() {
  return Network::from_edges(3, {{0, 1}, {2, 0}, {2, 1}}, {},
                             Network::Connectivity::fixture_unchecked);
}

inline RouteSet three_node_routes() {
  return route_set_from_node_paths(three_node_network(),
                                   {{0, 1}, {2, 0}, {2, 0, 1}, {2, 1}});
}

/// One-route instance whose objective reduces to
///   f(p) = lambda/2 p^2 - s0 * clip(-p, 0, x_u)
/// (Q = 0, B = -1, zeta = 0 unless sigma > 0). Used for closed-form checks,
/// the nonconvexity witness and the Monte Carlo rate test.
inline ProblemInstance scalar_fixture(double lambda, double sigma = 0.0,
                                      double x_upper = 0.5) {
  ProblemInstance inst{
      .network = Network::from_edges(2, {{0, 1}, {1, 0}}),
      .routes = {},
      .commodity = {},
      .cost = {},
      .elasticity = {},
      .lambda = lambda,
      .p_lower = Eigen::VectorXd::Constant(1, -1.0),
      .p_upper = Eigen::VectorXd::Constant(1, 1.0),
      .x_upper = Eigen::VectorXd::Constant(1, x_upper)};
  inst.routes = route_set_from_node_paths(inst.network, {{0, 1}});
  inst.commodity = build_commodity(inst.routes, {}, std::nullopt, Eigen::VectorXd());
  SparseRowMat zero_at(1, 2);  // Q = 0
  inst.cost = CostModel::from_raw(zero_at, Eigen::VectorXd::Constant(1, 1.0));  // s = 1
  inst.elasticity.B = Eigen::MatrixXd::Constant(1, 1, -1.0);
  inst.elasticity.mu = Eigen::VectorXd::Zero(1);
  inst.elasticity.sigma_factor = Eigen::MatrixXd::Constant(1, 1, sigma);
  inst.validate();
  return inst;
}

}  // namespace fixtures

/// The 4-node verification instance: 6 edges, the fixed 16-route table and
/// two single-route commodities (K nonzeros at (0,1) and (1,4), 2/32 dense).
/// Cost, noise and bound values are repo defaults recorded in the manifest.
inline ProblemInstance gen_toy_instance() {
  ProblemInstance inst;
  inst.network = Network::from_edges(
      4, {{0, 1}, {1, 2}, {1, 3}, {2, 3}, {3, 0}, {3, 2}});
  inst.routes = route_set_from_node_paths(
      inst.network,
      {{0, 1}, {0, 1, 2}, {0, 1, 2, 3}, {0, 1, 3},
       {1, 2}, {1, 2, 3}, {1, 2, 3, 0}, {1, 3}, {1, 3, 0},
       {2, 3}, {2, 3, 0}, {2, 3, 0, 1},
       {3, 0}, {3, 0, 1}, {3, 0, 1, 2}, {3, 2}});
  Eigen::VectorXd l(2);
  l << 0.1, 0.1;
  inst.commodity = build_commodity(inst.routes, {{0, 2}, {1, 2}},
                                   std::vector<std::vector<int>>{{1}, {4}}, l);
  inst.cost = CostModel::from_vectors(inst.routes,
                                      Eigen::VectorXd::Constant(6, 0.2),
                                      Eigen::VectorXd::Constant(6, 0.4));
  inst.elasticity = gen_elasticity(16, 0.5, 7);
  inst.elasticity.sigma_factor = 0.5 * Eigen::MatrixXd::Identity(16, 16);
  inst.lambda = 1.0;
  inst.p_lower = Eigen::VectorXd::Zero(16);
  inst.p_upper = Eigen::VectorXd::Constant(16, 10.0);
  inst.x_upper = Eigen::VectorXd::Ones(16);
  inst.validate();
  return inst;
}

/// Random instance family used by the scaling experiments: |E| = |R| / 5,
/// a cycle-plus-chords digraph, route set trimmed round-robin across pairs
/// to exactly `route_count` routes, and the most-served pairs as commodities.
inline ProblemInstance gen_random_instance(int route_count, int commodity_count,
                                           std::uint64_t seed) {
  if (route_count < 4) throw DomainError("route_count must be >= 4");
  if (commodity_count < 1) throw DomainError("commodity_count must be >= 1");
  // |E| = |R| / 5 for the scaling family; a floor of 10 keeps small test
  // instances rich enough in simple paths
  const int edge_count = std::max(10, route_count / 5);

  // Candidate graph shapes: a directed cycle plus random chords, walking the
  // node count down from 0.6 |E| and re-drawing the chords a few times when a
  // shape cannot supply enough simple paths. Deterministic in the seed.
  std::vector<std::pair<int, std::uint64_t>> attempts;
  for (std::uint64_t sub = 0; sub < 8; ++sub)
    for (int nodes = std::max(4, int(std::lround(0.6 * edge_count))); nodes >= 4; --nodes)
      if (nodes <= edge_count && nodes * (nodes - 1) >= edge_count)
        attempts.emplace_back(nodes, sub);

  for (std::size_t attempt = 0;; ++attempt) {
    if (attempt >= attempts.size())
      throw ModelError("cannot build a graph with enough routes for |R|=" +
                       std::to_string(route_count));
    const auto [nodes, substream] = attempts[attempt];
    std::vector<Edge> edges;
    for (int v = 0; v < nodes; ++v) edges.push_back({v, (v + 1) % nodes});
    std::uint64_t draw = 0;
    const std::uint64_t stream = streams::kGraph + (substream << 32);
    while (int(edges.size()) < edge_count) {
      const int a = int(counter_uniform(seed, stream, draw++) * nodes);
      const int b = int(counter_uniform(seed, stream, draw++) * nodes);
      if (a == b) continue;
      bool dup = false;
      for (const auto& e : edges) dup = dup || (e.tail == a && e.head == b);
      if (!dup) edges.push_back({a, b});
    }
    Network net = Network::from_edges(nodes, std::move(edges));

    std::vector<std::pair<int, int>> pairs;
    for (int s = 0; s < nodes; ++s)
      for (int t = 0; t < nodes; ++t)
        if (s != t) pairs.emplace_back(s, t);
    RouteSet all = enumerate_routes(net, pairs, route_count, nodes);
    if (all.route_count() < route_count) continue;  // denser retry

    // Round-robin over pairs, k-th shortest of each in turn, until |R| routes.
    std::vector<std::vector<int>> per_pair(pairs.size());
    for (int r = 0; r < all.route_count(); ++r) {
      const auto it = std::find(pairs.begin(), pairs.end(), all.source_sink[std::size_t(r)]);
      per_pair[std::size_t(it - pairs.begin())].push_back(r);
    }
    std::vector<int> picked;
    for (std::size_t k = 0; picked.size() < std::size_t(route_count); ++k) {
      bool any = false;
      for (std::size_t pi = 0; pi < pairs.size() && picked.size() < std::size_t(route_count);
           ++pi)
        if (k < per_pair[pi].size()) {
          picked.push_back(per_pair[pi][k]);
          any = true;
        }
      if (!any) break;
    }
    if (picked.size() < std::size_t(route_count)) continue;

    RouteSet rs;
    for (int r : picked) {
      rs.routes.push_back(all.routes[std::size_t(r)]);
      rs.source_sink.push_back(all.source_sink[std::size_t(r)]);
    }
    rs.assignment = detail::assignment_from_routes(rs.routes, net.edge_count());

    // Commodities: the pairs serving the most routes.
    std::map<std::pair<int, int>, int> served;
    for (const auto& ss : rs.source_sink) served[ss] += 1;
    std::vector<std::pair<int, int>> ranked(pairs.begin(), pairs.end());
    std::stable_sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
      return served[a] > served[b];
    });
    if (int(ranked.size()) > commodity_count) ranked.resize(std::size_t(commodity_count));
    Eigen::VectorXd l(commodity_count);
    for (int k = 0; k < commodity_count; ++k) l[k] = 0.05 * served[ranked[std::size_t(k)]];

    ProblemInstance inst;
    inst.network = std::move(net);
    inst.routes = std::move(rs);
    inst.commodity = build_commodity(inst.routes, ranked, std::nullopt, l);
    Eigen::VectorXd coe(edge_count), offset(edge_count);
    for (int e = 0; e < edge_count; ++e) {
      coe[e] = 0.05 + 0.1 * counter_uniform(seed, streams::kCost, std::uint64_t(e));
      offset[e] =
          0.1 + 0.2 * counter_uniform(seed, streams::kCost, std::uint64_t(edge_count + e));
    }
    inst.cost = CostModel::from_vectors(inst.routes, coe, offset);
    inst.elasticity = gen_elasticity(route_count, 0.5, seed);
    inst.elasticity.sigma_factor =
        0.5 * Eigen::MatrixXd::Identity(route_count, route_count);
    inst.lambda = 1.0;
    inst.p_lower = Eigen::VectorXd::Zero(route_count);
    inst.p_upper = Eigen::VectorXd::Constant(route_count, 10.0);
    inst.x_upper = Eigen::VectorXd::Ones(route_count);
    inst.validate();
    return inst;
  }
}

}  // namespace netprice
