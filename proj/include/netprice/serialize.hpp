#pragma once

// JSON schemas: network / route / commodity documents, instance manifests,
// evaluation reports and solve results. Every document carries a versioned
// "format" tag. An instance manifest holds everything needed to rebuild the
// instance bit-exactly (generator parameters and seeds, or a data file plus
// the enumeration budget).

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "netprice/common.hpp"
#include "netprice/evaluator.hpp"
#include "netprice/network.hpp"
#include "netprice/problem.hpp"
#include "netprice/solver.hpp"

namespace netprice {

using Json = nlohmann::json;

// -- small helpers -----------------------------------------------------------

inline Json to_json(const Eigen::VectorXd& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Eigen::VectorXd vector_from_json(const Json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[Eigen::Index(i)] = arr[i].get<double>();
  return v;
}

inline void expect_format(const Json& j, const std::string& tag) {
  if (!j.contains("format") || j["format"].get<std::string>() != tag)
    throw ParseError("expected a document with format \"" + tag + "\"");
}

// -- network / routes / commodity --------------------------------------------

inline Json network_to_json(const Network& net) {
  Json j;
  j["format"] = "netprice.network/1";
  j["node_count"] = net.node_count();
  Json edges = Json::array();
  for (const auto& e : net.edges()) edges.push_back({e.tail, e.head});
  j["edges"] = std::move(edges);
  if (net.has_attrs()) {
    Json attrs = Json::array();
    for (const auto& a : net.attrs())
      attrs.push_back({{"capacity", a.capacity},
                       {"length", a.length},
                       {"free_flow_time", a.free_flow_time},
                       {"b", a.b},
                       {"power", a.power},
                       {"speed", a.speed},
                       {"toll", a.toll},
                       {"type", a.type}});
    j["attrs"] = std::move(attrs);
  }
  return j;
}

inline Network network_from_json(const Json& j,
                                 Network::Connectivity conn = Network::Connectivity::required) {
  expect_format(j, "netprice.network/1");
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.push_back({e[0].get<int>(), e[1].get<int>()});
  std::vector<EdgeAttrs> attrs;
  if (j.contains("attrs"))
    for (const auto& a : j["attrs"])
      attrs.push_back({a.value("capacity", 0.0), a.value("length", 0.0),
                       a.value("free_flow_time", 0.0), a.value("b", 0.0),
                       a.value("power", 0.0), a.value("speed", 0.0), a.value("toll", 0.0),
                       a.value("type", 0.0)});
  return Network::from_edges(j.at("node_count").get<int>(), std::move(edges),
                             std::move(attrs), conn);
}

inline Json routes_to_json(const RouteSet& rs) {
  Json j;
  j["format"] = "netprice.routes/1";
  j["edge_count"] = rs.edge_count();
  j["routes"] = rs.routes;
  Json pairs = Json::array();
  for (const auto& [s, t] : rs.source_sink) pairs.push_back({s, t});
  j["source_sink"] = std::move(pairs);
  return j;
}

inline RouteSet routes_from_json(const Json& j) {
  expect_format(j, "netprice.routes/1");
  RouteSet rs;
  rs.routes = j.at("routes").get<std::vector<std::vector<int>>>();
  for (const auto& p : j.at("source_sink"))
    rs.source_sink.emplace_back(p[0].get<int>(), p[1].get<int>());
  if (rs.routes.size() != rs.source_sink.size())
    throw ParseError("routes and source_sink lengths differ");
  rs.assignment = detail::assignment_from_routes(rs.routes, j.at("edge_count").get<int>());
  return rs;
}

inline Json commodity_to_json(const CommoditySpec& spec) {
  Json j;
  j["format"] = "netprice.commodity/1";
  Json pairs = Json::array();
  for (const auto& [s, t] : spec.pairs) pairs.push_back({s, t});
  j["pairs"] = std::move(pairs);
  j["route_count"] = int(spec.matrix.cols());
  Json entries = Json::array();
  for (int k = 0; k < spec.matrix.outerSize(); ++k)
    for (SparseRowMat::InnerIterator it(spec.matrix, k); it; ++it)
      entries.push_back({int(it.row()), int(it.col())});
  j["entries"] = std::move(entries);
  j["demand_lower"] = to_json(spec.demand_lower);
  return j;
}

// -- instance manifests --------------------------------------------------------

/// Parameters of a TNTP-backed instance; every knob that affects the build.
struct TntpInstanceParams {
  std::string network_file;
  std::vector<std::pair<int, int>> pairs;  // original (file) node ids
  int max_per_pair = 2000;
  int max_length = 15;
  double demand_fraction = 0.05;
  double eps_fraction = 0.5;
  double sigma_scale = 0.5;
  double lambda = 1.0;
  double p_upper = 10.0;
  double x_upper = 1.0;
  std::uint64_t seed = 1;
};

inline Json manifest_for_toy4() {
  return Json{{"format", "netprice.instance/1"}, {"kind", "toy4"}};
}

inline Json manifest_for_random(int routes, int commodities, std::uint64_t seed) {
  return Json{{"format", "netprice.instance/1"},
              {"kind", "random"},
              {"random",
               {{"routes", routes}, {"commodities", commodities}, {"seed", seed}}}};
}

inline Json manifest_for_tntp(const TntpInstanceParams& params) {
  Json pairs = Json::array();
  for (const auto& [s, t] : params.pairs) pairs.push_back({s, t});
  return Json{{"format", "netprice.instance/1"},
              {"kind", "tntp"},
              {"tntp",
               {{"network_file", params.network_file},
                {"pairs", pairs},
                {"pair_ids", "original"},
                {"max_per_pair", params.max_per_pair},
                {"max_length", params.max_length}}},
              {"scalars",
               {{"demand_fraction", params.demand_fraction},
                {"eps_fraction", params.eps_fraction},
                {"sigma_scale", params.sigma_scale},
                {"lambda", params.lambda},
                {"p_upper", params.p_upper},
                {"x_upper", params.x_upper},
                {"seed", params.seed}}}};
}

/// Build a TNTP-backed instance. Costs are seeded from the per-edge
/// attributes (coe = free-flow time / capacity, offset = free-flow time,
/// clamped nonnegative); demands are demand_fraction * (#serving routes).
inline ProblemInstance instance_from_tntp(const TntpInstanceParams& params,
                                          const std::string& base_dir = "") {
  const std::string path =
      (!base_dir.empty() && params.network_file.front() != '/')
          ? base_dir + "/" + params.network_file
          : params.network_file;
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file " + path);
  ProblemInstance inst;
  inst.network = load_tntp(in);

  // original ids -> 0-based
  std::vector<std::pair<int, int>> pairs0;
  for (const auto& [s, t] : params.pairs) {
    int s0 = -1, t0 = -1;
    for (int v = 0; v < inst.network.node_count(); ++v) {
      if (inst.network.original_id(v) == s) s0 = v;
      if (inst.network.original_id(v) == t) t0 = v;
    }
    if (s0 < 0 || t0 < 0) throw ModelError("commodity pair references unknown node id");
    pairs0.emplace_back(s0, t0);
  }
  inst.routes =
      enumerate_routes(inst.network, pairs0, params.max_per_pair, params.max_length);

  Eigen::VectorXd l(Eigen::Index(pairs0.size()));
  for (std::size_t k = 0; k < pairs0.size(); ++k) {
    int served = 0;
    for (const auto& ss : inst.routes.source_sink) served += ss == pairs0[k] ? 1 : 0;
    l[Eigen::Index(k)] = params.demand_fraction * served;
  }
  inst.commodity = build_commodity(inst.routes, pairs0, std::nullopt, l);

  const int e = inst.network.edge_count();
  Eigen::VectorXd coe(e), offset(e);
  for (int i = 0; i < e; ++i) {
    const auto& at = inst.network.attrs()[std::size_t(i)];
    coe[i] = std::max(at.free_flow_time / std::max(at.capacity, 1.0), 0.0);
    offset[i] = std::max(at.free_flow_time, 0.0);
  }
  inst.cost = CostModel::from_vectors(inst.routes, coe, offset);

  const int r = inst.routes.route_count();
  inst.elasticity = gen_elasticity(r, params.eps_fraction, params.seed);
  inst.elasticity.sigma_factor =
      params.sigma_scale * Eigen::MatrixXd::Identity(r, r);
  inst.lambda = params.lambda;
  inst.p_lower = Eigen::VectorXd::Zero(r);
  inst.p_upper = Eigen::VectorXd::Constant(r, params.p_upper);
  inst.x_upper = Eigen::VectorXd::Constant(r, params.x_upper);
  inst.validate();
  return inst;
}

inline TntpInstanceParams tntp_params_from_manifest(const Json& j) {
  TntpInstanceParams params;
  const Json& t = j.at("tntp");
  params.network_file = t.at("network_file").get<std::string>();
  for (const auto& p : t.at("pairs"))
    params.pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  params.max_per_pair = t.value("max_per_pair", params.max_per_pair);
  params.max_length = t.value("max_length", params.max_length);
  if (j.contains("scalars")) {
    const Json& s = j["scalars"];
    params.demand_fraction = s.value("demand_fraction", params.demand_fraction);
    params.eps_fraction = s.value("eps_fraction", params.eps_fraction);
    params.sigma_scale = s.value("sigma_scale", params.sigma_scale);
    params.lambda = s.value("lambda", params.lambda);
    params.p_upper = s.value("p_upper", params.p_upper);
    params.x_upper = s.value("x_upper", params.x_upper);
    params.seed = s.value("seed", params.seed);
  }
  return params;
}

inline ProblemInstance instance_from_manifest(const Json& j, const std::string& base_dir = "") {
  expect_format(j, "netprice.instance/1");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "toy4") return gen_toy_instance();
  if (kind == "random") {
    const Json& r = j.at("random");
    return gen_random_instance(r.at("routes").get<int>(), r.at("commodities").get<int>(),
                               r.at("seed").get<std::uint64_t>());
  }
  if (kind == "tntp") return instance_from_tntp(tntp_params_from_manifest(j), base_dir);
  throw ParseError("unknown instance kind \"" + kind + "\"");
}

inline std::uint64_t manifest_hash(const Json& j) { return fnv1a64(j.dump()); }

// -- reports and results ---------------------------------------------------------

inline Json report_to_json(const EvalReport& rep) {
  Json j;
  j["format"] = "netprice.eval/1";
  j["objective"] = rep.objective;
  j["constraint"] = to_json(rep.constraint);
  j["gradient_norm"] = rep.gradient.norm();
  j["path"] = to_string(rep.path);
  j["timings_ms"] = {{"flows", rep.timings.flows_ms},
                     {"objective", rep.timings.objective_ms},
                     {"constraint", rep.timings.constraint_ms},
                     {"gradient", rep.timings.gradient_ms},
                     {"hessian", rep.timings.hessian_ms}};
  return j;
}

inline Json solver_config_to_json(const SolverConfig& cfg) {
  return Json{{"tol_kkt", cfg.tol_kkt},
              {"max_iter", cfg.max_iter},
              {"delta0", cfg.delta0},
              {"delta_max", cfg.delta_max},
              {"eta_accept", cfg.eta_accept},
              {"shrink", cfg.shrink},
              {"expand", cfg.expand},
              {"merit_penalty0", cfg.merit_penalty0},
              {"hessian_mode",
               cfg.hessian_mode == SolverConfig::HessianMode::exact ? "exact" : "regularized"},
              {"path", to_string(cfg.path)},
              {"threads", cfg.threads}};
}

inline Json result_to_json(const SolverState& st, const SolverConfig& cfg,
                           std::uint64_t instance_hash) {
  Json j;
  j["format"] = "netprice.result/1";
  j["status"] = to_string(st.status);
  j["iterations"] = st.iterations;
  j["objective"] = st.objective;
  j["p"] = to_json(st.p);
  j["constraint"] = to_json(st.constraint);
  j["gamma"] = to_json(st.gamma);
  j["kkt"] = {{"stationarity", st.kkt_stationarity},
              {"feasibility", st.feasibility},
              {"complementarity", st.complementarity}};
  j["config"] = solver_config_to_json(cfg);
  std::ostringstream hash;
  hash << "0x" << std::hex << instance_hash;
  j["instance_manifest_hash"] = hash.str();
  return j;
}

inline std::string trace_to_csv(const SolverState& st) {
  std::ostringstream out;
  out << "iter,objective,violation,stationarity,rho,delta,step_norm,accepted,restoration,"
         "cg_iterations,wall_ms\n";
  out.precision(17);
  for (const auto& r : st.trace)
    out << r.iter << ',' << r.objective << ',' << r.violation << ',' << r.stationarity << ','
        << r.rho << ',' << r.delta << ',' << r.step_norm << ',' << int(r.accepted) << ','
        << int(r.restoration) << ',' << r.cg_iterations << ',' << r.wall_ms << '\n';
  return out.str();
}

}  // namespace netprice
