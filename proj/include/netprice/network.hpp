#pragma once

// Traffic network representation: directed graph, enumerated route set and
// the sparse route-edge / commodity-route assignment matrices.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "netprice/common.hpp"

namespace netprice {

using SparseRowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Edge {
  int tail = 0;
  int head = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Per-edge attributes carried through from TNTP records; used to seed the
/// congestion cost vectors.
struct EdgeAttrs {
  double capacity = 0.0;
  double length = 0.0;
  double free_flow_time = 0.0;
  double b = 0.0;
  double power = 0.0;
  double speed = 0.0;
  double toll = 0.0;
  double type = 0.0;
};

/// Simple digraph with 0-based contiguous node ids. Immutable once built.
///
/// Construction rejects self-loops, duplicate directed edges and (unless the
/// fixture flag is set) graphs that are not strongly connected.
class Network {
 public:
  enum class Connectivity { required, fixture_unchecked };

  static Network from_edges(int node_count, std::vector<Edge> edges,
                            std::vector<EdgeAttrs> attrs = {},
                            Connectivity conn = Connectivity::required,
                            std::vector<int> original_ids = {}) {
    if (node_count <= 0) throw ModelError("network needs at least one node");
    Network net;
    net.node_count_ = node_count;
    net.edges_ = std::move(edges);
    net.attrs_ = std::move(attrs);
    net.original_ids_ = std::move(original_ids);
    if (!net.attrs_.empty() && net.attrs_.size() != net.edges_.size())
      throw DimensionError("edge attribute list length mismatch");
    for (std::size_t e = 0; e < net.edges_.size(); ++e) {
      const auto [tail, head] = net.edges_[e];
      if (tail < 0 || tail >= node_count || head < 0 || head >= node_count)
        throw ModelError("edge endpoint out of range");
      if (tail == head)
        throw ModelError("self-loop on node " + std::to_string(tail));
      if (!net.edge_index_.emplace(std::make_pair(tail, head), int(e)).second)
        throw ModelError("duplicate directed edge (" + std::to_string(tail) + ", " +
                         std::to_string(head) + ")");
    }
    net.build_adjacency();
    if (conn == Connectivity::required) net.check_strong_connectivity();
    return net;
  }

  int node_count() const { return node_count_; }
  int edge_count() const { return int(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_[std::size_t(e)]; }

  bool has_attrs() const { return !attrs_.empty(); }
  const std::vector<EdgeAttrs>& attrs() const { return attrs_; }

  /// Edge position for (tail, head), or -1 when absent.
  int edge_index(int tail, int head) const {
    auto it = edge_index_.find({tail, head});
    return it == edge_index_.end() ? -1 : it->second;
  }

  /// Outgoing edge indices of a node, sorted ascending.
  const std::vector<int>& out_edges(int node) const { return out_edges_[std::size_t(node)]; }

  /// Original (file) node id for a 0-based id; identity when no remap exists.
  int original_id(int node) const {
    return original_ids_.empty() ? node : original_ids_[std::size_t(node)];
  }

 private:
  void build_adjacency() {
    out_edges_.assign(std::size_t(node_count_), {});
    in_edges_.assign(std::size_t(node_count_), {});
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      out_edges_[std::size_t(edges_[e].tail)].push_back(int(e));
      in_edges_[std::size_t(edges_[e].head)].push_back(int(e));
    }
    // Edge records are kept in file order; adjacency is sorted so traversal
    // order is the deterministic edge-index order.
    for (auto& v : out_edges_) std::sort(v.begin(), v.end());
    for (auto& v : in_edges_) std::sort(v.begin(), v.end());
  }

  std::vector<char> reachable(int start, bool backwards) const {
    std::vector<char> seen(std::size_t(node_count_), 0);
    std::vector<int> stack{start};
    seen[std::size_t(start)] = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      const auto& nbrs = backwards ? in_edges_[std::size_t(v)] : out_edges_[std::size_t(v)];
      for (int e : nbrs) {
        const int w = backwards ? edges_[std::size_t(e)].tail : edges_[std::size_t(e)].head;
        if (!seen[std::size_t(w)]) {
          seen[std::size_t(w)] = 1;
          stack.push_back(w);
        }
      }
    }
    return seen;
  }

  void check_strong_connectivity() const {
    const auto fwd = reachable(0, false);
    for (int v = 0; v < node_count_; ++v)
      if (!fwd[std::size_t(v)])
        throw ModelError("network is not strongly connected: node " +
                         std::to_string(original_id(0)) + " cannot reach node " +
                         std::to_string(original_id(v)));
    const auto bwd = reachable(0, true);
    for (int v = 0; v < node_count_; ++v)
      if (!bwd[std::size_t(v)])
        throw ModelError("network is not strongly connected: node " +
                         std::to_string(original_id(v)) + " cannot reach node " +
                         std::to_string(original_id(0)));
  }

  int node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<EdgeAttrs> attrs_;
  std::vector<int> original_ids_;
  std::map<std::pair<int, int>, int> edge_index_;
  std::vector<std::vector<int>> out_edges_;
  std::vector<std::vector<int>> in_edges_;
};

// ---------------------------------------------------------------------------
// TNTP network files

namespace detail {

inline std::optional<long> metadata_value(const std::string& line, const std::string& tag) {
  const auto pos = line.find(tag);
  if (pos == std::string::npos) return std::nullopt;
  std::istringstream rest(line.substr(pos + tag.size()));
  long value = 0;
  if (!(rest >> value)) return std::nullopt;
  return value;
}

}  // namespace detail

/// Parse a TNTP network file: metadata lines up to <END OF METADATA>, then
/// one whitespace-separated record per link (init node, term node, capacity,
/// length, free flow time, B, power, speed, toll, type) with an optional ';'
/// terminator. Node ids are remapped to 0-based contiguous integers in order
/// of first appearance of the sorted original ids.
inline Network load_tntp(std::istream& in,
                         Network::Connectivity conn = Network::Connectivity::required) {
  long node_count = -1, link_count = -1;
  std::string line;
  int line_no = 0;
  bool metadata_done = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto v = detail::metadata_value(line, "<NUMBER OF NODES>")) node_count = *v;
    if (auto v = detail::metadata_value(line, "<NUMBER OF LINKS>")) link_count = *v;
    if (line.find("<END OF METADATA>") != std::string::npos) {
      metadata_done = true;
      break;
    }
  }
  if (!metadata_done) throw ParseError("TNTP metadata: missing <END OF METADATA>");
  if (node_count <= 0)
    throw ParseError("TNTP metadata: missing or invalid <NUMBER OF NODES>");
  if (link_count <= 0)
    throw ParseError("TNTP metadata: missing or invalid <NUMBER OF LINKS>");

  std::vector<std::pair<long, long>> raw_links;
  std::vector<EdgeAttrs> attrs;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments and record terminators
    if (auto pos = line.find('~'); pos != std::string::npos) line = line.substr(0, pos);
    std::replace(line.begin(), line.end(), ';', ' ');
    std::istringstream ss(line);
    long a = 0, b = 0;
    if (!(ss >> a)) continue;  // blank line
    if (!(ss >> b))
      throw ParseError("TNTP line " + std::to_string(line_no) + ": expected init and term node");
    EdgeAttrs at;
    // remaining fields are optional; missing ones default to zero
    ss >> at.capacity >> at.length >> at.free_flow_time >> at.b >> at.power >> at.speed >>
        at.toll >> at.type;
    raw_links.emplace_back(a, b);
    attrs.push_back(at);
  }
  if (long(raw_links.size()) != link_count)
    throw ParseError("TNTP: <NUMBER OF LINKS> says " + std::to_string(link_count) +
                     " but file has " + std::to_string(raw_links.size()) + " records");

  // 1-based (or arbitrary) ids -> 0-based contiguous, keeping the original map
  std::map<long, int> remap;
  for (const auto& [a, b] : raw_links) {
    remap.emplace(a, 0);
    remap.emplace(b, 0);
  }
  if (long(remap.size()) > node_count)
    throw ParseError("TNTP: more distinct node ids than <NUMBER OF NODES>");
  std::vector<int> original_ids;
  original_ids.reserve(remap.size());
  int next = 0;
  for (auto& [orig, id] : remap) {
    id = next++;
    original_ids.push_back(int(orig));
  }
  std::vector<Edge> edges;
  edges.reserve(raw_links.size());
  for (const auto& [a, b] : raw_links) edges.push_back({remap.at(a), remap.at(b)});
  return Network::from_edges(int(remap.size()), std::move(edges), std::move(attrs), conn,
                             std::move(original_ids));
}

/// Write a network back out as TNTP. load_tntp(write_tntp(net)) is a fixed
/// point on (node_count, edge list).
inline void write_tntp(const Network& net, std::ostream& out) {
  out << "<NUMBER OF NODES> " << net.node_count() << "\n";
  out << "<NUMBER OF LINKS> " << net.edge_count() << "\n";
  out << "<END OF METADATA>\n\n";
  out << "~ \tInit node \tTerm node \tCapacity \tLength \tFree Flow Time \tB\tPower\tSpeed "
         "limit \tToll \tType\t;\n";
  for (int e = 0; e < net.edge_count(); ++e) {
    const auto& ed = net.edge(e);
    EdgeAttrs at;
    if (net.has_attrs()) at = net.attrs()[std::size_t(e)];
    out << '\t' << net.original_id(ed.tail) << '\t' << net.original_id(ed.head) << '\t'
        << at.capacity << '\t' << at.length << '\t' << at.free_flow_time << '\t' << at.b << '\t'
        << at.power << '\t' << at.speed << '\t' << at.toll << '\t' << at.type << "\t;\n";
  }
}

// ---------------------------------------------------------------------------
// Route sets

/// Enumerated routes plus the sparse 0/1 route-edge assignment matrix.
struct RouteSet {
  std::vector<std::vector<int>> routes;       // edge-index sequences, simple paths
  SparseRowMat assignment;                    // |R| x |E|
  std::vector<std::pair<int, int>> source_sink;

  int route_count() const { return int(routes.size()); }
  int edge_count() const { return int(assignment.cols()); }
};

namespace detail {

inline SparseRowMat assignment_from_routes(const std::vector<std::vector<int>>& routes,
                                           int edge_count) {
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t r = 0; r < routes.size(); ++r)
    for (int e : routes[r]) {
      if (e < 0 || e >= edge_count) throw DimensionError("route references unknown edge");
      trips.emplace_back(int(r), e, 1.0);
    }
  SparseRowMat a(Eigen::Index(routes.size()), edge_count);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

// Hop distances to `sink` along reversed edges; used to prune enumeration.
inline std::vector<int> dist_to_sink(const Network& net, int sink) {
  std::vector<std::vector<int>> in_nbrs(std::size_t(net.node_count()));
  for (const auto& ed : net.edges()) in_nbrs[std::size_t(ed.head)].push_back(ed.tail);
  std::vector<int> dist(std::size_t(net.node_count()), -1);
  std::vector<int> frontier{sink};
  dist[std::size_t(sink)] = 0;
  while (!frontier.empty()) {
    std::vector<int> next;
    for (int v : frontier)
      for (int w : in_nbrs[std::size_t(v)])
        if (dist[std::size_t(w)] < 0) {
          dist[std::size_t(w)] = dist[std::size_t(v)] + 1;
          next.push_back(w);
        }
    frontier = std::move(next);
  }
  return dist;
}

}  // namespace detail

/// Enumerate simple paths for each (source, sink) pair: up to max_per_pair
/// routes of at most max_length edges, ordered shortest-first with ties
/// broken by lexicographic edge-index sequence. Deterministic.
inline RouteSet enumerate_routes(const Network& net,
                                 const std::vector<std::pair<int, int>>& pairs,
                                 int max_per_pair, int max_length) {
  if (max_per_pair <= 0) throw DomainError("max_per_pair must be positive");
  if (max_length <= 0) throw DomainError("max_length must be positive");
  RouteSet rs;
  for (const auto& [source, sink] : pairs) {
    if (source == sink)
      throw ModelError("pair (" + std::to_string(source) + ", " + std::to_string(sink) +
                       ") has equal source and sink");
    if (source < 0 || source >= net.node_count() || sink < 0 || sink >= net.node_count())
      throw ModelError("pair references a node outside the network");

    const auto dist = detail::dist_to_sink(net, sink);
    std::vector<std::vector<int>> found;  // DFS emits lexicographic order
    if (dist[std::size_t(source)] >= 0) {
      std::vector<char> visited(std::size_t(net.node_count()), 0);
      std::vector<int> path;
      // explicit stack of (node, next out-edge position) to avoid recursion
      struct Frame {
        int node;
        std::size_t next;
      };
      std::vector<Frame> stack{{source, 0}};
      visited[std::size_t(source)] = 1;
      while (!stack.empty()) {
        Frame& fr = stack.back();
        const auto& outs = net.out_edges(fr.node);
        bool descended = false;
        while (fr.next < outs.size()) {
          const int e = outs[fr.next++];
          const int w = net.edge(e).head;
          if (visited[std::size_t(w)]) continue;
          const int len = int(path.size()) + 1;
          if (dist[std::size_t(w)] < 0 || len + dist[std::size_t(w)] > max_length) continue;
          path.push_back(e);
          if (w == sink) {
            found.push_back(path);
            path.pop_back();
            continue;  // a simple path cannot revisit the sink
          }
          visited[std::size_t(w)] = 1;
          stack.push_back({w, 0});
          descended = true;
          break;
        }
        if (!descended) {
          const int node = fr.node;
          stack.pop_back();
          if (!stack.empty()) {
            visited[std::size_t(node)] = 0;
            path.pop_back();
          }
        }
      }
    }
    if (found.empty())
      throw ModelError("no simple path within max_length=" + std::to_string(max_length) +
                       " for pair (" + std::to_string(source) + ", " + std::to_string(sink) +
                       ")");
    std::stable_sort(found.begin(), found.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (int(found.size()) > max_per_pair) found.resize(std::size_t(max_per_pair));
    for (auto& route : found) {
      rs.routes.push_back(std::move(route));
      rs.source_sink.emplace_back(source, sink);
    }
  }
  // deduplicate identical routes from overlapping pairs, keeping first
  std::vector<std::vector<int>> unique_routes;
  std::vector<std::pair<int, int>> unique_pairs;
  std::map<std::vector<int>, bool> seen;
  for (std::size_t r = 0; r < rs.routes.size(); ++r) {
    if (seen.emplace(rs.routes[r], true).second) {
      unique_routes.push_back(rs.routes[r]);
      unique_pairs.push_back(rs.source_sink[r]);
    }
  }
  rs.routes = std::move(unique_routes);
  rs.source_sink = std::move(unique_pairs);
  rs.assignment = detail::assignment_from_routes(rs.routes, net.edge_count());
  return rs;
}

/// Build a RouteSet from explicit node sequences (fixtures, hand-written
/// route tables). Each sequence must trace existing edges and repeat no node.
inline RouteSet route_set_from_node_paths(const Network& net,
                                          const std::vector<std::vector<int>>& node_paths) {
  RouteSet rs;
  for (const auto& nodes : node_paths) {
    if (nodes.size() < 2) throw ModelError("route needs at least two nodes");
    std::vector<char> used(std::size_t(net.node_count()), 0);
    std::vector<int> route;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      if (used[std::size_t(nodes[i])]) throw ModelError("route repeats a node");
      used[std::size_t(nodes[i])] = 1;
      const int e = net.edge_index(nodes[i], nodes[i + 1]);
      if (e < 0)
        throw ModelError("route uses missing edge (" + std::to_string(nodes[i]) + ", " +
                         std::to_string(nodes[i + 1]) + ")");
      route.push_back(e);
    }
    if (used[std::size_t(nodes.back())]) throw ModelError("route repeats a node");
    rs.routes.push_back(std::move(route));
    rs.source_sink.emplace_back(nodes.front(), nodes.back());
  }
  rs.assignment = detail::assignment_from_routes(rs.routes, net.edge_count());
  return rs;
}

// ---------------------------------------------------------------------------
// Commodities

/// Source-sink commodities with the 0/1 commodity-route matrix K and the
/// per-commodity minimum-flow vector l (feasibility means K x >= l).
struct CommoditySpec {
  std::vector<std::pair<int, int>> pairs;
  SparseRowMat matrix;  // |K| x |R|
  Eigen::VectorXd demand_lower;

  int commodity_count() const { return int(pairs.size()); }
};

/// Assemble K. Default mode marks every route whose source-sink equals the
/// pair; explicit mode sets exactly the given (pair -> route indices)
/// entries. Every commodity must end up servable by at least one route.
inline CommoditySpec build_commodity(
    const RouteSet& routes, const std::vector<std::pair<int, int>>& pairs,
    const std::optional<std::vector<std::vector<int>>>& route_indices_per_pair,
    const Eigen::VectorXd& demand_lower) {
  if (demand_lower.size() != Eigen::Index(pairs.size()))
    throw DimensionError("demand_lower length must equal the number of pairs");
  if ((demand_lower.array() < 0.0).any())
    throw DomainError("demand_lower must be nonnegative");
  if (route_indices_per_pair && route_indices_per_pair->size() != pairs.size())
    throw DimensionError("route_indices_per_pair must list one selection per pair");

  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    bool any = false;
    if (route_indices_per_pair) {
      for (int r : (*route_indices_per_pair)[k]) {
        if (r < 0 || r >= routes.route_count())
          throw ModelError("selected route index out of range");
        if (routes.source_sink[std::size_t(r)] != pairs[k])
          throw ModelError("route " + std::to_string(r) +
                           " does not serve commodity " + std::to_string(k) +
                           " (source-sink mismatch)");
        trips.emplace_back(int(k), r, 1.0);
        any = true;
      }
    } else {
      for (int r = 0; r < routes.route_count(); ++r)
        if (routes.source_sink[std::size_t(r)] == pairs[k]) {
          trips.emplace_back(int(k), r, 1.0);
          any = true;
        }
    }
    if (!any)
      throw ModelError("commodity " + std::to_string(k) + " (" +
                       std::to_string(pairs[k].first) + " -> " +
                       std::to_string(pairs[k].second) + ") is not served by any route");
  }
  CommoditySpec spec;
  spec.pairs = pairs;
  spec.demand_lower = demand_lower;
  spec.matrix.resize(Eigen::Index(pairs.size()), routes.route_count());
  spec.matrix.setFromTriplets(trips.begin(), trips.end());
  spec.matrix.makeCompressed();
  return spec;
}

}  // namespace netprice
