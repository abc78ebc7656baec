#include "netprice/network.hpp"

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

namespace np = netprice;

namespace {

np::Network toy4_network() {
  return np::Network::from_edges(4, {{0, 1}, {1, 2}, {1, 3}, {2, 3}, {3, 0}, {3, 2}});
}

std::string tntp_text(const std::string& links, int nodes, int count) {
  std::ostringstream os;
  os << "<NUMBER OF NODES> " << nodes << "\n<NUMBER OF LINKS> " << count
     << "\n<END OF METADATA>\n" << links;
  return os.str();
}

}  // namespace

TEST(Network, RejectsSelfLoop) {
  EXPECT_THROW(np::Network::from_edges(2, {{0, 0}, {0, 1}, {1, 0}}), np::ModelError);
}

TEST(Network, RejectsDuplicateEdge) {
  EXPECT_THROW(np::Network::from_edges(2, {{0, 1}, {0, 1}, {1, 0}}), np::ModelError);
}

TEST(Network, RejectsDisconnected) {
  try {
    np::Network::from_edges(3, {{0, 1}, {2, 0}, {2, 1}});
    FAIL() << "expected a connectivity error";
  } catch (const np::ModelError& err) {
    EXPECT_NE(std::string(err.what()).find("not strongly connected"), std::string::npos);
    EXPECT_NE(std::string(err.what()).find("2"), std::string::npos);
  }
}

TEST(Network, FixtureFlagSkipsConnectivity) {
  const auto net = np::Network::from_edges(3, {{0, 1}, {2, 0}, {2, 1}}, {},
                                           np::Network::Connectivity::fixture_unchecked);
  EXPECT_EQ(net.node_count(), 3);
  EXPECT_EQ(net.edge_count(), 3);
}

TEST(LoadTntp, SiouxFallsDimensions) {
  std::ifstream in(std::string(NETPRICE_DATA_DIR) + "/SiouxFalls_net.tntp");
  ASSERT_TRUE(in.is_open());
  const auto net = np::load_tntp(in);
  EXPECT_EQ(net.node_count(), 24);
  EXPECT_EQ(net.edge_count(), 76);
  EXPECT_TRUE(net.has_attrs());
  // first record: 1 -> 2, free flow time 6
  EXPECT_EQ(net.original_id(net.edge(0).tail), 1);
  EXPECT_EQ(net.original_id(net.edge(0).head), 2);
  EXPECT_DOUBLE_EQ(net.attrs()[0].free_flow_time, 6.0);
}

TEST(LoadTntp, SmallestStronglyConnected) {
  std::istringstream in(tntp_text("0 1 10 1 1 0 0 0 0 1 ;\n1 0 10 1 1 0 0 0 0 1 ;\n", 2, 2));
  const auto net = np::load_tntp(in);
  EXPECT_EQ(net.node_count(), 2);
  EXPECT_EQ(net.edge_count(), 2);
}

TEST(LoadTntp, DisconnectedFileFails) {
  std::istringstream in(
      tntp_text("0 1 1 1 1 0 0 0 0 1 ;\n2 0 1 1 1 0 0 0 0 1 ;\n2 1 1 1 1 0 0 0 0 1 ;\n", 3, 3));
  EXPECT_THROW(np::load_tntp(in), np::ModelError);
}

TEST(LoadTntp, MissingMetadataFails) {
  std::istringstream in("0 1 1\n1 0 1\n");
  EXPECT_THROW(np::load_tntp(in), np::ParseError);
}

TEST(LoadTntp, WrongLinkCountFails) {
  std::istringstream in(tntp_text("0 1 1 1 1 0 0 0 0 1 ;\n", 2, 2));
  EXPECT_THROW(np::load_tntp(in), np::ParseError);
}

TEST(LoadTntp, TruncatedRecordFails) {
  std::istringstream in(tntp_text("0\n", 2, 1));
  EXPECT_THROW(np::load_tntp(in), np::ParseError);
}

TEST(LoadTntp, RoundTripIsFixedPoint) {
  std::ifstream in(std::string(NETPRICE_DATA_DIR) + "/SiouxFalls_net.tntp");
  ASSERT_TRUE(in.is_open());
  const auto net = np::load_tntp(in);
  std::ostringstream out;
  np::write_tntp(net, out);
  std::istringstream back(out.str());
  const auto net2 = np::load_tntp(back);
  ASSERT_EQ(net2.node_count(), net.node_count());
  ASSERT_EQ(net2.edge_count(), net.edge_count());
  for (int e = 0; e < net.edge_count(); ++e) {
    EXPECT_EQ(net2.edge(e).tail, net.edge(e).tail);
    EXPECT_EQ(net2.edge(e).head, net.edge(e).head);
  }
}

TEST(EnumerateRoutes, SingleRouteOnTwoNodeNetwork) {
  const auto net = np::Network::from_edges(2, {{0, 1}, {1, 0}});
  const auto rs = np::enumerate_routes(net, {{0, 1}}, 5, 5);
  ASSERT_EQ(rs.route_count(), 1);
  EXPECT_EQ(rs.routes[0], std::vector<int>({0}));
  EXPECT_EQ(rs.source_sink[0], std::make_pair(0, 1));
}

TEST(EnumerateRoutes, Toy4AllPairsFindsAllSimplePaths) {
  // the 4-node verification graph has 18 simple paths over all ordered
  // pairs; the fixed 16-route fixture table is a strict subset of them
  const auto net = toy4_network();
  std::vector<std::pair<int, int>> pairs;
  for (int s = 0; s < 4; ++s)
    for (int t = 0; t < 4; ++t)
      if (s != t) pairs.emplace_back(s, t);
  const auto rs = np::enumerate_routes(net, pairs, 1000, 4);
  EXPECT_EQ(rs.route_count(), 18);
}

TEST(EnumerateRoutes, ShortestFirstWithLexicographicTies) {
  // diamond: two 2-edge paths from 0 to 3 plus a direct edge
  const auto net = np::Network::from_edges(
      4, {{0, 1}, {0, 2}, {0, 3}, {1, 3}, {2, 3}, {3, 0}});
  const auto rs = np::enumerate_routes(net, {{0, 3}}, 10, 3);
  ASSERT_EQ(rs.route_count(), 3);
  EXPECT_EQ(rs.routes[0], std::vector<int>({2}));     // length 1 first
  EXPECT_EQ(rs.routes[1], std::vector<int>({0, 3}));  // then lexicographic
  EXPECT_EQ(rs.routes[2], std::vector<int>({1, 4}));
}

TEST(EnumerateRoutes, MaxPerPairTruncates) {
  const auto net = np::Network::from_edges(
      4, {{0, 1}, {0, 2}, {0, 3}, {1, 3}, {2, 3}, {3, 0}});
  const auto rs = np::enumerate_routes(net, {{0, 3}}, 2, 3);
  ASSERT_EQ(rs.route_count(), 2);
  EXPECT_EQ(rs.routes[0], std::vector<int>({2}));
  EXPECT_EQ(rs.routes[1], std::vector<int>({0, 3}));
}

TEST(EnumerateRoutes, NoPathWithinBudgetFails) {
  const auto net = toy4_network();
  // 0 -> 3 exists only with >= 2 edges
  EXPECT_THROW(np::enumerate_routes(net, {{0, 3}}, 10, 1), np::ModelError);
}

TEST(EnumerateRoutes, DeterministicAcrossCalls) {
  const auto net = toy4_network();
  std::vector<std::pair<int, int>> pairs;
  for (int s = 0; s < 4; ++s)
    for (int t = 0; t < 4; ++t)
      if (s != t) pairs.emplace_back(s, t);
  const auto a = np::enumerate_routes(net, pairs, 1000, 4);
  const auto b = np::enumerate_routes(net, pairs, 1000, 4);
  ASSERT_EQ(a.route_count(), b.route_count());
  for (int r = 0; r < a.route_count(); ++r) EXPECT_EQ(a.routes[r], b.routes[r]);
}

TEST(RouteSet, AssignmentRowSumsEqualRouteLengths) {
  const auto net = toy4_network();
  std::vector<std::pair<int, int>> pairs;
  for (int s = 0; s < 4; ++s)
    for (int t = 0; t < 4; ++t)
      if (s != t) pairs.emplace_back(s, t);
  const auto rs = np::enumerate_routes(net, pairs, 1000, 4);
  const Eigen::VectorXd row_sums =
      rs.assignment * Eigen::VectorXd::Ones(rs.edge_count());
  long nnz = 0;
  for (int r = 0; r < rs.route_count(); ++r) {
    EXPECT_DOUBLE_EQ(row_sums[r], double(rs.routes[r].size()));
    nnz += long(rs.routes[r].size());
  }
  EXPECT_EQ(long(rs.assignment.nonZeros()), nnz);
}

TEST(BuildCommodity, DefaultModeMatchesSourceSink) {
  const auto net = np::Network::from_edges(
      4, {{0, 1}, {0, 2}, {0, 3}, {1, 3}, {2, 3}, {3, 0}});
  const auto rs = np::enumerate_routes(net, {{0, 3}}, 10, 3);
  Eigen::VectorXd l = Eigen::VectorXd::Zero(1);
  const auto spec = np::build_commodity(rs, {{0, 3}}, std::nullopt, l);
  EXPECT_EQ(spec.matrix.nonZeros(), rs.route_count());
  for (int r = 0; r < rs.route_count(); ++r)
    EXPECT_DOUBLE_EQ(spec.matrix.coeff(0, r),
                     rs.source_sink[r] == std::make_pair(0, 3) ? 1.0 : 0.0);
}

TEST(BuildCommodity, ExplicitSelectionValidatesSourceSink) {
  const auto net = toy4_network();
  const auto rs = np::route_set_from_node_paths(net, {{0, 1}, {0, 1, 2}, {1, 2}});
  Eigen::VectorXd l = Eigen::VectorXd::Zero(1);
  // route 2 serves (1, 2), not (0, 2)
  EXPECT_THROW(
      np::build_commodity(rs, {{0, 2}}, std::vector<std::vector<int>>{{2}}, l),
      np::ModelError);
  const auto ok = np::build_commodity(rs, {{0, 2}}, std::vector<std::vector<int>>{{1}}, l);
  EXPECT_EQ(ok.matrix.nonZeros(), 1);
  EXPECT_DOUBLE_EQ(ok.matrix.coeff(0, 1), 1.0);
}

TEST(BuildCommodity, UnservedCommodityFails) {
  const auto net = toy4_network();
  const auto rs = np::route_set_from_node_paths(net, {{0, 1}});
  Eigen::VectorXd l = Eigen::VectorXd::Zero(1);
  EXPECT_THROW(np::build_commodity(rs, {{1, 2}}, std::nullopt, l), np::ModelError);
}

TEST(BuildCommodity, NegativeDemandFails) {
  const auto net = toy4_network();
  const auto rs = np::route_set_from_node_paths(net, {{0, 1}});
  Eigen::VectorXd l = Eigen::VectorXd::Constant(1, -0.5);
  EXPECT_THROW(np::build_commodity(rs, {{0, 1}}, std::nullopt, l), np::DomainError);
}
