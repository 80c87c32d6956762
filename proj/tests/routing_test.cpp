#include <gtest/gtest.h>

#include <random>

#include "dtdms/routing.hpp"
#include "test_util.hpp"

using namespace dtdms;
using dtdms::testing::enumerate_simple_paths;
using dtdms::testing::random_graph;

namespace {

struct Triangle {
  CityGraph city;
  TwinSnapshot snap;
  Triangle() {
    city.nodes = {{"A", 41, 29}, {"B", 41.001, 29}, {"C", 41.002, 29}};
    city.edges = {{"ab", "A", "B", 1}, {"bc", "B", "C", 1}, {"ac", "A", "C", 3}};
    for (auto l : kInfraLayers) city.infrastructure[l];
    city.index();
    snap = pre_disaster_snapshot(city);
  }
};

void expect_well_formed(const CityGraph& city, const TwinSnapshot& snap, const Path& p) {
  ASSERT_EQ(p.edges.size() + 1, p.nodes.size());
  EXPECT_EQ(p.hops, p.edges.size());
  double cost = 0;
  for (std::size_t i = 0; i < p.edges.size(); ++i) {
    const RoadSegment* e = city.find_edge(p.edges[i]);
    ASSERT_NE(e, nullptr);
    EXPECT_TRUE(snap.edge_passable.at(e->id)) << "path crosses blocked edge " << e->id;
    const bool joins = (e->a == p.nodes[i] && e->b == p.nodes[i + 1]) ||
                       (e->b == p.nodes[i] && e->a == p.nodes[i + 1]);
    EXPECT_TRUE(joins);
    cost += e->length_m;
  }
  EXPECT_EQ(p.cost, cost);
}

}  // namespace

TEST(EdgeCost, IdentityBlockedAndUnknown) {
  Triangle t;
  t.city.edges[0].length_m = 250;
  t.city.index();
  EXPECT_EQ(edge_cost(t.city, "ab", t.snap), 250.0);
  t.snap.edge_passable["ab"] = false;
  EXPECT_EQ(edge_cost(t.city, "ab", t.snap), std::nullopt);
  EXPECT_THROW(edge_cost(t.city, "zz", t.snap), ReferenceError);
}

TEST(Bfs, SameNodeIsEmptyPath) {
  Triangle t;
  auto p = bfs_route(t.city, t.snap, "A", "A");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->hops, 0u);
  EXPECT_EQ(p->cost, 0.0);
  EXPECT_EQ(p->nodes, std::vector<std::string>{"A"});
}

TEST(Bfs, TriangleTakesDirectEdge) {
  Triangle t;
  auto p = bfs_route(t.city, t.snap, "A", "C");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->nodes, (std::vector<std::string>{"A", "C"}));
  EXPECT_EQ(p->hops, 1u);
}

TEST(Bfs, TriangleDetoursAroundBlockedEdge) {
  Triangle t;
  t.snap.edge_passable["ac"] = false;
  auto p = bfs_route(t.city, t.snap, "A", "C");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->nodes, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(p->hops, 2u);
}

TEST(Ucs, TriangleTakesCheaperTwoHopRoute) {
  Triangle t;
  auto p = ucs_route(t.city, t.snap, "A", "C");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->nodes, (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(p->cost, 2.0);
  EXPECT_EQ(ucs_route(t.city, t.snap, "B", "B")->cost, 0.0);
}

TEST(Routing, DisconnectedIsNoRoute) {
  Triangle t;
  t.snap.edge_passable["ac"] = false;
  t.snap.edge_passable["bc"] = false;
  EXPECT_FALSE(bfs_route(t.city, t.snap, "A", "C"));
  EXPECT_FALSE(ucs_route(t.city, t.snap, "A", "C"));
}

TEST(Routing, UnknownNodeThrows) {
  Triangle t;
  EXPECT_THROW(bfs_route(t.city, t.snap, "A", "Q"), ReferenceError);
  EXPECT_THROW(ucs_route(t.city, t.snap, "Q", "A"), ReferenceError);
}

TEST(Routing, EqualCostTieBreaksOnSmallestNodeId) {
  // Two equal-cost routes S-a-T and S-b-T; the frontier expands "a" first.
  CityGraph c;
  c.nodes = {{"S", 0, 0}, {"b", 0, 0}, {"a", 0, 0}, {"T", 0, 0}};
  c.edges = {{"e4", "S", "b", 1}, {"e3", "b", "T", 1}, {"e2", "S", "a", 1}, {"e1", "a", "T", 1}};
  for (auto l : kInfraLayers) c.infrastructure[l];
  c.index();
  const auto snap = pre_disaster_snapshot(c);
  EXPECT_EQ(ucs_route(c, snap, "S", "T")->nodes, (std::vector<std::string>{"S", "a", "T"}));
  // BFS expands neighbours in edge-id order: e2 (to a) before e4 (to b).
  EXPECT_EQ(bfs_route(c, snap, "S", "T")->nodes, (std::vector<std::string>{"S", "a", "T"}));
}

TEST(RoutingProperty, MatchesSimplePathEnumeration) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto in = random_graph(rng);
    const RoadGraph g(in.city);
    for (const auto& src : in.city.nodes)
      for (const auto& dst : in.city.nodes) {
        const auto oracle = enumerate_simple_paths(in.city, in.snap, src.id, dst.id);
        const auto b = bfs_route(g, in.snap, src.id, dst.id);
        const auto u = ucs_route(g, in.snap, src.id, dst.id);
        ASSERT_EQ(b.has_value(), oracle.min_hops.has_value());
        ASSERT_EQ(u.has_value(), oracle.min_cost.has_value());
        if (!b) continue;
        EXPECT_EQ(b->hops, oracle.min_hops->hops);
        EXPECT_EQ(u->cost, oracle.min_cost->cost);
        expect_well_formed(in.city, in.snap, *b);
        expect_well_formed(in.city, in.snap, *u);
        EXPECT_EQ(*u, *ucs_route(g, in.snap, src.id, dst.id));
        EXPECT_EQ(*b, *bfs_route(g, in.snap, src.id, dst.id));
        EXPECT_EQ(ucs_route(g, in.snap, src.id, dst.id, UnitCost{})->cost, static_cast<double>(b->hops));
      }
  }
}

TEST(RoutingProperty, UcsCostInvariantUnderRelabeling) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = random_graph(rng);
    CityGraph relabeled = in.city;
    auto rename = [](const std::string& id) { return "zz" + std::string(id.rbegin(), id.rend()); };
    for (auto& n : relabeled.nodes) n.id = rename(n.id);
    for (auto& e : relabeled.edges) {
      e.a = rename(e.a);
      e.b = rename(e.b);
    }
    relabeled.index();
    for (const auto& s : in.city.nodes)
      for (const auto& d : in.city.nodes) {
        auto x = ucs_route(in.city, in.snap, s.id, d.id);
        auto y = ucs_route(relabeled, in.snap, rename(s.id), rename(d.id));
        ASSERT_EQ(x.has_value(), y.has_value());
        if (x) {
          EXPECT_EQ(x->cost, y->cost);
        }
      }
  }
}
