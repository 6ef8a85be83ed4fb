#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include "lopmap/embed/synthetic_provider.hpp"
#include "lopmap/error.hpp"
#include "lopmap/planner/planner.hpp"

using namespace lopmap;
using namespace lopmap::planner;
using topomap::Edge;
using topomap::EdgeType;
using topomap::NodeType;
using topomap::TopoGraph;
using topomap::Vertex;

namespace {

Vertex vertex(std::int64_t id, NodeType t, const std::string& cls, const Vec3& c) {
  Vertex v;
  v.id = id;
  v.node_type = t;
  v.cls = cls;
  v.caption = cls;
  v.bbox_center = topomap::canonical(c);
  v.bbox_extent = Vec3(1, 1, 1);
  return v;
}

void connect(TopoGraph& g, EdgeType t, std::int64_t a, std::int64_t b, const std::string& rel = "connected") {
  Edge e;
  e.id = static_cast<std::int64_t>(g.edges.size());
  e.edge_type = t;
  e.start_node = *g.find(a);
  e.end_node = *g.find(b);
  e.relationship = rel;
  g.edges.push_back(e);
}

// Textbook O(n^2) Dijkstra over the traversable edges.
double dijkstra(const TopoGraph& g, std::int64_t s, std::int64_t t) {
  const std::size_t n = g.vertices.size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> done(n, false);
  auto idx = [&](std::int64_t id) {
    return static_cast<std::size_t>(std::find_if(g.vertices.begin(), g.vertices.end(),
                                                 [&](const Vertex& v) { return v.id == id; }) -
                                    g.vertices.begin());
  };
  dist[idx(s)] = 0.0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && (u == n || dist[i] < dist[u])) u = i;
    }
    if (u == n || std::isinf(dist[u])) break;
    done[u] = true;
    for (const auto& e : g.edges) {
      if (!traversable(e)) continue;
      const std::size_t a = idx(e.start_node.id), b = idx(e.end_node.id);
      const double w = (e.start_node.bbox_center - e.end_node.bbox_center).norm();
      if (a == u) dist[b] = std::min(dist[b], dist[u] + w);
      if (b == u) dist[a] = std::min(dist[a], dist[u] + w);
    }
  }
  return dist[idx(t)];
}

// Random connected region graph: spanning tree plus extra edges.
TopoGraph random_graph(std::mt19937& rng) {
  std::uniform_int_distribution<int> nd(2, 30);
  std::uniform_real_distribution<double> pos(-20, 20);
  const int n = nd(rng);
  TopoGraph g;
  for (int i = 0; i < n; ++i) {
    g.vertices.push_back(vertex(i, NodeType::Region, "r" + std::to_string(i), {pos(rng), pos(rng), 1.0}));
  }
  std::set<std::pair<int, int>> used;
  for (int i = 1; i < n; ++i) {
    const int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
    used.emplace(j, i);
    connect(g, EdgeType::RegionRegion, j, i);
  }
  const int extra = std::uniform_int_distribution<int>(0, 2 * n)(rng);
  for (int k = 0; k < extra; ++k) {
    int a = std::uniform_int_distribution<int>(0, n - 1)(rng), b = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (!used.emplace(a, b).second) continue;
    connect(g, EdgeType::RegionRegion, a, b);
  }
  return g;
}

// Returns the region label of a one-hot field split at x = 0.
query::LabelBank halves_bank() {
  std::vector<embed::TextEmbedding> e(2);
  e[0] = {{1, 0}, {1, 0}};
  e[1] = {{0, 1}, {0, 1}};
  return query::LabelBank::from_embeddings({"kitchen", "bedroom"}, e);
}

query::FunctionFeatureField halves_field() {
  return query::FunctionFeatureField(2, 2, [](std::span<const Vec3> pts) {
    field::FieldOutput<float> out;
    out.fv = field::Mat<float>::Zero(2, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t j = 0; j < pts.size(); ++j) out.fv(pts[j].x() <= 0.0 ? 0 : 1, static_cast<Eigen::Index>(j)) = 1;
    out.fs = out.fv;
    return out;
  });
}

TopoGraph two_room_graph() {
  TopoGraph g;
  g.vertices.push_back(vertex(0, NodeType::Region, "kitchen", {-2, 0, 1}));
  g.vertices.push_back(vertex(1, NodeType::Region, "bedroom", {2, 0, 1}));
  g.vertices.push_back(vertex(2, NodeType::Entrance, "Entrance", {0, 0, 1}));
  connect(g, EdgeType::RegionRegion, 0, 1);
  connect(g, EdgeType::RegionEntrance, 0, 2);
  connect(g, EdgeType::RegionEntrance, 1, 2);
  return g;
}

}  // namespace

TEST(AStarCore, TrianglePrefersTwoHops) {
  WeightedGraph g(3);
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 2, 1.0);
  g.add_edge(0, 2, 3.0);
  const auto r = astar(g, 0, 2, [](std::size_t) { return 0.0; });
  EXPECT_EQ(r.path, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(r.cost, 2.0);
}

TEST(AStarCore, TiesResolveToLowerIndex) {
  WeightedGraph g(4);
  g.add_edge(0, 2, 1.0);
  g.add_edge(0, 1, 1.0);
  g.add_edge(1, 3, 1.0);
  g.add_edge(2, 3, 1.0);
  const auto r = astar(g, 0, 3, [](std::size_t) { return 0.0; });
  EXPECT_EQ(r.path, (std::vector<std::size_t>{0, 1, 3}));
}

TEST(AStarCore, Errors) {
  WeightedGraph g(3);
  g.add_edge(0, 1, 1.0);
  try {
    astar(g, 0, 2, [](std::size_t) { return 0.0; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPathFound);
  }
  try {
    astar(g, 0, 7, [](std::size_t) { return 0.0; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownVertex);
  }
}

TEST(AStar, StartIsGoal) {
  const auto g = two_room_graph();
  const auto p = astar(g, 1, 1);
  EXPECT_EQ(p.vertices, (std::vector<std::int64_t>{1}));
  EXPECT_EQ(p.cost, 0.0);
}

TEST(AStar, MatchesDijkstraOnRandomGraphs) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const TopoGraph g = random_graph(rng);
    const auto n = static_cast<std::int64_t>(g.vertices.size());
    const std::int64_t s = std::uniform_int_distribution<std::int64_t>(0, n - 1)(rng);
    const std::int64_t t = std::uniform_int_distribution<std::int64_t>(0, n - 1)(rng);

    // Admissibility on every expansion: h never exceeds the true remainder.
    const auto p = astar(g, s, t, [&](std::size_t i, double, double h) {
      EXPECT_LE(h, dijkstra(g, g.vertices[i].id, t) + 1e-9);
    });
    EXPECT_EQ(p.cost, dijkstra(g, s, t)) << "trial " << trial;
    EXPECT_EQ(p.vertices.front(), s);
    EXPECT_EQ(p.vertices.back(), t);

    // Consecutive vertices share an edge; cost is the sum of their distances.
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < p.vertices.size(); ++i) {
      const auto a = p.vertices[i], b = p.vertices[i + 1];
      EXPECT_TRUE(std::any_of(g.edges.begin(), g.edges.end(), [&](const Edge& e) {
        return (e.start_node.id == a && e.end_node.id == b) || (e.start_node.id == b && e.end_node.id == a);
      }));
      sum += (g.find(a)->bbox_center - g.find(b)->bbox_center).norm();
    }
    EXPECT_NEAR(p.cost, sum, 1e-9);
  }
}

TEST(AStar, DisconnectedAndUnknown) {
  TopoGraph g = two_room_graph();
  g.vertices.push_back(vertex(3, NodeType::Region, "office", {9, 9, 1}));
  try {
    astar(g, 0, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPathFound);
  }
  try {
    astar(g, 0, 42);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownVertex);
  }
}

TEST(AStar, TraversalRules) {
  TopoGraph g = two_room_graph();
  g.vertices.push_back(vertex(3, NodeType::Object, "bike", {2.5, 0.5, 0.5}));
  g.vertices.push_back(vertex(4, NodeType::Object, "lamp", {2.0, 1.0, 0.5}));
  connect(g, EdgeType::ObjectRegion, 3, 1, "false");
  connect(g, EdgeType::ObjectRegion, 4, 1, "belong");
  connect(g, EdgeType::ObjectObject, 3, 4);
  EXPECT_EQ(astar(g, 0, 4).vertices, (std::vector<std::int64_t>{0, 1, 4}));
  EXPECT_THROW(astar(g, 0, 3), Error);
}

TEST(ResolveGoal, ExactClassAndRegionHint) {
  const embed::SyntheticProvider provider(3, 16, 16);
  TopoGraph g;
  g.vertices.push_back(vertex(0, NodeType::Region, "TV room", {-3, 0, 1}));
  g.vertices.push_back(vertex(1, NodeType::Region, "bedroom", {3, 0, 1}));
  g.vertices.push_back(vertex(2, NodeType::Object, "sofa", {-3, 1, 0.4}));
  g.vertices.push_back(vertex(3, NodeType::Object, "sofa", {3, 1, 0.4}));
  g.vertices.push_back(vertex(4, NodeType::Object, "bed", {3, -1, 0.4}));
  connect(g, EdgeType::ObjectRegion, 2, 0, "belong");
  connect(g, EdgeType::ObjectRegion, 3, 1, "belong");
  connect(g, EdgeType::ObjectRegion, 4, 1, "belong");

  EXPECT_EQ(resolve_goal(g, "bed", provider), 4);
  EXPECT_EQ(resolve_goal(g, "sofa in the TV room", provider), 2);
  EXPECT_EQ(resolve_goal(g, "sofa in the bedroom", provider), 3);

  const auto q = parse_goal(g, "sofa in the attic");
  EXPECT_FALSE(q.region.has_value());
  EXPECT_EQ(q.object, "sofa in the attic");
}

TEST(ResolveGoal, NoCandidates) {
  const embed::SyntheticProvider provider(3, 16, 16);
  TopoGraph g;
  try {
    resolve_goal(g, "sofa", provider);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoCandidates);
  }
  g = two_room_graph();
  EXPECT_THROW(resolve_goal(g, "sofa in the kitchen", provider), Error);
}

TEST(ResolveStart, UsesFieldLabel) {
  const auto g = two_room_graph();
  const auto bank = halves_bank();
  const auto f = halves_field();
  EXPECT_EQ(resolve_start(g, Vec3(-1, 0.5, 1), f, bank), 0);
  EXPECT_EQ(resolve_start(g, Vec3(1, 0.5, 1), f, bank), 1);
}

TEST(Waypoints, SpacingAndCount) {
  TopoGraph g;
  g.vertices.push_back(vertex(0, NodeType::Region, "kitchen", {-1.5, 0, 1}));
  g.vertices.push_back(vertex(1, NodeType::Region, "kitchen", {-0.5, 0, 1}));
  connect(g, EdgeType::RegionRegion, 0, 1);
  Path p = astar(g, 0, 1);
  const auto wps = emit_waypoints(g, p, halves_field(), halves_bank(), 0.25);
  ASSERT_EQ(wps.size(), 5u);
  for (std::size_t i = 0; i < wps.size(); ++i) EXPECT_NEAR(wps[i].position.x(), -1.5 + 0.25 * i, 1e-12);

  p.vertices = {1};
  const auto one = emit_waypoints(g, p, halves_field(), halves_bank(), 0.25);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].position, g.find(1)->bbox_center);
  EXPECT_THROW(emit_waypoints(g, p, halves_field(), halves_bank(), 0.0), Error);
}

TEST(Waypoints, RegionChangesOnceAtEntrance) {
  const auto g = two_room_graph();
  Path p;
  p.vertices = {0, 2, 1};
  const auto wps = emit_waypoints(g, p, halves_field(), halves_bank(), 0.25);
  int changes = 0;
  std::size_t at = 0;
  for (std::size_t i = 1; i < wps.size(); ++i) {
    if (wps[i].region != wps[i - 1].region) {
      ++changes;
      at = i;
    }
  }
  EXPECT_EQ(changes, 1);
  EXPECT_NEAR(wps[at].position.x(), 0.0, 0.25 + 1e-9);
  EXPECT_EQ(wps.front().region, "kitchen");
  EXPECT_EQ(wps.back().region, "bedroom");
}

TEST(PathJson, Layout) {
  Path p;
  p.vertices = {0, 2};
  p.cost = 1.5;
  p.waypoints = {{Vec3(1, 2, 3), "kitchen"}};
  const auto j = p.to_json();
  EXPECT_EQ(j.dump(), R"({"vertices":[0,2],"cost":1.5,"waypoints":[{"x":1.0,"y":2.0,"z":3.0,"region":"kitchen"}]})");
}
