#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lopmap/embed/provider.hpp"
#include "lopmap/query/query.hpp"
#include "lopmap/topomap/topomap.hpp"

namespace lopmap::planner {

/// Plain weighted undirected graph over dense indices.
struct WeightedGraph {
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;

  explicit WeightedGraph(std::size_t n = 0) : adj(n) {}
  std::size_t size() const { return adj.size(); }
  void add_edge(std::size_t a, std::size_t b, double w);
};

struct SearchResult {
  std::vector<std::size_t> path;  // start first
  double cost = 0.0;
};

/// Called once per expansion with (node, g, h).
using ExpandHook = std::function<void(std::size_t, double, double)>;

/// A* with open-set ties broken by (f, g, index). The heuristic must not
/// overestimate. Throws NoPathFound, UnknownVertex (index out of range).
SearchResult astar(const WeightedGraph& graph, std::size_t start, std::size_t goal,
                   const std::function<double(std::size_t)>& heuristic,
                   const ExpandHook& on_expand = {});

/// region_region, region_entrance, and object_region edges unless vetoed ("false").
bool traversable(const topomap::Edge& e);

struct Waypoint {
  Vec3 position = Vec3::Zero();
  std::string region;
};

struct Path {
  std::vector<std::int64_t> vertices;
  double cost = 0.0;
  std::vector<Waypoint> waypoints;

  /// {"vertices": [...], "cost": c, "waypoints": [{"x","y","z","region"}]}
  topomap::Json to_json() const;
};

/// Edge weight and heuristic are distances between bbox centres.
/// Throws UnknownVertex, NoPathFound.
Path astar(const topomap::TopoGraph& graph, std::int64_t start, std::int64_t goal,
           const ExpandHook& on_expand = {});

/// "<object> in the <region>" split at the last " in the ", when the tail
/// names a region vertex of the graph.
struct GoalQuery {
  std::string object;
  std::optional<std::string> region;
};
GoalQuery parse_goal(const topomap::TopoGraph& graph, std::string_view query);

/// Best-matching object vertex for the query. A region hint limits the
/// candidates to objects with a "belong" edge to that region. Throws NoCandidates.
std::int64_t resolve_goal(const topomap::TopoGraph& graph, std::string_view query,
                          const embed::EmbeddingProvider& provider,
                          double w = query::kDefaultVsWeight);

/// Region vertex whose label the field assigns to `p`. Throws NoCandidates
/// when that label has no region vertex.
std::int64_t resolve_start(const topomap::TopoGraph& graph, const Vec3& p,
                           const query::FeatureField& field, const query::LabelBank& bank,
                           double w = query::kDefaultVsWeight);

/// Straight segments between consecutive vertex centres, sampled every
/// `step` metres plus the final centre; each point gets its inferred region.
/// Throws InvalidConfig for step <= 0.
std::vector<Waypoint> emit_waypoints(const topomap::TopoGraph& graph, const Path& path,
                                     const query::FeatureField& field,
                                     const query::LabelBank& bank, double step = 0.25,
                                     double w = query::kDefaultVsWeight);

}  // namespace lopmap::planner
