#include "lopmap/planner/planner.hpp"

#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "lopmap/error.hpp"

namespace lopmap::planner {

using topomap::EdgeType;
using topomap::NodeType;
using topomap::TopoGraph;

void WeightedGraph::add_edge(std::size_t a, std::size_t b, double w) {
  adj.at(a).emplace_back(b, w);
  adj.at(b).emplace_back(a, w);
}

SearchResult astar(const WeightedGraph& graph, std::size_t start, std::size_t goal,
                   const std::function<double(std::size_t)>& heuristic, const ExpandHook& on_expand) {
  const std::size_t n = graph.size();
  if (start >= n || goal >= n) throw Error(ErrorCode::UnknownVertex, "vertex index out of range");
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, inf);
  std::vector<std::size_t> came_from(n, n);
  std::set<std::tuple<double, double, std::size_t>> open;
  g[start] = 0.0;
  open.emplace(heuristic(start), 0.0, start);
  while (!open.empty()) {
    const auto [f, gc, current] = *open.begin();
    open.erase(open.begin());
    if (on_expand) on_expand(current, gc, f - gc);
    if (current == goal) {
      SearchResult r;
      r.cost = g[goal];
      for (std::size_t v = goal; v != n; v = came_from[v]) r.path.insert(r.path.begin(), v);
      return r;
    }
    for (const auto& [next, w] : graph.adj[current]) {
      const double tentative = g[current] + w;
      if (tentative < g[next]) {
        if (g[next] < inf) open.erase({g[next] + heuristic(next), g[next], next});
        came_from[next] = current;
        g[next] = tentative;
        open.emplace(tentative + heuristic(next), tentative, next);
      }
    }
  }
  throw Error(ErrorCode::NoPathFound, "no path found");
}

bool traversable(const topomap::Edge& e) {
  switch (e.edge_type) {
    case EdgeType::RegionRegion:
    case EdgeType::RegionEntrance: return true;
    case EdgeType::ObjectRegion: return e.relationship != "false";
    case EdgeType::ObjectObject: return false;
  }
  return false;
}

topomap::Json Path::to_json() const {
  topomap::Json j;
  j["vertices"] = vertices;
  j["cost"] = cost;
  j["waypoints"] = topomap::Json::array();
  for (const auto& w : waypoints) {
    topomap::Json p;
    p["x"] = w.position.x();
    p["y"] = w.position.y();
    p["z"] = w.position.z();
    p["region"] = w.region;
    j["waypoints"].push_back(p);
  }
  return j;
}

Path astar(const TopoGraph& graph, std::int64_t start, std::int64_t goal, const ExpandHook& on_expand) {
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < graph.vertices.size(); ++i) index[graph.vertices[i].id] = i;
  auto at = [&](std::int64_t id) {
    const auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::UnknownVertex, "unknown vertex " + std::to_string(id));
    return it->second;
  };
  const std::size_t s = at(start), t = at(goal);
  auto centre = [&](std::size_t i) -> const Vec3& { return graph.vertices[i].bbox_center; };

  WeightedGraph wg(graph.vertices.size());
  for (const auto& e : graph.edges) {
    if (!traversable(e)) continue;
    const std::size_t a = at(e.start_node.id), b = at(e.end_node.id);
    wg.add_edge(a, b, (centre(a) - centre(b)).norm());
  }
  const auto r = astar(wg, s, t, [&](std::size_t i) { return (centre(i) - centre(t)).norm(); }, on_expand);
  Path p;
  p.cost = r.cost;
  for (std::size_t i : r.path) p.vertices.push_back(graph.vertices[i].id);
  return p;
}

GoalQuery parse_goal(const TopoGraph& graph, std::string_view query) {
  GoalQuery q{std::string(query), std::nullopt};
  const std::string_view sep = " in the ";
  const auto pos = query.rfind(sep);
  if (pos == std::string_view::npos || pos == 0) return q;
  const std::string region(query.substr(pos + sep.size()));
  if (graph.find_region(region) == nullptr) return q;
  q.object = std::string(query.substr(0, pos));
  q.region = region;
  return q;
}

std::int64_t resolve_goal(const TopoGraph& graph, std::string_view query,
                          const embed::EmbeddingProvider& provider, double w) {
  const GoalQuery q = parse_goal(graph, query);
  std::vector<const topomap::Vertex*> candidates;
  if (q.region) {
    const std::int64_t rid = graph.find_region(*q.region)->id;
    std::set<std::int64_t> members;
    for (const auto& e : graph.edges) {
      if (e.edge_type == EdgeType::ObjectRegion && e.relationship == "belong" && e.end_node.id == rid) {
        members.insert(e.start_node.id);
      }
    }
    for (std::int64_t id : members) candidates.push_back(graph.find(id));
  } else {
    for (const auto& v : graph.vertices) {
      if (v.node_type == NodeType::Object) candidates.push_back(&v);
    }
  }
  if (candidates.empty()) throw Error(ErrorCode::NoCandidates, "no object vertex to match the goal");

  const auto target = provider.embed_text(q.region ? embed::compose_prompt(q.object, *q.region) : q.object);
  const topomap::Vertex* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto* v : candidates) {
    const auto e = provider.embed_text(q.region ? embed::compose_prompt(v->cls, *q.region) : v->cls);
    const double score = w * embed::cosine(target.vl, e.vl) + (1.0 - w) * embed::cosine(target.sem, e.sem);
    if (score > best_score) {
      best_score = score;
      best = v;
    }
  }
  return best->id;
}

std::int64_t resolve_start(const TopoGraph& graph, const Vec3& p, const query::FeatureField& field,
                           const query::LabelBank& bank, double w) {
  const auto attr = query::infer_attribute(field, p, bank, w);
  const auto* v = graph.find_region(attr.label);
  if (v == nullptr) throw Error(ErrorCode::NoCandidates, "no region vertex labelled " + attr.label);
  return v->id;
}

std::vector<Waypoint> emit_waypoints(const TopoGraph& graph, const Path& path,
                                     const query::FeatureField& field, const query::LabelBank& bank,
                                     double step, double w) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidConfig, "waypoint step must be positive");
  std::vector<Vec3> centres;
  for (std::int64_t id : path.vertices) {
    const auto* v = graph.find(id);
    if (v == nullptr) throw Error(ErrorCode::UnknownVertex, "unknown vertex " + std::to_string(id));
    centres.push_back(v->bbox_center);
  }
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i + 1 < centres.size(); ++i) {
    const Vec3 d = centres[i + 1] - centres[i];
    const double len = d.norm();
    // Points at k * step, stopping short of the segment end.
    for (std::size_t k = 0; static_cast<double>(k) * step < len - 1e-9; ++k) {
      pts.push_back(centres[i] + (static_cast<double>(k) * step / len) * d);
    }
  }
  if (!centres.empty()) pts.push_back(centres.back());
  std::vector<Waypoint> out;
  if (pts.empty()) return out;
  const auto attrs = query::infer_attributes(field, pts, bank, w);
  for (std::size_t i = 0; i < pts.size(); ++i) out.push_back({pts[i], attrs[i].label});
  return out;
}

}  // namespace lopmap::planner
