#include "lopmap/topomap/topomap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include "lopmap/error.hpp"

namespace lopmap::topomap {
namespace {

[[noreturn]] void schema(const std::string& what) { throw Error(ErrorCode::SchemaError, what); }

Json vec_json(const Vec3& v) {
  return Json::array({canonical(v.x()), canonical(v.y()), canonical(v.z())});
}

Vec3 vec_from(const Json& j, const char* key) {
  if (!j.contains(key)) schema(std::string("missing key '") + key + "'");
  const Json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) schema(std::string("'") + key + "' must hold 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!a[static_cast<std::size_t>(i)].is_number()) schema(std::string("'") + key + "' must hold numbers");
    v[i] = a[static_cast<std::size_t>(i)].get<double>();
  }
  return canonical(v);
}

template <typename T>
T get_key(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) schema(std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    schema(std::string("key '") + key + "' has the wrong type");
  }
}

bool type_matches(EdgeType t, NodeType a, NodeType b) {
  switch (t) {
    case EdgeType::ObjectObject: return a == NodeType::Object && b == NodeType::Object;
    case EdgeType::ObjectRegion: return a == NodeType::Object && b == NodeType::Region;
    case EdgeType::RegionRegion: return a == NodeType::Region && b == NodeType::Region;
    case EdgeType::RegionEntrance: return a == NodeType::Region && b == NodeType::Entrance;
  }
  return false;
}

std::string entrance_caption(const std::string& a, const std::string& b) {
  return "Entrance connecting " + a + " and " + b + ".";
}

// Gap between two intervals (negative when they overlap).
double gap(double a0, double a1, double b0, double b1) { return std::max(a0, b0) - std::min(a1, b1); }

// Regions share a wall: close along one floor axis, overlapping along the other.
std::optional<Aabb> shared_boundary(const Aabb& a, const Aabb& b, double step) {
  const double gx = gap(a.min.x(), a.max.x(), b.min.x(), b.max.x());
  const double gy = gap(a.min.y(), a.max.y(), b.min.y(), b.max.y());
  const double zlo = std::max(a.min.z(), b.min.z()), zhi = std::min(a.max.z(), b.max.z());
  Aabb out;
  if (gx <= step && -gy > step) {
    const double x0 = std::min(a.max.x(), b.max.x()), x1 = std::max(a.min.x(), b.min.x());
    out = Aabb(Vec3(std::min(x0, x1), std::max(a.min.y(), b.min.y()), zlo),
               Vec3(std::max(x0, x1), std::min(a.max.y(), b.max.y()), zhi));
  } else if (gy <= step && -gx > step) {
    const double y0 = std::min(a.max.y(), b.max.y()), y1 = std::max(a.min.y(), b.min.y());
    out = Aabb(Vec3(std::max(a.min.x(), b.min.x()), std::min(y0, y1), zlo),
               Vec3(std::min(a.max.x(), b.max.x()), std::max(y0, y1), zhi));
  } else {
    return std::nullopt;
  }
  if (out.max.z() < out.min.z()) out.max.z() = out.min.z();
  return out;
}

// Centres (k + 0.5) * step of the world-anchored cells whose centre lies in
// [lo, hi]; the interval midpoint when none does.
std::vector<double> cell_centres(double lo, double hi, double step) {
  const auto k0 = static_cast<std::int64_t>(std::ceil(lo / step - 0.5 - 1e-9));
  const auto k1 = static_cast<std::int64_t>(std::floor(hi / step - 0.5 + 1e-9));
  std::vector<double> out;
  for (auto k = k0; k <= k1; ++k) out.push_back((static_cast<double>(k) + 0.5) * step);
  if (out.empty()) out.push_back(0.5 * (lo + hi));
  return out;
}

const char* const kDirections[8] = {"east",  "northeast", "north", "northwest",
                                    "west",  "southwest", "south", "southeast"};

}  // namespace

const char* to_string(NodeType t) {
  switch (t) {
    case NodeType::Region: return "region";
    case NodeType::Object: return "object";
    case NodeType::Entrance: return "Entrance";
  }
  return "?";
}

const char* to_string(EdgeType t) {
  switch (t) {
    case EdgeType::ObjectObject: return "object_object";
    case EdgeType::ObjectRegion: return "object_region";
    case EdgeType::RegionRegion: return "region_region";
    case EdgeType::RegionEntrance: return "region_entrance";
  }
  return "?";
}

NodeType node_type_from(const std::string& s) {
  if (s == "region") return NodeType::Region;
  if (s == "object") return NodeType::Object;
  if (s == "Entrance") return NodeType::Entrance;
  schema("unknown node_type '" + s + "'");
}

EdgeType edge_type_from(const std::string& s) {
  if (s == "object_object") return EdgeType::ObjectObject;
  if (s == "object_region") return EdgeType::ObjectRegion;
  if (s == "region_region") return EdgeType::RegionRegion;
  if (s == "region_entrance") return EdgeType::RegionEntrance;
  schema("unknown edge_type '" + s + "'");
}

double canonical(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  const double r = std::strtod(buf, nullptr);
  return r == 0.0 ? 0.0 : r;  // no negative zero
}

Vec3 canonical(const Vec3& v) { return {canonical(v.x()), canonical(v.y()), canonical(v.z())}; }

void Vertex::set_box(const Aabb& b) {
  bbox_center = canonical(b.center());
  bbox_extent = canonical(b.extent());
}

Json Vertex::to_json() const {
  Json j;
  j["id"] = id;
  j["node_type"] = to_string(node_type);
  j["bbox_extent"] = vec_json(bbox_extent);
  j["bbox_center"] = vec_json(bbox_center);
  j["class"] = cls;
  j["caption"] = caption;
  return j;
}

Vertex Vertex::from_json(const Json& j) {
  Vertex v;
  v.id = get_key<std::int64_t>(j, "id");
  v.node_type = node_type_from(get_key<std::string>(j, "node_type"));
  v.bbox_extent = vec_from(j, "bbox_extent");
  v.bbox_center = vec_from(j, "bbox_center");
  if ((v.bbox_extent.array() < 0.0).any()) schema("negative bbox extent");
  v.cls = get_key<std::string>(j, "class");
  v.caption = get_key<std::string>(j, "caption");
  return v;
}

Json Edge::to_json() const {
  Json j;
  j["id"] = id;
  j["edge_type"] = to_string(edge_type);
  j["start_node"] = start_node.to_json();
  j["end_node"] = end_node.to_json();
  j["relationship"] = relationship;
  j["position_relation"] = position_relation;
  j["caption"] = caption;
  return j;
}

Edge Edge::from_json(const Json& j) {
  Edge e;
  e.id = get_key<std::int64_t>(j, "id");
  e.edge_type = edge_type_from(get_key<std::string>(j, "edge_type"));
  if (!j.contains("start_node") || !j.contains("end_node")) schema("edge endpoints missing");
  e.start_node = Vertex::from_json(j.at("start_node"));
  e.end_node = Vertex::from_json(j.at("end_node"));
  e.relationship = get_key<std::string>(j, "relationship");
  e.position_relation = get_key<std::string>(j, "position_relation");
  e.caption = get_key<std::string>(j, "caption");
  return e;
}

void MapperConfig::validate() const {
  auto fail = [](const std::string& w) { throw Error(ErrorCode::InvalidConfig, w); };
  if (!(grid_step > 0.0)) fail("grid_step must be positive");
  if (!(conf_threshold > 0.0 && conf_threshold < 1.0)) fail("conf_threshold must be in (0, 1)");
  if (min_observations < 1) fail("min_observations must be >= 1");
  if (edge_refresh_interval < 1) fail("edge_refresh_interval must be >= 1");
  if (update_pixel_stride < 1) fail("update_pixel_stride must be >= 1");
  if (!(vs_weight >= 0.0 && vs_weight <= 1.0)) fail("vs_weight must be in [0, 1]");
  if (!(sample_height >= 0.0 && sample_height <= 1.0)) fail("sample_height must be in [0, 1]");
  if (describer != "rule" && describer != "external") fail("describer must be rule or external");
}

Json MapperConfig::to_json() const {
  Json j;
  j["grid_step"] = grid_step;
  j["conf_threshold"] = conf_threshold;
  j["min_observations"] = min_observations;
  j["strict_observations"] = strict_observations;
  j["edge_refresh_interval"] = edge_refresh_interval;
  j["update_pixel_stride"] = update_pixel_stride;
  j["vs_weight"] = vs_weight;
  j["sample_height"] = sample_height;
  j["describer"] = describer;
  return j;
}

MapperConfig MapperConfig::from_json(const Json& j) {
  MapperConfig c;
  try {
    c.grid_step = j.value("grid_step", c.grid_step);
    c.conf_threshold = j.value("conf_threshold", c.conf_threshold);
    c.min_observations = j.value("min_observations", c.min_observations);
    c.strict_observations = j.value("strict_observations", c.strict_observations);
    c.edge_refresh_interval = j.value("edge_refresh_interval", c.edge_refresh_interval);
    c.update_pixel_stride = j.value("update_pixel_stride", c.update_pixel_stride);
    c.vs_weight = j.value("vs_weight", c.vs_weight);
    c.sample_height = j.value("sample_height", c.sample_height);
    c.describer = j.value("describer", c.describer);
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("mapper config: ") + e.what());
  }
  return c;
}

const Vertex* TopoGraph::find(std::int64_t id) const {
  for (const auto& v : vertices) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

Vertex* TopoGraph::find(std::int64_t id) {
  return const_cast<Vertex*>(static_cast<const TopoGraph*>(this)->find(id));
}

const Vertex* TopoGraph::find_region(const std::string& label) const {
  for (const auto& v : vertices) {
    if (v.node_type == NodeType::Region && v.cls == label) return &v;
  }
  return nullptr;
}

std::int64_t TopoGraph::next_vertex_id() const {
  std::int64_t next = 0;
  for (const auto& v : vertices) next = std::max(next, v.id + 1);
  return next;
}

std::size_t TopoGraph::count(NodeType t) const {
  return static_cast<std::size_t>(
      std::count_if(vertices.begin(), vertices.end(), [t](const Vertex& v) { return v.node_type == t; }));
}

void TopoGraph::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& v : vertices) {
    if (!ids.insert(v.id).second) schema("repeated vertex id " + std::to_string(v.id));
  }
  std::set<std::int64_t> edge_ids;
  std::set<std::tuple<int, std::int64_t, std::int64_t>> pairs;
  for (const auto& e : edges) {
    if (!edge_ids.insert(e.id).second) schema("repeated edge id " + std::to_string(e.id));
    const Vertex* a = find(e.start_node.id);
    const Vertex* b = find(e.end_node.id);
    if (a == nullptr || b == nullptr) schema("edge " + std::to_string(e.id) + " has a dangling endpoint");
    if (!(*a == e.start_node) || !(*b == e.end_node)) {
      schema("edge " + std::to_string(e.id) + " carries a stale endpoint copy");
    }
    if (!type_matches(e.edge_type, a->node_type, b->node_type)) {
      schema("edge " + std::to_string(e.id) + " type does not match its endpoints");
    }
    const auto key = std::make_tuple(static_cast<int>(e.edge_type), std::min(a->id, b->id),
                                     std::max(a->id, b->id));
    if (!pairs.insert(key).second) schema("repeated edge between the same vertices");
  }
}

Json TopoGraph::to_json() const {
  Json j;
  j["vertices"] = Json::array();
  for (const auto& v : vertices) j["vertices"].push_back(v.to_json());
  j["edges"] = Json::array();
  for (const auto& e : edges) j["edges"].push_back(e.to_json());
  Json p;
  p["checkpoint_hash"] = provenance.checkpoint_hash;
  p["mapper"] = provenance.mapper;
  p["pending_frames"] = provenance.pending_frames;
  j["provenance"] = p;
  return j;
}

std::string TopoGraph::dump() const { return to_json().dump(2) + "\n"; }

TopoGraph TopoGraph::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("vertices") || !j.contains("edges")) {
    schema("topomap needs 'vertices' and 'edges'");
  }
  TopoGraph g;
  for (const auto& v : j.at("vertices")) g.vertices.push_back(Vertex::from_json(v));
  for (const auto& e : j.at("edges")) g.edges.push_back(Edge::from_json(e));
  if (j.contains("provenance")) {
    const Json& p = j.at("provenance");
    g.provenance.checkpoint_hash = p.value("checkpoint_hash", std::string());
    g.provenance.mapper = p.value("mapper", Json::object());
    g.provenance.pending_frames = p.value("pending_frames", std::int64_t{0});
  }
  g.validate();
  return g;
}

TopoGraph TopoGraph::parse(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("topomap is not JSON: ") + e.what());
  }
  return from_json(j);
}

void TopoGraph::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << dump();
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

TopoGraph TopoGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string compass_direction(const Vec3& a, const Vec3& b) {
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  if (dx == 0.0 && dy == 0.0) return {};
  double deg = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
  if (deg < 0) deg += 360.0;
  const int sector = static_cast<int>(std::floor((deg + 22.5) / 45.0)) % 8;
  return kDirections[sector];
}

std::string compass_relation(const Vec3& a, const Vec3& b) {
  const auto d = compass_direction(a, b);
  if (d.empty()) return "b at the same position as a";
  return "b to the " + d + " of a";
}

ImplausibleTable load_implausible_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  ImplausibleTable t;
  std::string line;
  int n = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++n;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      schema(path.string() + ":" + std::to_string(n) + ": expected 'class,region'");
    }
    const auto cls = trim(line.substr(0, comma)), region = trim(line.substr(comma + 1));
    if (cls.empty() || region.empty()) {
      schema(path.string() + ":" + std::to_string(n) + ": empty class or region");
    }
    t.emplace(cls, region);
  }
  return t;
}

Description RuleDescriber::describe(const Json& ja, const Json& jb) const {
  const Vertex a = Vertex::from_json(ja), b = Vertex::from_json(jb);
  Description d;
  if (a.node_type == NodeType::Object && b.node_type == NodeType::Region) {
    const bool vetoed = veto_.count({a.cls, b.cls}) > 0;
    d.relationship = vetoed ? "false" : "belong";
    // Middle third of the region box counts as its centre.
    const Vec3 half = 0.5 * b.bbox_extent;
    const double ux = half.x() > 0 ? (a.bbox_center.x() - b.bbox_center.x()) / half.x() : 0.0;
    const double uy = half.y() > 0 ? (a.bbox_center.y() - b.bbox_center.y()) / half.y() : 0.0;
    if (std::abs(ux) <= 1.0 / 3.0 && std::abs(uy) <= 1.0 / 3.0) {
      d.position_relation = "a in the center of b";
    } else {
      d.position_relation = "a in the " + compass_direction(b.bbox_center, a.bbox_center) + " of b";
    }
    d.caption = vetoed ? "A " + a.cls + " is not expected in the " + b.cls + "."
                       : "The " + a.cls + " lies inside the " + b.cls + " box.";
    return d;
  }
  d.position_relation = compass_relation(a.bbox_center, b.bbox_center);
  d.relationship = "connected";
  if (b.node_type == NodeType::Entrance) {
    d.caption = "The way out of the " + a.cls + ".";
  } else if (a.node_type == NodeType::Region) {
    d.caption = "The " + a.cls + " borders the " + b.cls + ".";
  } else {
    d.caption = "The " + a.cls + " and the " + b.cls + " overlap.";
  }
  return d;
}

std::string PromptDescriber::build_prompt(const Json& a, const Json& b) {
  std::string p =
      "Two nodes of an indoor scene graph follow as JSON, node a then node b. Boxes are "
      "axis-aligned, z is up, +x is east and +y is north.\n"
      "Reply with one JSON object holding exactly the keys \"relationship\", "
      "\"position_relation\" and \"caption\". Use \"belong\" when an object sits in a region, "
      "\"connected\" for neighbouring places, and \"false\" when the pairing makes no sense.\n";
  p += "a: " + a.dump() + "\n";
  p += "b: " + b.dump() + "\n";
  return p;
}

Description PromptDescriber::describe(const Json& a, const Json& b) const {
  const std::string reply = complete_(build_prompt(a, b));
  Json j;
  try {
    j = Json::parse(reply);
  } catch (const nlohmann::json::exception& e) {
    schema(std::string("describer reply is not JSON: ") + e.what());
  }
  return {get_key<std::string>(j, "relationship"), get_key<std::string>(j, "position_relation"),
          get_key<std::string>(j, "caption")};
}

std::vector<Vertex> map_regions(const query::FeatureField& field, const Aabb& bounds,
                                const query::LabelBank& bank, const MapperConfig& cfg) {
  cfg.validate();
  if (bounds.empty() || bounds.extent().x() <= 0.0 || bounds.extent().y() <= 0.0) {
    throw Error(ErrorCode::InvalidBounds, "region mapping needs non-degenerate floor bounds");
  }
  const double z = bounds.min.z() + cfg.sample_height * bounds.extent().z();
  const double step = cfg.grid_step;
  const auto xs = cell_centres(bounds.min.x(), bounds.max.x(), step);
  const auto ys = cell_centres(bounds.min.y(), bounds.max.y(), step);
  const std::size_t nx = xs.size(), ny = ys.size();
  std::vector<Vec3> samples;
  samples.reserve(nx * ny);
  for (double y : ys) {
    for (double x : xs) samples.emplace_back(x, y, z);
  }
  const auto attrs = query::infer_attributes(field, samples, bank, cfg.vs_weight);

  // Stray cells far from a room would stretch its box across the plan, so
  // each label keeps only its largest 4-connected patch (first found on ties).
  std::vector<int> comp(samples.size(), -1);
  std::vector<std::vector<std::size_t>> best(bank.size());
  int next = 0;
  for (std::size_t seed = 0; seed < samples.size(); ++seed) {
    if (comp[seed] >= 0) continue;
    const std::size_t label = attrs[seed].index;
    std::vector<std::size_t> patch{seed};
    comp[seed] = next;
    for (std::size_t h = 0; h < patch.size(); ++h) {
      const std::size_t c = patch[h], cx = c % nx, cy = c / nx;
      const std::size_t nb[4] = {cx > 0 ? c - 1 : c, cx + 1 < nx ? c + 1 : c, cy > 0 ? c - nx : c,
                                 cy + 1 < ny ? c + nx : c};
      for (std::size_t n : nb) {
        if (comp[n] < 0 && attrs[n].index == label) {
          comp[n] = next;
          patch.push_back(n);
        }
      }
    }
    ++next;
    if (patch.size() > best[label].size()) best[label] = std::move(patch);
  }
  std::vector<Aabb> boxes(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) {
    for (std::size_t c : best[k]) boxes[k].expand(samples[c]);
  }
  std::vector<Vertex> out;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    if (boxes[k].empty()) continue;
    // Regions are floor-plan columns: full height of the bounds.
    boxes[k].min.z() = bounds.min.z();
    boxes[k].max.z() = bounds.max.z();
    Vertex v;
    v.node_type = NodeType::Region;
    v.cls = bank.labels[k];
    v.caption = "Region labelled " + bank.labels[k] + ".";
    v.set_box(boxes[k]);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<Vertex> map_objects(std::span<const scene::Frame> frames, const MapperConfig& cfg) {
  cfg.validate();
  struct Track {
    std::string label;
    int frames = 0;
    Aabb box;
  };
  std::map<std::int32_t, Track> tracks;
  for (const auto& f : frames) {
    std::map<std::int32_t, Aabb> seen;
    for (int v = 0; v < f.height(); ++v) {
      for (int u = 0; u < f.width(); ++u) {
        const std::size_t i = f.index(u, v);
        const std::int32_t id = f.instance_ids[i];
        if (id == scene::kBackground || f.depth[i] <= 0.0f) continue;
        if (!(f.instance_confidences.at(id) > cfg.conf_threshold)) continue;
        seen[id].expand(scene::back_project(u, v, f.depth[i], f.intrinsics, f.pose));
      }
    }
    for (const auto& [id, box] : seen) {
      auto& t = tracks[id];
      t.label = f.instance_labels.at(id);
      ++t.frames;
      t.box.expand(box);
    }
  }
  std::vector<Vertex> out;
  for (const auto& [id, t] : tracks) {
    const bool enough = cfg.strict_observations ? t.frames > cfg.min_observations
                                                : t.frames >= cfg.min_observations;
    if (!enough) continue;
    Vertex v;
    v.node_type = NodeType::Object;
    v.cls = t.label;
    v.caption = t.label;
    v.set_box(t.box);
    out.push_back(std::move(v));
  }
  return out;
}

void build_edges(TopoGraph& g, const Describer& describer, const MapperConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> regions, objects;
  for (std::size_t i = 0; i < g.vertices.size(); ++i) {
    if (g.vertices[i].node_type == NodeType::Region) regions.push_back(i);
    if (g.vertices[i].node_type == NodeType::Object) objects.push_back(i);
  }
  auto by_id = [&](std::size_t a, std::size_t b) { return g.vertices[a].id < g.vertices[b].id; };
  std::sort(regions.begin(), regions.end(), by_id);
  std::sort(objects.begin(), objects.end(), by_id);

  // Entrances first, so the vertex list is final before edges copy endpoints.
  struct Link {
    std::int64_t a, b, entrance;
  };
  std::vector<Link> links;
  for (std::size_t x = 0; x < regions.size(); ++x) {
    for (std::size_t y = x + 1; y < regions.size(); ++y) {
      const Vertex ra = g.vertices[regions[x]], rb = g.vertices[regions[y]];
      const auto wall = shared_boundary(ra.box(), rb.box(), cfg.grid_step);
      if (!wall) continue;
      const std::string caption = entrance_caption(ra.cls, rb.cls);
      auto it = std::find_if(g.vertices.begin(), g.vertices.end(), [&](const Vertex& v) {
        return v.node_type == NodeType::Entrance && v.caption == caption;
      });
      if (it == g.vertices.end()) {
        Vertex e;
        e.id = g.next_vertex_id();
        e.node_type = NodeType::Entrance;
        e.cls = "Entrance";
        e.caption = caption;
        g.vertices.push_back(e);
        it = g.vertices.end() - 1;
      }
      it->set_box(*wall);
      links.push_back({ra.id, rb.id, it->id});
    }
  }

  g.edges.clear();
  auto add = [&](EdgeType t, std::int64_t a, std::int64_t b) {
    Edge e;
    e.id = static_cast<std::int64_t>(g.edges.size());
    e.edge_type = t;
    e.start_node = *g.find(a);
    e.end_node = *g.find(b);
    const auto d = describer.describe(e.start_node.to_json(), e.end_node.to_json());
    e.relationship = d.relationship;
    e.position_relation = d.position_relation;
    e.caption = d.caption;
    g.edges.push_back(std::move(e));
  };
  for (const auto& l : links) add(EdgeType::RegionRegion, l.a, l.b);
  for (const auto& l : links) {
    add(EdgeType::RegionEntrance, l.a, l.entrance);
    add(EdgeType::RegionEntrance, l.b, l.entrance);
  }
  for (std::size_t o : objects) {
    const Vertex& ov = g.vertices[o];
    for (std::size_t r : regions) {
      if (g.vertices[r].box().contains(ov.bbox_center, 1e-9)) add(EdgeType::ObjectRegion, ov.id, g.vertices[r].id);
    }
  }
  for (std::size_t x = 0; x < objects.size(); ++x) {
    for (std::size_t y = x + 1; y < objects.size(); ++y) {
      const Vertex& a = g.vertices[objects[x]];
      const Vertex& b = g.vertices[objects[y]];
      if (iou(a.box(), b.box()) > 0.0) add(EdgeType::ObjectObject, a.id, b.id);
    }
  }
}

TopoGraph build_map(const query::FeatureField& field, std::span<const scene::Frame> frames,
                    const Aabb& bounds, const query::LabelBank& bank, const Describer& describer,
                    const MapperConfig& cfg) {
  TopoGraph g;
  for (auto& v : map_regions(field, bounds, bank, cfg)) {
    v.id = g.next_vertex_id();
    g.vertices.push_back(std::move(v));
  }
  for (auto& v : map_objects(frames, cfg)) {
    v.id = g.next_vertex_id();
    g.vertices.push_back(std::move(v));
  }
  build_edges(g, describer, cfg);
  g.provenance.mapper = cfg.to_json();
  return g;
}

void update(TopoGraph& g, std::span<const scene::Frame> frames, const query::FeatureField& field,
            const query::LabelBank& bank, const Describer& describer, const MapperConfig& cfg) {
  cfg.validate();
  if (field.vl_dim() != static_cast<std::size_t>(bank.ev.rows()) ||
      field.sem_dim() != static_cast<std::size_t>(bank.es.rows())) {
    throw Error(ErrorCode::DimMismatch, "label bank dims differ from the field heads");
  }
  if (frames.empty()) return;

  // New objects merge into a same-class vertex whose box they touch.
  for (auto& cand : map_objects(frames, cfg)) {
    auto it = std::find_if(g.vertices.begin(), g.vertices.end(), [&](const Vertex& v) {
      // Touching counts: boxes of flat surfaces have zero volume.
      return v.node_type == NodeType::Object && v.cls == cand.cls &&
             !intersection(v.box(), cand.box()).empty();
    });
    if (it == g.vertices.end()) {
      cand.id = g.next_vertex_id();
      g.vertices.push_back(std::move(cand));
    } else {
      Aabb box = it->box();
      box.expand(cand.box());
      it->set_box(box);
    }
  }

  // Growth works on the same world-anchored cells as map_regions, at the
  // same sampling height, so replaying mapped views adds nothing. A cell only
  // joins a region whose box is within one cell of it; repeated passes let a
  // region creep along a run of newly seen cells.
  std::optional<double> z_sample;
  for (const auto& v : g.vertices) {
    if (v.node_type == NodeType::Region) {
      z_sample = v.box().min.z() + cfg.sample_height * v.box().extent().z();
      break;
    }
  }
  const double step = cfg.grid_step;
  auto near_xy = [&](const Aabb& b, const Vec3& p) {
    const double dx = std::max({b.min.x() - p.x(), p.x() - b.max.x(), 0.0});
    const double dy = std::max({b.min.y() - p.y(), p.y() - b.max.y(), 0.0});
    return std::max(dx, dy) <= step + 1e-6;
  };
  for (const auto& f : frames) {
    std::set<std::pair<std::int64_t, std::int64_t>> cells;
    for (int v = 0; z_sample && v < f.height(); v += cfg.update_pixel_stride) {
      for (int u = 0; u < f.width(); u += cfg.update_pixel_stride) {
        const float d = f.depth[f.index(u, v)];
        if (d <= 0.0f) continue;
        const Vec3 p = scene::back_project(u, v, d, f.intrinsics, f.pose);
        cells.emplace(static_cast<std::int64_t>(std::floor(p.x() / step)),
                      static_cast<std::int64_t>(std::floor(p.y() / step)));
      }
    }
    std::vector<Vec3> pts;
    for (const auto& [ix, iy] : cells) pts.emplace_back((ix + 0.5) * step, (iy + 0.5) * step, *z_sample);
    if (!pts.empty()) {
      const auto attrs = query::infer_attributes(field, pts, bank, cfg.vs_weight);
      std::vector<Vertex*> owner(pts.size(), nullptr);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        auto it = std::find_if(g.vertices.begin(), g.vertices.end(), [&](const Vertex& v) {
          return v.node_type == NodeType::Region && v.cls == attrs[i].label;
        });
        if (it != g.vertices.end()) owner[i] = &*it;
      }
      for (bool grew = true; grew;) {
        grew = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (!owner[i]) continue;
          Aabb box = owner[i]->box();
          if (box.contains_xy(pts[i], 1e-6)) {
            owner[i] = nullptr;
          } else if (near_xy(box, pts[i])) {
            box.expand(Vec3(pts[i].x(), pts[i].y(), box.center().z()));
            owner[i]->set_box(box);
            owner[i] = nullptr;
            grew = true;
          }
        }
      }
    }
    if (++g.provenance.pending_frames >= cfg.edge_refresh_interval) {
      build_edges(g, describer, cfg);
      g.provenance.pending_frames = 0;
    }
  }
  // Endpoint copies must follow grown boxes even between refreshes.
  for (auto& e : g.edges) {
    e.start_node = *g.find(e.start_node.id);
    e.end_node = *g.find(e.end_node.id);
  }
}

}  // namespace lopmap::topomap
