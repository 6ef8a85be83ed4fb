#include "lopmap/scene/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::scene {
namespace {

struct ClassShape {
  double sx, sy, sz;
};

// Footprint and height per class; unknown classes fall back to a 0.8 m cube.
const std::map<std::string, ClassShape>& class_shapes() {
  static const std::map<std::string, ClassShape> shapes = {
      {"bed", {2.0, 1.6, 0.6}},       {"sofa", {1.9, 0.9, 0.8}},
      {"table", {1.2, 0.8, 0.75}},    {"chair", {0.5, 0.5, 0.9}},
      {"tv", {1.2, 0.3, 1.1}},        {"cabinet", {1.0, 0.5, 1.2}},
      {"sink", {0.7, 0.5, 0.9}},      {"toilet", {0.5, 0.7, 0.8}},
      {"bathtub", {1.6, 0.8, 0.6}},   {"desk", {1.3, 0.7, 0.75}},
      {"plant", {0.5, 0.5, 1.0}},     {"refrigerator", {0.8, 0.7, 1.8}},
      {"stove", {0.8, 0.6, 0.9}},     {"shelf", {1.0, 0.4, 1.6}},
      {"lamp", {0.4, 0.4, 1.5}},      {"cup", {0.3, 0.3, 0.3}},
      {"dresser", {1.2, 0.5, 1.0}},   {"bench", {1.2, 0.4, 0.5}},
      {"piano", {1.5, 0.6, 1.2}},     {"washer", {0.6, 0.6, 0.9}},
  };
  return shapes;
}

ClassShape shape_of(const std::string& label) {
  const auto& shapes = class_shapes();
  auto it = shapes.find(label);
  return it == shapes.end() ? ClassShape{0.8, 0.8, 0.8} : it->second;
}

struct Leaf {
  FloorBounds rect;
  std::string pattern;
};

struct Split {
  int axis;      // 0: x <= c, 1: y <= c
  double c;
  double lo, hi;  // wall segment extent along the other axis
};

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 json_vec(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}
nlohmann::json box_json(const Aabb& b) { return {{"min", vec_json(b.min)}, {"max", vec_json(b.max)}}; }
Aabb json_box(const nlohmann::json& j) { return {json_vec(j.at("min")), json_vec(j.at("max"))}; }

}  // namespace

std::vector<std::string> SceneConfig::default_region_vocabulary() {
  return {"kitchen", "bedroom", "living room", "bathroom", "dining room",
          "office",  "TV room", "lobby",       "family room", "toilet"};
}

std::vector<std::string> SceneConfig::default_object_vocabulary() {
  std::vector<std::string> v;
  for (const auto& [name, shape] : class_shapes()) v.push_back(name);
  return v;
}

Aabb SyntheticScene::bounds() const {
  const FloorBounds& f = partition.bounds();
  const double h = 0.5 * wall_thickness;
  return {Vec3(f.xmin - h, f.ymin - h, 0.0), Vec3(f.xmax + h, f.ymax + h, wall_height)};
}

const SceneObject* SyntheticScene::find_object(std::int32_t instance_id) const {
  for (const auto& o : objects) {
    if (o.instance_id == instance_id) return &o;
  }
  return nullptr;
}

const Room* SyntheticScene::find_room(const std::string& label) const {
  for (const auto& r : rooms) {
    if (r.label == label) return &r;
  }
  return nullptr;
}

SyntheticScene generate_scene(const SceneConfig& cfg) {
  if (cfg.rooms < 1) throw Error(ErrorCode::GenerationFailed, "room count must be >= 1");
  if (cfg.objects < 0 || cfg.paired_classes < 0 || 2 * cfg.paired_classes > cfg.objects) {
    throw Error(ErrorCode::GenerationFailed, "object counts are inconsistent");
  }
  if (cfg.paired_classes > 0 && cfg.rooms < 2) {
    throw Error(ErrorCode::GenerationFailed, "paired classes need at least two rooms");
  }
  if (static_cast<std::size_t>(cfg.rooms) > cfg.region_vocabulary.size()) {
    throw Error(ErrorCode::GenerationFailed, "not enough region labels for the rooms");
  }
  if (cfg.object_vocabulary.empty() && cfg.objects > 0) {
    throw Error(ErrorCode::GenerationFailed, "empty object vocabulary");
  }
  Rng rng(cfg.seed);

  // Footprint: a near-square grid of nominal rooms, centered on the origin.
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.rooms))));
  const int rows = (cfg.rooms + cols - 1) / cols;
  const double width = cols * cfg.room_size;
  const double depth = rows * cfg.room_size * 0.9;
  const FloorBounds outer{-0.5 * width, 0.5 * width, -0.5 * depth, 0.5 * depth};

  std::vector<Leaf> leaves{{outer, ""}};
  std::vector<HalfPlane> rules;
  std::vector<Split> splits;
  while (static_cast<int>(leaves.size()) < cfg.rooms) {
    auto largest = std::max_element(leaves.begin(), leaves.end(), [](const Leaf& a, const Leaf& b) {
      return (a.rect.xmax - a.rect.xmin) * (a.rect.ymax - a.rect.ymin) <
             (b.rect.xmax - b.rect.xmin) * (b.rect.ymax - b.rect.ymin);
    });
    const Leaf parent = *largest;
    const FloorBounds& r = parent.rect;
    const int axis = (r.xmax - r.xmin) >= (r.ymax - r.ymin) ? 0 : 1;
    const double frac = rng.uniform(0.42, 0.58);
    for (auto& leaf : leaves) leaf.pattern.push_back('*');

    Leaf lower = parent, upper = parent;
    lower.pattern.push_back('+');
    upper.pattern.push_back('-');
    if (axis == 0) {
      const double c = r.xmin + frac * (r.xmax - r.xmin);
      rules.push_back({1.0, 0.0, c});
      splits.push_back({0, c, r.ymin, r.ymax});
      lower.rect.xmax = c;
      upper.rect.xmin = c;
    } else {
      const double c = r.ymin + frac * (r.ymax - r.ymin);
      rules.push_back({0.0, 1.0, c});
      splits.push_back({1, c, r.xmin, r.xmax});
      lower.rect.ymax = c;
      upper.rect.ymin = c;
    }
    *largest = lower;
    leaves.insert(largest + 1, upper);
  }

  std::vector<std::string> labels = cfg.region_vocabulary;
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);

  SyntheticScene scene;
  scene.wall_height = cfg.wall_height;
  scene.wall_thickness = cfg.wall_thickness;
  std::vector<DecisionEntry> table;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    scene.rooms.push_back({labels[i], leaves[i].rect});
    table.push_back({leaves[i].pattern, labels[i]});
  }
  scene.partition = RegionPartition(rules, table, outer);

  // Doorways on a random spanning tree of adjacent rooms, plus a few extra.
  const double min_shared = cfg.door_width + 0.6;
  struct Adjacent {
    std::size_t a, b;
    int axis;
    double c, lo, hi;
  };
  std::vector<Adjacent> adjacent;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      const FloorBounds& p = leaves[i].rect;
      const FloorBounds& q = leaves[j].rect;
      if (p.xmax == q.xmin || q.xmax == p.xmin) {
        const double c = p.xmax == q.xmin ? p.xmax : q.xmax;
        const double lo = std::max(p.ymin, q.ymin), hi = std::min(p.ymax, q.ymax);
        if (hi - lo >= min_shared) adjacent.push_back({i, j, 0, c, lo, hi});
      } else if (p.ymax == q.ymin || q.ymax == p.ymin) {
        const double c = p.ymax == q.ymin ? p.ymax : q.ymax;
        const double lo = std::max(p.xmin, q.xmin), hi = std::min(p.xmax, q.xmax);
        if (hi - lo >= min_shared) adjacent.push_back({i, j, 1, c, lo, hi});
      }
    }
  }
  for (std::size_t i = adjacent.size(); i > 1; --i) std::swap(adjacent[i - 1], adjacent[rng.below(i)]);
  UnionFind uf(leaves.size());
  for (const auto& adj : adjacent) {
    const bool tree_edge = uf.unite(adj.a, adj.b);
    if (!tree_edge && rng.uniform() >= 0.25) continue;
    Doorway d;
    d.room_a = adj.a;
    d.room_b = adj.b;
    d.axis = adj.axis;
    d.width = cfg.door_width;
    const double mid = 0.5 * (adj.lo + adj.hi);
    d.center = adj.axis == 0 ? Vec3(adj.c, mid, 0.5 * cfg.wall_height)
                             : Vec3(mid, adj.c, 0.5 * cfg.wall_height);
    scene.doorways.push_back(d);
  }
  for (std::size_t i = 1; i < leaves.size(); ++i) {
    if (uf.find(i) != uf.find(0)) {
      throw Error(ErrorCode::GenerationFailed, "rooms cannot all be connected by doorways");
    }
  }

  // Structure: floor, ceiling, outer walls, interior split walls minus doors.
  const double t = cfg.wall_thickness, ht = 0.5 * t, wh = cfg.wall_height;
  scene.structure.push_back({Vec3(outer.xmin - ht, outer.ymin - ht, -0.1),
                             Vec3(outer.xmax + ht, outer.ymax + ht, 0.0)});
  scene.structure.push_back({Vec3(outer.xmin - ht, outer.ymin - ht, wh),
                             Vec3(outer.xmax + ht, outer.ymax + ht, wh + 0.1)});
  scene.structure.push_back({Vec3(outer.xmin - ht, outer.ymin - ht, 0.0),
                             Vec3(outer.xmin + ht, outer.ymax + ht, wh)});
  scene.structure.push_back({Vec3(outer.xmax - ht, outer.ymin - ht, 0.0),
                             Vec3(outer.xmax + ht, outer.ymax + ht, wh)});
  scene.structure.push_back({Vec3(outer.xmin - ht, outer.ymin - ht, 0.0),
                             Vec3(outer.xmax + ht, outer.ymin + ht, wh)});
  scene.structure.push_back({Vec3(outer.xmin - ht, outer.ymax - ht, 0.0),
                             Vec3(outer.xmax + ht, outer.ymax + ht, wh)});
  for (const Split& s : splits) {
    std::vector<std::pair<double, double>> gaps;
    for (const Doorway& d : scene.doorways) {
      const double along = d.axis == 0 ? d.center.y() : d.center.x();
      const double across = d.axis == 0 ? d.center.x() : d.center.y();
      if (d.axis == s.axis && across == s.c && along > s.lo && along < s.hi) {
        gaps.emplace_back(along - 0.5 * d.width, along + 0.5 * d.width);
      }
    }
    std::sort(gaps.begin(), gaps.end());
    double start = s.lo;
    auto emit = [&](double a, double b) {
      if (b - a <= 1e-9) return;
      if (s.axis == 0) {
        scene.structure.push_back({Vec3(s.c - ht, a, 0.0), Vec3(s.c + ht, b, wh)});
      } else {
        scene.structure.push_back({Vec3(a, s.c - ht, 0.0), Vec3(b, s.c + ht, wh)});
      }
    };
    for (const auto& [g0, g1] : gaps) {
      emit(start, g0);
      start = g1;
    }
    emit(start, s.hi);
  }

  // Camera stations: spread along each room's longer axis.
  std::vector<std::vector<Vec3>> stations(scene.rooms.size());
  for (std::size_t i = 0; i < scene.rooms.size(); ++i) {
    const FloorBounds f = scene.rooms[i].interior(t);
    const bool along_x = (f.xmax - f.xmin) >= (f.ymax - f.ymin);
    for (int k = 0; k < cfg.positions_per_room; ++k) {
      const double s = (k + 1.0) / (cfg.positions_per_room + 1.0);
      const double x = along_x ? f.xmin + s * (f.xmax - f.xmin) : 0.5 * (f.xmin + f.xmax);
      const double y = along_x ? 0.5 * (f.ymin + f.ymax) : f.ymin + s * (f.ymax - f.ymin);
      stations[i].emplace_back(x, y, cfg.camera_height);
    }
  }

  // Objects.
  std::vector<std::pair<std::string, int>> requests;  // class, forced room or -1
  std::vector<std::string> pool = cfg.object_vocabulary;
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
  std::size_t next_class = 0;
  auto take_class = [&]() -> std::string {
    if (next_class < pool.size()) return pool[next_class++];
    return cfg.object_vocabulary[rng.below(cfg.object_vocabulary.size())];
  };
  for (int p = 0; p < cfg.paired_classes; ++p) {
    const std::string cls = take_class();
    const int ra = static_cast<int>(rng.below(scene.rooms.size()));
    int rb = static_cast<int>(rng.below(scene.rooms.size() - 1));
    if (rb >= ra) ++rb;
    requests.emplace_back(cls, ra);
    requests.emplace_back(cls, rb);
  }
  for (int k = 2 * cfg.paired_classes; k < cfg.objects; ++k) requests.emplace_back(take_class(), -1);

  // Large footprints first; they are the hard ones to fit.
  std::stable_sort(requests.begin(), requests.end(), [](const auto& a, const auto& b) {
    const ClassShape sa = shape_of(a.first), sb = shape_of(b.first);
    return sa.sx * sa.sy > sb.sx * sb.sy;
  });
  const double wall_margin = 0.2, gap = 0.25, station_clear = 0.7, door_clear = 0.9;
  std::int32_t next_id = 0;
  for (const auto& [cls, forced_room] : requests) {
    bool placed = false;
    for (int attempt = 0; attempt < 4000 && !placed; ++attempt) {
      const std::size_t room = forced_room >= 0
                                   ? static_cast<std::size_t>(forced_room)
                                   : static_cast<std::size_t>(rng.below(scene.rooms.size()));
      ClassShape sh = shape_of(cls);
      if (rng.uniform() < 0.5) std::swap(sh.sx, sh.sy);
      const FloorBounds f = scene.rooms[room].interior(t);
      const double x0 = f.xmin + wall_margin, x1 = f.xmax - wall_margin - sh.sx;
      const double y0 = f.ymin + wall_margin, y1 = f.ymax - wall_margin - sh.sy;
      if (x1 <= x0 || y1 <= y0) continue;
      const double x = rng.uniform(x0, x1), y = rng.uniform(y0, y1);
      const Aabb box(Vec3(x, y, 0.0), Vec3(x + sh.sx, y + sh.sy, sh.sz));

      bool ok = true;
      const Aabb padded(box.min - Vec3(gap, gap, 0.0), box.max + Vec3(gap, gap, 0.0));
      for (const auto& o : scene.objects) {
        if (overlap_volume(padded, o.box) > 0.0) ok = false;
      }
      for (const auto& st : stations[room]) {
        if (box.distance(Vec3(st.x(), st.y(), 0.5 * sh.sz)) < station_clear) ok = false;
      }
      for (const auto& d : scene.doorways) {
        if (box.distance(Vec3(d.center.x(), d.center.y(), 0.5 * sh.sz)) < door_clear) ok = false;
      }
      if (!ok) continue;
      const float conf = static_cast<float>(rng.uniform(0.5, 1.0));
      scene.objects.push_back({next_id++, cls, box, room, conf});
      placed = true;
    }
    if (!placed) {
      throw Error(ErrorCode::GenerationFailed, "could not place object '" + cls + "'");
    }
  }

  scene.intrinsics = intrinsics_from_fov(cfg.image_width, cfg.image_height,
                                         cfg.horizontal_fov_deg * std::numbers::pi / 180.0);
  const double pitch = cfg.camera_pitch_deg * std::numbers::pi / 180.0;
  for (const auto& room_stations : stations) {
    for (std::size_t k = 0; k < room_stations.size(); ++k) {
      const double offset = (k % 2 == 0 ? 0.0 : 0.5) * 2.0 * std::numbers::pi / cfg.views_per_position;
      for (int v = 0; v < cfg.views_per_position; ++v) {
        const double yaw = offset + 2.0 * std::numbers::pi * v / cfg.views_per_position;
        const Vec3 fwd(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                       -std::sin(pitch));
        scene.trajectory.push_back(Pose::look_at(room_stations[k], fwd));
      }
    }
  }
  return scene;
}

Frame render_view(const SyntheticScene& scene, const Pose& pose) {
  Frame frame;
  frame.pose = pose;
  frame.intrinsics = scene.intrinsics;
  const int w = scene.intrinsics.width, h = scene.intrinsics.height;
  frame.depth.assign(static_cast<std::size_t>(w) * h, 0.0f);
  frame.instance_ids.assign(static_cast<std::size_t>(w) * h, kBackground);

  const Vec3 origin = pose.translation;
  auto hit = [&](const Aabb& box, const Vec3& dir, double& t_hit) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (dir[a] == 0.0) {
        if (origin[a] < box.min[a] || origin[a] > box.max[a]) return false;
        continue;
      }
      double ta = (box.min[a] - origin[a]) / dir[a];
      double tb = (box.max[a] - origin[a]) / dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (t1 < t0 || t0 <= 1e-9) return false;
    t_hit = t0;
    return true;
  };

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Vec3 dir = pixel_ray(u, v, scene.intrinsics, pose);
      double best = std::numeric_limits<double>::infinity();
      std::int32_t id = kBackground;
      double t;
      for (const auto& box : scene.structure) {
        if (hit(box, dir, t) && t < best) best = t;
      }
      for (const auto& obj : scene.objects) {
        if (hit(obj.box, dir, t) && t < best) {
          best = t;
          id = obj.instance_id;
        }
      }
      if (!std::isfinite(best)) continue;
      const std::size_t i = frame.index(u, v);
      frame.depth[i] = static_cast<float>(best);
      frame.instance_ids[i] = id;
      if (id != kBackground && !frame.instance_labels.contains(id)) {
        const SceneObject* obj = scene.find_object(id);
        frame.instance_labels[id] = obj->label;
        frame.instance_confidences[id] = obj->confidence;
      }
    }
  }
  return frame;
}

Frame render_frame(const SyntheticScene& scene, std::size_t pose_index) {
  if (pose_index >= scene.trajectory.size()) {
    throw Error(ErrorCode::OutOfBounds, "pose index outside the trajectory");
  }
  return render_view(scene, scene.trajectory[pose_index]);
}

nlohmann::json SyntheticScene::to_json() const {
  nlohmann::json rooms_j = nlohmann::json::array();
  for (const auto& r : rooms) {
    rooms_j.push_back({{"label", r.label},
                       {"footprint", {r.footprint.xmin, r.footprint.xmax, r.footprint.ymin,
                                      r.footprint.ymax}}});
  }
  nlohmann::json doors_j = nlohmann::json::array();
  for (const auto& d : doorways) {
    doors_j.push_back({{"rooms", {d.room_a, d.room_b}},
                       {"center", vec_json(d.center)},
                       {"axis", d.axis},
                       {"width", d.width}});
  }
  nlohmann::json objects_j = nlohmann::json::array();
  for (const auto& o : objects) {
    objects_j.push_back({{"instance_id", o.instance_id},
                         {"class", o.label},
                         {"box", box_json(o.box)},
                         {"room", o.room},
                         {"confidence", o.confidence}});
  }
  nlohmann::json structure_j = nlohmann::json::array();
  for (const auto& b : structure) structure_j.push_back(box_json(b));
  nlohmann::json traj_j = nlohmann::json::array();
  for (const auto& p : trajectory) {
    const Mat4 m = p.matrix();
    nlohmann::json row = nlohmann::json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    traj_j.push_back(row);
  }
  return {{"rooms", rooms_j},
          {"doorways", doors_j},
          {"objects", objects_j},
          {"structure", structure_j},
          {"trajectory", traj_j},
          {"partition", partition.to_json()},
          {"intrinsics",
           {{"fx", intrinsics.fx},
            {"fy", intrinsics.fy},
            {"cx", intrinsics.cx},
            {"cy", intrinsics.cy},
            {"width", intrinsics.width},
            {"height", intrinsics.height}}},
          {"wall_height", wall_height},
          {"wall_thickness", wall_thickness}};
}

SyntheticScene SyntheticScene::from_json(const nlohmann::json& j) {
  try {
    SyntheticScene s;
    s.partition = RegionPartition::from_json(j.at("partition"));
    const auto& k = j.at("intrinsics");
    s.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(),
                    k.at("cx").get<double>(), k.at("cy").get<double>(),
                    k.at("width").get<int>(),  k.at("height").get<int>()};
    s.wall_height = j.value("wall_height", 2.6);
    s.wall_thickness = j.value("wall_thickness", 0.1);
    for (const auto& r : j.value("rooms", nlohmann::json::array())) {
      const auto& f = r.at("footprint");
      s.rooms.push_back({r.at("label").get<std::string>(),
                         {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>(),
                          f.at(3).get<double>()}});
    }
    for (const auto& d : j.value("doorways", nlohmann::json::array())) {
      s.doorways.push_back({d.at("rooms").at(0).get<std::size_t>(),
                            d.at("rooms").at(1).get<std::size_t>(), json_vec(d.at("center")),
                            d.at("axis").get<int>(), d.at("width").get<double>()});
    }
    for (const auto& o : j.value("objects", nlohmann::json::array())) {
      s.objects.push_back({o.at("instance_id").get<std::int32_t>(),
                           o.at("class").get<std::string>(), json_box(o.at("box")),
                           o.at("room").get<std::size_t>(), o.at("confidence").get<float>()});
    }
    for (const auto& b : j.value("structure", nlohmann::json::array())) {
      s.structure.push_back(json_box(b));
    }
    for (const auto& row : j.value("trajectory", nlohmann::json::array())) {
      Mat4 m;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = row.at(4 * r + c).get<double>();
      s.trajectory.push_back(Pose::from_matrix(m));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("scene.json: ") + e.what());
  }
}

}  // namespace lopmap::scene
