#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lopmap/geometry.hpp"
#include "lopmap/query/query.hpp"
#include "lopmap/scene/frame.hpp"

namespace lopmap::topomap {

using Json = nlohmann::ordered_json;

enum class NodeType { Region, Object, Entrance };
enum class EdgeType { ObjectObject, ObjectRegion, RegionRegion, RegionEntrance };

const char* to_string(NodeType t);
const char* to_string(EdgeType t);
/// Throws SchemaError for unknown names.
NodeType node_type_from(const std::string& s);
EdgeType edge_type_from(const std::string& s);

/// Rounds to 6 significant digits, the precision the JSON form keeps.
double canonical(double v);
Vec3 canonical(const Vec3& v);

struct Vertex {
  std::int64_t id = 0;
  NodeType node_type = NodeType::Region;
  Vec3 bbox_extent = Vec3::Zero();
  Vec3 bbox_center = Vec3::Zero();
  std::string cls;
  std::string caption;

  Aabb box() const { return Aabb::from_center_extent(bbox_center, bbox_extent); }
  /// Stores the box with canonical rounding.
  void set_box(const Aabb& b);
  Json to_json() const;
  static Vertex from_json(const Json& j);
  bool operator==(const Vertex&) const = default;
};

struct Edge {
  std::int64_t id = 0;
  EdgeType edge_type = EdgeType::RegionRegion;
  Vertex start_node;
  Vertex end_node;
  std::string relationship;
  std::string position_relation;
  std::string caption;

  Json to_json() const;
  static Edge from_json(const Json& j);
  bool operator==(const Edge&) const = default;
};

struct MapperConfig {
  double grid_step = 0.5;
  double conf_threshold = 0.60;
  int min_observations = 3;
  /// Off: an instance needs min_observations frames; on: strictly more.
  bool strict_observations = false;
  int edge_refresh_interval = 50;
  /// Pixel stride used when update() grows regions from new frames.
  int update_pixel_stride = 4;
  double vs_weight = 0.5;
  /// Height of the region sampling plane as a fraction of the bounds height.
  double sample_height = 0.5;
  std::string describer = "rule";

  /// Throws InvalidConfig.
  void validate() const;
  Json to_json() const;
  static MapperConfig from_json(const Json& j);
  bool operator==(const MapperConfig&) const = default;
};

struct Provenance {
  std::string checkpoint_hash;
  Json mapper = Json::object();
  /// Frames integrated since the last edge refresh.
  std::int64_t pending_frames = 0;
  bool operator==(const Provenance&) const = default;
};

class TopoGraph {
 public:
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  Provenance provenance;

  const Vertex* find(std::int64_t id) const;
  Vertex* find(std::int64_t id);
  const Vertex* find_region(const std::string& label) const;
  std::int64_t next_vertex_id() const;
  std::size_t count(NodeType t) const;

  /// Throws SchemaError on dangling endpoints, stale endpoint copies,
  /// type mismatches, repeated ids or repeated endpoint pairs.
  void validate() const;

  Json to_json() const;
  /// Canonical text: two-space indent, trailing newline.
  std::string dump() const;
  static TopoGraph from_json(const Json& j);
  static TopoGraph parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static TopoGraph load(const std::filesystem::path& path);

  bool operator==(const TopoGraph&) const = default;
};

/// "b to the <direction> of a" on the floor plan; +x east, +y north, eight
/// 45 degree sectors.
std::string compass_relation(const Vec3& a, const Vec3& b);
/// Direction word for the offset b - a ("east", "southeast", ...), or empty
/// when the floor-plan offset is zero.
std::string compass_direction(const Vec3& a, const Vec3& b);

struct Description {
  std::string relationship;
  std::string position_relation;
  std::string caption;
};

/// Turns a pair of vertex JSON objects into edge text.
class Describer {
 public:
  virtual ~Describer() = default;
  virtual Description describe(const Json& a, const Json& b) const = 0;
};

/// (class, region) pairs that may not form a "belong" edge.
using ImplausibleTable = std::set<std::pair<std::string, std::string>>;

/// Lines "class,region"; '#' starts a comment. Throws IoError, SchemaError.
ImplausibleTable load_implausible_pairs(const std::filesystem::path& path);

class RuleDescriber final : public Describer {
 public:
  explicit RuleDescriber(ImplausibleTable veto = {}) : veto_(std::move(veto)) {}
  Description describe(const Json& a, const Json& b) const override;

 private:
  ImplausibleTable veto_;
};

/// Sends a prompt to a completion callback and parses its JSON reply.
/// Not deterministic in general; kept out of the reproducible pipeline.
class PromptDescriber final : public Describer {
 public:
  using Complete = std::function<std::string(const std::string& prompt)>;
  explicit PromptDescriber(Complete complete) : complete_(std::move(complete)) {}
  Description describe(const Json& a, const Json& b) const override;
  static std::string build_prompt(const Json& a, const Json& b);

 private:
  Complete complete_;
};

/// Samples the centre of every grid_step cell (cells anchored at the world
/// origin) inside the floor bounds, at mid-height; one vertex per non-empty
/// label, ids left at 0. Throws InvalidBounds.
std::vector<Vertex> map_regions(const query::FeatureField& field, const Aabb& bounds,
                                const query::LabelBank& bank, const MapperConfig& cfg);

/// Object candidates from detections; bbox is the bound of the instance's
/// back-projected pixels. Sorted by instance id, ids left at 0.
std::vector<Vertex> map_objects(std::span<const scene::Frame> frames, const MapperConfig& cfg);

/// Rebuilds every edge and adds an Entrance vertex for each newly adjacent
/// region pair. Existing entrances are reused (and re-centred).
void build_edges(TopoGraph& graph, const Describer& describer, const MapperConfig& cfg);

TopoGraph build_map(const query::FeatureField& field, std::span<const scene::Frame> frames,
                    const Aabb& bounds, const query::LabelBank& bank,
                    const Describer& describer, const MapperConfig& cfg);

/// Integrates new frames: adds object vertices, grows region boxes by the
/// cells that sampled pixels fall in, and
/// rebuilds edges every edge_refresh_interval frames. Throws DimMismatch when
/// the bank and field disagree.
void update(TopoGraph& graph, std::span<const scene::Frame> frames,
            const query::FeatureField& field, const query::LabelBank& bank,
            const Describer& describer, const MapperConfig& cfg);

}  // namespace lopmap::topomap
