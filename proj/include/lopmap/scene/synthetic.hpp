#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lopmap/geometry.hpp"
#include "lopmap/scene/camera.hpp"
#include "lopmap/scene/frame.hpp"
#include "lopmap/scene/partition.hpp"

namespace lopmap::scene {

struct Room {
  std::string label;
  FloorBounds footprint;  // wall center lines
  FloorBounds interior(double wall_thickness) const {
    const double h = 0.5 * wall_thickness;
    return {footprint.xmin + h, footprint.xmax - h, footprint.ymin + h, footprint.ymax - h};
  }
  bool operator==(const Room&) const = default;
};

/// Opening in the wall between two rooms. `axis` is the floor axis the wall
/// is normal to (0: wall along x = const, 1: wall along y = const).
struct Doorway {
  std::size_t room_a = 0;
  std::size_t room_b = 0;
  Vec3 center = Vec3::Zero();
  int axis = 0;
  double width = 0.0;
  bool operator==(const Doorway&) const = default;
};

struct SceneObject {
  std::int32_t instance_id = 0;
  std::string label;
  Aabb box;
  std::size_t room = 0;
  float confidence = 1.0f;
  bool operator==(const SceneObject&) const = default;
};

struct SyntheticScene {
  std::vector<Room> rooms;
  std::vector<Doorway> doorways;
  std::vector<SceneObject> objects;
  std::vector<Aabb> structure;  // walls, floor and ceiling slabs
  std::vector<Pose> trajectory;
  RegionPartition partition;
  Intrinsics intrinsics;
  double wall_height = 2.6;
  double wall_thickness = 0.1;

  /// Outer bounds of everything renderable (floor plan x height).
  Aabb bounds() const;
  const SceneObject* find_object(std::int32_t instance_id) const;
  const Room* find_room(const std::string& label) const;

  nlohmann::json to_json() const;
  static SyntheticScene from_json(const nlohmann::json& j);
  bool operator==(const SyntheticScene&) const = default;
};

struct SceneConfig {
  int rooms = 4;
  int objects = 12;
  /// Classes that each appear once in two different rooms; counted in `objects`.
  int paired_classes = 0;
  std::uint64_t seed = 7;
  std::vector<std::string> region_vocabulary = default_region_vocabulary();
  std::vector<std::string> object_vocabulary = default_object_vocabulary();

  double room_size = 4.5;
  double wall_height = 2.6;
  double wall_thickness = 0.1;
  double door_width = 1.0;

  int image_width = 64;
  int image_height = 48;
  double horizontal_fov_deg = 90.0;
  int positions_per_room = 2;
  int views_per_position = 8;
  double camera_height = 1.4;
  double camera_pitch_deg = 25.0;

  static std::vector<std::string> default_region_vocabulary();
  static std::vector<std::string> default_object_vocabulary();
};

/// Procedural apartment: guillotine-split floor plan, doorways on a spanning
/// tree of adjacent rooms, non-overlapping object boxes and an in-room
/// panning trajectory. Throws GenerationFailed on infeasible requests.
SyntheticScene generate_scene(const SceneConfig& config);

/// Ray-cast depth and instance rasters for trajectory pose `pose_index`.
Frame render_frame(const SyntheticScene& scene, std::size_t pose_index);
Frame render_view(const SyntheticScene& scene, const Pose& pose);

}  // namespace lopmap::scene
