#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lopmap/scene/camera.hpp"

namespace lopmap::scene {

inline constexpr std::int32_t kBackground = -1;

/// Posed RGB-D observation with instance annotations. Depth 0 marks an
/// invalid pixel; instance id -1 marks background.
struct Frame {
  std::vector<float> depth;                 // row-major, height*width
  std::vector<std::int32_t> instance_ids;   // row-major, height*width
  std::map<std::int32_t, std::string> instance_labels;
  std::map<std::int32_t, float> instance_confidences;
  Pose pose;
  Intrinsics intrinsics;

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width()) +
           static_cast<std::size_t>(u);
  }

  /// Throws InvalidInput when rasters or annotations are inconsistent.
  void validate() const;

  bool operator==(const Frame& o) const {
    return depth == o.depth && instance_ids == o.instance_ids &&
           instance_labels == o.instance_labels &&
           instance_confidences == o.instance_confidences && pose == o.pose &&
           intrinsics == o.intrinsics;
  }
};

/// Stable content key for a frame (pose and intrinsics), independent of its
/// position in a sequence.
std::uint64_t frame_key(const Frame& frame);

/// Pixel bounding box of an instance mask, inclusive; empty if absent.
struct PixelBox {
  int u0 = 0, v0 = 0, u1 = -1, v1 = -1;
  bool empty() const { return u1 < u0 || v1 < v0; }
};
PixelBox instance_box(const Frame& frame, std::int32_t instance_id);

}  // namespace lopmap::scene
