#include "lopmap/scene/frame.hpp"

#include <algorithm>
#include <cstring>
#include <string_view>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::scene {

void Frame::validate() const {
  intrinsics.validate();
  pose.validate();
  const std::size_t n =
      static_cast<std::size_t>(intrinsics.width) * static_cast<std::size_t>(intrinsics.height);
  if (depth.size() != n || instance_ids.size() != n) {
    throw Error(ErrorCode::InvalidInput, "frame rasters do not match the image size");
  }
  for (std::int32_t id : instance_ids) {
    if (id == kBackground) continue;
    if (!instance_labels.contains(id) || !instance_confidences.contains(id)) {
      throw Error(ErrorCode::InvalidInput,
                  "instance " + std::to_string(id) + " lacks a label or confidence");
    }
  }
  for (const auto& [id, conf] : instance_confidences) {
    if (!(conf >= 0.0f && conf <= 1.0f)) {
      throw Error(ErrorCode::InvalidInput, "confidence outside [0, 1]");
    }
  }
}

std::uint64_t frame_key(const Frame& frame) {
  const Mat4 m = frame.pose.matrix();
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(m.data()),
                                             sizeof(double) * 16));
  const double k[4] = {frame.intrinsics.fx, frame.intrinsics.fy, frame.intrinsics.cx,
                       frame.intrinsics.cy};
  h = fnv1a64(std::string_view(reinterpret_cast<const char*>(k), sizeof(k)), h);
  return splitmix64(h);
}

PixelBox instance_box(const Frame& frame, std::int32_t instance_id) {
  PixelBox box{frame.width(), frame.height(), -1, -1};
  for (int v = 0; v < frame.height(); ++v) {
    for (int u = 0; u < frame.width(); ++u) {
      if (frame.instance_ids[frame.index(u, v)] != instance_id) continue;
      box.u0 = std::min(box.u0, u);
      box.v0 = std::min(box.v0, v);
      box.u1 = std::max(box.u1, u);
      box.v1 = std::max(box.v1, v);
    }
  }
  return box;
}

}  // namespace lopmap::scene
