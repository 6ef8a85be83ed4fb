#pragma once

#include <filesystem>
#include <vector>

#include "lopmap/scene/frame.hpp"
#include "lopmap/scene/synthetic.hpp"

namespace lopmap::scene {

/// On-disk scene sequence:
///   scene.json                 scene description (partition, intrinsics, ...)
///   labels.json                instance_id -> {class, confidence}
///   frames/NNNNNN.depth.bin    little-endian f32, row-major
///   frames/NNNNNN.inst.bin     little-endian i32, row-major
///   frames/NNNNNN.pose.txt     4x4 camera-to-world, row-major
struct SceneSequence {
  SyntheticScene scene;
  std::vector<Frame> frames;
};

void write_sequence(const std::filesystem::path& dir, const SyntheticScene& scene,
                    const std::vector<Frame>& frames);
SceneSequence read_sequence(const std::filesystem::path& dir);

/// Renders every trajectory pose of `scene`.
std::vector<Frame> render_trajectory(const SyntheticScene& scene);

}  // namespace lopmap::scene
