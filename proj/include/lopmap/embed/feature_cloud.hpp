#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lopmap/embed/provider.hpp"

namespace lopmap::embed {

struct FeaturePoint {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  float weight = 1.0f;  // observation count
  float dist = 1.0f;    // mean camera distance, meters
  float conf = 1.0f;    // mean detection confidence; 1 for background
  Embedding ev;
  Embedding es;

  bool operator==(const FeaturePoint&) const = default;
};

/// Voxel-merged training targets. At most one point per voxel cell.
struct FeaturePointCloud {
  std::size_t vl_dim = 0;
  std::size_t sem_dim = 0;
  float voxel_size = 0.05f;
  std::vector<FeaturePoint> points;

  bool operator==(const FeaturePointCloud&) const = default;
};

/// LOPF v1 binary layout, little-endian:
///   "LOPF" | u32 version | u32 count | u32 dv | u32 ds | f32 voxel_size
///   per point: 3xf32 position | f32 weight | f32 dist | f32 conf | dv f32 | ds f32
inline constexpr std::uint32_t kLopfVersion = 1;

struct VoxelKey {
  std::int64_t x, y, z;
  auto operator<=>(const VoxelKey&) const = default;
};

/// Cell of a stored (f32) position; shared by fusion and the schema check.
inline VoxelKey voxel_key(const Eigen::Vector3f& p, float voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

void write_lopf(const std::filesystem::path& path, const FeaturePointCloud& cloud);
/// Throws SchemaError on malformed input.
FeaturePointCloud read_lopf(const std::filesystem::path& path);

/// Non-throwing schema check used to validate files from external producers.
/// Returns the list of problems; empty means the file is valid.
std::vector<std::string> check_lopf(const std::filesystem::path& path);

}  // namespace lopmap::embed
