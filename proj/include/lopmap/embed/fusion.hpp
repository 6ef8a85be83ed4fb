#pragma once

#include <cstdint>
#include <span>

#include "lopmap/embed/feature_cloud.hpp"
#include "lopmap/embed/provider.hpp"
#include "lopmap/scene/frame.hpp"
#include "lopmap/scene/partition.hpp"

namespace lopmap::embed {

struct FusionConfig {
  float voxel_size = 0.05f;
  std::size_t max_pixels_per_frame = 4096;
  /// Object text targets are "<label> in the <region>" when on, bare labels otherwise.
  bool context_prompt = true;
  /// Background pixels contribute (whole-image, region-label) targets when on.
  bool encode_background = true;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Back-projects sampled pixels of every frame, attaches their target
/// embeddings and merges observations per voxel by their arithmetic mean.
/// The result is independent of frame order. Throws NoData for an empty frame
/// list and DimMismatch when the provider disagrees with itself.
FeaturePointCloud build_feature_cloud(std::span<const scene::Frame> frames,
                                      const scene::RegionPartition& partition,
                                      const EmbeddingProvider& provider,
                                      const FusionConfig& config);

}  // namespace lopmap::embed
