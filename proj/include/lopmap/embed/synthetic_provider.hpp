#pragma once

#include <cstdint>

#include "lopmap/embed/provider.hpp"

namespace lopmap::embed {

/// Deterministic stand-in for an image-text encoder plus a sentence encoder.
///
/// Every lower-cased whitespace token gets a seeded Gaussian unit vector per
/// space; a text embeds as the normalized sum over its token multiset, so
/// prompts sharing tokens are positively correlated while unrelated labels
/// are nearly orthogonal. Crops embed as their class text plus a fixed
/// per-instance perturbation of norm 0.1; whole images as the mix of visible
/// regions and instance crops.
class SyntheticProvider final : public EmbeddingProvider {
 public:
  SyntheticProvider(std::uint64_t seed, std::size_t vl_dim, std::size_t sem_dim);

  std::size_t vl_dim() const override { return vl_dim_; }
  std::size_t sem_dim() const override { return sem_dim_; }

  TextEmbedding embed_text(std::string_view text) const override;
  Embedding embed_image_crop(const CropView& crop) const override;
  Embedding embed_image(const ImageView& image) const override;

  /// Crop embedding that only needs the class and instance id.
  Embedding embed_instance(std::string_view label, std::int32_t instance_id) const;

  std::uint64_t seed() const { return seed_; }

 private:
  Embedding token_vector(std::string_view token, std::uint64_t salt, std::size_t dim) const;
  Embedding text_space(std::string_view text, std::uint64_t salt, std::size_t dim) const;

  std::uint64_t seed_;
  std::size_t vl_dim_;
  std::size_t sem_dim_;
};

}  // namespace lopmap::embed
