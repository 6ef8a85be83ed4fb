#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lopmap/scene/frame.hpp"

namespace lopmap::embed {

using Embedding = std::vector<float>;

struct TextEmbedding {
  Embedding vl;   // vision-language space
  Embedding sem;  // sentence/semantic space
};

/// An instance crop handed to the image encoder. Real encoders read the
/// pixels inside `box`; the synthetic provider uses the annotation fields.
struct CropView {
  const scene::Frame* frame = nullptr;
  std::int32_t instance_id = scene::kBackground;
  std::string_view label;
  scene::PixelBox box;
};

/// A whole frame handed to the image encoder. `region_mix` lists the floor
/// regions visible in the frame with their pixel fractions.
struct ImageView {
  const scene::Frame* frame = nullptr;
  std::uint64_t key = 0;
  std::vector<std::pair<std::string, float>> region_mix;
};

/// Source of target embeddings. Implementations must be deterministic and
/// safe to call concurrently; outputs are unit-norm.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t vl_dim() const = 0;
  virtual std::size_t sem_dim() const = 0;

  virtual TextEmbedding embed_text(std::string_view text) const = 0;
  virtual Embedding embed_image_crop(const CropView& crop) const = 0;
  virtual Embedding embed_image(const ImageView& image) const = 0;
};

/// Renormalizes in place; a zero vector stays zero.
void normalize(Embedding& v);
double cosine(const Embedding& a, const Embedding& b);

/// "<object> in the <region>"; throws InvalidLabel on empty input.
std::string compose_prompt(std::string_view object_label, std::string_view region_label);

}  // namespace lopmap::embed
