#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "lopmap/embed/provider.hpp"

namespace lopmap::embed {

/// Provider backed by precomputed embeddings, typically exported next to a
/// real-data feature cloud. JSON layout:
///   {"vl_dim": n, "sem_dim": m,
///    "texts":  {"<text>": {"vl": [...], "sem": [...]}},
///    "crops":  {"<instance_id>": [...]},
///    "images": {"<frame_key>": [...]}}
/// Lookups of unknown keys throw InvalidInput.
class TableProvider final : public EmbeddingProvider {
 public:
  static TableProvider load(const std::filesystem::path& path);

  std::size_t vl_dim() const override { return vl_dim_; }
  std::size_t sem_dim() const override { return sem_dim_; }

  TextEmbedding embed_text(std::string_view text) const override;
  Embedding embed_image_crop(const CropView& crop) const override;
  Embedding embed_image(const ImageView& image) const override;

 private:
  std::size_t vl_dim_ = 0;
  std::size_t sem_dim_ = 0;
  std::map<std::string, TextEmbedding, std::less<>> texts_;
  std::map<std::int32_t, Embedding> crops_;
  std::map<std::uint64_t, Embedding> images_;
};

}  // namespace lopmap::embed
