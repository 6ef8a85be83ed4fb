#include "lopmap/embed/table_provider.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "lopmap/error.hpp"

namespace lopmap::embed {
namespace {

Embedding read_vector(const nlohmann::json& j, std::size_t dim, const std::string& what) {
  Embedding v = j.get<Embedding>();
  if (v.size() != dim) throw Error(ErrorCode::DimMismatch, what + ": wrong dimension");
  normalize(v);
  return v;
}

}  // namespace

TableProvider TableProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  TableProvider p;
  try {
    const auto j = nlohmann::json::parse(in);
    p.vl_dim_ = j.at("vl_dim").get<std::size_t>();
    p.sem_dim_ = j.at("sem_dim").get<std::size_t>();
    for (const auto& [text, e] : j.at("texts").items()) {
      p.texts_[text] = {read_vector(e.at("vl"), p.vl_dim_, text),
                        read_vector(e.at("sem"), p.sem_dim_, text)};
    }
    const auto crops = j.value("crops", nlohmann::json::object());
    const auto images = j.value("images", nlohmann::json::object());
    for (const auto& [key, e] : crops.items()) {
      p.crops_[std::stoi(key)] = read_vector(e, p.vl_dim_, "crop " + key);
    }
    for (const auto& [key, e] : images.items()) {
      p.images_[std::stoull(key)] = read_vector(e, p.vl_dim_, "image " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  return p;
}

TextEmbedding TableProvider::embed_text(std::string_view text) const {
  auto it = texts_.find(text);
  if (it == texts_.end()) {
    throw Error(ErrorCode::InvalidInput, "no embedding for text '" + std::string(text) + "'");
  }
  return it->second;
}

Embedding TableProvider::embed_image_crop(const CropView& crop) const {
  auto it = crops_.find(crop.instance_id);
  if (it == crops_.end()) {
    throw Error(ErrorCode::InvalidInput,
                "no crop embedding for instance " + std::to_string(crop.instance_id));
  }
  return it->second;
}

Embedding TableProvider::embed_image(const ImageView& image) const {
  auto it = images_.find(image.key);
  if (it == images_.end()) {
    throw Error(ErrorCode::InvalidInput,
                "no image embedding for frame key " + std::to_string(image.key));
  }
  return it->second;
}

}  // namespace lopmap::embed
