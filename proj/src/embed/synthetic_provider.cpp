#include "lopmap/embed/synthetic_provider.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::embed {
namespace {

constexpr std::uint64_t kVlSalt = 0x564C5F5350414345ull;
constexpr std::uint64_t kSemSalt = 0x53454D5F53504143ull;
constexpr std::uint64_t kCropSalt = 0x43524F504E4F4953ull;
constexpr std::uint64_t kImageSalt = 0x494D4147454E4F49ull;

void add_scaled(Embedding& acc, const Embedding& v, float s) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * v[i];
}

Embedding random_unit(std::uint64_t key, std::size_t dim) {
  Rng rng(key);
  Embedding v(dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  normalize(v);
  return v;
}

}  // namespace

void normalize(Embedding& v) {
  double n2 = 0.0;
  for (float x : v) n2 += static_cast<double>(x) * x;
  if (n2 <= 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x = static_cast<float>(x * inv);
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimMismatch, "cosine of unequal dims");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::string compose_prompt(std::string_view object_label, std::string_view region_label) {
  if (object_label.empty() || region_label.empty()) {
    throw Error(ErrorCode::InvalidLabel, "prompt labels must be non-empty");
  }
  std::string out(object_label);
  out += " in the ";
  out += region_label;
  return out;
}

SyntheticProvider::SyntheticProvider(std::uint64_t seed, std::size_t vl_dim, std::size_t sem_dim)
    : seed_(seed), vl_dim_(vl_dim), sem_dim_(sem_dim) {
  if (vl_dim < 8 || sem_dim < 8) {
    throw Error(ErrorCode::InvalidConfig, "synthetic provider needs dims >= 8");
  }
}

Embedding SyntheticProvider::token_vector(std::string_view token, std::uint64_t salt,
                                          std::size_t dim) const {
  return random_unit(hash_combine(hash_combine(seed_, salt), fnv1a64(token)), dim);
}

Embedding SyntheticProvider::text_space(std::string_view text, std::uint64_t salt,
                                        std::size_t dim) const {
  Embedding acc(dim, 0.0f);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    add_scaled(acc, token_vector(token, salt, dim), 1.0f);
    token.clear();
    any = true;
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  if (!any) add_scaled(acc, token_vector("<empty>", salt, dim), 1.0f);
  normalize(acc);
  return acc;
}

TextEmbedding SyntheticProvider::embed_text(std::string_view text) const {
  return {text_space(text, kVlSalt, vl_dim_), text_space(text, kSemSalt, sem_dim_)};
}

Embedding SyntheticProvider::embed_instance(std::string_view label,
                                            std::int32_t instance_id) const {
  Embedding v = text_space(label, kVlSalt, vl_dim_);
  const Embedding noise = random_unit(
      hash_combine(hash_combine(seed_, kCropSalt), static_cast<std::uint64_t>(instance_id)),
      vl_dim_);
  add_scaled(v, noise, 0.1f);
  normalize(v);
  return v;
}

Embedding SyntheticProvider::embed_image_crop(const CropView& crop) const {
  return embed_instance(crop.label, crop.instance_id);
}

Embedding SyntheticProvider::embed_image(const ImageView& image) const {
  Embedding acc(vl_dim_, 0.0f);
  for (const auto& [region, frac] : image.region_mix) {
    add_scaled(acc, text_space(region, kVlSalt, vl_dim_), frac);
  }
  if (image.frame != nullptr) {
    const scene::Frame& f = *image.frame;
    std::map<std::int32_t, std::size_t> area;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < f.depth.size(); ++i) {
      if (f.depth[i] <= 0.0f) continue;
      ++valid;
      if (f.instance_ids[i] != scene::kBackground) ++area[f.instance_ids[i]];
    }
    for (const auto& [id, count] : area) {
      const float frac = 0.5f * static_cast<float>(count) / static_cast<float>(valid);
      add_scaled(acc, embed_instance(f.instance_labels.at(id), id), frac);
    }
  }
  add_scaled(acc, random_unit(hash_combine(hash_combine(seed_, kImageSalt), image.key), vl_dim_),
             0.05f);
  normalize(acc);
  return acc;
}

}  // namespace lopmap::embed
