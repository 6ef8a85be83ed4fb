#include "lopmap/embed/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <thread>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"
#include "lopmap/scene/camera.hpp"

namespace lopmap::embed {
namespace {

struct Observation {
  VoxelKey voxel;
  std::uint64_t frame_key = 0;
  std::uint32_t pixel = 0;
  Vec3 position;
  double dist = 0.0;
  double conf = 1.0;
  const Embedding* ev = nullptr;
  const Embedding* es = nullptr;
};

// Observations of one frame together with the embeddings they point into.
struct FrameWork {
  std::deque<Embedding> store;
  std::vector<Observation> obs;
};

void check_dim(const Embedding& e, std::size_t dim, const char* what) {
  if (e.size() != dim) {
    throw Error(ErrorCode::DimMismatch, std::string(what) + " embedding has dimension " +
                                            std::to_string(e.size()) + ", expected " +
                                            std::to_string(dim));
  }
}

// Draws up to `n` entries of `from` without replacement; keeps pixel order.
std::vector<std::uint32_t> sample(std::vector<std::uint32_t> from, std::size_t n, Rng& rng) {
  if (from.size() <= n) return from;
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(from[i], from[i + rng.below(from.size() - i)]);
  }
  from.resize(n);
  std::sort(from.begin(), from.end());
  return from;
}

const std::string& clamped_region(const scene::RegionPartition& part, const Vec3& p) {
  const auto& b = part.bounds();
  return part.region_of(std::clamp(p.x(), b.xmin, b.xmax), std::clamp(p.y(), b.ymin, b.ymax));
}

FrameWork process_frame(const scene::Frame& frame, const scene::RegionPartition& part,
                        const EmbeddingProvider& provider, const FusionConfig& cfg) {
  frame.validate();
  FrameWork work;
  const std::uint64_t key = scene::frame_key(frame);
  Rng rng(hash_combine(cfg.seed, key));

  std::vector<std::uint32_t> object_px, background_px;
  std::map<std::string, float> region_count;
  std::size_t valid = 0;
  for (int v = 0; v < frame.height(); ++v) {
    for (int u = 0; u < frame.width(); ++u) {
      const auto i = frame.index(u, v);
      if (!(frame.depth[i] > 0.0f)) continue;
      ++valid;
      if (frame.instance_ids[i] == scene::kBackground) {
        background_px.push_back(static_cast<std::uint32_t>(i));
        const Vec3 p = scene::back_project(u, v, frame.depth[i], frame.intrinsics, frame.pose);
        region_count[clamped_region(part, p)] += 1.0f;
      } else {
        object_px.push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
  if (valid == 0) return work;

  if (!cfg.encode_background) background_px.clear();
  const std::size_t budget = cfg.max_pixels_per_frame;
  std::size_t n_obj = std::min(object_px.size(), budget / 2);
  std::size_t n_bg = std::min(background_px.size(), budget - n_obj);
  n_obj = std::min(object_px.size(), budget - n_bg);
  const auto chosen_obj = sample(std::move(object_px), n_obj, rng);
  const auto chosen_bg = sample(std::move(background_px), n_bg, rng);

  const Vec3 eye = frame.pose.translation;
  auto observe = [&](std::uint32_t i, double conf, const Embedding* ev, const Embedding* es) {
    const int u = static_cast<int>(i % static_cast<std::uint32_t>(frame.width()));
    const int v = static_cast<int>(i / static_cast<std::uint32_t>(frame.width()));
    Observation o;
    o.position = scene::back_project(u, v, frame.depth[i], frame.intrinsics, frame.pose);
    o.voxel = voxel_key(o.position.cast<float>(), cfg.voxel_size);
    o.frame_key = key;
    o.pixel = i;
    o.dist = (o.position - eye).norm();
    o.conf = conf;
    o.ev = ev;
    o.es = es;
    work.obs.push_back(o);
  };

  std::map<std::string, const Embedding*, std::less<>> sem_cache;
  auto sem_of = [&](const std::string& text) {
    auto it = sem_cache.find(text);
    if (it != sem_cache.end()) return it->second;
    auto e = provider.embed_text(text).sem;
    check_dim(e, provider.sem_dim(), "semantic");
    const Embedding* p = &work.store.emplace_back(std::move(e));
    sem_cache.emplace(text, p);
    return p;
  };

  std::map<std::int32_t, const Embedding*> crops;
  for (std::uint32_t i : chosen_obj) {
    const std::int32_t id = frame.instance_ids[i];
    const std::string& label = frame.instance_labels.at(id);
    auto it = crops.find(id);
    if (it == crops.end()) {
      CropView crop{&frame, id, label, scene::instance_box(frame, id)};
      auto e = provider.embed_image_crop(crop);
      check_dim(e, provider.vl_dim(), "crop");
      it = crops.emplace(id, &work.store.emplace_back(std::move(e))).first;
    }
    std::string text = label;
    if (cfg.context_prompt) {
      const int u = static_cast<int>(i % static_cast<std::uint32_t>(frame.width()));
      const int v = static_cast<int>(i / static_cast<std::uint32_t>(frame.width()));
      const Vec3 p = scene::back_project(u, v, frame.depth[i], frame.intrinsics, frame.pose);
      text = compose_prompt(label, clamped_region(part, p));
    }
    observe(i, frame.instance_confidences.at(id), it->second, sem_of(text));
  }

  if (!chosen_bg.empty()) {
    ImageView image{&frame, key, {}};
    float total = 0.0f;
    for (const auto& [_, c] : region_count) total += c;
    for (const auto& [label, c] : region_count) image.region_mix.emplace_back(label, c / total);
    auto e = provider.embed_image(image);
    check_dim(e, provider.vl_dim(), "image");
    const Embedding* whole = &work.store.emplace_back(std::move(e));
    for (std::uint32_t i : chosen_bg) {
      const int u = static_cast<int>(i % static_cast<std::uint32_t>(frame.width()));
      const int v = static_cast<int>(i / static_cast<std::uint32_t>(frame.width()));
      const Vec3 p = scene::back_project(u, v, frame.depth[i], frame.intrinsics, frame.pose);
      observe(i, 1.0, whole, sem_of(clamped_region(part, p)));
    }
  }
  return work;
}

Embedding finish(const std::vector<double>& sum) {
  double n2 = 0.0;
  for (double x : sum) n2 += x * x;
  const double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
  Embedding out(sum.size());
  for (std::size_t k = 0; k < sum.size(); ++k) out[k] = static_cast<float>(sum[k] * inv);
  return out;
}

// Moves a rounded mean back into its voxel if f32 rounding pushed it across a face.
void keep_in_cell(Eigen::Vector3f& p, const VoxelKey& key, float voxel_size) {
  const std::int64_t want[3] = {key.x, key.y, key.z};
  for (int a = 0; a < 3; ++a) {
    for (int guard = 0; guard < 64; ++guard) {
      const auto got = static_cast<std::int64_t>(std::floor(p[a] / voxel_size));
      if (got == want[a]) break;
      p[a] = std::nextafter(p[a], got > want[a] ? -INFINITY : INFINITY);
    }
  }
}

}  // namespace

FeaturePointCloud build_feature_cloud(std::span<const scene::Frame> frames,
                                      const scene::RegionPartition& partition,
                                      const EmbeddingProvider& provider,
                                      const FusionConfig& config) {
  if (frames.empty()) throw Error(ErrorCode::NoData, "no frames to fuse");
  if (!(config.voxel_size > 0.0f)) throw Error(ErrorCode::InvalidConfig, "voxel_size must be > 0");

  std::vector<FrameWork> works(frames.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, frames.size()));
  if (threads == 1) {
    for (std::size_t f = 0; f < frames.size(); ++f) {
      works[f] = process_frame(frames[f], partition, provider, config);
    }
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t f = t; f < frames.size(); f += threads) {
            works[f] = process_frame(frames[f], partition, provider, config);
          }
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<const Observation*> all;
  for (const auto& w : works) {
    for (const auto& o : w.obs) all.push_back(&o);
  }
  // Content order, so the reduction does not depend on frame order.
  std::sort(all.begin(), all.end(), [](const Observation* a, const Observation* b) {
    if (a->voxel != b->voxel) return a->voxel < b->voxel;
    if (a->frame_key != b->frame_key) return a->frame_key < b->frame_key;
    return a->pixel < b->pixel;
  });

  FeaturePointCloud cloud;
  cloud.vl_dim = provider.vl_dim();
  cloud.sem_dim = provider.sem_dim();
  cloud.voxel_size = config.voxel_size;
  std::vector<double> sv(cloud.vl_dim), ss(cloud.sem_dim);
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    Vec3 pos = Vec3::Zero();
    double dist = 0.0, conf = 0.0;
    std::fill(sv.begin(), sv.end(), 0.0);
    std::fill(ss.begin(), ss.end(), 0.0);
    for (; j < all.size() && all[j]->voxel == all[i]->voxel; ++j) {
      const Observation& o = *all[j];
      pos += o.position;
      dist += o.dist;
      conf += o.conf;
      for (std::size_t k = 0; k < sv.size(); ++k) sv[k] += (*o.ev)[k];
      for (std::size_t k = 0; k < ss.size(); ++k) ss[k] += (*o.es)[k];
    }
    const double n = static_cast<double>(j - i);
    FeaturePoint p;
    p.position = (pos / n).cast<float>();
    keep_in_cell(p.position, all[i]->voxel, config.voxel_size);
    p.weight = static_cast<float>(n);
    p.dist = static_cast<float>(dist / n);
    p.conf = static_cast<float>(std::min(1.0, conf / n));
    p.ev = finish(sv);
    p.es = finish(ss);
    cloud.points.push_back(std::move(p));
    i = j;
  }
  return cloud;
}

}  // namespace lopmap::embed
