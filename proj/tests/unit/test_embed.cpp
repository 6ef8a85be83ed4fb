#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "lopmap/embed/feature_cloud.hpp"
#include "lopmap/embed/fusion.hpp"
#include "lopmap/embed/synthetic_provider.hpp"
#include "lopmap/embed/table_provider.hpp"
#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"
#include "lopmap/scene/sequence_io.hpp"
#include "lopmap/scene/synthetic.hpp"

using namespace lopmap;
using namespace lopmap::embed;

namespace {

double norm(const Embedding& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lopmap_test_" + name);
}

// Frame with a single valid pixel at the principal point.
scene::Frame one_pixel_frame(std::int32_t id, float depth, const Vec3& eye) {
  scene::Frame f;
  f.intrinsics = {10.0, 10.0, 1.0, 1.0, 3, 3};
  f.pose.translation = eye;
  f.depth.assign(9, 0.0f);
  f.instance_ids.assign(9, scene::kBackground);
  f.depth[4] = depth;
  f.instance_ids[4] = id;
  if (id != scene::kBackground) {
    f.instance_labels[id] = "cup";
    f.instance_confidences[id] = 0.7f;
  }
  return f;
}

// Provider returning preset vectors, used to check the averaging arithmetic.
class FixedProvider final : public EmbeddingProvider {
 public:
  std::size_t vl_dim() const override { return 2; }
  std::size_t sem_dim() const override { return 2; }
  TextEmbedding embed_text(std::string_view) const override { return {{1, 0}, {0, 1}}; }
  Embedding embed_image_crop(const CropView& c) const override {
    return c.frame->pose.translation.x() < 0.15 ? Embedding{1, 0} : Embedding{0, 1};
  }
  Embedding embed_image(const ImageView&) const override { return {1, 0}; }
};

class WrongDimProvider final : public EmbeddingProvider {
 public:
  std::size_t vl_dim() const override { return 4; }
  std::size_t sem_dim() const override { return 4; }
  TextEmbedding embed_text(std::string_view) const override { return {{1, 0, 0, 0}, {1, 0, 0}}; }
  Embedding embed_image_crop(const CropView&) const override { return {1, 0, 0, 0}; }
  Embedding embed_image(const ImageView&) const override { return {1, 0, 0, 0}; }
};

struct SmallScene {
  scene::SyntheticScene scene;
  std::vector<scene::Frame> frames;
};

const SmallScene& small_scene() {
  static const SmallScene s = [] {
    scene::SceneConfig cfg;
    cfg.rooms = 4;
    cfg.objects = 8;
    SmallScene out;
    out.scene = scene::generate_scene(cfg);
    out.frames = scene::render_trajectory(out.scene);
    return out;
  }();
  return s;
}

}  // namespace

TEST(ComposePrompt, Template) {
  EXPECT_EQ(compose_prompt("cup", "kitchen"), "cup in the kitchen");
  EXPECT_EQ(compose_prompt("sofa", "TV room"), "sofa in the TV room");
  EXPECT_EQ(compose_prompt("bed", "bedroom"), "bed in the bedroom");
  try {
    compose_prompt("", "kitchen");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidLabel);
  }
  EXPECT_THROW(compose_prompt("cup", ""), Error);
}

TEST(SyntheticProvider, Deterministic) {
  SyntheticProvider a(3, 64, 64), b(3, 64, 64);
  EXPECT_EQ(a.embed_text("kitchen").vl, b.embed_text("kitchen").vl);
  EXPECT_EQ(a.embed_text("kitchen").sem, a.embed_text("kitchen").sem);
  SyntheticProvider c(4, 64, 64);
  EXPECT_NE(a.embed_text("kitchen").vl, c.embed_text("kitchen").vl);
}

TEST(SyntheticProvider, UnitNormRandomStrings) {
  SyntheticProvider p(1, 64, 48);
  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    const auto len = rng.below(20);
    for (std::uint64_t k = 0; k < len; ++k) s.push_back(static_cast<char>(' ' + rng.below(90)));
    const auto e = p.embed_text(s);
    EXPECT_NEAR(norm(e.vl), 1.0, 1e-5) << s;
    EXPECT_NEAR(norm(e.sem), 1.0, 1e-5) << s;
    EXPECT_EQ(e.sem.size(), 48u);
  }
}

TEST(SyntheticProvider, SharedTokensCorrelate) {
  SyntheticProvider p(7, 64, 64);
  const auto regions = scene::SceneConfig::default_region_vocabulary();
  const auto objects = scene::SceneConfig::default_object_vocabulary();
  for (const auto& o : objects) {
    for (std::size_t i = 0; i < regions.size(); ++i) {
      for (std::size_t j = i + 1; j < regions.size(); ++j) {
        const auto a = p.embed_text(compose_prompt(o, regions[i]));
        const auto b = p.embed_text(compose_prompt(o, regions[j]));
        for (auto c : {cosine(a.vl, b.vl), cosine(a.sem, b.sem)}) {
          EXPECT_GT(c, 0.0);
          EXPECT_LT(c, 1.0);
        }
      }
    }
  }
  const double c = cosine(p.embed_text("cup in the kitchen").sem,
                          p.embed_text("cup in the bedroom").sem);
  EXPECT_GT(c, 0.0);
  EXPECT_LT(c, 1.0);
}

TEST(SyntheticProvider, UnrelatedLabelsNearlyOrthogonal) {
  SyntheticProvider p(7, 64, 64);
  std::vector<std::string> labels;
  // Single-token labels share nothing.
  for (const auto& r : scene::SceneConfig::default_region_vocabulary()) {
    if (r.find(' ') == std::string::npos) labels.push_back(r);
  }
  for (const auto& o : scene::SceneConfig::default_object_vocabulary()) labels.push_back(o);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());  // "toilet" is both
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      const auto a = p.embed_text(labels[i]), b = p.embed_text(labels[j]);
      EXPECT_LT(std::abs(cosine(a.vl, b.vl)), 0.5) << labels[i] << " / " << labels[j];
      EXPECT_LT(std::abs(cosine(a.sem, b.sem)), 0.5) << labels[i] << " / " << labels[j];
    }
  }
}

TEST(SyntheticProvider, CropIsClassTextPlusSmallNoise) {
  SyntheticProvider p(7, 64, 64);
  const auto text = p.embed_text("chair").vl;
  const auto crop = p.embed_instance("chair", 12);
  EXPECT_NEAR(norm(crop), 1.0, 1e-5);
  // Perturbation of norm 0.1 keeps the angle below asin(0.1).
  EXPECT_GT(cosine(text, crop), std::cos(std::asin(0.1)) - 1e-6);
  EXPECT_NE(crop, p.embed_instance("chair", 13));
}

TEST(SyntheticProvider, RejectsTinyDims) {
  EXPECT_THROW(SyntheticProvider(1, 4, 64), Error);
}

TEST(TableProvider, LoadsAndLooksUp) {
  const auto path = temp_file("table.json");
  auto j = nlohmann::json::parse(R"({
    "vl_dim": 2, "sem_dim": 3,
    "texts": {"kitchen": {"vl": [3, 4], "sem": [0, 0, 2]}},
    "crops": {"5": [0, 1]},
    "images": {"42": [1, 0]}})");
  std::ofstream(path) << j.dump();
  const auto p = TableProvider::load(path);
  EXPECT_EQ(p.vl_dim(), 2u);
  const auto e = p.embed_text("kitchen");
  EXPECT_NEAR(e.vl[0], 0.6f, 1e-6);
  EXPECT_NEAR(e.sem[2], 1.0f, 1e-6);
  CropView crop;
  crop.instance_id = 5;
  EXPECT_EQ(p.embed_image_crop(crop), (Embedding{0, 1}));
  ImageView img;
  img.key = 42;
  EXPECT_EQ(p.embed_image(img), (Embedding{1, 0}));
  EXPECT_THROW(p.embed_text("garage"), Error);

  j["texts"]["kitchen"]["vl"] = nlohmann::json::array({1, 2, 3});
  std::ofstream(path) << j.dump();
  EXPECT_THROW(TableProvider::load(path), Error);
  std::filesystem::remove(path);
}

TEST(Lopf, RoundTripAndLayout) {
  FeaturePointCloud c;
  c.vl_dim = 2;
  c.sem_dim = 3;
  c.voxel_size = 0.1f;
  FeaturePoint p;
  p.position = {1.0f, -2.0f, 0.5f};
  p.weight = 3.0f;
  p.dist = 1.5f;
  p.conf = 0.8f;
  p.ev = {0.6f, 0.8f};
  p.es = {0.0f, 1.0f, 0.0f};
  c.points = {p, p};
  c.points[1].position.x() = 2.0f;
  const auto path = temp_file("cloud.lopf");
  write_lopf(path, c);
  EXPECT_EQ(std::filesystem::file_size(path), 24u + 2u * (6 + 2 + 3) * 4u);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "LOPF");
  EXPECT_EQ(read_lopf(path), c);
  EXPECT_TRUE(check_lopf(path).empty());
  std::filesystem::remove(path);
}

TEST(Lopf, MalformedFiles) {
  FeaturePointCloud c;
  c.vl_dim = 2;
  c.sem_dim = 2;
  FeaturePoint p;
  p.ev = {1, 0};
  p.es = {0, 1};
  c.points = {p};
  const auto path = temp_file("bad.lopf");
  write_lopf(path, c);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  try {
    read_lopf(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
  }
  EXPECT_FALSE(check_lopf(path).empty());

  std::ofstream(path, std::ios::binary) << "PLYF0000000000000000000000000";
  EXPECT_THROW(read_lopf(path), Error);
  std::filesystem::remove(path);
}

TEST(Lopf, CheckerFindsContentProblems) {
  FeaturePointCloud c;
  c.vl_dim = 2;
  c.sem_dim = 2;
  c.voxel_size = 0.5f;
  FeaturePoint good;
  good.ev = {1, 0};
  good.es = {0, 1};
  auto dup = good;
  dup.position = {0.1f, 0.1f, 0.1f};  // same cell as the origin
  auto unnormed = good;
  unnormed.position = {3, 0, 0};
  unnormed.ev = {1, 1};
  auto bad_conf = good;
  bad_conf.position = {5, 0, 0};
  bad_conf.conf = 1.5f;
  bad_conf.weight = 0.5f;
  auto nan = good;
  nan.position = {7, 0, 0};
  nan.dist = std::nanf("");
  c.points = {good, dup, unnormed, bad_conf, nan};
  const auto path = temp_file("content.lopf");
  write_lopf(path, c);
  const auto problems = check_lopf(path);
  auto has = [&](const std::string& needle) {
    return std::any_of(problems.begin(), problems.end(),
                       [&](const std::string& s) { return s.find(needle) != std::string::npos; });
  };
  EXPECT_TRUE(has("point 1: shares a voxel"));
  EXPECT_TRUE(has("point 2: e_v is not unit norm"));
  EXPECT_TRUE(has("point 3: conf outside"));
  EXPECT_TRUE(has("point 3: weight < 1"));
  EXPECT_TRUE(has("point 4: non-finite"));
  EXPECT_EQ(problems.size(), 5u);
  std::filesystem::remove(path);
}

TEST(Fusion, SinglePixelIsItsOwnEmbedding) {
  SyntheticProvider p(7, 16, 16);
  const auto part = scene::RegionPartition::single("kitchen", {-5, 5, -5, 5});
  const std::vector<scene::Frame> frames = {one_pixel_frame(3, 2.0f, Vec3::Zero())};
  const auto cloud = build_feature_cloud(frames, part, p, FusionConfig{});
  ASSERT_EQ(cloud.points.size(), 1u);
  const auto& pt = cloud.points[0];
  EXPECT_EQ(pt.weight, 1.0f);
  EXPECT_NEAR(pt.dist, 2.0f, 1e-6);
  EXPECT_FLOAT_EQ(pt.conf, 0.7f);
  const auto ev = p.embed_instance("cup", 3);
  const auto es = p.embed_text("cup in the kitchen").sem;
  for (std::size_t k = 0; k < ev.size(); ++k) EXPECT_NEAR(pt.ev[k], ev[k], 1e-6);
  for (std::size_t k = 0; k < es.size(); ++k) EXPECT_NEAR(pt.es[k], es[k], 1e-6);
}

TEST(Fusion, SameVoxelTwiceIsTheMean) {
  FixedProvider p;
  const auto part = scene::RegionPartition::single("kitchen", {-5, 5, -5, 5});
  // Two cameras looking along +z at points inside one voxel.
  auto a = one_pixel_frame(1, 2.0f, Vec3(0.1, 0, 0));
  auto b = one_pixel_frame(1, 2.0f, Vec3(0.2, 0, 0));
  b.instance_confidences[1] = 0.9f;
  const std::vector<scene::Frame> frames = {a, b};
  FusionConfig cfg;
  cfg.voxel_size = 0.5f;
  const auto cloud = build_feature_cloud(frames, part, p, cfg);
  ASSERT_EQ(cloud.points.size(), 1u);
  const auto& pt = cloud.points[0];
  EXPECT_EQ(pt.weight, 2.0f);
  EXPECT_NEAR(pt.ev[0], std::sqrt(0.5), 1e-6);  // (a+b)/2 renormalized
  EXPECT_NEAR(pt.ev[1], std::sqrt(0.5), 1e-6);
  EXPECT_NEAR(pt.conf, 0.8f, 1e-6);
  EXPECT_NEAR(pt.position.x(), 0.15f, 1e-6);
}

TEST(Fusion, Errors) {
  SyntheticProvider p(7, 16, 16);
  const auto part = scene::RegionPartition::single("kitchen", {-5, 5, -5, 5});
  try {
    build_feature_cloud({}, part, p, FusionConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoData);
  }
  const std::vector<scene::Frame> frames = {one_pixel_frame(3, 2.0f, Vec3::Zero())};
  try {
    build_feature_cloud(frames, part, WrongDimProvider{}, FusionConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
  }
}

TEST(Fusion, BackgroundSemanticsFollowThePartition) {
  const auto& s = small_scene();
  SyntheticProvider p(7, 32, 32);
  const auto cloud = build_feature_cloud(s.frames, s.scene.partition, p, FusionConfig{});
  ASSERT_GT(cloud.points.size(), 1000u);
  std::map<std::string, Embedding> region_sem;
  for (const auto& r : s.scene.partition.regions()) region_sem[r] = p.embed_text(r).sem;
  const auto& b = s.scene.partition.bounds();
  std::size_t background = 0, agree = 0;
  for (const auto& pt : cloud.points) {
    EXPECT_NEAR(norm(pt.ev), 1.0, 1e-5);
    EXPECT_NEAR(norm(pt.es), 1.0, 1e-5);
    EXPECT_GE(pt.weight, 1.0f);
    if (pt.conf != 1.0f) continue;
    // Background points (conf exactly 1) that are not next to a wall plane.
    const double x = std::clamp<double>(pt.position.x(), b.xmin, b.xmax);
    const double y = std::clamp<double>(pt.position.y(), b.ymin, b.ymax);
    const auto& label = s.scene.partition.region_of(x, y);
    bool is_region_text = false;
    for (const auto& [r, e] : region_sem) {
      if (cosine(pt.es, e) > 1.0 - 1e-5) is_region_text = true;
    }
    if (!is_region_text) continue;  // an object with confidence exactly 1
    ++background;
    if (cosine(pt.es, region_sem[label]) > 1.0 - 1e-5) ++agree;
  }
  ASSERT_GT(background, 500u);
  // Voxels straddling an interior wall mix the two sides; everything else agrees.
  EXPECT_GE(static_cast<double>(agree) / background, 0.97);
}

TEST(Fusion, FrameOrderDoesNotMatter) {
  const auto& s = small_scene();
  SyntheticProvider p(7, 32, 32);
  auto frames = s.frames;
  const auto a = build_feature_cloud(frames, s.scene.partition, p, FusionConfig{});
  std::reverse(frames.begin(), frames.end());
  std::swap(frames[0], frames[frames.size() / 2]);
  FusionConfig threaded;
  threaded.threads = 3;
  const auto b = build_feature_cloud(frames, s.scene.partition, p, threaded);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_LE((a.points[i].position - b.points[i].position).norm(), 1e-6);
    for (std::size_t k = 0; k < a.vl_dim; ++k) {
      ASSERT_NEAR(a.points[i].ev[k], b.points[i].ev[k], 1e-6);
    }
    for (std::size_t k = 0; k < a.sem_dim; ++k) {
      ASSERT_NEAR(a.points[i].es[k], b.points[i].es[k], 1e-6);
    }
  }
}

TEST(Fusion, NoBackgroundKeepsOnlyObjects) {
  const auto& s = small_scene();
  SyntheticProvider p(7, 32, 32);
  FusionConfig cfg;
  cfg.encode_background = false;
  const auto cloud = build_feature_cloud(s.frames, s.scene.partition, p, cfg);
  ASSERT_FALSE(cloud.points.empty());
  for (const auto& pt : cloud.points) {
    // Every point sits on (or within a voxel of) an object box.
    double best = 1e9;
    for (const auto& o : s.scene.objects) best = std::min(best, o.box.distance(pt.position.cast<double>()));
    EXPECT_LT(best, 0.05 * std::sqrt(3.0) + 1e-6);
  }
}

TEST(Fusion, ObjectConfidenceIsDetectionConfidence) {
  const auto& s = small_scene();
  SyntheticProvider p(7, 32, 32);
  FusionConfig cfg;
  cfg.encode_background = false;
  const auto cloud = build_feature_cloud(s.frames, s.scene.partition, p, cfg);
  std::size_t checked = 0;
  for (const auto& pt : cloud.points) {
    for (const auto& o : s.scene.objects) {
      if (o.box.contains(pt.position.cast<double>(), 1e-4) && pt.weight == 1.0f) {
        bool alone = true;
        for (const auto& q : s.scene.objects) {
          if (&q != &o && q.box.distance(pt.position.cast<double>()) < 0.1) alone = false;
        }
        if (!alone) continue;
        EXPECT_FLOAT_EQ(pt.conf, o.confidence);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 50u);
}

TEST(Fusion, WrittenCloudPassesTheSchemaCheck) {
  const auto& s = small_scene();
  SyntheticProvider p(7, 32, 32);
  const auto cloud = build_feature_cloud(s.frames, s.scene.partition, p, FusionConfig{});
  const auto path = temp_file("fused.lopf");
  write_lopf(path, cloud);
  const auto problems = check_lopf(path);
  EXPECT_TRUE(problems.empty()) << (problems.empty() ? "" : problems.front());
  EXPECT_EQ(read_lopf(path), cloud);
  std::filesystem::remove(path);
}
