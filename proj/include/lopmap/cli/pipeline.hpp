#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lopmap/cli/run_config.hpp"
#include "lopmap/embed/feature_cloud.hpp"
#include "lopmap/embed/provider.hpp"
#include "lopmap/field/train.hpp"
#include "lopmap/planner/planner.hpp"
#include "lopmap/query/query.hpp"
#include "lopmap/scene/sequence_io.hpp"
#include "lopmap/topomap/topomap.hpp"

// Building blocks shared by the lopmap tool, the Python module and the
// acceptance suite. Each *_file helper reads its inputs, writes its outputs
// and the resolved config into `out`, and returns a JSON summary.
namespace lopmap::cli {

using Json = nlohmann::ordered_json;

std::unique_ptr<embed::EmbeddingProvider> make_provider(const RunConfig& cfg);

/// Frames kept for training and held out for evaluation.
struct FrameSplit {
  std::vector<scene::Frame> train;
  std::vector<scene::Frame> held_out;
};
FrameSplit split_frames(const std::vector<scene::Frame>& frames, int holdout_every);

/// Bank over the partition's region labels.
query::LabelBank region_bank(const scene::SyntheticScene& scene, const embed::EmbeddingProvider& provider);

scene::SceneSequence generate(const RunConfig& cfg);
embed::FeaturePointCloud build_cloud(const RunConfig& cfg, const scene::SceneSequence& seq,
                                     const embed::EmbeddingProvider& provider, bool held_out = false);
field::TrainResult train_field(const RunConfig& cfg, const embed::FeaturePointCloud& cloud,
                               const field::EpochCallback& on_epoch = {});

struct RegionScore {
  std::string label;
  std::size_t support = 0;  // ground-truth count
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
struct RegionEval {
  std::size_t points = 0;
  double accuracy = 0.0;
  std::vector<RegionScore> per_region;
  Json to_json() const;
};

/// Scores `cfg.eval_points` evenly strided points of the held-out cloud
/// against the partition ground truth.
RegionEval eval_region(const RunConfig& cfg, const query::FeatureField& field,
                       const scene::SceneSequence& seq, const embed::EmbeddingProvider& provider);

topomap::TopoGraph build_map(const RunConfig& cfg, const query::FeatureField& field,
                             const scene::SceneSequence& seq, const embed::EmbeddingProvider& provider,
                             const std::string& checkpoint_hash);

std::unique_ptr<topomap::Describer> make_describer(const RunConfig& cfg);
topomap::MapperConfig mapper_config(const RunConfig& cfg);

// ---- file-level commands -------------------------------------------------

Json gen_scene_file(const RunConfig& cfg, const std::filesystem::path& out);
Json build_cloud_file(const RunConfig& cfg, const std::filesystem::path& scene_dir,
                      const std::filesystem::path& out);
Json train_file(const RunConfig& cfg, const std::filesystem::path& cloud,
                const std::filesystem::path& out, const field::EpochCallback& on_epoch = {});
Json infer_file(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                const std::filesystem::path& scene_dir, const Vec3& point);

struct LocalizeRequest {
  std::optional<std::string> text;
  std::optional<std::filesystem::path> image_embedding;  // JSON array of dv floats
  std::optional<std::filesystem::path> cloud;            // sample positions; grid otherwise
};
Json localize_file(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                   const std::filesystem::path& scene_dir, const LocalizeRequest& req,
                   const std::filesystem::path& out);

Json build_map_file(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& scene_dir, const std::filesystem::path& out);
Json update_map_file(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::filesystem::path& map, const std::filesystem::path& scene_dir,
                     const std::filesystem::path& out);
Json plan_file(const RunConfig& cfg, const std::filesystem::path& checkpoint,
               const std::filesystem::path& map, const std::filesystem::path& scene_dir,
               const Vec3& start, const std::string& goal, const std::filesystem::path& out);
Json eval_region_file(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                      const std::filesystem::path& scene_dir, const std::filesystem::path& out);
/// Schema problems of a LOPF file; empty list means valid.
Json check_cloud_file(const std::filesystem::path& cloud);

/// Human-readable table for an eval result.
std::string format_eval(const RegionEval& eval);

}  // namespace lopmap::cli
