#include "lopmap/cli/pipeline.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lopmap/embed/fusion.hpp"
#include "lopmap/embed/synthetic_provider.hpp"
#include "lopmap/embed/table_provider.hpp"
#include "lopmap/error.hpp"
#include "lopmap/field/checkpoint.hpp"

namespace lopmap::cli {
namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out.string() + ": " + ec.message());
}

void require(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(ErrorCode::IoError, std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  out << text;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

const std::string& true_region(const scene::RegionPartition& part, const Vec3& p) {
  const auto& b = part.bounds();
  return part.region_of(std::clamp(p.x(), b.xmin, b.xmax), std::clamp(p.y(), b.ymin, b.ymax));
}

}  // namespace

std::unique_ptr<embed::EmbeddingProvider> make_provider(const RunConfig& cfg) {
  if (cfg.provider == "table") {
    return std::make_unique<embed::TableProvider>(embed::TableProvider::load(cfg.provider_table));
  }
  return std::make_unique<embed::SyntheticProvider>(cfg.provider_seed, cfg.vl_dim, cfg.sem_dim);
}

FrameSplit split_frames(const std::vector<scene::Frame>& frames, int holdout_every) {
  FrameSplit s;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const bool held = holdout_every > 0 && i % static_cast<std::size_t>(holdout_every) ==
                                               static_cast<std::size_t>(holdout_every - 1);
    (held ? s.held_out : s.train).push_back(frames[i]);
  }
  return s;
}

query::LabelBank region_bank(const scene::SyntheticScene& scene, const embed::EmbeddingProvider& provider) {
  return query::LabelBank::from_provider(scene.partition.regions(), provider);
}

scene::SceneSequence generate(const RunConfig& cfg) {
  scene::SceneSequence seq;
  seq.scene = scene::generate_scene(cfg.scene);
  seq.frames = scene::render_trajectory(seq.scene);
  return seq;
}

embed::FeaturePointCloud build_cloud(const RunConfig& cfg, const scene::SceneSequence& seq,
                                     const embed::EmbeddingProvider& provider, bool held_out) {
  const auto split = split_frames(seq.frames, cfg.holdout_every);
  const auto& frames = held_out ? split.held_out : split.train;
  if (frames.empty()) throw Error(ErrorCode::NoData, held_out ? "no held-out frames" : "no training frames");
  return embed::build_feature_cloud(frames, seq.scene.partition, provider, cfg.fusion);
}

field::TrainResult train_field(const RunConfig& cfg, const embed::FeaturePointCloud& cloud,
                               const field::EpochCallback& on_epoch) {
  if (cloud.points.empty()) throw Error(ErrorCode::NoData, "empty feature cloud");
  hashgrid::HashGridConfig grid = cfg.grid;
  grid.bounds = field::cloud_bounds(cloud, cfg.grid_margin);
  return field::train(cloud, grid, cfg.train, cfg.loss, on_epoch);
}

Json RegionEval::to_json() const {
  Json j;
  j["points"] = points;
  j["accuracy"] = accuracy;
  j["regions"] = Json::array();
  for (const auto& r : per_region) {
    j["regions"].push_back({{"label", r.label}, {"support", r.support}, {"precision", r.precision},
                            {"recall", r.recall}, {"f1", r.f1}});
  }
  return j;
}

RegionEval eval_region(const RunConfig& cfg, const query::FeatureField& field, const scene::SceneSequence& seq,
                       const embed::EmbeddingProvider& provider) {
  const auto cloud = build_cloud(cfg, seq, provider, true);
  const auto bank = region_bank(seq.scene, provider);
  const std::size_t n = cloud.points.size();
  const std::size_t stride = std::max<std::size_t>(1, n / cfg.eval_points);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n && pts.size() < cfg.eval_points; i += stride) {
    pts.push_back(cloud.points[i].position.cast<double>());
  }
  const auto attrs = query::infer_attributes(field, pts, bank, cfg.vs_weight);

  const std::size_t k = bank.size();
  std::vector<std::size_t> tp(k, 0), predicted(k, 0), support(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& truth = true_region(seq.scene.partition, pts[i]);
    const std::size_t t = static_cast<std::size_t>(
        std::find(bank.labels.begin(), bank.labels.end(), truth) - bank.labels.begin());
    ++support[t];
    ++predicted[attrs[i].index];
    if (attrs[i].index == t) {
      ++tp[t];
      ++correct;
    }
  }
  RegionEval r;
  r.points = pts.size();
  r.accuracy = pts.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pts.size());
  for (std::size_t j = 0; j < k; ++j) {
    RegionScore s;
    s.label = bank.labels[j];
    s.support = support[j];
    s.precision = predicted[j] ? static_cast<double>(tp[j]) / static_cast<double>(predicted[j]) : 0.0;
    s.recall = support[j] ? static_cast<double>(tp[j]) / static_cast<double>(support[j]) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    r.per_region.push_back(s);
  }
  return r;
}

std::string format_eval(const RegionEval& e) {
  std::ostringstream o;
  char line[160];
  std::snprintf(line, sizeof line, "accuracy %.4f over %zu held-out points\n", e.accuracy, e.points);
  o << line;
  std::snprintf(line, sizeof line, "%-16s %8s %9s %7s %7s\n", "region", "support", "precision", "recall", "f1");
  o << line;
  for (const auto& r : e.per_region) {
    std::snprintf(line, sizeof line, "%-16s %8zu %9.4f %7.4f %7.4f\n", r.label.c_str(), r.support, r.precision,
                  r.recall, r.f1);
    o << line;
  }
  return o.str();
}

topomap::MapperConfig mapper_config(const RunConfig& cfg) {
  topomap::MapperConfig m = cfg.mapper;
  m.vs_weight = cfg.vs_weight;
  return m;
}

std::unique_ptr<topomap::Describer> make_describer(const RunConfig& cfg) {
  if (cfg.mapper.describer != "rule") {
    throw Error(ErrorCode::InvalidConfig, "the external describer needs a completion callback; "
                                          "use the library or Python API");
  }
  topomap::ImplausibleTable veto;
  if (!cfg.implausible_pairs.empty()) veto = topomap::load_implausible_pairs(cfg.implausible_pairs);
  return std::make_unique<topomap::RuleDescriber>(std::move(veto));
}

topomap::TopoGraph build_map(const RunConfig& cfg, const query::FeatureField& field,
                             const scene::SceneSequence& seq, const embed::EmbeddingProvider& provider,
                             const std::string& checkpoint_hash) {
  const auto split = split_frames(seq.frames, cfg.holdout_every);
  const auto bank = region_bank(seq.scene, provider);
  const auto describer = make_describer(cfg);
  auto g = topomap::build_map(field, split.train, seq.scene.bounds(), bank, *describer, mapper_config(cfg));
  g.provenance.checkpoint_hash = checkpoint_hash;
  return g;
}

// ---- file-level commands -------------------------------------------------

Json gen_scene_file(const RunConfig& cfg, const fs::path& out) {
  const auto seq = generate(cfg);
  ensure_dir(out);
  scene::write_sequence(out, seq.scene, seq.frames);
  cfg.save(out / "config.ini");
  return {{"scene", out.string()}, {"rooms", seq.scene.rooms.size()}, {"objects", seq.scene.objects.size()},
          {"frames", seq.frames.size()}, {"regions", seq.scene.partition.regions()}};
}

Json build_cloud_file(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out) {
  require(scene_dir, "scene directory");
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const auto cloud = build_cloud(cfg, seq, *provider);
  ensure_dir(out);
  embed::write_lopf(out / "cloud.lopf", cloud);
  cfg.save(out / "config.ini");
  return {{"cloud", (out / "cloud.lopf").string()}, {"points", cloud.points.size()},
          {"vl_dim", cloud.vl_dim}, {"sem_dim", cloud.sem_dim}};
}

Json train_file(const RunConfig& cfg, const fs::path& cloud_path, const fs::path& out,
                const field::EpochCallback& on_epoch) {
  require(cloud_path, "feature cloud");
  const auto cloud = embed::read_lopf(cloud_path);
  const auto r = train_field(cfg, cloud, on_epoch);
  ensure_dir(out);
  const fs::path ckpt = out / "checkpoint.lopc";
  field::save_checkpoint(ckpt, r.field, cfg.loss);
  cfg.save(out / "config.ini");
  Json j;
  j["checkpoint"] = ckpt.string();
  j["checkpoint_hash"] = hex64(field::checkpoint_hash(ckpt));
  j["epoch_loss"] = r.epoch_loss;
  j["tau"] = r.field.tau();
  write_text(out / "train.json", j.dump(2) + "\n");
  return j;
}

Json infer_file(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& scene_dir, const Vec3& point) {
  require(checkpoint, "checkpoint");
  require(scene_dir, "scene directory");
  const auto ck = field::load_checkpoint(checkpoint);
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const query::NeuralFeatureField field(ck.field);
  const auto bank = region_bank(seq.scene, *provider);
  const auto a = query::infer_attribute(field, point, bank, cfg.vs_weight);
  Json scores;
  for (std::size_t i = 0; i < bank.size(); ++i) scores[bank.labels[i]] = a.scores[i];
  return {{"point", vec_json(point)}, {"label", a.label}, {"scores", scores}};
}

Json localize_file(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& scene_dir,
                   const LocalizeRequest& req, const fs::path& out) {
  if (req.text.has_value() == req.image_embedding.has_value()) {
    throw Error(ErrorCode::InvalidInput, "give exactly one of a text query or an image embedding");
  }
  require(checkpoint, "checkpoint");
  require(scene_dir, "scene directory");
  const auto ck = field::load_checkpoint(checkpoint);
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const query::NeuralFeatureField field(ck.field);

  std::vector<Vec3> samples;
  if (req.cloud) {
    require(*req.cloud, "feature cloud");
    for (const auto& p : embed::read_lopf(*req.cloud).points) samples.push_back(p.position.cast<double>());
  } else {
    samples = query::grid_samples(ck.field.grid.config().bounds, cfg.sample_step);
  }

  query::Localization loc;
  Json j;
  if (req.text) {
    loc = query::localize_text(field, *req.text, *provider, samples, cfg.vs_weight, cfg.top_k);
    j["query"] = *req.text;
  } else {
    require(*req.image_embedding, "image embedding");
    std::ifstream in(*req.image_embedding);
    embed::Embedding e;
    try {
      e = nlohmann::json::parse(in).get<embed::Embedding>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::InvalidInput, std::string("image embedding must be a JSON array: ") + ex.what());
    }
    loc = query::localize_image(field, e, samples, 1.0, cfg.top_k);
    j["query"] = req.image_embedding->string();
  }
  const auto bank = region_bank(seq.scene, *provider);
  j["position"] = vec_json(loc.position);
  j["region"] = query::infer_attribute(field, loc.position, bank, cfg.vs_weight).label;
  j["best"] = vec_json(loc.heatmap.points[loc.heatmap.best]);
  j["best_score"] = loc.heatmap.scores[loc.heatmap.best];
  j["samples"] = samples.size();
  j["top_k"] = loc.top.size();

  ensure_dir(out);
  query::write_heatmap_csv(out / "heatmap.csv", loc.heatmap);
  query::write_topdown_csv(out / "topdown.csv", loc.heatmap, cfg.sample_step);
  write_text(out / "localize.json", j.dump(2) + "\n");
  cfg.save(out / "config.ini");
  return j;
}

Json build_map_file(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& scene_dir,
                    const fs::path& out) {
  require(checkpoint, "checkpoint");
  require(scene_dir, "scene directory");
  const auto ck = field::load_checkpoint(checkpoint);
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const query::NeuralFeatureField field(ck.field);
  const auto g = build_map(cfg, field, seq, *provider, hex64(field::checkpoint_hash(checkpoint)));
  ensure_dir(out);
  g.save(out / "topomap.json");
  cfg.save(out / "config.ini");
  return {{"topomap", (out / "topomap.json").string()},
          {"regions", g.count(topomap::NodeType::Region)},
          {"objects", g.count(topomap::NodeType::Object)},
          {"entrances", g.count(topomap::NodeType::Entrance)},
          {"edges", g.edges.size()}};
}

Json update_map_file(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& map,
                     const fs::path& scene_dir, const fs::path& out) {
  require(checkpoint, "checkpoint");
  require(map, "topomap");
  require(scene_dir, "scene directory");
  const auto ck = field::load_checkpoint(checkpoint);
  auto g = topomap::TopoGraph::load(map);
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const query::NeuralFeatureField field(ck.field);
  const auto bank = region_bank(seq.scene, *provider);
  const auto describer = make_describer(cfg);
  topomap::update(g, seq.frames, field, bank, *describer, mapper_config(cfg));
  ensure_dir(out);
  g.save(out / "topomap.json");
  cfg.save(out / "config.ini");
  return {{"topomap", (out / "topomap.json").string()}, {"frames", seq.frames.size()},
          {"vertices", g.vertices.size()}, {"edges", g.edges.size()}};
}

Json plan_file(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& map, const fs::path& scene_dir,
               const Vec3& start, const std::string& goal, const fs::path& out) {
  require(checkpoint, "checkpoint");
  require(map, "topomap");
  require(scene_dir, "scene directory");
  const auto ck = field::load_checkpoint(checkpoint);
  const auto g = topomap::TopoGraph::load(map);
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const query::NeuralFeatureField field(ck.field);
  const auto bank = region_bank(seq.scene, *provider);

  const auto s = planner::resolve_start(g, start, field, bank, cfg.vs_weight);
  const auto t = planner::resolve_goal(g, goal, *provider, cfg.vs_weight);
  auto path = planner::astar(g, s, t);
  path.waypoints = planner::emit_waypoints(g, path, field, bank, cfg.planner_step, cfg.vs_weight);
  ensure_dir(out);
  write_text(out / "path.json", path.to_json().dump(2) + "\n");
  cfg.save(out / "config.ini");
  Json j = path.to_json();
  j.erase("waypoints");
  j["start_region"] = g.find(s)->cls;
  j["goal"] = g.find(t)->cls;
  j["waypoints"] = path.waypoints.size();
  return j;
}

Json eval_region_file(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& scene_dir,
                      const fs::path& out) {
  require(checkpoint, "checkpoint");
  require(scene_dir, "scene directory");
  const auto ck = field::load_checkpoint(checkpoint);
  const auto seq = scene::read_sequence(scene_dir);
  const auto provider = make_provider(cfg);
  const query::NeuralFeatureField field(ck.field);
  const auto r = eval_region(cfg, field, seq, *provider);
  ensure_dir(out);
  write_text(out / "eval.json", r.to_json().dump(2) + "\n");
  cfg.save(out / "config.ini");
  return r.to_json();
}

Json check_cloud_file(const fs::path& cloud) {
  const auto problems = embed::check_lopf(cloud);
  return {{"file", cloud.string()}, {"valid", problems.empty()}, {"problems", problems}};
}

}  // namespace lopmap::cli
