// lopmap: command-line front end for the scene pipeline.
#include <CLI11.hpp>

#include <Eigen/Core>

#include <iostream>
#include <sstream>

#include "lopmap/cli/pipeline.hpp"
#include "lopmap/error.hpp"

namespace fs = std::filesystem;
using namespace lopmap;

namespace {

Vec3 parse_point(const std::string& s) {
  std::istringstream in(s);
  Vec3 p;
  char c1 = 0, c2 = 0;
  if (!(in >> p.x() >> c1 >> p.y() >> c2 >> p.z()) || c1 != ',' || c2 != ',' || !(in >> std::ws).eof()) {
    throw Error(ErrorCode::InvalidInput, "expected x,y,z but got '" + s + "'");
  }
  return p;
}

std::string keys_help() {
  std::ostringstream o;
  o << "\nConfig file keys (INI, [section] key = value; unknown keys are rejected):\n";
  std::string section;
  for (const auto& k : cli::config_keys()) {
    if (k.section != section) {
      section = k.section;
      o << "  [" << section << "]\n";
    }
    o << "    " << k.key;
    if (!k.doc.empty()) o << std::string(k.key.size() < 24 ? 24 - k.key.size() : 1, ' ') << k.doc;
    o << '\n';
  }
  o << "\nEach command writes the resolved config as config.ini next to its outputs.\n";
  return o.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lopmap: layout-object-position fields and topometric maps"};
  app.require_subcommand(1);
  app.footer(keys_help());

  std::string config_path;
  unsigned threads = 1;
  app.add_option("--config", config_path, "run config file (defaults when omitted)")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker cap")->check(CLI::Range(1u, 256u));

  std::string scene_dir, cloud, checkpoint, map, out, point, text, image_emb, start, goal;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic apartment and render its sequence");
  gen->add_option("--seed", seed, "overrides [scene] seed");
  gen->add_option("--out", out, "output scene directory")->required();

  auto* bc = app.add_subcommand("build-cloud", "fuse a scene sequence into a LOPF feature cloud");
  bc->add_option("--scene", scene_dir, "scene directory")->required();
  bc->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a field on a feature cloud");
  tr->add_option("--cloud", cloud, "LOPF file")->required();
  tr->add_option("--out", out, "output directory")->required();

  auto* inf = app.add_subcommand("infer", "region attribute of one point");
  inf->add_option("--checkpoint", checkpoint)->required();
  inf->add_option("--scene", scene_dir, "scene directory (label set)")->required();
  inf->add_option("--point", point, "x,y,z")->required();

  auto* loc = app.add_subcommand("localize", "heatmap for a text query or an image embedding");
  loc->add_option("--checkpoint", checkpoint)->required();
  loc->add_option("--scene", scene_dir, "scene directory (label set)")->required();
  auto* text_opt = loc->add_option("--text", text, "query text");
  auto* img_opt = loc->add_option("--image-emb", image_emb, "JSON array with the image embedding");
  text_opt->excludes(img_opt);
  loc->add_option("--cloud", cloud, "sample at these cloud positions (grid otherwise)");
  loc->add_option("--out", out, "output directory")->required();

  auto* bm = app.add_subcommand("build-map", "build the topometric map");
  bm->add_option("--checkpoint", checkpoint)->required();
  bm->add_option("--scene", scene_dir)->required();
  bm->add_option("--out", out, "output directory")->required();

  auto* um = app.add_subcommand("update-map", "integrate the frames of a scene directory into a map");
  um->add_option("--checkpoint", checkpoint)->required();
  um->add_option("--map", map, "topomap JSON")->required();
  um->add_option("--scene", scene_dir, "scene directory with the new frames")->required();
  um->add_option("--out", out, "output directory")->required();

  auto* pl = app.add_subcommand("plan", "A* over the map from a 3D start to an object query");
  pl->add_option("--checkpoint", checkpoint)->required();
  pl->add_option("--map", map)->required();
  pl->add_option("--scene", scene_dir)->required();
  pl->add_option("--start", start, "x,y,z")->required();
  pl->add_option("--goal", goal, "e.g. \"sofa in the TV room\"")->required();
  pl->add_option("--out", out, "output directory")->required();

  auto* ev = app.add_subcommand("eval-region", "held-out region accuracy with per-region precision and F1");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--scene", scene_dir)->required();
  ev->add_option("--out", out, "output directory")->required();

  auto* cc = app.add_subcommand("check-cloud", "validate a LOPF file");
  cc->add_option("--cloud", cloud, "LOPF file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    cli::RunConfig cfg = config_path.empty() ? cli::RunConfig{} : cli::RunConfig::load(config_path);
    cfg.fusion.threads = threads;
    Eigen::setNbThreads(static_cast<int>(threads));

    cli::Json summary;
    if (gen->parsed()) {
      if (seed) cfg.scene.seed = *seed;
      summary = cli::gen_scene_file(cfg, out);
    } else if (bc->parsed()) {
      summary = cli::build_cloud_file(cfg, scene_dir, out);
    } else if (tr->parsed()) {
      summary = cli::train_file(cfg, cloud, out, [](int epoch, double loss) {
        std::cout << "epoch " << epoch << " loss " << loss << std::endl;
      });
    } else if (inf->parsed()) {
      summary = cli::infer_file(cfg, checkpoint, scene_dir, parse_point(point));
    } else if (loc->parsed()) {
      cli::LocalizeRequest req;
      if (!text.empty()) req.text = text;
      if (!image_emb.empty()) req.image_embedding = image_emb;
      if (!cloud.empty()) req.cloud = cloud;
      summary = cli::localize_file(cfg, checkpoint, scene_dir, req, out);
    } else if (bm->parsed()) {
      summary = cli::build_map_file(cfg, checkpoint, scene_dir, out);
    } else if (um->parsed()) {
      summary = cli::update_map_file(cfg, checkpoint, map, scene_dir, out);
    } else if (pl->parsed()) {
      summary = cli::plan_file(cfg, checkpoint, map, scene_dir, parse_point(start), goal, out);
    } else if (ev->parsed()) {
      summary = cli::eval_region_file(cfg, checkpoint, scene_dir, out);
      cli::RegionEval e;
      e.points = summary["points"];
      e.accuracy = summary["accuracy"];
      for (const auto& r : summary["regions"]) {
        e.per_region.push_back({r["label"], r["support"], r["precision"], r["recall"], r["f1"]});
      }
      std::cout << cli::format_eval(e);
      return 0;
    } else if (cc->parsed()) {
      summary = cli::check_cloud_file(cloud);
      std::cout << summary.dump(2) << '\n';
      if (!summary["valid"].get<bool>()) {
        std::cerr << "error: SchemaError: " << cloud << " failed the LOPF check\n";
        return 2;
      }
      return 0;
    }
    std::cout << summary.dump(2) << '\n';
  } catch (const Error& e) {
    std::cerr << "error: " << e.name() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
