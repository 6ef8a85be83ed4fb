// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any of them fails.
//
//   lopmap_acceptance [work_dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lopmap/cli/pipeline.hpp"
#include "lopmap/embed/synthetic_provider.hpp"
#include "lopmap/error.hpp"
#include "lopmap/field/checkpoint.hpp"
#include "lopmap/field/field.hpp"
#include "lopmap/planner/planner.hpp"
#include "lopmap/rng.hpp"
#include "lopmap/topomap/topomap.hpp"

namespace fs = std::filesystem;
using namespace lopmap;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(bool pass, const char* id, const std::string& detail) {
  std::printf("%s %-22s %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// Runs one criterion; an escaping exception is a failure, not a crash.
void criterion(const char* id, const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    report(false, id, std::string("threw ") + e.name() + ": " + e.what());
  } catch (const std::exception& e) {
    report(false, id, std::string("threw ") + e.what());
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<Vec3> positions(const embed::FeaturePointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.push_back(p.position.cast<double>());
  return out;
}

// Full file-level pipeline into `dir`; returns the seconds taken up to and
// including the evaluation, plus the eval summary.
struct FileRun {
  double seconds = 0.0;
  double accuracy = 0.0;
  fs::path scene, checkpoint, topomap;
};
FileRun file_pipeline(const cli::RunConfig& cfg, const fs::path& dir) {
  fs::remove_all(dir);
  FileRun r;
  r.scene = dir / "scene";
  r.checkpoint = dir / "train" / "checkpoint.lopc";
  r.topomap = dir / "map" / "topomap.json";
  const auto t0 = Clock::now();
  cli::gen_scene_file(cfg, r.scene);
  cli::build_cloud_file(cfg, r.scene, dir / "cloud");
  cli::train_file(cfg, dir / "cloud" / "cloud.lopf", dir / "train");
  r.accuracy = cli::eval_region_file(cfg, r.checkpoint, r.scene, dir / "eval")["accuracy"];
  r.seconds = seconds_since(t0);
  cli::build_map_file(cfg, r.checkpoint, r.scene, dir / "map");
  return r;
}

// ---- oracles ---------------------------------------------------------------

// O(n^2) Dijkstra without a heap.
double dijkstra(const planner::WeightedGraph& g, std::size_t s, std::size_t t) {
  const std::size_t n = g.size();
  std::vector<double> d(n, std::numeric_limits<double>::infinity());
  std::vector<bool> done(n, false);
  d[s] = 0.0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t u = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!done[i] && (u == n || d[i] < d[u])) u = i;
    }
    if (u == n || std::isinf(d[u])) break;
    done[u] = true;
    for (const auto& [v, w] : g.adj[u]) d[v] = std::min(d[v], d[u] + w);
  }
  return d[t];
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

embed::Embedding random_unit(Rng& rng, std::size_t n) {
  embed::Embedding e(n);
  double s = 0;
  for (auto& x : e) {
    x = static_cast<float>(rng.uniform(-1, 1));
    s += static_cast<double>(x) * x;
  }
  for (auto& x : e) x = static_cast<float>(x / std::sqrt(s));
  return e;
}

scene::Frame block_frame(float conf) {
  scene::Frame f;
  f.intrinsics = {2.0, 2.0, 2.0, 2.0, 4, 4};
  f.pose = scene::Pose::look_at(Vec3(0, 0, 1), Vec3(1, 0, 0));
  f.depth.assign(16, 2.0f);
  f.instance_ids.assign(16, scene::kBackground);
  for (int v = 1; v <= 2; ++v) {
    for (int u = 1; u <= 2; ++u) f.instance_ids[f.index(u, v)] = 5;
  }
  f.instance_labels[5] = "chair";
  f.instance_confidences[5] = conf;
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "lopmap_acceptance";
  fs::create_directories(work);
  const cli::RunConfig desk = cli::RunConfig::load(fs::path(LOPMAP_SOURCE_DIR) / "configs" / "desk.cfg");

  // Shared by the region, image, ablation and determinism checks.
  FileRun run_a;
  bool have_a = false;
  criterion("region-accuracy", [&] {
    run_a = file_pipeline(desk, work / "run_a");
    have_a = true;
    report(run_a.accuracy >= 0.95 && run_a.seconds <= 300.0, "region-accuracy",
           fmt("held-out accuracy %.4f (need >= 0.95) on %zu points, %d epochs in %.1f s (need <= 300 s)",
               run_a.accuracy, desk.eval_points, desk.train.epochs, run_a.seconds));
  });

  criterion("text-disambiguation", [&] {
    cli::RunConfig cfg = desk;
    cfg.scene.paired_classes = 5;
    const auto provider = cli::make_provider(cfg);
    const auto seq = cli::generate(cfg);
    const auto cloud = cli::build_cloud(cfg, seq, *provider);
    const auto trained = cli::train_field(cfg, cloud);
    const query::NeuralFeatureField field(trained.field);
    const auto samples = positions(cloud);

    std::map<std::string, std::vector<const scene::SceneObject*>> by_class;
    for (const auto& o : seq.scene.objects) by_class[o.label].push_back(&o);
    int queries = 0, correct = 0;
    std::string worst;
    for (const auto& [label, objs] : by_class) {
      if (objs.size() != 2 || objs[0]->room == objs[1]->room) continue;
      for (const auto* o : objs) {
        const std::string& room = seq.scene.rooms[o->room].label;
        const auto loc = query::localize_text(field, embed::compose_prompt(label, room), *provider, samples,
                                              cfg.vs_weight, cfg.top_k);
        const double d = o->box.distance(loc.position);
        const bool ok = d <= 0.5 && seq.scene.partition.region_of(loc.position.x(), loc.position.y()) == room;
        ++queries;
        correct += ok;
        if (!ok) worst += fmt(" [%s in the %s: %.2f m]", label.c_str(), room.c_str(), d);
      }
    }
    report(queries == 10 && correct >= 9, "text-disambiguation",
           fmt("%d of %d paired queries within 0.5 m and in the named room (need >= 9 of 10)%s", correct,
               queries, worst.c_str()));
  });

  criterion("image-localization", [&] {
    if (!have_a) throw Error(ErrorCode::NoData, "needs the region-accuracy run");
    const auto provider = cli::make_provider(desk);
    const auto* synth = dynamic_cast<const embed::SyntheticProvider*>(provider.get());
    if (!synth) throw Error(ErrorCode::InvalidConfig, "image check needs the synthetic provider");
    const auto seq = scene::read_sequence(run_a.scene);
    const auto ckpt = field::load_checkpoint(run_a.checkpoint);
    const query::NeuralFeatureField field(ckpt.field);
    const auto cloud = embed::read_lopf(work / "run_a" / "cloud" / "cloud.lopf");
    const auto samples = positions(cloud);

    // Views whose largest instance covers at least 2% of the image.
    struct View {
      std::size_t frame;
      std::int32_t id;
    };
    std::vector<View> views;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const auto& f = seq.frames[i];
      std::map<std::int32_t, int> count;
      for (std::size_t p = 0; p < f.instance_ids.size(); ++p) {
        if (f.instance_ids[p] != scene::kBackground && f.depth[p] > 0.0f) ++count[f.instance_ids[p]];
      }
      const auto best = std::max_element(count.begin(), count.end(),
                                         [](const auto& a, const auto& b) { return a.second < b.second; });
      if (best != count.end() && best->second * 50 >= static_cast<int>(f.instance_ids.size())) {
        views.push_back({i, best->first});
      }
    }
    if (views.size() < 20) throw Error(ErrorCode::NoData, fmt("only %zu usable views", views.size()));
    double sum = 0.0, worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const View& v = views[static_cast<std::size_t>(k) * views.size() / 20];
      const auto& f = seq.frames[v.frame];
      std::vector<Vec3> surface;
      for (int y = 0; y < f.height(); ++y) {
        for (int x = 0; x < f.width(); ++x) {
          const std::size_t p = f.index(x, y);
          if (f.instance_ids[p] == v.id && f.depth[p] > 0.0f) {
            surface.push_back(scene::back_project(x, y, f.depth[p], f.intrinsics, f.pose));
          }
        }
      }
      const auto emb = synth->embed_instance(f.instance_labels.at(v.id), v.id);
      const auto loc = query::localize_image(field, emb, samples, 1.0, desk.top_k);
      const double d = query::weighted_distance(loc, surface);
      sum += d;
      worst = std::max(worst, d);
    }
    const double mean = sum / 20.0;
    report(mean <= 1.0, "image-localization",
           fmt("mean similarity-weighted distance %.3f m over 20 views (need <= 1.0 m), worst view %.3f m", mean,
               worst));
  });

  criterion("gradient-check", [&] {
    const auto t0 = Clock::now();
    hashgrid::HashGridConfig g;
    g.levels = 3;
    g.features = 2;
    g.log2_table_size = 8;
    g.base_resolution = 4;
    g.finest_resolution = 16;
    g.bounds = Aabb(Vec3(-1, -1, -1), Vec3(1, 1, 1));
    auto f = field::BasicField<double>::init(g, 5, 4, 12, {}, 31);
    Rng rng(77);
    for (auto& x : f.grid.params()) x = rng.uniform(-0.5, 0.5);
    std::vector<embed::FeaturePoint> batch(8);
    for (auto& p : batch) {
      p.position = Eigen::Vector3f(static_cast<float>(rng.uniform(-0.9, 0.9)),
                                   static_cast<float>(rng.uniform(-0.9, 0.9)),
                                   static_cast<float>(rng.uniform(-0.9, 0.9)));
      p.dist = static_cast<float>(rng.uniform(0.5, 3.0));
      p.conf = static_cast<float>(rng.uniform(0.3, 1.0));
      p.ev = random_unit(rng, 5);
      p.es = random_unit(rng, 4);
    }
    const field::LossConfig loss;
    const std::span<const embed::FeaturePoint> b(batch);
    auto grad = f.make_grad();
    grad.reset();
    field::total_loss(f, b, loss, &grad);

    double worst = 0.0;
    int checked = 0;
    const double h = 1e-6;
    auto check = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double lp = field::total_loss(f, b, loss);
      param = saved - h;
      const double lm = field::total_loss(f, b, loss);
      param = saved;
      worst = std::max(worst, rel_err((lp - lm) / (2 * h), analytic));
      ++checked;
    };
    const int F = g.features;
    for (int i = 0; i < 10; ++i) {
      const std::size_t row = grad.touched[rng.below(grad.touched.size())];
      const std::size_t e = row * F + rng.below(F);
      check(f.grid.params()[e], grad.grid[e]);
    }
    for (int i = 0; i < 10; ++i) {
      const auto r = static_cast<Eigen::Index>(rng.below(f.w1.rows()));
      const auto c = static_cast<Eigen::Index>(rng.below(f.w1.cols()));
      check(f.w1(r, c), grad.w1(r, c));
    }
    for (int i = 0; i < 5; ++i) {
      const auto c = static_cast<Eigen::Index>(rng.below(f.wv.cols()));
      if (i % 2 == 0) {
        const auto r = static_cast<Eigen::Index>(rng.below(f.wv.rows()));
        check(f.wv(r, c), grad.wv(r, c));
      } else {
        const auto r = static_cast<Eigen::Index>(rng.below(f.ws.rows()));
        check(f.ws(r, c), grad.ws(r, c));
      }
    }
    check(f.log_tau, grad.log_tau);
    const double secs = seconds_since(t0);
    report(worst < 1e-3 && checked == 26, "gradient-check",
           fmt("%d parameters (10 table, 10 trunk, 5 head, log-tau), max relative error %.2e (need < 1e-3), %.2f s",
               checked, worst, secs));
  });

  criterion("loss-properties", [&] {
    using M = field::Mat<double>;
    using C = field::Col<double>;
    Rng rng(5);
    double min_loss = std::numeric_limits<double>::infinity();
    double perm_gap = 0.0;
    for (int t = 0; t < 200; ++t) {
      const int n = 2 + static_cast<int>(rng.below(24));
      M fm(6, n), em(6, n);
      C w(n);
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < 6; ++i) {
          fm(i, j) = rng.uniform(-1, 1);
          em(i, j) = rng.uniform(-1, 1);
        }
        w(j) = rng.uniform(0.05, 1.0);
      }
      fm.colwise().normalize();
      em.colwise().normalize();
      const double tau = rng.uniform(1.0, 100.0);
      const double l = field::contrastive_loss(fm, em, w, tau);
      min_loss = std::min(min_loss, l);
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
      M fp(6, n), ep(6, n);
      C wp(n);
      for (int j = 0; j < n; ++j) {
        fp.col(j) = fm.col(perm[j]);
        ep.col(j) = em.col(perm[j]);
        wp(j) = w(perm[j]);
      }
      perm_gap = std::max(perm_gap, std::abs(l - field::contrastive_loss(fp, ep, wp, tau)));
    }
    // B=2 by hand: unit weights, orthonormal pairs, tau = 2. Every row and
    // column softmax puts e^2 / (e^2 + 1) on its diagonal.
    M f2(2, 2);
    f2 << 1, 0, 0, 1;
    const double e2 = std::exp(2.0);
    const double oracle = 2.0 * -std::log(e2 / (e2 + 1.0));
    const C ones = C::Ones(2);
    const double got = field::contrastive_loss(f2, f2, ones, 2.0);
    const double hand_gap = std::abs(got - oracle);
    report(min_loss >= 0.0 && perm_gap <= 1e-6 && hand_gap <= 1e-9, "loss-properties",
           fmt("min loss %.3g (need >= 0), permutation gap %.1e (need <= 1e-6), B=2 oracle gap %.1e (need <= 1e-9)",
               min_loss, perm_gap, hand_gap));
  });

  criterion("astar-optimality", [&] {
    Rng rng(4242);
    int exact = 0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 2 + rng.below(29);
      std::vector<Vec3> pos(n);
      for (auto& p : pos) p = Vec3(rng.uniform(0, 10), rng.uniform(0, 10), 0);
      planner::WeightedGraph g(n);
      // Spanning tree first, then extra chords; weights never undercut the
      // straight-line distance so it stays admissible.
      auto weight = [&](std::size_t a, std::size_t b) { return (pos[a] - pos[b]).norm() * rng.uniform(1.0, 2.0); };
      for (std::size_t v = 1; v < n; ++v) {
        const std::size_t u = rng.below(v);
        g.add_edge(u, v, weight(u, v));
      }
      const std::size_t extra = rng.below(2 * n);
      for (std::size_t k = 0; k < extra; ++k) {
        const std::size_t a = rng.below(n), b = rng.below(n);
        if (a != b) g.add_edge(a, b, weight(a, b));
      }
      const std::size_t s = rng.below(n), goal = rng.below(n);
      const auto r = planner::astar(g, s, goal, [&](std::size_t v) { return (pos[v] - pos[goal]).norm(); });
      exact += r.cost == dijkstra(g, s, goal);
    }
    planner::WeightedGraph split(4);
    split.add_edge(0, 1, 1.0);
    split.add_edge(2, 3, 1.0);
    bool raised = false;
    try {
      planner::astar(split, 0, 3, [](std::size_t) { return 0.0; });
    } catch (const Error& e) {
      raised = e.code() == ErrorCode::NoPathFound;
    }
    report(exact == 100 && raised, "astar-optimality",
           fmt("%d of 100 random connected graphs match Dijkstra exactly; disconnected goal %s", exact,
               raised ? "raised NoPathFound" : "did NOT raise NoPathFound"));
  });

  criterion("topomap-schema", [&] {
    // Region node values from the reference listing.
    const Vec3 extent(4.163309999999999, 4.207343, 2.53566175);
    const Vec3 center(-8.821845, 2.6915385, 1.259409125);
    topomap::Json vj = {{"id", 0},
                        {"node_type", "region"},
                        {"bbox_extent", {extent.x(), extent.y(), extent.z()}},
                        {"bbox_center", {center.x(), center.y(), center.z()}},
                        {"class", "bedroom"},
                        {"caption", "Bedroom in the north-west corner."}};
    const auto v = topomap::Vertex::from_json(vj);
    double drift = 0.0;
    for (int i = 0; i < 3; ++i) {
      drift = std::max(drift, std::abs(v.bbox_extent[i] - extent[i]) / std::abs(extent[i]));
      drift = std::max(drift, std::abs(v.bbox_center[i] - center[i]) / std::abs(center[i]));
    }
    const bool values = drift <= 5e-6 && v.cls == "bedroom" && v.node_type == topomap::NodeType::Region;

    bool bytes = false;
    if (have_a) {
      const std::string text = slurp(run_a.topomap);
      bytes = topomap::TopoGraph::parse(text).dump() == text;
    }
    const Vec3 entrance(-3.244, -0.276, 0.487);
    const std::string rel = topomap::compass_relation(center, entrance);
    report(values && bytes && rel == "b to the southeast of a", "topomap-schema",
           fmt("listing values max relative drift %.1e (need <= 5e-6), built map re-serializes %s, compass \"%s\"",
               drift, bytes ? "byte-identical" : "DIFFERENTLY", rel.c_str()));
  });

  criterion("mapping-thresholds", [&] {
    const topomap::MapperConfig cfg;
    const auto n_at = [&](float conf, int frames) {
      return topomap::map_objects(std::vector<scene::Frame>(static_cast<std::size_t>(frames), block_frame(conf)), cfg)
          .size();
    };
    const std::size_t c59 = n_at(0.59f, 3), c61 = n_at(0.61f, 3), o2 = n_at(0.9f, 2), o3 = n_at(0.9f, 3);
    report(c59 == 0 && c61 == 1 && o2 == 0 && o3 == 1, "mapping-thresholds",
           fmt("conf 0.59 -> %zu vertices, 0.61 -> %zu; 2 frames -> %zu, 3 frames -> %zu (need 0, 1, 0, 1)", c59, c61,
               o2, o3));
  });

  criterion("ablation", [&] {
    if (!have_a) throw Error(ErrorCode::NoData, "needs the region-accuracy run");
    cli::RunConfig off = desk;
    off.fusion.encode_background = false;
    off.fusion.context_prompt = false;
    const auto provider = cli::make_provider(desk);
    const auto seq = cli::generate(desk);
    const auto trained = cli::train_field(off, cli::build_cloud(off, seq, *provider));
    const query::NeuralFeatureField field(trained.field);
    // Scored on the same held-out points as the full configuration.
    const double acc = cli::eval_region(desk, field, seq, *provider).accuracy;
    report(acc < run_a.accuracy, "ablation",
           fmt("background and prompt off: accuracy %.4f, full configuration %.4f (need strictly lower)", acc,
               run_a.accuracy));
  });

  criterion("determinism", [&] {
    if (!have_a) throw Error(ErrorCode::NoData, "needs the region-accuracy run");
    const FileRun b = file_pipeline(desk, work / "run_b");
    const bool ckpt = slurp(run_a.checkpoint) == slurp(b.checkpoint);
    const bool map = slurp(run_a.topomap) == slurp(b.topomap);
    report(ckpt && map, "determinism",
           fmt("second run with the same seed: checkpoint %s, topomap %s", ckpt ? "identical" : "DIFFERS",
               map ? "identical" : "DIFFERS"));
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
