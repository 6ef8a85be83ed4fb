// Python bindings for the lopmap pipeline. Results come back as plain dicts
// (the same JSON the command-line tool prints).
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lopmap/cli/pipeline.hpp"
#include "lopmap/embed/feature_cloud.hpp"
#include "lopmap/error.hpp"
#include "lopmap/planner/planner.hpp"
#include "lopmap/topomap/topomap.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace lopmap;

namespace {

py::object to_py(const cli::Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Vec3 to_vec3(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

py::dict read_cloud(const fs::path& path) {
  const auto c = embed::read_lopf(path);
  const auto n = static_cast<py::ssize_t>(c.points.size());
  py::array_t<float> pos({n, py::ssize_t{3}});
  py::array_t<float> weight(n), dist(n), conf(n);
  py::array_t<float> ev({n, static_cast<py::ssize_t>(c.vl_dim)});
  py::array_t<float> es({n, static_cast<py::ssize_t>(c.sem_dim)});
  auto P = pos.mutable_unchecked<2>();
  auto W = weight.mutable_unchecked<1>(), D = dist.mutable_unchecked<1>(), C = conf.mutable_unchecked<1>();
  auto V = ev.mutable_unchecked<2>(), S = es.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < n; ++i) {
    const auto& p = c.points[static_cast<std::size_t>(i)];
    for (py::ssize_t k = 0; k < 3; ++k) P(i, k) = p.position[k];
    W(i) = p.weight;
    D(i) = p.dist;
    C(i) = p.conf;
    for (std::size_t k = 0; k < c.vl_dim; ++k) V(i, static_cast<py::ssize_t>(k)) = p.ev[k];
    for (std::size_t k = 0; k < c.sem_dim; ++k) S(i, static_cast<py::ssize_t>(k)) = p.es[k];
  }
  py::dict d;
  d["voxel_size"] = c.voxel_size;
  d["position"] = pos;
  d["weight"] = weight;
  d["dist"] = dist;
  d["conf"] = conf;
  d["ev"] = ev;
  d["es"] = es;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lopmap, m) {
  m.doc() = "Layout-object-position fields and topometric maps";

  static py::exception<Error> error(m, "LopmapError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(e.name()) + ": " + e.what()).c_str());
    }
  });

  py::class_<cli::RunConfig>(m, "Config")
      .def(py::init<>())
      .def_static("load", &cli::RunConfig::load, py::arg("path"))
      .def_static("parse", &cli::RunConfig::parse, py::arg("text"), py::arg("base") = fs::path{})
      .def("to_ini", &cli::RunConfig::to_ini)
      .def("save", &cli::RunConfig::save, py::arg("path"))
      .def("validate", &cli::RunConfig::validate)
      .def("__eq__", [](const cli::RunConfig& a, const cli::RunConfig& b) { return a == b; })
      .def_property(
          "seed", [](const cli::RunConfig& c) { return c.scene.seed; },
          [](cli::RunConfig& c, std::uint64_t s) { c.scene.seed = s; })
      .def_property(
          "epochs", [](const cli::RunConfig& c) { return c.train.epochs; },
          [](cli::RunConfig& c, int e) { c.train.epochs = e; })
      .def_property(
          "samples_per_epoch", [](const cli::RunConfig& c) { return c.train.samples_per_epoch; },
          [](cli::RunConfig& c, std::size_t n) { c.train.samples_per_epoch = n; })
      .def_readwrite("eval_points", &cli::RunConfig::eval_points)
      .def_readwrite("holdout_every", &cli::RunConfig::holdout_every)
      .def_readwrite("vl_dim", &cli::RunConfig::vl_dim)
      .def_readwrite("sem_dim", &cli::RunConfig::sem_dim);

  m.def("config_keys", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& k : cli::config_keys()) out.emplace_back(k.section, k.key, k.doc);
    return out;
  });

  m.def("gen_scene", [](const cli::RunConfig& c, const fs::path& out) { return to_py(cli::gen_scene_file(c, out)); },
        py::arg("config"), py::arg("out"));
  m.def("build_cloud",
        [](const cli::RunConfig& c, const fs::path& scene, const fs::path& out) {
          return to_py(cli::build_cloud_file(c, scene, out));
        },
        py::arg("config"), py::arg("scene"), py::arg("out"));
  m.def("train",
        [](const cli::RunConfig& c, const fs::path& cloud, const fs::path& out,
           std::function<void(int, double)> on_epoch) {
          return to_py(cli::train_file(c, cloud, out, on_epoch ? on_epoch : field::EpochCallback{}));
        },
        py::arg("config"), py::arg("cloud"), py::arg("out"), py::arg("on_epoch") = nullptr);
  m.def("infer",
        [](const cli::RunConfig& c, const fs::path& ckpt, const fs::path& scene, std::array<double, 3> p) {
          return to_py(cli::infer_file(c, ckpt, scene, to_vec3(p)));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("scene"), py::arg("point"));
  m.def("localize",
        [](const cli::RunConfig& c, const fs::path& ckpt, const fs::path& scene, const fs::path& out,
           std::optional<std::string> text, std::optional<fs::path> image_embedding,
           std::optional<fs::path> cloud) {
          cli::LocalizeRequest req{std::move(text), std::move(image_embedding), std::move(cloud)};
          return to_py(cli::localize_file(c, ckpt, scene, req, out));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("scene"), py::arg("out"), py::kw_only(),
        py::arg("text") = py::none(), py::arg("image_embedding") = py::none(), py::arg("cloud") = py::none());
  m.def("build_map",
        [](const cli::RunConfig& c, const fs::path& ckpt, const fs::path& scene, const fs::path& out) {
          return to_py(cli::build_map_file(c, ckpt, scene, out));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("scene"), py::arg("out"));
  m.def("update_map",
        [](const cli::RunConfig& c, const fs::path& ckpt, const fs::path& map, const fs::path& scene,
           const fs::path& out) { return to_py(cli::update_map_file(c, ckpt, map, scene, out)); },
        py::arg("config"), py::arg("checkpoint"), py::arg("map"), py::arg("scene"), py::arg("out"));
  m.def("plan",
        [](const cli::RunConfig& c, const fs::path& ckpt, const fs::path& map, const fs::path& scene,
           std::array<double, 3> start, const std::string& goal, const fs::path& out) {
          return to_py(cli::plan_file(c, ckpt, map, scene, to_vec3(start), goal, out));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("map"), py::arg("scene"), py::arg("start"),
        py::arg("goal"), py::arg("out"));
  m.def("eval_region",
        [](const cli::RunConfig& c, const fs::path& ckpt, const fs::path& scene, const fs::path& out) {
          return to_py(cli::eval_region_file(c, ckpt, scene, out));
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("scene"), py::arg("out"));
  m.def("check_cloud", [](const fs::path& p) { return to_py(cli::check_cloud_file(p)); }, py::arg("path"));
  m.def("read_cloud", &read_cloud, py::arg("path"), "LOPF file as numpy arrays.");

  m.def("load_map", [](const fs::path& p) { return to_py(topomap::TopoGraph::load(p).to_json()); },
        py::arg("path"), "Reads and validates a topomap JSON file.");
  m.def("compass_relation",
        [](std::array<double, 3> a, std::array<double, 3> b) {
          return topomap::compass_relation(to_vec3(a), to_vec3(b));
        },
        py::arg("a"), py::arg("b"));

  m.def("astar",
        [](std::size_t n, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
           std::size_t start, std::size_t goal, std::function<double(std::size_t)> heuristic) {
          planner::WeightedGraph g(n);
          for (const auto& [a, b, w] : edges) g.add_edge(a, b, w);
          if (!heuristic) heuristic = [](std::size_t) { return 0.0; };
          const auto r = planner::astar(g, start, goal, heuristic);
          return py::make_tuple(r.path, r.cost);
        },
        py::arg("n"), py::arg("edges"), py::arg("start"), py::arg("goal"), py::arg("heuristic") = nullptr,
        "Undirected A*; returns (vertex path, cost).");
}
