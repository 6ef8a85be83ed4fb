#include "lopmap/scene/sequence_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lopmap/error.hpp"

namespace lopmap::scene {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "raster files are little-endian; big-endian hosts need byte swapping");

namespace {

std::string frame_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return buf;
}

template <typename T>
void write_raw(const fs::path& path, const std::vector<T>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
}

template <typename T>
std::vector<T> read_raw(const fs::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size != count * sizeof(T)) {
    throw Error(ErrorCode::SchemaError, path.string() + ": unexpected size");
  }
  in.seekg(0);
  std::vector<T> data(count);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
  return data;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<Frame> render_trajectory(const SyntheticScene& scene) {
  std::vector<Frame> frames;
  frames.reserve(scene.trajectory.size());
  for (std::size_t i = 0; i < scene.trajectory.size(); ++i) frames.push_back(render_frame(scene, i));
  return frames;
}

void write_sequence(const fs::path& dir, const SyntheticScene& scene,
                    const std::vector<Frame>& frames) {
  fs::create_directories(dir / "frames");
  {
    std::ofstream out(dir / "scene.json");
    if (!out) throw Error(ErrorCode::IoError, "cannot write scene.json");
    out << scene.to_json().dump(2) << '\n';
  }
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& o : scene.objects) {
    labels[std::to_string(o.instance_id)] = {{"class", o.label}, {"confidence", o.confidence}};
  }
  for (const auto& f : frames) {
    for (const auto& [id, label] : f.instance_labels) {
      labels[std::to_string(id)] = {{"class", label},
                                    {"confidence", f.instance_confidences.at(id)}};
    }
  }
  {
    std::ofstream out(dir / "labels.json");
    out << labels.dump(2) << '\n';
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    const fs::path stem = dir / "frames" / frame_stem(i);
    write_raw(fs::path(stem.string() + ".depth.bin"), f.depth);
    write_raw(fs::path(stem.string() + ".inst.bin"), f.instance_ids);
    std::ofstream pose(stem.string() + ".pose.txt");
    pose << std::setprecision(17);
    const Mat4 m = f.pose.matrix();
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) pose << m(r, c) << (c == 3 ? '\n' : ' ');
    }
  }
}

SceneSequence read_sequence(const fs::path& dir) {
  SceneSequence seq;
  seq.scene = SyntheticScene::from_json(read_json(dir / "scene.json"));
  seq.scene.intrinsics.validate();
  const nlohmann::json labels = read_json(dir / "labels.json");

  const auto& intr = seq.scene.intrinsics;
  const std::size_t n = static_cast<std::size_t>(intr.width) * intr.height;
  for (std::size_t i = 0;; ++i) {
    const std::string stem = (dir / "frames" / frame_stem(i)).string();
    if (!fs::exists(stem + ".depth.bin")) break;
    Frame f;
    f.intrinsics = intr;
    f.depth = read_raw<float>(stem + ".depth.bin", n);
    f.instance_ids = read_raw<std::int32_t>(stem + ".inst.bin", n);
    std::ifstream pose(stem + ".pose.txt");
    if (!pose) throw Error(ErrorCode::IoError, "missing " + stem + ".pose.txt");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (!(pose >> m(r, c))) throw Error(ErrorCode::SchemaError, stem + ".pose.txt malformed");
      }
    }
    f.pose = Pose::from_matrix(m);
    for (std::int32_t id : f.instance_ids) {
      if (id == kBackground || f.instance_labels.contains(id)) continue;
      const auto key = std::to_string(id);
      if (!labels.contains(key)) {
        throw Error(ErrorCode::SchemaError, "labels.json lacks instance " + key);
      }
      f.instance_labels[id] = labels[key].at("class").get<std::string>();
      f.instance_confidences[id] = labels[key].at("confidence").get<float>();
    }
    f.validate();
    seq.frames.push_back(std::move(f));
  }
  if (seq.frames.empty()) throw Error(ErrorCode::NoData, dir.string() + " has no frames");
  return seq;
}

}  // namespace lopmap::scene
