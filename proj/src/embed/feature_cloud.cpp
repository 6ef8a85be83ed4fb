#include "lopmap/embed/feature_cloud.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "lopmap/error.hpp"

namespace lopmap::embed {
namespace {

static_assert(std::endian::native == std::endian::little);

constexpr char kMagic[4] = {'L', 'O', 'P', 'F'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 4 + 4;

struct Header {
  std::uint32_t version = 0;
  std::uint32_t count = 0;
  std::uint32_t dv = 0;
  std::uint32_t ds = 0;
  float voxel_size = 0.0f;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::vector<char> bytes(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  return bytes;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

// Parses the header and checks the payload size; returns an error string or "".
std::string parse_header(const std::vector<char>& bytes, Header& h) {
  if (bytes.size() < kHeaderBytes) return "file shorter than the LOPF header";
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) return "bad magic (expected LOPF)";
  h.version = load<std::uint32_t>(bytes.data() + 4);
  h.count = load<std::uint32_t>(bytes.data() + 8);
  h.dv = load<std::uint32_t>(bytes.data() + 12);
  h.ds = load<std::uint32_t>(bytes.data() + 16);
  h.voxel_size = load<float>(bytes.data() + 20);
  if (h.version != kLopfVersion) return "unsupported version " + std::to_string(h.version);
  if (h.dv == 0 || h.ds == 0) return "zero embedding dimension";
  if (!(h.voxel_size > 0.0f) || !std::isfinite(h.voxel_size)) return "voxel_size must be positive";
  const std::size_t stride = (6 + static_cast<std::size_t>(h.dv) + h.ds) * 4;
  if (bytes.size() != kHeaderBytes + stride * h.count) {
    return "payload size does not match point count and dims";
  }
  return {};
}

}  // namespace

void write_lopf(const std::filesystem::path& path, const FeaturePointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  out.write(kMagic, 4);
  put(kLopfVersion);
  put(static_cast<std::uint32_t>(cloud.points.size()));
  put(static_cast<std::uint32_t>(cloud.vl_dim));
  put(static_cast<std::uint32_t>(cloud.sem_dim));
  put(cloud.voxel_size);
  for (const auto& p : cloud.points) {
    if (p.ev.size() != cloud.vl_dim || p.es.size() != cloud.sem_dim) {
      throw Error(ErrorCode::DimMismatch, "feature point dims differ from the cloud");
    }
    put(p.position.x());
    put(p.position.y());
    put(p.position.z());
    put(p.weight);
    put(p.dist);
    put(p.conf);
    out.write(reinterpret_cast<const char*>(p.ev.data()),
              static_cast<std::streamsize>(p.ev.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(p.es.data()),
              static_cast<std::streamsize>(p.es.size() * sizeof(float)));
  }
}

FeaturePointCloud read_lopf(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  Header h;
  if (auto err = parse_header(bytes, h); !err.empty()) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + err);
  }
  FeaturePointCloud cloud;
  cloud.vl_dim = h.dv;
  cloud.sem_dim = h.ds;
  cloud.voxel_size = h.voxel_size;
  cloud.points.resize(h.count);
  const char* p = bytes.data() + kHeaderBytes;
  for (auto& pt : cloud.points) {
    float f[6];
    std::memcpy(f, p, sizeof(f));
    p += sizeof(f);
    pt.position = {f[0], f[1], f[2]};
    pt.weight = f[3];
    pt.dist = f[4];
    pt.conf = f[5];
    pt.ev.resize(h.dv);
    std::memcpy(pt.ev.data(), p, h.dv * sizeof(float));
    p += h.dv * sizeof(float);
    pt.es.resize(h.ds);
    std::memcpy(pt.es.data(), p, h.ds * sizeof(float));
    p += h.ds * sizeof(float);
  }
  return cloud;
}

std::vector<std::string> check_lopf(const std::filesystem::path& path) {
  std::vector<std::string> problems;
  std::vector<char> bytes;
  try {
    bytes = slurp(path);
  } catch (const Error& e) {
    problems.emplace_back(e.what());
    return problems;
  }
  Header h;
  if (auto err = parse_header(bytes, h); !err.empty()) {
    problems.push_back(err);
    return problems;
  }
  const FeaturePointCloud cloud = read_lopf(path);
  std::set<VoxelKey> voxels;
  auto norm = [](const Embedding& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
  };
  constexpr std::size_t kMaxReports = 20;
  for (std::size_t i = 0; i < cloud.points.size() && problems.size() < kMaxReports; ++i) {
    const auto& p = cloud.points[i];
    const std::string at = "point " + std::to_string(i) + ": ";
    bool finite = p.position.allFinite() && std::isfinite(p.weight) && std::isfinite(p.dist) &&
                  std::isfinite(p.conf);
    for (float x : p.ev) finite = finite && std::isfinite(x);
    for (float x : p.es) finite = finite && std::isfinite(x);
    if (!finite) {
      problems.push_back(at + "non-finite value");
      continue;
    }
    if (p.weight < 1.0f) problems.push_back(at + "weight < 1");
    if (!(p.dist > 0.0f)) problems.push_back(at + "dist must be positive");
    if (p.conf < 0.0f || p.conf > 1.0f) problems.push_back(at + "conf outside [0, 1]");
    if (std::abs(norm(p.ev) - 1.0) > 1e-3) problems.push_back(at + "e_v is not unit norm");
    if (std::abs(norm(p.es) - 1.0) > 1e-3) problems.push_back(at + "e_s is not unit norm");
    if (!voxels.insert(voxel_key(p.position, cloud.voxel_size)).second) problems.push_back(at + "shares a voxel with another point");
  }
  return problems;
}

}  // namespace lopmap::embed
