#include "lopmap/field/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::field {
namespace {

static_assert(std::endian::native == std::endian::little);

constexpr char kMagic[4] = {'L', 'O', 'P', 'C'};

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void floats(const float* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
  }
  // Eigen storage is column-major; the file is row-major.
  void matrix(const Mat<float>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) put(m(i, j));
    }
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& bytes) : bytes_(bytes) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void floats(float* p, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(p, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  void matrix(Mat<float>& m) {
    need(static_cast<std::size_t>(m.size()) * sizeof(float));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<float>();
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LopField& field,
                     const LossConfig& loss) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  Writer w(out);
  out.write(kMagic, 4);
  w.put(kCheckpointVersion);
  const auto& g = field.grid.config();
  w.put<std::int32_t>(g.levels);
  w.put<std::int32_t>(g.features);
  w.put<std::int32_t>(g.log2_table_size);
  w.put<std::int32_t>(g.base_resolution);
  w.put<std::int32_t>(g.finest_resolution);
  for (int a = 0; a < 3; ++a) w.put<double>(g.bounds.min[a]);
  for (int a = 0; a < 3; ++a) w.put<double>(g.bounds.max[a]);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(field.hidden()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(field.vl_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(field.sem_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(field.activation));
  w.put<double>(loss.log_tau_init);
  w.put<double>(loss.tau_min);
  w.put<double>(loss.tau_max);
  w.put<double>(loss.weight_v);
  w.put<double>(loss.weight_s);
  w.put<std::uint32_t>(loss.learn_tau ? 1 : 0);
  w.put<std::uint32_t>(loss.use_point_weights ? 1 : 0);
  w.floats(field.grid.params().data(), field.grid.params().size());
  w.matrix(field.w1);
  w.floats(field.b1.data(), static_cast<std::size_t>(field.b1.size()));
  w.matrix(field.wv);
  w.floats(field.bv.data(), static_cast<std::size_t>(field.bv.size()));
  w.matrix(field.ws);
  w.floats(field.bs.data(), static_cast<std::size_t>(field.bs.size()));
  w.put<float>(field.log_tau);
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<char> bytes = slurp(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": bad magic (expected LOPC)");
  }
  Reader r(bytes);
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::CorruptCheckpoint,
                path.string() + ": unsupported version " + std::to_string(version));
  }
  hashgrid::HashGridConfig g;
  g.levels = r.get<std::int32_t>();
  g.features = r.get<std::int32_t>();
  g.log2_table_size = r.get<std::int32_t>();
  g.base_resolution = r.get<std::int32_t>();
  g.finest_resolution = r.get<std::int32_t>();
  for (int a = 0; a < 3; ++a) g.bounds.min[a] = r.get<double>();
  for (int a = 0; a < 3; ++a) g.bounds.max[a] = r.get<double>();
  const auto d = r.get<std::uint32_t>();
  const auto hidden = r.get<std::uint32_t>();
  const auto dv = r.get<std::uint32_t>();
  const auto ds = r.get<std::uint32_t>();
  const auto act = r.get<std::uint32_t>();
  Checkpoint c;
  c.loss.log_tau_init = r.get<double>();
  c.loss.tau_min = r.get<double>();
  c.loss.tau_max = r.get<double>();
  c.loss.weight_v = r.get<double>();
  c.loss.weight_s = r.get<double>();
  c.loss.learn_tau = r.get<std::uint32_t>() != 0;
  c.loss.use_point_weights = r.get<std::uint32_t>() != 0;

  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": " + e.what());
  }
  if (d != static_cast<std::uint32_t>(g.dim()) || hidden == 0 || dv == 0 || ds == 0 ||
      (act != static_cast<std::uint32_t>(Activation::Softplus) &&
       act != static_cast<std::uint32_t>(Activation::Relu))) {
    throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": inconsistent header");
  }
  const std::size_t expected = g.parameter_count() + std::size_t{hidden} * d + hidden +
                               std::size_t{dv} * hidden + dv + std::size_t{ds} * hidden + ds + 1;
  if (r.remaining() != expected * sizeof(float)) {
    throw Error(ErrorCode::CorruptCheckpoint, path.string() + ": parameter block size mismatch");
  }
  LopField& f = c.field;
  f.grid = hashgrid::HashGrid(g);
  f.activation = static_cast<Activation>(act);
  f.w1.resize(hidden, d);
  f.b1.resize(hidden);
  f.wv.resize(dv, hidden);
  f.bv.resize(dv);
  f.ws.resize(ds, hidden);
  f.bs.resize(ds);
  r.floats(f.grid.params().data(), f.grid.params().size());
  r.matrix(f.w1);
  r.floats(f.b1.data(), hidden);
  r.matrix(f.wv);
  r.floats(f.bv.data(), dv);
  r.matrix(f.ws);
  r.floats(f.bs.data(), ds);
  f.log_tau = r.get<float>();
  return c;
}

std::uint64_t checkpoint_hash(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return fnv1a64(std::string_view(bytes.data(), bytes.size()));
}

}  // namespace lopmap::field
