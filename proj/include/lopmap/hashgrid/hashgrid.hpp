#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "lopmap/geometry.hpp"

namespace lopmap::hashgrid {

struct HashGridConfig {
  int levels = 18;
  int features = 8;
  int log2_table_size = 20;
  int base_resolution = 16;
  /// Cells across the longest axis of `bounds` at the finest level.
  int finest_resolution = 512;
  Aabb bounds{Vec3(-1, -1, -1), Vec3(1, 1, 1)};

  int dim() const { return levels * features; }
  std::size_t table_rows() const { return std::size_t{1} << log2_table_size; }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(levels) * table_rows() * static_cast<std::size_t>(features);
  }
  /// Per-level geometric growth factor.
  double growth() const;
  /// Grid resolution (cells across the longest axis) of `level`.
  double resolution(int level) const;

  /// Throws InvalidConfig.
  void validate() const;
  bool operator==(const HashGridConfig&) const = default;
};

/// Spatial hash of an integer corner, already reduced modulo the table size.
inline std::uint32_t hash_corner(std::int64_t x, std::int64_t y, std::int64_t z,
                                 std::uint32_t mask) {
  const auto ux = static_cast<std::uint32_t>(x);
  const auto uy = static_cast<std::uint32_t>(y);
  const auto uz = static_cast<std::uint32_t>(z);
  return (ux ^ (uy * 2654435761u) ^ (uz * 805459861u)) & mask;
}

/// Table rows and trilinear weights touched by one position, 8 per level.
/// `rows` index the flattened (level, slot) table, i.e. level * 2^T + slot.
template <typename T>
struct Corners {
  std::vector<std::uint32_t> rows;
  std::vector<T> weights;
};

/// Accumulated gradient for a set of table rows (features values per row).
template <typename T>
struct SparseGrad {
  std::vector<std::uint32_t> rows;  // sorted, unique
  std::vector<T> values;            // rows.size() * features
};

/// Multi-resolution hash encoding. Positions are normalized isotropically by
/// the longest extent of the bounds and clamped into them.
template <typename T>
class BasicHashGrid {
 public:
  BasicHashGrid() = default;
  explicit BasicHashGrid(HashGridConfig config);

  /// Tables uniform in [-1e-4, 1e-4].
  static BasicHashGrid init(const HashGridConfig& config, std::uint64_t seed);

  const HashGridConfig& config() const { return config_; }
  int dim() const { return config_.dim(); }

  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }

  /// Throws InvalidInput for non-finite input.
  void locate(const Vec3& p, Corners<T>& out) const;
  void gather(const Corners<T>& c, T* out) const;
  /// Adds weight * upstream into `grad` rows (dense, parameter_count long).
  void scatter(const Corners<T>& c, const T* upstream, T* grad) const;

  std::vector<T> encode(const Vec3& p) const;
  SparseGrad<T> encode_backward(const Vec3& p, std::span<const T> upstream) const;

 private:
  HashGridConfig config_;
  std::vector<double> resolutions_;
  std::vector<T> params_;
};

/// Merges (row, values) contributions into a SparseGrad with sorted unique rows.
template <typename T>
SparseGrad<T> merge_rows(std::vector<std::uint32_t> rows, const std::vector<T>& values,
                         int features);

using HashGrid = BasicHashGrid<float>;

}  // namespace lopmap::hashgrid
