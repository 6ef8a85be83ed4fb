#include "lopmap/hashgrid/hashgrid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::hashgrid {

double HashGridConfig::growth() const {
  if (levels <= 1) return 1.0;
  return std::exp((std::log(static_cast<double>(finest_resolution)) -
                   std::log(static_cast<double>(base_resolution))) /
                  (levels - 1));
}

double HashGridConfig::resolution(int level) const {
  return std::floor(base_resolution * std::pow(growth(), level) + 1e-9);
}

void HashGridConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (levels < 1) fail("hash grid needs at least one level");
  if (features < 1) fail("hash grid needs at least one feature per level");
  if (log2_table_size < 1 || log2_table_size > 24) fail("log2_table_size must be in [1, 24]");
  if (base_resolution < 2) fail("base_resolution must be >= 2");
  if (finest_resolution < base_resolution) fail("finest_resolution must be >= base_resolution");
  const Vec3 e = bounds.max - bounds.min;
  if (!bounds.min.allFinite() || !bounds.max.allFinite() || (e.array() <= 0.0).any()) {
    throw Error(ErrorCode::InvalidBounds, "hash grid bounds are degenerate");
  }
}

template <typename T>
BasicHashGrid<T>::BasicHashGrid(HashGridConfig config) : config_(std::move(config)) {
  config_.validate();
  for (int l = 0; l < config_.levels; ++l) resolutions_.push_back(config_.resolution(l));
  params_.assign(config_.parameter_count(), T(0));
}

template <typename T>
BasicHashGrid<T> BasicHashGrid<T>::init(const HashGridConfig& config, std::uint64_t seed) {
  BasicHashGrid g(config);
  Rng rng(hash_combine(seed, 0x48415348u));
  for (auto& x : g.params_) x = static_cast<T>(rng.uniform(-1e-4, 1e-4));
  return g;
}

template <typename T>
void BasicHashGrid<T>::locate(const Vec3& p, Corners<T>& out) const {
  if (!p.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite position");
  const int L = config_.levels;
  out.rows.resize(static_cast<std::size_t>(L) * 8);
  out.weights.resize(static_cast<std::size_t>(L) * 8);
  const Vec3 lo = config_.bounds.min;
  const Vec3 ext = config_.bounds.max - lo;
  const double longest = ext.maxCoeff();
  const Vec3 clamped = p.cwiseMax(config_.bounds.min).cwiseMin(config_.bounds.max);
  const Vec3 unit = (clamped - lo) / longest;
  const auto mask = static_cast<std::uint32_t>(config_.table_rows() - 1);

  for (int l = 0; l < L; ++l) {
    const double res = resolutions_[static_cast<std::size_t>(l)];
    std::int64_t base[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
      const double s = unit[a] * res;
      const double f = std::floor(s);
      base[a] = static_cast<std::int64_t>(f);
      frac[a] = s - f;
    }
    const std::uint32_t offset = static_cast<std::uint32_t>(l) << config_.log2_table_size;
    for (int c = 0; c < 8; ++c) {
      const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                       (dz ? frac[2] : 1.0 - frac[2]);
      const std::size_t k = static_cast<std::size_t>(l) * 8 + c;
      out.rows[k] = offset + hash_corner(base[0] + dx, base[1] + dy, base[2] + dz, mask);
      out.weights[k] = static_cast<T>(w);
    }
  }
}

template <typename T>
void BasicHashGrid<T>::gather(const Corners<T>& c, T* out) const {
  const int F = config_.features;
  for (int l = 0; l < config_.levels; ++l) {
    T* slice = out + static_cast<std::size_t>(l) * F;
    std::fill(slice, slice + F, T(0));
    for (int k = 0; k < 8; ++k) {
      const std::size_t idx = static_cast<std::size_t>(l) * 8 + k;
      const T w = c.weights[idx];
      const T* row = params_.data() + static_cast<std::size_t>(c.rows[idx]) * F;
      for (int f = 0; f < F; ++f) slice[f] += w * row[f];
    }
  }
}

template <typename T>
void BasicHashGrid<T>::scatter(const Corners<T>& c, const T* upstream, T* grad) const {
  const int F = config_.features;
  for (int l = 0; l < config_.levels; ++l) {
    const T* up = upstream + static_cast<std::size_t>(l) * F;
    for (int k = 0; k < 8; ++k) {
      const std::size_t idx = static_cast<std::size_t>(l) * 8 + k;
      const T w = c.weights[idx];
      T* row = grad + static_cast<std::size_t>(c.rows[idx]) * F;
      for (int f = 0; f < F; ++f) row[f] += w * up[f];
    }
  }
}

template <typename T>
std::vector<T> BasicHashGrid<T>::encode(const Vec3& p) const {
  Corners<T> c;
  locate(p, c);
  std::vector<T> out(static_cast<std::size_t>(dim()));
  gather(c, out.data());
  return out;
}

template <typename T>
SparseGrad<T> BasicHashGrid<T>::encode_backward(const Vec3& p, std::span<const T> upstream) const {
  if (upstream.size() != static_cast<std::size_t>(dim())) {
    throw Error(ErrorCode::DimMismatch, "upstream gradient has the wrong length");
  }
  Corners<T> c;
  locate(p, c);
  const int F = config_.features;
  std::vector<T> values(c.rows.size() * F);
  for (std::size_t idx = 0; idx < c.rows.size(); ++idx) {
    const std::size_t l = idx / 8;
    for (int f = 0; f < F; ++f) values[idx * F + f] = c.weights[idx] * upstream[l * F + f];
  }
  return merge_rows(c.rows, values, F);
}

template <typename T>
SparseGrad<T> merge_rows(std::vector<std::uint32_t> rows, const std::vector<T>& values,
                         int features) {
  std::vector<std::uint32_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0u);
  // Stable, so duplicate rows are summed in submission order.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return rows[a] < rows[b]; });
  SparseGrad<T> out;
  for (std::uint32_t i : order) {
    if (out.rows.empty() || out.rows.back() != rows[i]) {
      out.rows.push_back(rows[i]);
      out.values.resize(out.values.size() + features, T(0));
    }
    T* dst = out.values.data() + out.values.size() - features;
    for (int f = 0; f < features; ++f) dst[f] += values[static_cast<std::size_t>(i) * features + f];
  }
  return out;
}

template class BasicHashGrid<float>;
template class BasicHashGrid<double>;
template SparseGrad<float> merge_rows(std::vector<std::uint32_t>, const std::vector<float>&, int);
template SparseGrad<double> merge_rows(std::vector<std::uint32_t>, const std::vector<double>&, int);

}  // namespace lopmap::hashgrid
