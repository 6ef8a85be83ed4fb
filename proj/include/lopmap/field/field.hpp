#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lopmap/embed/feature_cloud.hpp"
#include "lopmap/hashgrid/hashgrid.hpp"

namespace lopmap::field {

enum class Activation : std::uint32_t { Softplus = 1, Relu = 2 };

struct LossConfig {
  /// Initial log temperature; log(1/0.07).
  double log_tau_init = 2.6592600369327779;
  double tau_min = 1.0;
  double tau_max = 100.0;
  bool learn_tau = true;
  double weight_v = 1.0;
  double weight_s = 1.0;
  /// Per-row weights exp(-dist) and conf; off gives every row weight 1.
  bool use_point_weights = true;

  bool operator==(const LossConfig&) const = default;
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Col = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Unit-normalized field outputs, one column per input point.
template <typename T>
struct FieldOutput {
  Mat<T> fv;  // dv x B
  Mat<T> fs;  // ds x B
};

/// Intermediate values kept for the backward pass.
template <typename T>
struct ForwardCache {
  std::vector<hashgrid::Corners<T>> corners;
  Mat<T> enc, pre, act, yv, ys;
  FieldOutput<T> out;
};

/// Gradients of every parameter class. The table gradient is dense; the rows
/// written since the last reset() are listed in `touched`.
template <typename T>
struct FieldGrad {
  std::vector<T> grid;
  std::vector<std::uint32_t> touched;
  std::vector<std::uint8_t> mark;
  Mat<T> w1, wv, ws;
  Col<T> b1, bv, bs;
  T log_tau = 0;

  void reset();
};

/// Hash encoding followed by one hidden layer and two linear heads.
template <typename T>
class BasicField {
 public:
  hashgrid::BasicHashGrid<T> grid;
  Mat<T> w1;  // hidden x d
  Col<T> b1;
  Mat<T> wv;  // dv x hidden
  Col<T> bv;
  Mat<T> ws;  // ds x hidden
  Col<T> bs;
  T log_tau = 0;
  Activation activation = Activation::Softplus;

  /// Layers get U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the grid its own init.
  static BasicField init(const hashgrid::HashGridConfig& grid_config, std::size_t vl_dim,
                         std::size_t sem_dim, int hidden, const LossConfig& loss,
                         std::uint64_t seed, Activation activation = Activation::Softplus);

  std::size_t vl_dim() const { return static_cast<std::size_t>(wv.rows()); }
  std::size_t sem_dim() const { return static_cast<std::size_t>(ws.rows()); }
  int hidden() const { return static_cast<int>(w1.rows()); }
  T tau() const;

  /// Throws InvalidInput for an empty batch or a non-finite point.
  FieldOutput<T> forward(std::span<const Vec3> points) const;
  void forward(std::span<const Vec3> points, ForwardCache<T>& cache) const;

  /// Accumulates parameter gradients given d loss / d outputs.
  void backward(const ForwardCache<T>& cache, const Mat<T>& dfv, const Mat<T>& dfs,
                FieldGrad<T>& grad) const;

  FieldGrad<T> make_grad() const;

  template <typename U>
  BasicField<U> cast() const;

  bool operator==(const BasicField& o) const;
};

using LopField = BasicField<float>;

/// Symmetric weighted cross-entropy over Sim = tau * F^T E (columns are
/// samples). Returns mean_i w_i CE_row(i) + mean_j w_j CE_col(j). When the
/// pointers are set, writes d loss / d F and d loss / d tau.
/// Throws BatchTooSmall for fewer than 2 columns.
template <typename T>
T contrastive_loss(const Mat<T>& f, const Mat<T>& e, const Col<T>& weights, T tau,
                   Mat<T>* d_f = nullptr, T* d_tau = nullptr);

/// Both branches on a batch of cloud points. When `grad` is set, gradients
/// are accumulated into it (reset it between steps).
template <typename T>
T total_loss(const BasicField<T>& field, std::span<const embed::FeaturePoint> batch,
             const LossConfig& config, FieldGrad<T>* grad = nullptr);

/// Same, for a batch given by indices into `cloud`.
template <typename T>
T total_loss(const BasicField<T>& field, const embed::FeaturePointCloud& cloud,
             std::span<const std::size_t> batch, const LossConfig& config,
             FieldGrad<T>* grad = nullptr);

}  // namespace lopmap::field
