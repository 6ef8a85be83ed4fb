#include "lopmap/field/field.hpp"

#include <algorithm>
#include <cmath>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::field {
namespace {


template <typename T>
void uniform_fill(Rng& rng, Mat<T>& m, double bound) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<T>(rng.uniform(-bound, bound));
  }
}

template <typename T>
void uniform_fill(Rng& rng, Col<T>& v, double bound) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<T>(rng.uniform(-bound, bound));
}

// Column-normalizes y into f; zero columns stay zero.
template <typename T>
void normalize_columns(const Mat<T>& y, Mat<T>& f) {
  f = y;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const T n = y.col(j).norm();
    if (n > T(0)) f.col(j) /= n;
  }
}

// d loss / d y for f = y / |y|.
template <typename T>
Mat<T> normalize_backward(const Mat<T>& y, const Mat<T>& f, const Mat<T>& df) {
  Mat<T> dy(y.rows(), y.cols());
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const T n = y.col(j).norm();
    if (n > T(0)) {
      dy.col(j) = (df.col(j) - f.col(j) * f.col(j).dot(df.col(j))) / n;
    } else {
      dy.col(j).setZero();
    }
  }
  return dy;
}

template <typename T>
void check_points(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::InvalidInput, "empty batch");
  for (const auto& p : points) {
    if (!p.allFinite()) throw Error(ErrorCode::InvalidInput, "non-finite point");
  }
}

}  // namespace

template <typename T>
void FieldGrad<T>::reset() {
  const std::size_t F = mark.empty() ? 0 : grid.size() / mark.size();
  for (std::uint32_t r : touched) {
    std::fill_n(grid.begin() + static_cast<std::ptrdiff_t>(r * F), F, T(0));
    mark[r] = 0;
  }
  touched.clear();
  w1.setZero();
  wv.setZero();
  ws.setZero();
  b1.setZero();
  bv.setZero();
  bs.setZero();
  log_tau = 0;
}

template <typename T>
BasicField<T> BasicField<T>::init(const hashgrid::HashGridConfig& grid_config, std::size_t vl_dim,
                                  std::size_t sem_dim, int hidden, const LossConfig& loss,
                                  std::uint64_t seed, Activation activation) {
  if (hidden < 1 || vl_dim < 1 || sem_dim < 1) {
    throw Error(ErrorCode::InvalidConfig, "field dimensions must be positive");
  }
  BasicField f;
  f.grid = hashgrid::BasicHashGrid<T>::init(grid_config, seed);
  const int d = grid_config.dim();
  Rng rng(hash_combine(seed, 0x4D4C50u));
  f.w1.resize(hidden, d);
  f.b1.resize(hidden);
  f.wv.resize(static_cast<Eigen::Index>(vl_dim), hidden);
  f.bv.resize(static_cast<Eigen::Index>(vl_dim));
  f.ws.resize(static_cast<Eigen::Index>(sem_dim), hidden);
  f.bs.resize(static_cast<Eigen::Index>(sem_dim));
  uniform_fill(rng, f.w1, 1.0 / std::sqrt(static_cast<double>(d)));
  uniform_fill(rng, f.b1, 1.0 / std::sqrt(static_cast<double>(d)));
  uniform_fill(rng, f.wv, 1.0 / std::sqrt(static_cast<double>(hidden)));
  uniform_fill(rng, f.bv, 1.0 / std::sqrt(static_cast<double>(hidden)));
  uniform_fill(rng, f.ws, 1.0 / std::sqrt(static_cast<double>(hidden)));
  uniform_fill(rng, f.bs, 1.0 / std::sqrt(static_cast<double>(hidden)));
  f.log_tau = static_cast<T>(loss.log_tau_init);
  f.activation = activation;
  return f;
}

template <typename T>
T BasicField<T>::tau() const {
  return std::exp(log_tau);
}

template <typename T>
void BasicField<T>::forward(std::span<const Vec3> points, ForwardCache<T>& c) const {
  check_points<T>(points);
  const auto B = static_cast<Eigen::Index>(points.size());
  const int d = grid.dim();
  c.corners.resize(points.size());
  c.enc.resize(d, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    grid.locate(points[static_cast<std::size_t>(j)], c.corners[static_cast<std::size_t>(j)]);
    grid.gather(c.corners[static_cast<std::size_t>(j)], c.enc.col(j).data());
  }
  c.pre.noalias() = w1 * c.enc;
  c.pre.colwise() += b1;
  c.act.resize(c.pre.rows(), c.pre.cols());
  if (activation == Activation::Softplus) {
    // max(x, 0) + log1p(exp(-|x|)), in vectorized array form.
    c.act.array() = c.pre.array().max(T(0)) + (-c.pre.array().abs()).exp().log1p();
  } else {
    c.act = c.pre.cwiseMax(T(0));
  }
  c.yv.noalias() = wv * c.act;
  c.yv.colwise() += bv;
  c.ys.noalias() = ws * c.act;
  c.ys.colwise() += bs;
  normalize_columns(c.yv, c.out.fv);
  normalize_columns(c.ys, c.out.fs);
}

template <typename T>
FieldOutput<T> BasicField<T>::forward(std::span<const Vec3> points) const {
  ForwardCache<T> c;
  forward(points, c);
  return std::move(c.out);
}

template <typename T>
FieldGrad<T> BasicField<T>::make_grad() const {
  FieldGrad<T> g;
  g.grid.assign(grid.params().size(), T(0));
  g.mark.assign(grid.config().table_rows() * static_cast<std::size_t>(grid.config().levels), 0);
  g.w1 = Mat<T>::Zero(w1.rows(), w1.cols());
  g.wv = Mat<T>::Zero(wv.rows(), wv.cols());
  g.ws = Mat<T>::Zero(ws.rows(), ws.cols());
  g.b1 = Col<T>::Zero(b1.size());
  g.bv = Col<T>::Zero(bv.size());
  g.bs = Col<T>::Zero(bs.size());
  return g;
}

template <typename T>
void BasicField<T>::backward(const ForwardCache<T>& c, const Mat<T>& dfv, const Mat<T>& dfs,
                             FieldGrad<T>& g) const {
  const Mat<T> dyv = normalize_backward(c.yv, c.out.fv, dfv);
  const Mat<T> dys = normalize_backward(c.ys, c.out.fs, dfs);
  g.wv.noalias() += dyv * c.act.transpose();
  g.bv += dyv.rowwise().sum();
  g.ws.noalias() += dys * c.act.transpose();
  g.bs += dys.rowwise().sum();
  Mat<T> dpre = wv.transpose() * dyv;
  dpre.noalias() += ws.transpose() * dys;
  if (activation == Activation::Softplus) {
    dpre.array() *= c.pre.array().logistic();
  } else {
    dpre.array() *= (c.pre.array() > T(0)).template cast<T>();
  }
  g.w1.noalias() += dpre * c.enc.transpose();
  g.b1 += dpre.rowwise().sum();
  const Mat<T> denc = w1.transpose() * dpre;
  for (std::size_t j = 0; j < c.corners.size(); ++j) {
    const auto& corners = c.corners[j];
    grid.scatter(corners, denc.col(static_cast<Eigen::Index>(j)).data(), g.grid.data());
    for (std::uint32_t r : corners.rows) {
      if (!g.mark[r]) {
        g.mark[r] = 1;
        g.touched.push_back(r);
      }
    }
  }
}

template <typename T>
template <typename U>
BasicField<U> BasicField<T>::cast() const {
  BasicField<U> o;
  o.grid = hashgrid::BasicHashGrid<U>(grid.config());
  std::transform(grid.params().begin(), grid.params().end(), o.grid.params().begin(),
                 [](T x) { return static_cast<U>(x); });
  o.w1 = w1.template cast<U>();
  o.b1 = b1.template cast<U>();
  o.wv = wv.template cast<U>();
  o.bv = bv.template cast<U>();
  o.ws = ws.template cast<U>();
  o.bs = bs.template cast<U>();
  o.log_tau = static_cast<U>(log_tau);
  o.activation = activation;
  return o;
}

template <typename T>
bool BasicField<T>::operator==(const BasicField& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return grid.config() == o.grid.config() && grid.params() == o.grid.params() &&
         same(w1, o.w1) && same(b1, o.b1) && same(wv, o.wv) && same(bv, o.bv) &&
         same(ws, o.ws) && same(bs, o.bs) && log_tau == o.log_tau && activation == o.activation;
}

template <typename T>
T contrastive_loss(const Mat<T>& f, const Mat<T>& e, const Col<T>& w, T tau, Mat<T>* d_f,
                   T* d_tau) {
  const Eigen::Index B = f.cols();
  if (B < 2) throw Error(ErrorCode::BatchTooSmall, "contrastive loss needs at least 2 samples");
  if (e.cols() != B || w.size() != B || e.rows() != f.rows()) {
    throw Error(ErrorCode::DimMismatch, "contrastive loss operands disagree");
  }
  const Mat<T> raw = f.transpose() * e;  // B x B
  const Mat<T> s = tau * raw;
  const Col<T> row_max = s.rowwise().maxCoeff();
  const Eigen::Matrix<T, 1, Eigen::Dynamic> col_max = s.colwise().maxCoeff();
  Mat<T> p = (s.colwise() - row_max).array().exp().matrix();
  Mat<T> q = (s.rowwise() - col_max).array().exp().matrix();
  const Col<T> row_z = p.rowwise().sum();
  const Eigen::Matrix<T, 1, Eigen::Dynamic> col_z = q.colwise().sum();
  p = row_z.cwiseInverse().asDiagonal() * p;
  q = q * col_z.cwiseInverse().asDiagonal();
  T loss = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    loss += w(i) * (row_max(i) + std::log(row_z(i)) - s(i, i));
    loss += w(i) * (col_max(i) + std::log(col_z(i)) - s(i, i));
  }
  const T inv_b = T(1) / static_cast<T>(B);
  loss *= inv_b;
  if (d_f != nullptr || d_tau != nullptr) {
    // d loss / d Sim.
    Mat<T> g = w.asDiagonal() * p;
    g.noalias() += q * w.asDiagonal();
    g.diagonal() -= T(2) * w;
    g *= inv_b;
    if (d_f != nullptr) *d_f = tau * (e * g.transpose());
    if (d_tau != nullptr) *d_tau = (g.array() * raw.array()).sum();
  }
  return loss;
}

namespace {

template <typename T>
T branch_pair(const BasicField<T>& field, const std::vector<Vec3>& pos, const Mat<T>& ev,
              const Mat<T>& es, const Col<T>& wv, const Col<T>& ws, const LossConfig& cfg,
              FieldGrad<T>* grad) {
  ForwardCache<T> cache;
  field.forward(pos, cache);
  const T tau = field.tau();
  Mat<T> dfv, dfs;
  T dtau_v = 0, dtau_s = 0;
  const bool need = grad != nullptr;
  const T lv = contrastive_loss(cache.out.fv, ev, wv, tau, need ? &dfv : nullptr,
                                need ? &dtau_v : nullptr);
  const T ls = contrastive_loss(cache.out.fs, es, ws, tau, need ? &dfs : nullptr,
                                need ? &dtau_s : nullptr);
  const T kv = static_cast<T>(cfg.weight_v), ks = static_cast<T>(cfg.weight_s);
  if (need) {
    dfv *= kv;
    dfs *= ks;
    field.backward(cache, dfv, dfs, *grad);
    if (cfg.learn_tau) grad->log_tau += tau * (kv * dtau_v + ks * dtau_s);
  }
  return kv * lv + ks * ls;
}

template <typename T, typename Get>
T total_loss_impl(const BasicField<T>& field, std::size_t n, std::size_t dv, std::size_t ds,
                  Get&& get, const LossConfig& cfg, FieldGrad<T>* grad) {
  if (dv != field.vl_dim() || ds != field.sem_dim()) {
    throw Error(ErrorCode::DimMismatch, "cloud dims differ from the field heads");
  }
  const auto B = static_cast<Eigen::Index>(n);
  std::vector<Vec3> pos(n);
  Mat<T> ev(static_cast<Eigen::Index>(dv), B), es(static_cast<Eigen::Index>(ds), B);
  Col<T> wv(B), ws(B);
  for (std::size_t j = 0; j < n; ++j) {
    const embed::FeaturePoint& p = get(j);
    if (p.ev.size() != dv || p.es.size() != ds) {
      throw Error(ErrorCode::DimMismatch, "feature point dims differ from the field heads");
    }
    pos[j] = p.position.template cast<double>();
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t k = 0; k < dv; ++k) ev(static_cast<Eigen::Index>(k), jj) = p.ev[k];
    for (std::size_t k = 0; k < ds; ++k) es(static_cast<Eigen::Index>(k), jj) = p.es[k];
    wv(jj) = cfg.use_point_weights ? std::exp(-static_cast<T>(p.dist)) : T(1);
    ws(jj) = cfg.use_point_weights ? static_cast<T>(p.conf) : T(1);
  }
  return branch_pair(field, pos, ev, es, wv, ws, cfg, grad);
}

}  // namespace

template <typename T>
T total_loss(const BasicField<T>& field, std::span<const embed::FeaturePoint> batch,
             const LossConfig& config, FieldGrad<T>* grad) {
  if (batch.empty()) throw Error(ErrorCode::BatchTooSmall, "empty batch");
  return total_loss_impl(
      field, batch.size(), batch[0].ev.size(), batch[0].es.size(),
      [&](std::size_t j) -> const embed::FeaturePoint& { return batch[j]; }, config, grad);
}

template <typename T>
T total_loss(const BasicField<T>& field, const embed::FeaturePointCloud& cloud,
             std::span<const std::size_t> batch, const LossConfig& config, FieldGrad<T>* grad) {
  return total_loss_impl(
      field, batch.size(), cloud.vl_dim, cloud.sem_dim,
      [&](std::size_t j) -> const embed::FeaturePoint& { return cloud.points.at(batch[j]); },
      config, grad);
}

#define LOPMAP_INSTANTIATE(T)                                                                   \
  template struct FieldGrad<T>;                                                                 \
  template class BasicField<T>;                                                                 \
  template T contrastive_loss(const Mat<T>&, const Mat<T>&, const Col<T>&, T, Mat<T>*, T*);     \
  template T total_loss(const BasicField<T>&, std::span<const embed::FeaturePoint>,             \
                        const LossConfig&, FieldGrad<T>*);                                      \
  template T total_loss(const BasicField<T>&, const embed::FeaturePointCloud&,                  \
                        std::span<const std::size_t>, const LossConfig&, FieldGrad<T>*);

LOPMAP_INSTANTIATE(float)
LOPMAP_INSTANTIATE(double)
#undef LOPMAP_INSTANTIATE

template BasicField<double> BasicField<float>::cast<double>() const;
template BasicField<float> BasicField<double>::cast<float>() const;
template BasicField<float> BasicField<float>::cast<float>() const;

}  // namespace lopmap::field
