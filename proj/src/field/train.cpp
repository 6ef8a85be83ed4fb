#include "lopmap/field/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lopmap/error.hpp"
#include "lopmap/rng.hpp"

namespace lopmap::field {
namespace {

struct Adam {
  std::vector<float> m, v;
  void resize(std::size_t n) {
    m.assign(n, 0.0f);
    v.assign(n, 0.0f);
  }
};

struct Optimizer {
  explicit Optimizer(const TrainConfig& c) : cfg(c) {}
  const TrainConfig& cfg;
  Adam grid, w1, b1, wv, bv, ws, bs, tau;
  long step = 0;
  double lr = 0.0;
  double c1 = 1.0, c2 = 1.0;

  void begin_step(double learning_rate) {
    ++step;
    lr = learning_rate;
    c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  }

  void update(float* p, const float* g, std::size_t n, Adam& st, std::size_t offset = 0) const {
    const float b1 = static_cast<float>(cfg.beta1), b2 = static_cast<float>(cfg.beta2);
    const float step_size = static_cast<float>(lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(cfg.epsilon);
    float* m = st.m.data() + offset;
    float* v = st.v.data() + offset;
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      p[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
};

TrainResult run(LopField field, const embed::FeaturePointCloud& cloud, const TrainConfig& tcfg,
                const LossConfig& lcfg, const EpochCallback& on_epoch) {
  tcfg.validate();
  if (cloud.points.empty()) throw Error(ErrorCode::NoData, "empty feature cloud");
  if (cloud.vl_dim != field.vl_dim() || cloud.sem_dim != field.sem_dim()) {
    throw Error(ErrorCode::DimMismatch,
                "cloud dims (" + std::to_string(cloud.vl_dim) + ", " +
                    std::to_string(cloud.sem_dim) + ") differ from the field heads (" +
                    std::to_string(field.vl_dim()) + ", " + std::to_string(field.sem_dim()) + ")");
  }
  const std::size_t batch = std::min(tcfg.batch_size, cloud.points.size());
  if (batch < 2) throw Error(ErrorCode::BatchTooSmall, "cloud has fewer than 2 points");
  const std::size_t steps = std::max<std::size_t>(1, tcfg.samples_per_epoch / batch);
  const int F = field.grid.config().features;
  const float log_tau_lo = static_cast<float>(std::log(lcfg.tau_min));
  const float log_tau_hi = static_cast<float>(std::log(lcfg.tau_max));

  Optimizer opt(tcfg);
  opt.grid.resize(field.grid.params().size());
  opt.w1.resize(static_cast<std::size_t>(field.w1.size()));
  opt.b1.resize(static_cast<std::size_t>(field.b1.size()));
  opt.wv.resize(static_cast<std::size_t>(field.wv.size()));
  opt.bv.resize(static_cast<std::size_t>(field.bv.size()));
  opt.ws.resize(static_cast<std::size_t>(field.ws.size()));
  opt.bs.resize(static_cast<std::size_t>(field.bs.size()));
  opt.tau.resize(1);

  FieldGrad<float> grad = field.make_grad();
  TrainResult result;
  std::uint64_t draws = 0;
  std::vector<std::size_t> order = weighted_permutation(cloud, hash_combine(tcfg.seed, draws++));
  std::size_t cursor = 0;

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double lr = tcfg.learning_rate * std::pow(1.0 - tcfg.lr_decay, epoch);
    double sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      if (cursor + batch > order.size()) {
        order = weighted_permutation(cloud, hash_combine(tcfg.seed, draws++));
        cursor = 0;
      }
      const std::span<const std::size_t> idx(order.data() + cursor, batch);
      cursor += batch;

      grad.reset();
      sum += total_loss(field, cloud, idx, lcfg, &grad);

      opt.begin_step(lr);
      std::sort(grad.touched.begin(), grad.touched.end());
      for (std::uint32_t r : grad.touched) {
        const std::size_t off = static_cast<std::size_t>(r) * F;
        opt.update(field.grid.params().data() + off, grad.grid.data() + off, F, opt.grid, off);
      }
      opt.update(field.w1.data(), grad.w1.data(), opt.w1.m.size(), opt.w1);
      opt.update(field.b1.data(), grad.b1.data(), opt.b1.m.size(), opt.b1);
      opt.update(field.wv.data(), grad.wv.data(), opt.wv.m.size(), opt.wv);
      opt.update(field.bv.data(), grad.bv.data(), opt.bv.m.size(), opt.bv);
      opt.update(field.ws.data(), grad.ws.data(), opt.ws.m.size(), opt.ws);
      opt.update(field.bs.data(), grad.bs.data(), opt.bs.m.size(), opt.bs);
      if (lcfg.learn_tau) {
        opt.update(&field.log_tau, &grad.log_tau, 1, opt.tau);
      }
      field.log_tau = std::clamp(field.log_tau, log_tau_lo, log_tau_hi);
    }
    const double mean = sum / static_cast<double>(steps);
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.field = std::move(field);
  return result;
}

}  // namespace

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.batch_size = 12544;
  c.epochs = 100;
  c.samples_per_epoch = 3000000;
  c.learning_rate = 1e-4;
  c.lr_decay = 3e-3;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error(ErrorCode::BatchTooSmall, "batch_size must be >= 2");
  if (epochs < 1) throw Error(ErrorCode::InvalidConfig, "epochs must be >= 1");
  if (samples_per_epoch < 1) throw Error(ErrorCode::InvalidConfig, "samples_per_epoch must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be > 0");
  if (!(lr_decay >= 0.0 && lr_decay < 1.0)) throw Error(ErrorCode::InvalidConfig, "lr_decay must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be > 0");
  if (hidden < 1) throw Error(ErrorCode::InvalidConfig, "hidden must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"epochs", epochs},
          {"samples_per_epoch", samples_per_epoch}, {"learning_rate", learning_rate},
          {"lr_decay", lr_decay}, {"beta1", beta1}, {"beta2", beta2}, {"epsilon", epsilon},
          {"hidden", hidden}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<int>();
    c.samples_per_epoch = j.at("samples_per_epoch").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.lr_decay = j.at("lr_decay").get<double>();
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.hidden = j.value("hidden", c.hidden);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("train config: ") + e.what());
  }
  return c;
}

Aabb cloud_bounds(const embed::FeaturePointCloud& cloud, double margin) {
  Aabb b;
  for (const auto& p : cloud.points) b.expand(p.position.cast<double>());
  if (b.empty()) throw Error(ErrorCode::NoData, "empty feature cloud");
  b.min.array() -= margin;
  b.max.array() += margin;
  return b;
}

std::vector<std::size_t> weighted_permutation(const embed::FeaturePointCloud& cloud,
                                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<double, std::size_t>> keys(cloud.points.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    // log(u^(1/w)); larger keys come first.
    keys[i] = {std::log(u) / std::max(1e-6, static_cast<double>(cloud.points[i].weight)), i};
  }
  std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::size_t> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) out[i] = keys[i].second;
  return out;
}

TrainResult train(const embed::FeaturePointCloud& cloud, const hashgrid::HashGridConfig& grid,
                  const TrainConfig& tcfg, const LossConfig& lcfg, const EpochCallback& on_epoch) {
  tcfg.validate();
  if (cloud.points.empty()) throw Error(ErrorCode::NoData, "empty feature cloud");
  LopField field = LopField::init(grid, cloud.vl_dim, cloud.sem_dim, tcfg.hidden, lcfg, tcfg.seed);
  return run(std::move(field), cloud, tcfg, lcfg, on_epoch);
}

TrainResult fine_tune(LopField field, const embed::FeaturePointCloud& cloud,
                      const TrainConfig& tcfg, const LossConfig& lcfg,
                      const EpochCallback& on_epoch) {
  return run(std::move(field), cloud, tcfg, lcfg, on_epoch);
}

}  // namespace lopmap::field
