#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "lopmap/embed/feature_cloud.hpp"
#include "lopmap/field/field.hpp"
#include "lopmap/hashgrid/hashgrid.hpp"

namespace lopmap::field {

/// Shipping defaults are desk scale; paper() returns the large-run values.
struct TrainConfig {
  std::size_t batch_size = 512;
  int epochs = 20;
  std::size_t samples_per_epoch = 50000;
  double learning_rate = 1e-4;
  /// lr at epoch e is learning_rate * (1 - lr_decay)^e.
  double lr_decay = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int hidden = 600;
  std::uint64_t seed = 0;

  static TrainConfig paper();

  /// Throws BatchTooSmall or InvalidConfig.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  bool operator==(const TrainConfig&) const = default;
};

struct TrainResult {
  LopField field;
  std::vector<double> epoch_loss;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Bounds of the cloud positions grown by `margin` on every side.
Aabb cloud_bounds(const embed::FeaturePointCloud& cloud, double margin);

/// Fresh field trained on `cloud`. Deterministic given train.seed.
/// Throws NoData for an empty cloud.
TrainResult train(const embed::FeaturePointCloud& cloud, const hashgrid::HashGridConfig& grid,
                  const TrainConfig& train, const LossConfig& loss,
                  const EpochCallback& on_epoch = {});

/// Continues training an existing field; DimMismatch when the cloud's
/// embedding dims differ from the field heads.
TrainResult fine_tune(LopField field, const embed::FeaturePointCloud& cloud,
                      const TrainConfig& train, const LossConfig& loss,
                      const EpochCallback& on_epoch = {});

/// One weighted-without-replacement ordering of point indices (keys u^(1/w)).
std::vector<std::size_t> weighted_permutation(const embed::FeaturePointCloud& cloud,
                                              std::uint64_t seed);

}  // namespace lopmap::field
