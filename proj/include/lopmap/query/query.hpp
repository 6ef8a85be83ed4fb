#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lopmap/embed/provider.hpp"
#include "lopmap/field/field.hpp"
#include "lopmap/geometry.hpp"

namespace lopmap::query {

/// Anything that maps positions to unit (or zero) feature columns.
class FeatureField {
 public:
  virtual ~FeatureField() = default;
  virtual std::size_t vl_dim() const = 0;
  virtual std::size_t sem_dim() const = 0;
  virtual field::FieldOutput<float> evaluate(std::span<const Vec3> points) const = 0;
};

/// Adapter over a trained field; evaluates in fixed-size chunks.
class NeuralFeatureField final : public FeatureField {
 public:
  explicit NeuralFeatureField(const field::LopField& f, std::size_t chunk = 4096)
      : field_(f), chunk_(chunk) {}
  std::size_t vl_dim() const override { return field_.vl_dim(); }
  std::size_t sem_dim() const override { return field_.sem_dim(); }
  field::FieldOutput<float> evaluate(std::span<const Vec3> points) const override;

 private:
  const field::LopField& field_;
  std::size_t chunk_;
};

/// Wraps a callable; handy for fixed fields in tests and tools.
class FunctionFeatureField final : public FeatureField {
 public:
  using Fn = std::function<field::FieldOutput<float>(std::span<const Vec3>)>;
  FunctionFeatureField(std::size_t dv, std::size_t ds, Fn fn) : dv_(dv), ds_(ds), fn_(std::move(fn)) {}
  std::size_t vl_dim() const override { return dv_; }
  std::size_t sem_dim() const override { return ds_; }
  field::FieldOutput<float> evaluate(std::span<const Vec3> points) const override {
    return fn_(points);
  }

 private:
  std::size_t dv_, ds_;
  Fn fn_;
};

/// Candidate labels with one unit column per label in each space.
struct LabelBank {
  std::vector<std::string> labels;
  field::Mat<float> ev;  // dv x n
  field::Mat<float> es;  // ds x n

  /// Embeds every label as text. Throws InvalidLabel on empty or repeated labels.
  static LabelBank from_provider(std::vector<std::string> labels,
                                 const embed::EmbeddingProvider& provider);
  /// Columns are renormalized. Throws InvalidLabel, DimMismatch.
  static LabelBank from_embeddings(std::vector<std::string> labels,
                                   const std::vector<embed::TextEmbedding>& embeddings);

  std::size_t size() const { return labels.size(); }
};

struct Attribute {
  std::size_t index = 0;
  std::string label;
  std::vector<float> scores;  // one per bank label
};

inline constexpr double kDefaultVsWeight = 0.5;
inline constexpr std::size_t kDefaultTopK = 50;

/// score_j = w cos(f_v, E_v[j]) + (1 - w) cos(f_s, E_s[j]); lowest index wins ties.
/// Throws NoData for an empty bank, UndefinedEmbedding when a weighted branch
/// of the field output is zero, InvalidInput for w outside [0, 1].
Attribute infer_attribute(const FeatureField& field, const Vec3& p, const LabelBank& bank,
                          double w = kDefaultVsWeight);
std::vector<Attribute> infer_attributes(const FeatureField& field, std::span<const Vec3> points,
                                        const LabelBank& bank, double w = kDefaultVsWeight);

struct Heatmap {
  std::vector<Vec3> points;
  std::vector<float> scores;
  std::size_t best = 0;
};

struct Localization {
  Heatmap heatmap;
  std::vector<std::size_t> top;  // indices into heatmap.points, best first
  Vec3 position = Vec3::Zero();  // score-weighted centroid of `top`
};

/// Scores every sample against one target pair. Throws NoSamples, DimMismatch.
Localization localize(const FeatureField& field, const embed::TextEmbedding& target,
                      std::span<const Vec3> samples, double w = kDefaultVsWeight,
                      std::size_t k = kDefaultTopK);

Localization localize_text(const FeatureField& field, std::string_view query,
                           const embed::EmbeddingProvider& provider,
                           std::span<const Vec3> samples, double w = kDefaultVsWeight,
                           std::size_t k = kDefaultTopK);

/// Vision branch only; any w other than 1 is InvalidInput.
Localization localize_image(const FeatureField& field, const embed::Embedding& image,
                            std::span<const Vec3> samples, double w = 1.0,
                            std::size_t k = kDefaultTopK);

/// Centroid weights of the top-k: scores clipped at zero, uniform if none is positive.
std::vector<double> top_weights(const Localization& loc);

/// Weighted mean over the top-k of the distance to the nearest target point.
/// Throws NoData when `targets` is empty.
double weighted_distance(const Localization& loc, std::span<const Vec3> targets);

/// Cell centres of a regular grid over `bounds`. Throws InvalidConfig for step <= 0.
std::vector<Vec3> grid_samples(const Aabb& bounds, double step = 0.25);

/// Header "x,y,z,score", then one row per sample.
void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& heatmap);

/// Max score per top-down cell. Header "ix,iy,x,y,score"; empty cells are omitted.
void write_topdown_csv(const std::filesystem::path& path, const Heatmap& heatmap,
                       double cell = 0.25);

}  // namespace lopmap::query
