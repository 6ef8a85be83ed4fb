#include "lopmap/query/query.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "lopmap/error.hpp"

namespace lopmap::query {
namespace {

field::Mat<float> to_columns(const std::vector<embed::Embedding>& rows, std::size_t dim) {
  field::Mat<float> m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != dim) throw Error(ErrorCode::DimMismatch, "label embedding dims differ");
    double n2 = 0;
    for (float x : rows[j]) n2 += static_cast<double>(x) * x;
    if (!(n2 > 0) || !std::isfinite(n2)) {
      throw Error(ErrorCode::UndefinedEmbedding, "label embedding is zero or non-finite");
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t k = 0; k < dim; ++k) {
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          static_cast<float>(rows[j][k] * inv);
    }
  }
  return m;
}

void check_weight(double w) {
  if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::InvalidInput, "v-s weight must be in [0, 1]");
}

void check_dims(const FeatureField& field, std::size_t dv, std::size_t ds) {
  if (field.vl_dim() != dv || field.sem_dim() != ds) {
    throw Error(ErrorCode::DimMismatch, "query dims differ from the field heads");
  }
}

// scores(j, i): sample i against label j.
field::Mat<float> score_matrix(const field::FieldOutput<float>& out, const field::Mat<float>& ev,
                               const field::Mat<float>& es, double w) {
  field::Mat<float> s = field::Mat<float>::Zero(ev.cols(), out.fv.cols());
  if (w > 0.0) s.noalias() += static_cast<float>(w) * (ev.transpose() * out.fv);
  if (w < 1.0) s.noalias() += static_cast<float>(1.0 - w) * (es.transpose() * out.fs);
  return s;
}

}  // namespace

field::FieldOutput<float> NeuralFeatureField::evaluate(std::span<const Vec3> points) const {
  if (points.size() <= chunk_) return field_.forward(points);
  field::FieldOutput<float> out;
  const auto n = static_cast<Eigen::Index>(points.size());
  out.fv.resize(static_cast<Eigen::Index>(vl_dim()), n);
  out.fs.resize(static_cast<Eigen::Index>(sem_dim()), n);
  for (std::size_t at = 0; at < points.size(); at += chunk_) {
    const std::size_t len = std::min(chunk_, points.size() - at);
    const auto part = field_.forward(points.subspan(at, len));
    const auto a = static_cast<Eigen::Index>(at), l = static_cast<Eigen::Index>(len);
    out.fv.middleCols(a, l) = part.fv;
    out.fs.middleCols(a, l) = part.fs;
  }
  return out;
}

LabelBank LabelBank::from_embeddings(std::vector<std::string> labels,
                                     const std::vector<embed::TextEmbedding>& embeddings) {
  if (labels.size() != embeddings.size()) {
    throw Error(ErrorCode::DimMismatch, "one embedding per label expected");
  }
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw Error(ErrorCode::InvalidLabel, "empty label in bank");
    if (!seen.insert(l).second) throw Error(ErrorCode::InvalidLabel, "repeated label '" + l + "'");
  }
  LabelBank bank;
  bank.labels = std::move(labels);
  if (embeddings.empty()) return bank;
  std::vector<embed::Embedding> v, s;
  for (const auto& e : embeddings) {
    v.push_back(e.vl);
    s.push_back(e.sem);
  }
  bank.ev = to_columns(v, embeddings.front().vl.size());
  bank.es = to_columns(s, embeddings.front().sem.size());
  return bank;
}

LabelBank LabelBank::from_provider(std::vector<std::string> labels,
                                   const embed::EmbeddingProvider& provider) {
  std::vector<embed::TextEmbedding> e;
  e.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.empty()) throw Error(ErrorCode::InvalidLabel, "empty label in bank");
    e.push_back(provider.embed_text(l));
  }
  return from_embeddings(std::move(labels), e);
}

std::vector<Attribute> infer_attributes(const FeatureField& field, std::span<const Vec3> points,
                                        const LabelBank& bank, double w) {
  check_weight(w);
  if (bank.size() == 0) throw Error(ErrorCode::NoData, "empty label bank");
  check_dims(field, static_cast<std::size_t>(bank.ev.rows()), static_cast<std::size_t>(bank.es.rows()));
  if (points.empty()) return {};
  const auto out = field.evaluate(points);
  for (Eigen::Index i = 0; i < out.fv.cols(); ++i) {
    if ((w > 0.0 && out.fv.col(i).squaredNorm() == 0.0f) ||
        (w < 1.0 && out.fs.col(i).squaredNorm() == 0.0f)) {
      throw Error(ErrorCode::UndefinedEmbedding, "field output is zero at the query point");
    }
  }
  const auto s = score_matrix(out, bank.ev, bank.es, w);
  std::vector<Attribute> result(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& a = result[i];
    const auto col = s.col(static_cast<Eigen::Index>(i));
    a.scores.assign(col.data(), col.data() + col.size());
    // First maximum, so ties go to the lowest index.
    a.index = static_cast<std::size_t>(std::max_element(a.scores.begin(), a.scores.end()) -
                                       a.scores.begin());
    a.label = bank.labels[a.index];
  }
  return result;
}

Attribute infer_attribute(const FeatureField& field, const Vec3& p, const LabelBank& bank,
                          double w) {
  return infer_attributes(field, std::span<const Vec3>(&p, 1), bank, w).front();
}

Localization localize(const FeatureField& field, const embed::TextEmbedding& target,
                      std::span<const Vec3> samples, double w, std::size_t k) {
  check_weight(w);
  if (samples.empty()) throw Error(ErrorCode::NoSamples, "no sample points to score");
  if (k == 0) throw Error(ErrorCode::InvalidInput, "top-k must be positive");
  const bool use_v = w > 0.0, use_s = w < 1.0;
  if ((use_v && target.vl.size() != field.vl_dim()) || (use_s && target.sem.size() != field.sem_dim())) {
    throw Error(ErrorCode::DimMismatch, "query embedding dims differ from the field heads");
  }
  field::Mat<float> ev = field::Mat<float>::Zero(static_cast<Eigen::Index>(field.vl_dim()), 1);
  field::Mat<float> es = field::Mat<float>::Zero(static_cast<Eigen::Index>(field.sem_dim()), 1);
  if (use_v) ev = to_columns({target.vl}, field.vl_dim());
  if (use_s) es = to_columns({target.sem}, field.sem_dim());

  const auto out = field.evaluate(samples);
  const auto s = score_matrix(out, ev, es, w);
  Localization loc;
  loc.heatmap.points.assign(samples.begin(), samples.end());
  loc.heatmap.scores.assign(s.data(), s.data() + s.size());
  const auto& sc = loc.heatmap.scores;
  loc.heatmap.best =
      static_cast<std::size_t>(std::max_element(sc.begin(), sc.end()) - sc.begin());

  std::vector<std::size_t> order(sc.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                    [&](std::size_t a, std::size_t b) { return sc[a] != sc[b] ? sc[a] > sc[b] : a < b; });
  loc.top.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk));

  const auto wts = top_weights(loc);
  const double total = std::accumulate(wts.begin(), wts.end(), 0.0);
  Vec3 c = Vec3::Zero();
  for (std::size_t i = 0; i < loc.top.size(); ++i) c += wts[i] * samples[loc.top[i]];
  loc.position = c / total;
  return loc;
}

Localization localize_text(const FeatureField& field, std::string_view query,
                           const embed::EmbeddingProvider& provider,
                           std::span<const Vec3> samples, double w, std::size_t k) {
  if (query.empty()) throw Error(ErrorCode::InvalidLabel, "empty text query");
  return localize(field, provider.embed_text(query), samples, w, k);
}

Localization localize_image(const FeatureField& field, const embed::Embedding& image,
                            std::span<const Vec3> samples, double w, std::size_t k) {
  if (image.size() != field.vl_dim()) {
    throw Error(ErrorCode::DimMismatch, "image embedding has " + std::to_string(image.size()) +
                                            " dims, field expects " +
                                            std::to_string(field.vl_dim()));
  }
  if (w != 1.0) {
    throw Error(ErrorCode::InvalidInput, "image queries have no semantic embedding; use w = 1");
  }
  embed::TextEmbedding target;
  target.vl = image;
  return localize(field, target, samples, w, k);
}

std::vector<double> top_weights(const Localization& loc) {
  std::vector<double> w(loc.top.size());
  bool any = false;
  for (std::size_t i = 0; i < loc.top.size(); ++i) {
    w[i] = std::max(0.0, static_cast<double>(loc.heatmap.scores[loc.top[i]]));
    any = any || w[i] > 0.0;
  }
  if (!any) std::fill(w.begin(), w.end(), 1.0);
  return w;
}

double weighted_distance(const Localization& loc, std::span<const Vec3> targets) {
  if (targets.empty()) throw Error(ErrorCode::NoData, "no target points");
  const auto w = top_weights(loc);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < loc.top.size(); ++i) {
    const Vec3& p = loc.heatmap.points[loc.top[i]];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : targets) best = std::min(best, (p - t).squaredNorm());
    num += w[i] * std::sqrt(best);
    den += w[i];
  }
  return num / den;
}

std::vector<Vec3> grid_samples(const Aabb& bounds, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidConfig, "grid step must be positive");
  if (bounds.empty()) throw Error(ErrorCode::InvalidBounds, "empty sampling bounds");
  const Vec3 e = bounds.extent();
  int n[3];
  for (int a = 0; a < 3; ++a) n[a] = std::max(1, static_cast<int>(std::floor(e[a] / step + 1e-9)));
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n[0]) * n[1] * n[2]);
  for (int k = 0; k < n[2]; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i) {
        out.emplace_back(bounds.min.x() + (i + 0.5) * e.x() / n[0],
                         bounds.min.y() + (j + 0.5) * e.y() / n[1],
                         bounds.min.z() + (k + 0.5) * e.z() / n[2]);
      }
    }
  }
  return out;
}

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& heatmap) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "x,y,z,score\n";
  char buf[128];
  for (std::size_t i = 0; i < heatmap.points.size(); ++i) {
    const auto& p = heatmap.points[i];
    std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.6g,%.6g\n", p.x(), p.y(), p.z(),
                  static_cast<double>(heatmap.scores[i]));
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void write_topdown_csv(const std::filesystem::path& path, const Heatmap& heatmap, double cell) {
  if (!(cell > 0.0)) throw Error(ErrorCode::InvalidConfig, "cell size must be positive");
  std::map<std::pair<long, long>, float> best;
  for (std::size_t i = 0; i < heatmap.points.size(); ++i) {
    const auto& p = heatmap.points[i];
    const std::pair<long, long> key{static_cast<long>(std::floor(p.x() / cell)),
                                    static_cast<long>(std::floor(p.y() / cell))};
    auto [it, fresh] = best.emplace(key, heatmap.scores[i]);
    if (!fresh) it->second = std::max(it->second, heatmap.scores[i]);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << "ix,iy,x,y,score\n";
  char buf[160];
  for (const auto& [key, s] : best) {
    std::snprintf(buf, sizeof buf, "%ld,%ld,%.6g,%.6g,%.6g\n", key.first, key.second,
                  (key.first + 0.5) * cell, (key.second + 0.5) * cell, static_cast<double>(s));
    out << buf;
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

}  // namespace lopmap::query
