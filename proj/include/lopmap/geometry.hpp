#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <limits>

namespace lopmap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Axis-aligned box in world coordinates (meters, z-up).
struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  Aabb() = default;
  Aabb(const Vec3& lo, const Vec3& hi) : min(lo), max(hi) {}

  static Aabb from_center_extent(const Vec3& center, const Vec3& extent) {
    return {center - 0.5 * extent, center + 0.5 * extent};
  }

  bool empty() const { return (max.array() < min.array()).any(); }
  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 extent() const { return empty() ? Vec3::Zero() : Vec3(max - min); }
  double volume() const {
    const Vec3 e = extent();
    return e.x() * e.y() * e.z();
  }

  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void expand(const Aabb& other) {
    if (other.empty()) return;
    expand(other.min);
    expand(other.max);
  }

  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= min.array() - tol).all() &&
           (p.array() <= max.array() + tol).all();
  }
  bool contains_xy(const Vec3& p, double tol = 0.0) const {
    return p.x() >= min.x() - tol && p.x() <= max.x() + tol &&
           p.y() >= min.y() - tol && p.y() <= max.y() + tol;
  }

  /// Euclidean distance from p to the box (0 inside).
  double distance(const Vec3& p) const {
    const Vec3 d = (min - p).cwiseMax(p - max).cwiseMax(Vec3::Zero());
    return d.norm();
  }

  bool operator==(const Aabb& o) const { return min == o.min && max == o.max; }
};

inline Aabb intersection(const Aabb& a, const Aabb& b) {
  return {a.min.cwiseMax(b.min), a.max.cwiseMin(b.max)};
}

inline double overlap_volume(const Aabb& a, const Aabb& b) {
  const Aabb i = intersection(a, b);
  if (i.empty()) return 0.0;
  return i.volume();
}

inline double iou(const Aabb& a, const Aabb& b) {
  const double inter = overlap_volume(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace lopmap
