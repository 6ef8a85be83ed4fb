#pragma once

#include "lopmap/geometry.hpp"

namespace lopmap::scene {

/// Pinhole intrinsics, pixels.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
  bool operator==(const Intrinsics&) const = default;
};

/// Camera-to-world rigid transform. Camera axes follow the optical
/// convention: x right, y down, z forward.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate(double tol = 1e-6) const;

  Mat4 matrix() const;
  static Pose from_matrix(const Mat4& m);

  /// Camera looking along `forward` (world), with image-up close to world +z.
  static Pose look_at(const Vec3& eye, const Vec3& forward);

  bool operator==(const Pose& o) const {
    return rotation == o.rotation && translation == o.translation;
  }
};

struct Projection {
  double u;
  double v;
  double depth;
};

/// Back-projects pixel (u, v) with z-depth `depth` into the world frame.
/// Throws InvalidDepth for depth <= 0 and OutOfBounds outside the raster.
Vec3 back_project(double u, double v, double depth, const Intrinsics& intr,
                  const Pose& pose);

/// Inverse of back_project; no bounds checks.
Projection project(const Vec3& world, const Intrinsics& intr, const Pose& pose);

/// World-frame ray direction through (u, v) scaled so its camera-z is 1.
Vec3 pixel_ray(double u, double v, const Intrinsics& intr, const Pose& pose);

Intrinsics intrinsics_from_fov(int width, int height, double horizontal_fov_rad);

}  // namespace lopmap::scene
