#include "lopmap/scene/camera.hpp"

#include <cmath>
#include <sstream>

#include "lopmap/error.hpp"

namespace lopmap::scene {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0 || cx < 0.0 ||
      cx >= width || cy < 0.0 || cy >= height) {
    std::ostringstream os;
    os << "invalid intrinsics fx=" << fx << " fy=" << fy << " cx=" << cx
       << " cy=" << cy << " size=" << width << "x" << height;
    throw Error(ErrorCode::InvalidInput, os.str());
  }
}

void Pose::validate(double tol) const {
  const Mat3 rtr = rotation.transpose() * rotation;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
      std::abs(rotation.determinant() - 1.0) > tol || !translation.allFinite()) {
    throw Error(ErrorCode::InvalidInput, "pose rotation is not a proper rotation");
  }
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Pose Pose::from_matrix(const Mat4& m) {
  Pose p;
  p.rotation = m.topLeftCorner<3, 3>();
  p.translation = m.topRightCorner<3, 1>();
  return p;
}

Pose Pose::look_at(const Vec3& eye, const Vec3& forward) {
  const Vec3 z = forward.normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Pose p;
  p.rotation.col(0) = x;
  p.rotation.col(1) = y;
  p.rotation.col(2) = z;
  p.translation = eye;
  return p;
}

Vec3 back_project(double u, double v, double depth, const Intrinsics& intr,
                  const Pose& pose) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::InvalidDepth, "depth must be positive");
  }
  if (u < 0.0 || v < 0.0 || u >= intr.width || v >= intr.height) {
    throw Error(ErrorCode::OutOfBounds, "pixel outside raster");
  }
  const Vec3 cam((u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy,
                 depth);
  return pose.rotation * cam + pose.translation;
}

Projection project(const Vec3& world, const Intrinsics& intr, const Pose& pose) {
  const Vec3 cam = pose.rotation.transpose() * (world - pose.translation);
  return {intr.fx * cam.x() / cam.z() + intr.cx, intr.fy * cam.y() / cam.z() + intr.cy,
          cam.z()};
}

Vec3 pixel_ray(double u, double v, const Intrinsics& intr, const Pose& pose) {
  return pose.rotation * Vec3((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
}

Intrinsics intrinsics_from_fov(int width, int height, double horizontal_fov_rad) {
  Intrinsics k;
  k.width = width;
  k.height = height;
  k.fx = 0.5 * width / std::tan(0.5 * horizontal_fov_rad);
  k.fy = k.fx;
  k.cx = 0.5 * (width - 1);
  k.cy = 0.5 * (height - 1);
  return k;
}

}  // namespace lopmap::scene
