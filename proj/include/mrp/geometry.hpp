#pragma once

#include <array>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mrp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

using PixelPoint = Vec2;
using CameraPoint = Vec3;

/// Pinhole camera. No distortion.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws DomainError when the invariants do not hold.
  void validate() const;
  Mat3 matrix() const;
  bool operator==(const Intrinsics&) const = default;
};

/// Rigid transform. Convention: x' = R x + t maps coordinates expressed in the
/// frame of image I into the frame of image I'.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose from_row_major(const std::array<double, 12>& values);
  std::array<double, 12> to_row_major() const;

  Pose inverse() const;
  /// (a * b)(x) = a(b(x)).
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  /// Orthonormality and det(R) = +1 within `tol`.
  bool is_valid(double tol = 1e-9) const;
  bool operator==(const Pose& other) const {
    return rotation == other.rotation && translation == other.translation;
  }
};

/// Integer grid position of a keypoint cell; `f` is the number of pixels per
/// cell side.
struct GridCell {
  int i = 0;
  int j = 0;
  int f = 14;
};

PixelPoint project(const CameraPoint& x, const Intrinsics& K);
CameraPoint backproject(const PixelPoint& u, double depth, const Intrinsics& K);
CameraPoint transform(const Pose& h, const CameraPoint& x);

/// Euclidean distance between h(x) and x'.
double residual(const CameraPoint& x, const CameraPoint& x_prime, const Pose& h);

/// Absolute pixel position of a keypoint from its in-cell offset in [0,1]^2.
PixelPoint grid_to_pixel(const Vec2& offset, const GridCell& cell);

/// Rotation of `angle_rad` about `axis` (need not be normalized).
Mat3 axis_angle(const Vec3& axis, double angle_rad);

/// Geodesic angle of a rotation matrix in degrees, robust near 0 and 180.
double rotation_angle_deg(const Mat3& R);

/// Skew-symmetric cross-product matrix.
Mat3 skew(const Vec3& v);

}  // namespace mrp
