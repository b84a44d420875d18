#include "mrp/geometry.hpp"

#include <cmath>
#include <numbers>

#include "mrp/errors.hpp"

namespace mrp {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw DomainError("image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw DomainError("principal point outside the image");
}

Mat3 Intrinsics::matrix() const {
  Mat3 K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

Pose Pose::from_row_major(const std::array<double, 12>& v) {
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[3 * r + c];
  p.translation = Vec3(v[9], v[10], v[11]);
  return p;
}

std::array<double, 12> Pose::to_row_major() const {
  std::array<double, 12> v{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[3 * r + c] = rotation(r, c);
  v[9] = translation.x();
  v[10] = translation.y();
  v[11] = translation.z();
  return v;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

PixelPoint project(const CameraPoint& x, const Intrinsics& K) {
  return {K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy};
}

CameraPoint backproject(const PixelPoint& u, double depth, const Intrinsics& K) {
  if (!(depth > 0.0)) throw DomainError("backprojection needs a positive depth");
  if (!u.allFinite()) throw DomainError("pixel coordinates must be finite");
  return {(u.x() - K.cx) / K.fx * depth, (u.y() - K.cy) / K.fy * depth, depth};
}

CameraPoint transform(const Pose& h, const CameraPoint& x) { return h * x; }

double residual(const CameraPoint& x, const CameraPoint& x_prime, const Pose& h) {
  return (h * x - x_prime).norm();
}

PixelPoint grid_to_pixel(const Vec2& offset, const GridCell& cell) {
  if (!(offset.x() >= 0.0 && offset.x() <= 1.0 && offset.y() >= 0.0 && offset.y() <= 1.0))
    throw DomainError("keypoint offset outside [0,1]^2");
  return {cell.f * (offset.x() + cell.i), cell.f * (offset.y() + cell.j)};
}

Mat3 axis_angle(const Vec3& axis, double angle_rad) {
  if (axis.norm() == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

double rotation_angle_deg(const Mat3& R) {
  // atan2 of (sin, cos) keeps precision at both ends of the range.
  const Vec3 axis_sin(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double s = 0.5 * axis_sin.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

}  // namespace mrp
