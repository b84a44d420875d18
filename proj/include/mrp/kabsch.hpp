#pragma once

#include <span>
#include <vector>

#include "mrp/geometry.hpp"

namespace mrp {

/// Weighted 3D-3D rigid alignment: find h minimizing sum w_k |h(source_k) - target_k|^2.
/// Empty `weights` means uniform.
struct AlignmentProblem {
  std::vector<Vec3> source;
  std::vector<Vec3> target;
  std::vector<double> weights;

  std::size_t size() const { return source.size(); }
  double weight(std::size_t k) const { return weights.empty() ? 1.0 : weights[k]; }
};

/// Everything the backward pass needs from a forward solve.
struct KabschSolution {
  Pose pose;
  Vec3 source_mean = Vec3::Zero();
  Vec3 target_mean = Vec3::Zero();
  Mat3 U = Mat3::Identity();  // cross-covariance H = U diag(s) V^T
  Mat3 V = Mat3::Identity();
  Vec3 singular_values = Vec3::Zero();
  double reflection_sign = 1.0;
  double total_weight = 0.0;

  /// Smallest eigenvalue of the linear system the rotation differential
  /// solves: s_1 + sign * s_2. Zero means the rotation is not differentiable.
  double gradient_gap() const { return singular_values(1) + reflection_sign * singular_values(2); }
};

/// Upstream gradient of a scalar loss with respect to a pose, treating the
/// rotation as an unconstrained 3x3 matrix.
struct PoseGradient {
  Mat3 rotation = Mat3::Zero();
  Vec3 translation = Vec3::Zero();

  PoseGradient& operator+=(const PoseGradient& o) {
    rotation += o.rotation;
    translation += o.translation;
    return *this;
  }
  PoseGradient operator*(double s) const { return {rotation * s, translation * s}; }
};

struct KabschGradient {
  std::vector<Vec3> source;
  std::vector<Vec3> target;
  std::vector<double> weights;
};

/// Relative tolerance below which the covariance is treated as rank deficient.
inline constexpr double kKabschRankTolerance = 1e-12;
/// Relative gap below which kabsch_vjp refuses to differentiate.
inline constexpr double kKabschGradientGapTolerance = 1e-8;

/// Throws DegenerateConfigurationError when the centered cross-covariance has
/// rank < 2, ValidationError on malformed input.
KabschSolution kabsch_solve(const AlignmentProblem& problem);
Pose kabsch(const AlignmentProblem& problem);

/// Vector-Jacobian product of kabsch. Throws IllConditionedGradientError when
/// the rotation differential is nearly singular. The reflection sign is held
/// fixed.
KabschGradient kabsch_vjp(const AlignmentProblem& problem, const KabschSolution& solution,
                          const PoseGradient& upstream);
KabschGradient kabsch_vjp(const AlignmentProblem& problem, const PoseGradient& upstream);

}  // namespace mrp
