#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mrp/geometry.hpp"
#include "mrp/kabsch.hpp"

namespace mrp {

/// Virtual 3D points used by the reprojection loss, in the query camera frame.
struct VirtualGrid {
  std::vector<Vec3> points;
  std::size_t size() const { return points.size(); }
};

/// Axis-aligned lattice with `counts` samples per axis spanning a box of
/// `dims` meters (inclusive: samples sit on both faces) centered at `center`.
VirtualGrid virtual_grid(const Vec3& dims, const std::array<int, 3>& counts,
                         const Vec3& center = Vec3::Zero());

/// Same lattice built from a uniform `spacing`: floor(dim / spacing) + 1
/// samples per axis.
VirtualGrid virtual_grid(const Vec3& dims, double spacing, const Vec3& center = Vec3::Zero());

struct VirtualGridSpec {
  Vec3 dims = Vec3(2.1, 1.2, 2.1);
  std::array<int, 3> counts = {7, 4, 7};
  Vec3 center = Vec3(0.0, 0.0, 2.85);  // near face 1.8 m in front of the camera
};

VirtualGrid virtual_grid(const VirtualGridSpec& spec);

/// 196 points: 7x4x7 over 2.1 x 1.2 x 2.1 m in front of the camera.
VirtualGrid default_virtual_grid();

/// Depth used for virtual points that land behind the camera.
inline constexpr double kMinProjectionDepth = 1e-6;

struct VcreResult {
  double value = 0.0;  // pixels
  int clamped = 0;     // points that fell behind the camera
  bool high_error() const { return clamped > 0; }
};

/// Mean pixel distance between pi(v) and pi(h * gt^-1 * v) over the grid.
VcreResult vcre(const Pose& h, const Pose& gt, const Intrinsics& K, const VirtualGrid& grid);

/// d vcre / d h (rotation treated as an unconstrained matrix).
PoseGradient vcre_gradient(const Pose& h, const Pose& gt, const Intrinsics& K,
                           const VirtualGrid& grid);

struct NullHypothesis {
  bool enabled = true;
  double score = 0.0;  // s0, soft-inlier units
  double loss = 120.0; // VCRE max, pixels
};

/// s0 = fraction * |Y|.
NullHypothesis make_null_hypothesis(double score_fraction, std::size_t set_size, double vcre_max,
                                    bool enabled = true);

struct ExpectedLoss {
  double value = 0.0;
  std::vector<double> weights;   // softmax weight of each hypothesis
  double null_weight = 0.0;
  std::vector<double> d_scores;  // d value / d score_k
  std::vector<double> d_losses;  // d value / d loss_k
};

/// Exact softmax(score)-weighted loss over the hypotheses plus the optional
/// null hypothesis.
ExpectedLoss expected_set_loss(std::span<const double> scores, std::span<const double> losses,
                               const NullHypothesis& null_hypothesis);

/// One correspondence-set draw: its loss, the gradient of its log sampling
/// probability, and the gradient of its loss along the differentiable path.
/// Both vectors live in the same parameter space.
struct ReinforceSample {
  double loss = 0.0;
  Eigen::VectorXd score_function;
  Eigen::VectorXd pathwise;
};

/// (1/Q) sum_q [(l_q - mean l) dlogP_q + dl_q]. Needs Q >= 2.
Eigen::VectorXd reinforce_gradients(std::span<const ReinforceSample> samples);

struct CurriculumSchedule {
  double start_fraction = 0.3;
  double increment_fraction = 0.1;
  long increment_interval = 4000;
  double max_fraction = 0.8;
  long warmup_end = 20000;

  void validate() const;
  int min_pairs(int batch) const;
  int max_pairs(int batch) const;
  /// Number of pairs used at `iteration` for a batch of `batch` pairs.
  int size(int batch, long iteration) const;
};

/// Indices of the size(batch, iteration) lowest losses, ties by index,
/// returned in ascending index order.
std::vector<int> curriculum_select(std::span<const double> losses, long iteration,
                                   const CurriculumSchedule& schedule);

}  // namespace mrp
