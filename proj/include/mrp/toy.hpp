#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrp/correspondence.hpp"
#include "mrp/geometry.hpp"
#include "mrp/rng.hpp"

namespace mrp {

struct Camera {
  Intrinsics K;
  Pose pose;  // world -> camera
  bool operator==(const Camera&) const = default;
};

struct SceneConfig {
  int grid_width = 8;
  int grid_height = 8;
  int cell_size = 14;
  double focal = 0.0;  // pixels; 0 means "image width"
  int max_points = 0;  // 0 means one per cell at most
  int min_points = 20;
  double depth_min = 2.0;
  double depth_max = 6.0;
  double baseline_min = 0.2;
  double baseline_max = 0.6;
  double rotation_max_deg = 10.0;
  bool fixed_motion = false;  // use fixed_translation / fixed_rotation instead of sampling
  Vec3 fixed_translation = Vec3::Zero();
  Vec3 fixed_rotation = Vec3::Zero();  // axis * angle, radians
  double noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  int descriptor_dim = 128;
  int max_attempts = 50;

  void validate() const;
  Intrinsics intrinsics() const;
};

/// Ground-truth two-view scene. Every point is visible in both views and owns
/// exactly one grid cell in each.
struct SyntheticScene {
  std::string id;
  std::uint64_t seed = 0;
  int grid_width = 8;
  int grid_height = 8;
  int cell_size = 14;
  int descriptor_dim = 128;
  double depth_min = 2.0;
  double depth_max = 6.0;
  double noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  Camera camera_a;
  Camera camera_b;
  Pose gt_relative;            // camera_b.pose * camera_a.pose^-1
  std::vector<Vec3> points;    // world frame
  std::vector<int> outliers;   // indices into points, corrupted in view B

  bool operator==(const SyntheticScene&) const = default;
};

/// Throws GenerationError when fewer than min_points stay visible after
/// max_attempts tries.
SyntheticScene generate_scene(const SceneConfig& cfg, Rng& rng);

/// Where a scene point lands in each view.
struct PointObservation {
  int cell_a = 0;
  int cell_b = 0;
  Vec2 offset_a = Vec2::Zero();
  Vec2 offset_b = Vec2::Zero();
  double depth_a = 0.0;
  double depth_b = 0.0;
};

std::vector<PointObservation> observe(const SyntheticScene& scene);

enum class View { kA = 0, kB = 1 };

/// Per-cell maps with true offsets/depths for occupied cells, high confidence
/// there and low elsewhere, and descriptors shared between the two views.
/// Depth noise (both views) and outlier corruption (view B) come from
/// `render_seed`.
KeypointMaps render_ground_truth_maps(const SyntheticScene& scene, View view,
                                      std::uint64_t render_seed);

inline constexpr double kOccupiedConfidence = 2.0;
inline constexpr double kEmptyConfidence = -2.0;

/// The scene's true correspondences read off the rendered maps, uniform p.
CorrespondenceSet ground_truth_correspondences(const SyntheticScene& scene,
                                               std::uint64_t render_seed);

/// Learnable per-image parameter tables standing in for an encoder and its
/// keypoint heads. Image k's block holds, in order: offset logits (2 per
/// cell), log depths, confidence logits, raw descriptors (dim per cell). One
/// shared dustbin logit sits at the end.
class ToyBackbone {
 public:
  ToyBackbone() = default;
  ToyBackbone(int images, int grid_width, int grid_height, int cell_size, int descriptor_dim);

  int images() const { return images_; }
  int cells() const { return grid_width_ * grid_height_; }
  int grid_width() const { return grid_width_; }
  int grid_height() const { return grid_height_; }
  int cell_size() const { return cell_size_; }
  int descriptor_dim() const { return descriptor_dim_; }
  Eigen::Index parameter_count() const { return params_.size(); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::Index block_size() const { return static_cast<Eigen::Index>(cells()) * (4 + descriptor_dim_); }
  Eigen::Index offset_index(int image) const { return image * block_size(); }
  Eigen::Index depth_index(int image) const { return offset_index(image) + 2 * cells(); }
  Eigen::Index confidence_index(int image) const { return depth_index(image) + cells(); }
  Eigen::Index descriptor_index(int image) const { return confidence_index(image) + cells(); }
  Eigen::Index dustbin_index() const { return images_ * block_size(); }

  double dustbin() const { return params_(dustbin_index()); }
  double& dustbin() { return params_(dustbin_index()); }

  /// Sigmoid offsets, exp depths, raw confidences, L2-normalized descriptors.
  KeypointMaps forward(int image) const;

  /// Sets image `image`'s tables so that forward() reproduces `maps`
  /// (offsets must lie strictly inside (0,1)).
  void load_maps(int image, const KeypointMaps& maps);

 private:
  int images_ = 0;
  int grid_width_ = 0;
  int grid_height_ = 0;
  int cell_size_ = 14;
  int descriptor_dim_ = 0;
  Eigen::VectorXd params_;
};

/// Gradient of a scalar with respect to the quantities in a KeypointMaps.
struct MapsGradient {
  Eigen::Matrix2Xd offsets;
  Eigen::VectorXd depth;
  Eigen::VectorXd confidence;
  Eigen::MatrixXd descriptors;

  static MapsGradient zeros(int cells, int descriptor_dim);
};

/// d/d(offset, depth) of one backprojected cell point given d/dpoint.
void accumulate_point_vjp(const KeypointMaps& maps, int cell, const Intrinsics& K,
                          const Vec3& d_point, MapsGradient& out);

/// Chains a maps gradient through the backbone activations into `grad`
/// (same layout as parameters()).
void backbone_vjp(const ToyBackbone& backbone, int image, const MapsGradient& d_maps,
                  Eigen::VectorXd& grad);

}  // namespace mrp
