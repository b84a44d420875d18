#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "mrp/geometry.hpp"
#include "mrp/rng.hpp"

namespace mrp {

/// Dense per-cell keypoint predictions for one image. Cells are indexed
/// row-major: index = j * width + i.
struct KeypointMaps {
  int width = 0;   // cells
  int height = 0;  // cells
  int cell_size = 14;
  Eigen::Matrix2Xd offsets;     // in-cell offsets in [0,1]
  Eigen::VectorXd depth;        // meters, > 0
  Eigen::VectorXd confidence;   // logits
  Eigen::MatrixXd descriptors;  // one unit-norm column per cell

  int size() const { return width * height; }
  GridCell cell(int index) const { return {index % width, index / width, cell_size}; }
  PixelPoint pixel(int index) const { return grid_to_pixel(offsets.col(index), cell(index)); }
  CameraPoint point(int index, const Intrinsics& K) const {
    return backproject(pixel(index), depth(index), K);
  }
  void validate() const;
};

/// Cosine similarities between two descriptor sets plus the shared dustbin
/// logit.
struct SimilarityMatrix {
  Eigen::MatrixXd values;
  double dustbin_logit = 1.0;
};

SimilarityMatrix similarity_matrix(const Eigen::MatrixXd& descriptors_a,
                                   const Eigen::MatrixXd& descriptors_b,
                                   double dustbin_logit = 1.0);

/// Dual-softmax matching probabilities with the dustbin already removed.
struct MatchDistribution {
  Eigen::MatrixXd forward;           // P(j | i), rows over I' cells
  Eigen::MatrixXd backward;          // P(i | j), columns over I cells
  Eigen::VectorXd forward_dustbin;   // mass each row gave the dustbin
  Eigen::VectorXd backward_dustbin;  // mass each column gave the dustbin
  Eigen::MatrixXd mutual;            // forward .* backward
};

MatchDistribution match_distribution(const SimilarityMatrix& m, double temperature);

/// Spatial softmax over a confidence map.
Eigen::VectorXd keypoint_distribution(const Eigen::VectorXd& logits);

struct CorrespondenceProbability {
  Eigen::MatrixXd joint;  // P(i, j)
  MatchDistribution match;
  Eigen::VectorXd keypoints_a;
  Eigen::VectorXd keypoints_b;
};

CorrespondenceProbability correspondence_probability(MatchDistribution match,
                                                     Eigen::VectorXd keypoints_a,
                                                     Eigen::VectorXd keypoints_b);

/// Entries below this are never sampled.
inline constexpr double kMinSampleProbability = 1e-30;

struct CellPair {
  int a = 0;
  int b = 0;
  bool operator==(const CellPair&) const = default;
};

struct Correspondence {
  int cell_a = 0;
  int cell_b = 0;
  CameraPoint x = CameraPoint::Zero();
  CameraPoint x_prime = CameraPoint::Zero();
  double p = 0.0;  // unnormalized P(i, j)
};

using CorrespondenceSet = std::vector<Correspondence>;

/// Draws `count` index pairs from the normalized joint distribution. Without
/// replacement the pairs come out in sequential-draw order (the first element
/// is an exact categorical draw).
std::vector<CellPair> sample_pairs(const Eigen::MatrixXd& joint, int count, Rng& rng,
                                   bool with_replacement = false);

/// Lifts index pairs to 3D-3D correspondences using the maps' offsets/depths.
CorrespondenceSet build_set(std::span<const CellPair> pairs, const Eigen::MatrixXd& joint,
                            const KeypointMaps& maps_a, const Intrinsics& K_a,
                            const KeypointMaps& maps_b, const Intrinsics& K_b);

CorrespondenceSet sample_set(const CorrespondenceProbability& P, const KeypointMaps& maps_a,
                             const Intrinsics& K_a, const KeypointMaps& maps_b,
                             const Intrinsics& K_b, int count, Rng& rng,
                             bool with_replacement = false);

/// Gradient of sum_{(i,j) in pairs} log P(i,j) with respect to the similarity
/// matrix, the dustbin logit and both confidence maps.
struct LogProbabilityGradient {
  Eigen::MatrixXd similarity;
  double dustbin = 0.0;
  Eigen::VectorXd confidence_a;
  Eigen::VectorXd confidence_b;

  static LogProbabilityGradient zeros(int n_a, int n_b);
  LogProbabilityGradient& operator+=(const LogProbabilityGradient& other);
  LogProbabilityGradient& operator*=(double s);
};

/// Adds `coefficient` times the log-probability gradient of `pairs` to `out`.
void accumulate_log_probability_gradient(const CorrespondenceProbability& P, double temperature,
                                         std::span<const CellPair> pairs, double coefficient,
                                         LogProbabilityGradient& out);

/// Backpropagates a similarity-matrix gradient to both descriptor sets.
void similarity_vjp(const Eigen::MatrixXd& d_similarity, const Eigen::MatrixXd& descriptors_a,
                    const Eigen::MatrixXd& descriptors_b, Eigen::MatrixXd& d_descriptors_a,
                    Eigen::MatrixXd& d_descriptors_b);

}  // namespace mrp
