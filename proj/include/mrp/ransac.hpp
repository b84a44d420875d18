#pragma once

#include <span>
#include <vector>

#include "mrp/correspondence.hpp"
#include "mrp/kabsch.hpp"
#include "mrp/rng.hpp"

namespace mrp {

enum class RansacMode { kTrain, kTest };

struct RansacConfig {
  int hypotheses = 100;      // J
  int min_set = 3;           // n
  double tau = 0.15;         // inlier threshold, meters
  double beta = 5.0 / 0.15;  // sigmoid sharpness, 1/meters
  int max_refine = 4;        // t_max
  RansacMode mode = RansacMode::kTest;
  int degenerate_retries = 5;

  /// J=20, n=5, every hypothesis refined before scoring.
  static RansacConfig train();
  /// J=100, n=3, only the winner is refined.
  static RansacConfig test();
  void validate() const;
};

struct Hypothesis {
  Pose pose;
  double score = 0.0;
  std::vector<int> minimal_set;
  bool refined = false;
  int refine_iterations = 0;
  std::vector<int> inlier_indices;  // hard inliers of `pose`
  std::vector<int> solve_set;       // correspondences of the Kabsch solve that produced `pose`
};

/// Sum over the set of sigmoid(beta * tau - beta * r).
double soft_inlier_count(const Pose& h, const CorrespondenceSet& set, double tau, double beta);

struct SoftInlierGradient {
  PoseGradient pose;
  std::vector<Vec3> source;  // d/dx
  std::vector<Vec3> target;  // d/dx'
};

SoftInlierGradient soft_inlier_count_vjp(const Pose& h, const CorrespondenceSet& set, double tau,
                                         double beta, double upstream = 1.0);

/// Indices with residual strictly below tau.
std::vector<int> hard_inliers(const Pose& h, const CorrespondenceSet& set, double tau);

AlignmentProblem alignment_problem(const CorrespondenceSet& set, std::span<const int> indices);

/// Guided minimal-set sampling. Train mode refines every hypothesis and scores
/// the refined pose; test mode scores the raw minimal-set pose.
std::vector<Hypothesis> generate_hypotheses(const CorrespondenceSet& set, const RansacConfig& cfg,
                                            Rng& rng);

/// Alternates hard-inlier selection and Kabsch until t_max iterations or the
/// inlier count stops growing. Does not touch `score`.
Hypothesis refine(const Hypothesis& h, const CorrespondenceSet& set, const RansacConfig& cfg);

/// Index of the maximal score, lowest index on ties. Throws EmptyError.
std::size_t select_best(std::span<const double> scores);
std::size_t select_best(std::span<const Hypothesis> hypotheses);

struct PoseEstimate {
  Pose pose;
  double confidence = 0.0;  // soft-inlier count of the refined winner
  std::vector<int> inliers;
  CorrespondenceSet correspondences;  // the set the winner came from
};

/// Test-time path on a fixed correspondence set.
PoseEstimate estimate_pose(const CorrespondenceSet& set, const RansacConfig& cfg, Rng& rng);

struct SamplingConfig {
  double temperature = 0.1;  // theta_m
  int set_size = 32;         // Y
  int samplings = 20;        // Q
  bool with_replacement = false;
  void validate() const;
};

/// Test-time path from keypoint maps: Q correspondence sets, hypotheses from
/// all of them compete on score, the winner is refined.
PoseEstimate estimate_pose(const KeypointMaps& maps_a, const Intrinsics& K_a,
                           const KeypointMaps& maps_b, const Intrinsics& K_b,
                           double dustbin_logit, const SamplingConfig& sampling,
                           const RansacConfig& cfg, Rng& rng);

}  // namespace mrp
