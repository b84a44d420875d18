#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrp/geometry.hpp"
#include "mrp/objective.hpp"

namespace mrp {

/// One method output for one image pair. An absent pose means "no estimate".
struct Estimate {
  std::string pair_id;
  std::optional<Pose> pose;
  double confidence = 0.0;
  bool operator==(const Estimate&) const = default;
};

/// Reference pose plus the query intrinsics VCRE is measured in.
struct GroundTruth {
  std::string pair_id;
  Pose pose;
  Intrinsics K;
  bool operator==(const GroundTruth&) const = default;
};

/// Throws ShapeError on a length mismatch and ValidationError when pair ids
/// disagree position by position.
void check_aligned(std::span<const Estimate> estimates, std::span<const GroundTruth> gts);

/// VCRE per pair, nullopt where the estimate is absent.
std::vector<std::optional<double>> pair_vcre(std::span<const Estimate> estimates,
                                             std::span<const GroundTruth> gts,
                                             const VirtualGrid& grid);

inline constexpr double kDefaultVcreThreshold = 90.0;

/// Present and strictly below the threshold.
std::vector<bool> vcre_correct(std::span<const std::optional<double>> vcres, double threshold_px);

/// Fraction of all pairs whose estimate is present with VCRE < threshold.
/// Zero for an empty list.
double vcre_precision(std::span<const Estimate> estimates, std::span<const GroundTruth> gts,
                      const VirtualGrid& grid, double threshold_px = kDefaultVcreThreshold);

struct PrecisionCurve {
  std::vector<std::string> order;  // pair ids, most confident first, absent last
  std::vector<double> ratios;      // k / n
  std::vector<double> precisions;  // precision of the first k
  double auc = 0.0;
};

/// Ranks present estimates by confidence (descending, ties by pair id),
/// appends absent ones as incorrect and integrates precision over the ratio
/// of estimates. The curve is a step function on ((k-1)/n, k/n], so the area
/// is the mean of the prefix precisions.
PrecisionCurve auc_precision_curve(std::span<const Estimate> estimates,
                                   const std::vector<bool>& correct);

struct PoseError {
  double translation = 0.0;  // meters
  double rotation = 0.0;     // degrees
};

PoseError pose_errors(const Pose& h, const Pose& estimate);

/// Median of a non-empty sample; an even count averages the central pair.
double median(std::vector<double> values);

struct MedianErrors {
  std::optional<double> translation;
  std::optional<double> rotation;
  std::optional<double> vcre;
  double estimate_rate = 0.0;
  int estimated = 0;
  int total = 0;
};

/// Medians over present estimates only.
MedianErrors median_errors(std::span<const Estimate> estimates, std::span<const GroundTruth> gts,
                           const VirtualGrid& grid);

struct EvalReport {
  int pairs = 0;
  int estimated = 0;
  double threshold = kDefaultVcreThreshold;
  double precision = 0.0;
  double auc = 0.0;
  std::optional<double> median_translation;
  std::optional<double> median_rotation;
  std::optional<double> median_vcre;
  double estimate_rate = 0.0;
  std::string tie_break = "pair_id";
  bool operator==(const EvalReport&) const = default;
};

struct Evaluation {
  EvalReport report;
  PrecisionCurve curve;
};

Evaluation evaluate(std::span<const Estimate> estimates, std::span<const GroundTruth> gts,
                    const VirtualGrid& grid, double threshold_px = kDefaultVcreThreshold);

}  // namespace mrp
