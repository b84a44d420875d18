#include "mrp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrp/errors.hpp"

namespace mrp {

void check_aligned(std::span<const Estimate> estimates, std::span<const GroundTruth> gts) {
  if (estimates.size() != gts.size())
    throw ShapeError("estimate and ground-truth lists differ in length");
  for (std::size_t k = 0; k < gts.size(); ++k) {
    if (estimates[k].pair_id != gts[k].pair_id)
      throw ValidationError("pair id mismatch: estimate '" + estimates[k].pair_id +
                            "' against ground truth '" + gts[k].pair_id + "'");
    if (estimates[k].pose && !std::isfinite(estimates[k].confidence))
      throw ValidationError("non-finite confidence for pair '" + estimates[k].pair_id + "'");
  }
}

std::vector<std::optional<double>> pair_vcre(std::span<const Estimate> estimates,
                                             std::span<const GroundTruth> gts,
                                             const VirtualGrid& grid) {
  check_aligned(estimates, gts);
  std::vector<std::optional<double>> out(gts.size());
  for (std::size_t k = 0; k < gts.size(); ++k)
    if (estimates[k].pose) out[k] = vcre(*estimates[k].pose, gts[k].pose, gts[k].K, grid).value;
  return out;
}

std::vector<bool> vcre_correct(std::span<const std::optional<double>> vcres, double threshold_px) {
  std::vector<bool> out(vcres.size());
  for (std::size_t k = 0; k < vcres.size(); ++k) out[k] = vcres[k] && *vcres[k] < threshold_px;
  return out;
}

double vcre_precision(std::span<const Estimate> estimates, std::span<const GroundTruth> gts,
                      const VirtualGrid& grid, double threshold_px) {
  const auto correct = vcre_correct(pair_vcre(estimates, gts, grid), threshold_px);
  if (correct.empty()) return 0.0;
  return static_cast<double>(std::count(correct.begin(), correct.end(), true)) /
         static_cast<double>(correct.size());
}

PrecisionCurve auc_precision_curve(std::span<const Estimate> estimates,
                                   const std::vector<bool>& correct) {
  if (estimates.size() != correct.size()) throw ShapeError("estimate and flag lists differ in length");
  const std::size_t n = estimates.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    const Estimate& a = estimates[l];
    const Estimate& b = estimates[r];
    if (a.pose.has_value() != b.pose.has_value()) return a.pose.has_value();
    if (a.pose && a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.pair_id != b.pair_id) return a.pair_id < b.pair_id;
    return l < r;
  });

  PrecisionCurve curve;
  int hits = 0;
  double area = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = order[k];
    hits += static_cast<int>(estimates[idx].pose.has_value() && correct[idx]);
    const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    curve.order.push_back(estimates[idx].pair_id);
    curve.ratios.push_back(static_cast<double>(k + 1) / static_cast<double>(n));
    curve.precisions.push_back(precision);
    area += precision;
  }
  curve.auc = n == 0 ? 0.0 : area / static_cast<double>(n);
  return curve;
}

PoseError pose_errors(const Pose& h, const Pose& estimate) {
  return {(h.translation - estimate.translation).norm(),
          rotation_angle_deg(h.rotation * estimate.rotation.transpose())};
}

double median(std::vector<double> values) {
  if (values.empty()) throw EmptyError("median of an empty sample");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

MedianErrors median_errors(std::span<const Estimate> estimates, std::span<const GroundTruth> gts,
                           const VirtualGrid& grid) {
  const auto vcres = pair_vcre(estimates, gts, grid);
  std::vector<double> trans;
  std::vector<double> rot;
  std::vector<double> reproj;
  for (std::size_t k = 0; k < gts.size(); ++k) {
    if (!estimates[k].pose) continue;
    const PoseError e = pose_errors(gts[k].pose, *estimates[k].pose);
    trans.push_back(e.translation);
    rot.push_back(e.rotation);
    reproj.push_back(*vcres[k]);
  }
  MedianErrors out;
  out.total = static_cast<int>(gts.size());
  out.estimated = static_cast<int>(trans.size());
  out.estimate_rate = out.total == 0 ? 0.0 : static_cast<double>(out.estimated) / out.total;
  if (!trans.empty()) {
    out.translation = median(trans);
    out.rotation = median(rot);
    out.vcre = median(reproj);
  }
  return out;
}

Evaluation evaluate(std::span<const Estimate> estimates, std::span<const GroundTruth> gts,
                    const VirtualGrid& grid, double threshold_px) {
  if (!(threshold_px > 0.0)) throw ValidationError("VCRE threshold must be positive");
  const auto vcres = pair_vcre(estimates, gts, grid);
  const auto correct = vcre_correct(vcres, threshold_px);

  Evaluation out;
  out.curve = auc_precision_curve(estimates, correct);
  const MedianErrors med = median_errors(estimates, gts, grid);
  EvalReport& r = out.report;
  r.pairs = med.total;
  r.estimated = med.estimated;
  r.threshold = threshold_px;
  r.precision = r.pairs == 0 ? 0.0
                             : static_cast<double>(std::count(correct.begin(), correct.end(), true)) /
                                   static_cast<double>(r.pairs);
  r.auc = out.curve.auc;
  r.median_translation = med.translation;
  r.median_rotation = med.rotation;
  r.median_vcre = med.vcre;
  r.estimate_rate = med.estimate_rate;
  return out;
}

}  // namespace mrp
