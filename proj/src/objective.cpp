#include "mrp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

// Guard against 0.3 * 48 = 14.399999... style representation error.
int floor_count(double x) { return static_cast<int>(std::floor(x + 1e-9)); }

std::vector<double> axis_samples(double dim, int count, double center) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = center;
    return out;
  }
  for (int k = 0; k < count; ++k) out[k] = center - 0.5 * dim + dim * k / (count - 1);
  return out;
}

VirtualGrid lattice(const std::array<std::vector<double>, 3>& axes) {
  VirtualGrid grid;
  grid.points.reserve(axes[0].size() * axes[1].size() * axes[2].size());
  for (double z : axes[2])
    for (double y : axes[1])
      for (double x : axes[0]) grid.points.emplace_back(x, y, z);
  return grid;
}

Vec2 project_clamped(const Vec3& v, const Intrinsics& K, bool& clamped) {
  double z = v.z();
  clamped = z < kMinProjectionDepth;
  if (clamped) z = kMinProjectionDepth;
  return {K.fx * v.x() / z + K.cx, K.fy * v.y() / z + K.cy};
}

}  // namespace

VirtualGrid virtual_grid(const Vec3& dims, const std::array<int, 3>& counts, const Vec3& center) {
  if (!(dims.array() > 0.0).all()) throw DomainError("virtual grid dimensions must be positive");
  for (int c : counts)
    if (c < 1) throw DomainError("virtual grid needs at least one sample per axis");
  return lattice({axis_samples(dims.x(), counts[0], center.x()),
                  axis_samples(dims.y(), counts[1], center.y()),
                  axis_samples(dims.z(), counts[2], center.z())});
}

VirtualGrid virtual_grid(const Vec3& dims, double spacing, const Vec3& center) {
  if (!(dims.array() > 0.0).all()) throw DomainError("virtual grid dimensions must be positive");
  if (!(spacing > 0.0)) throw DomainError("virtual grid spacing must be positive");
  if (spacing > dims.minCoeff()) throw DomainError("virtual grid spacing exceeds a cube dimension");
  std::array<std::vector<double>, 3> axes;
  for (int a = 0; a < 3; ++a) {
    const int count = floor_count(dims(a) / spacing) + 1;
    axes[a] = axis_samples(spacing * (count - 1), count, center(a));
  }
  return lattice(axes);
}

VirtualGrid virtual_grid(const VirtualGridSpec& spec) {
  return virtual_grid(spec.dims, spec.counts, spec.center);
}

VirtualGrid default_virtual_grid() { return virtual_grid(VirtualGridSpec{}); }

VcreResult vcre(const Pose& h, const Pose& gt, const Intrinsics& K, const VirtualGrid& grid) {
  if (grid.size() == 0) throw EmptyError("virtual grid is empty");
  const Pose relative = h * gt.inverse();
  VcreResult out;
  for (const Vec3& v : grid.points) {
    bool c0 = false;
    bool c1 = false;
    const Vec2 p0 = project_clamped(v, K, c0);
    const Vec2 p1 = project_clamped(relative * v, K, c1);
    out.clamped += static_cast<int>(c0 || c1);
    out.value += (p1 - p0).norm();
  }
  out.value /= static_cast<double>(grid.size());
  return out;
}

PoseGradient vcre_gradient(const Pose& h, const Pose& gt, const Intrinsics& K,
                           const VirtualGrid& grid) {
  if (grid.size() == 0) throw EmptyError("virtual grid is empty");
  const Pose gt_inv = gt.inverse();
  const double scale = 1.0 / static_cast<double>(grid.size());
  PoseGradient g;
  for (const Vec3& v : grid.points) {
    const Vec3 w = gt_inv * v;
    const Vec3 moved = h * w;
    bool c0 = false;
    bool c1 = false;
    const Vec2 e = project_clamped(moved, K, c1) - project_clamped(v, K, c0);
    const double n = e.norm();
    if (n == 0.0) continue;
    const Vec2 d_pixel = scale * e / n;
    Vec3 d_moved;
    if (c1) {
      // Depth is held at the clamp value.
      d_moved << K.fx * d_pixel.x() / kMinProjectionDepth, K.fy * d_pixel.y() / kMinProjectionDepth,
          0.0;
    } else {
      const double z = moved.z();
      d_moved << K.fx / z * d_pixel.x(), K.fy / z * d_pixel.y(),
          -(K.fx * moved.x() * d_pixel.x() + K.fy * moved.y() * d_pixel.y()) / (z * z);
    }
    g.rotation += d_moved * w.transpose();
    g.translation += d_moved;
  }
  return g;
}

NullHypothesis make_null_hypothesis(double score_fraction, std::size_t set_size, double vcre_max,
                                    bool enabled) {
  return {enabled, score_fraction * static_cast<double>(set_size), vcre_max};
}

ExpectedLoss expected_set_loss(std::span<const double> scores, std::span<const double> losses,
                               const NullHypothesis& null_hypothesis) {
  if (scores.size() != losses.size()) throw ShapeError("score and loss counts differ");
  if (scores.empty()) throw EmptyError("expected loss needs at least one hypothesis");
  const std::size_t n = scores.size();

  double top = *std::max_element(scores.begin(), scores.end());
  if (null_hypothesis.enabled) top = std::max(top, null_hypothesis.score);

  ExpectedLoss out;
  out.weights.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out.weights[k] = std::exp(scores[k] - top);
    total += out.weights[k];
  }
  if (null_hypothesis.enabled) {
    out.null_weight = std::exp(null_hypothesis.score - top);
    total += out.null_weight;
  }
  for (double& w : out.weights) w /= total;
  out.null_weight /= total;

  for (std::size_t k = 0; k < n; ++k) out.value += out.weights[k] * losses[k];
  if (null_hypothesis.enabled) out.value += out.null_weight * null_hypothesis.loss;

  out.d_scores.resize(n);
  out.d_losses = out.weights;
  for (std::size_t k = 0; k < n; ++k) out.d_scores[k] = out.weights[k] * (losses[k] - out.value);
  return out;
}

Eigen::VectorXd reinforce_gradients(std::span<const ReinforceSample> samples) {
  if (samples.size() < 2) throw DomainError("REINFORCE baseline needs at least two samples");
  const double q = static_cast<double>(samples.size());
  double baseline = 0.0;
  for (const auto& s : samples) baseline += s.loss;
  baseline /= q;

  const Eigen::Index dim = samples.front().pathwise.size();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) {
    if (s.pathwise.size() != dim || s.score_function.size() != dim)
      throw ShapeError("sample gradients live in different parameter spaces");
    grad += (s.loss - baseline) * s.score_function + s.pathwise;
  }
  return grad / q;
}

void CurriculumSchedule::validate() const {
  if (!(start_fraction > 0.0 && start_fraction <= 1.0)) throw ValidationError("start_fraction must be in (0,1]");
  if (!(max_fraction >= start_fraction && max_fraction <= 1.0))
    throw ValidationError("max_fraction must be in [start_fraction,1]");
  if (!(increment_fraction >= 0.0)) throw ValidationError("increment_fraction must be >= 0");
  if (increment_interval < 1) throw ValidationError("increment_interval must be >= 1");
  if (warmup_end < 0) throw ValidationError("warmup_end must be >= 0");
}

int CurriculumSchedule::min_pairs(int batch) const {
  return std::clamp(floor_count(start_fraction * batch), 1, std::max(batch, 1));
}

int CurriculumSchedule::max_pairs(int batch) const {
  return std::clamp(floor_count(max_fraction * batch), min_pairs(batch), std::max(batch, 1));
}

int CurriculumSchedule::size(int batch, long iteration) const {
  if (iteration >= warmup_end) return max_pairs(batch);
  const long steps = std::max(0L, iteration) / increment_interval;
  const double fraction = start_fraction + increment_fraction * static_cast<double>(steps);
  return std::clamp(floor_count(fraction * batch), min_pairs(batch), max_pairs(batch));
}

std::vector<int> curriculum_select(std::span<const double> losses, long iteration,
                                   const CurriculumSchedule& schedule) {
  if (losses.empty()) throw EmptyError("curriculum selection on an empty batch");
  const int batch = static_cast<int>(losses.size());
  const int k = schedule.size(batch, iteration);
  std::vector<int> order(batch);
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](int i) { return std::isnan(losses[i]) ? INFINITY : losses[i]; };
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) { return key(l) < key(r); });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace mrp
