#include "mrp/ransac.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Draws `n` distinct indices with probability proportional to p, sequentially.
std::vector<int> draw_minimal_set(const CorrespondenceSet& set, int n, Rng& rng) {
  std::vector<double> weights(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) weights[k] = set[k].p;
  std::vector<int> out;
  out.reserve(n);
  for (int draw = 0; draw < n; ++draw) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = weights.size();
      for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k] <= 0.0) continue;
        pick = k;
        if (u < weights[k]) break;
        u -= weights[k];
      }
    } else {
      // Every remaining weight underflowed: fall back to uniform.
      std::vector<std::size_t> left;
      for (std::size_t k = 0; k < set.size(); ++k)
        if (std::find(out.begin(), out.end(), static_cast<int>(k)) == out.end()) left.push_back(k);
      pick = left[rng.index(left.size())];
    }
    out.push_back(static_cast<int>(pick));
    weights[pick] = 0.0;
  }
  return out;
}

}  // namespace

RansacConfig RansacConfig::train() {
  RansacConfig cfg;
  cfg.hypotheses = 20;
  cfg.min_set = 5;
  cfg.mode = RansacMode::kTrain;
  return cfg;
}

RansacConfig RansacConfig::test() { return RansacConfig{}; }

void RansacConfig::validate() const {
  if (hypotheses < 1) throw ValidationError("RANSAC needs at least one hypothesis");
  if (min_set < 3) throw ValidationError("minimal set size must be >= 3");
  if (!(tau > 0.0)) throw ValidationError("inlier threshold must be positive");
  if (!(beta > 0.0)) throw ValidationError("sigmoid sharpness must be positive");
  if (max_refine < 0) throw ValidationError("refinement cap must be >= 0");
  if (degenerate_retries < 0) throw ValidationError("retry cap must be >= 0");
}

void SamplingConfig::validate() const {
  if (!(temperature > 0.0)) throw ValidationError("softmax temperature must be positive");
  if (set_size < 1) throw ValidationError("correspondence set size must be positive");
  if (samplings < 1) throw ValidationError("need at least one correspondence sampling");
}

double soft_inlier_count(const Pose& h, const CorrespondenceSet& set, double tau, double beta) {
  if (!(tau > 0.0)) throw DomainError("inlier threshold must be positive");
  double score = 0.0;
  for (const auto& y : set) score += sigmoid(beta * tau - beta * residual(y.x, y.x_prime, h));
  return score;
}

SoftInlierGradient soft_inlier_count_vjp(const Pose& h, const CorrespondenceSet& set, double tau,
                                         double beta, double upstream) {
  SoftInlierGradient g;
  g.source.resize(set.size());
  g.target.resize(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) {
    const Vec3 e = h * set[k].x - set[k].x_prime;
    const double r = e.norm();
    const double s = sigmoid(beta * tau - beta * r);
    // Residual gradient is undefined at r = 0; use the zero subgradient there.
    const Vec3 dr_de = r > 0.0 ? Vec3(e / r) : Vec3::Zero();
    const Vec3 de = upstream * (-beta * s * (1.0 - s)) * dr_de;
    g.pose.rotation += de * set[k].x.transpose();
    g.pose.translation += de;
    g.source[k] = h.rotation.transpose() * de;
    g.target[k] = -de;
  }
  return g;
}

std::vector<int> hard_inliers(const Pose& h, const CorrespondenceSet& set, double tau) {
  std::vector<int> out;
  for (std::size_t k = 0; k < set.size(); ++k)
    if (residual(set[k].x, set[k].x_prime, h) < tau) out.push_back(static_cast<int>(k));
  return out;
}

AlignmentProblem alignment_problem(const CorrespondenceSet& set, std::span<const int> indices) {
  AlignmentProblem problem;
  problem.source.reserve(indices.size());
  problem.target.reserve(indices.size());
  for (int k : indices) {
    problem.source.push_back(set[k].x);
    problem.target.push_back(set[k].x_prime);
  }
  return problem;
}

Hypothesis refine(const Hypothesis& h, const CorrespondenceSet& set, const RansacConfig& cfg) {
  Hypothesis out = h;
  if (cfg.max_refine == 0) return out;
  std::vector<int> inliers = hard_inliers(h.pose, set, cfg.tau);
  for (int t = 0; t < cfg.max_refine; ++t) {
    if (static_cast<int>(inliers.size()) < cfg.min_set) break;
    Pose next;
    try {
      next = kabsch(alignment_problem(set, inliers));
    } catch (const DegenerateConfigurationError&) {
      break;
    }
    std::vector<int> next_inliers = hard_inliers(next, set, cfg.tau);
    out.pose = next;
    out.solve_set = inliers;
    out.refined = true;
    out.refine_iterations = t + 1;
    const bool grew = next_inliers.size() > inliers.size();
    inliers = std::move(next_inliers);
    if (!grew) break;
  }
  out.inlier_indices = std::move(inliers);
  return out;
}

std::vector<Hypothesis> generate_hypotheses(const CorrespondenceSet& set, const RansacConfig& cfg,
                                            Rng& rng) {
  cfg.validate();
  if (static_cast<int>(set.size()) < cfg.min_set)
    throw InsufficientDataError("set has " + std::to_string(set.size()) +
                                " correspondences, minimal set needs " + std::to_string(cfg.min_set));
  const std::uint64_t base = rng.next_u64();
  std::vector<std::optional<Hypothesis>> slots(cfg.hypotheses);
  // Each slot owns a substream, so slots may be evaluated in any order.
  for (int k = 0; k < cfg.hypotheses; ++k) {
    Rng stream = Rng::substream(base, static_cast<std::uint64_t>(k));
    for (int attempt = 0; attempt <= cfg.degenerate_retries; ++attempt) {
      std::vector<int> minimal = draw_minimal_set(set, cfg.min_set, stream);
      Hypothesis h;
      try {
        h.pose = kabsch(alignment_problem(set, minimal));
      } catch (const DegenerateConfigurationError&) {
        continue;
      }
      h.minimal_set = minimal;
      h.solve_set = std::move(minimal);
      if (cfg.mode == RansacMode::kTrain) {
        h = refine(h, set, cfg);
      } else {
        h.inlier_indices = hard_inliers(h.pose, set, cfg.tau);
      }
      h.score = soft_inlier_count(h.pose, set, cfg.tau, cfg.beta);
      slots[k] = std::move(h);
      break;
    }
  }
  std::vector<Hypothesis> out;
  for (auto& slot : slots)
    if (slot) out.push_back(std::move(*slot));
  if (out.empty()) throw NoHypothesisError("every minimal set was degenerate");
  return out;
}

std::size_t select_best(std::span<const double> scores) {
  if (scores.empty()) throw EmptyError("no hypotheses to select from");
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return best;
}

std::size_t select_best(std::span<const Hypothesis> hypotheses) {
  std::vector<double> scores;
  scores.reserve(hypotheses.size());
  for (const auto& h : hypotheses) scores.push_back(h.score);
  return select_best(scores);
}

PoseEstimate estimate_pose(const CorrespondenceSet& set, const RansacConfig& cfg, Rng& rng) {
  RansacConfig test_cfg = cfg;
  test_cfg.mode = RansacMode::kTest;
  auto hypotheses = generate_hypotheses(set, test_cfg, rng);
  const Hypothesis winner = refine(hypotheses[select_best(hypotheses)], set, test_cfg);
  PoseEstimate est;
  est.pose = winner.pose;
  est.confidence = soft_inlier_count(winner.pose, set, cfg.tau, cfg.beta);
  est.inliers = hard_inliers(winner.pose, set, cfg.tau);
  est.correspondences = set;
  return est;
}

PoseEstimate estimate_pose(const KeypointMaps& maps_a, const Intrinsics& K_a,
                           const KeypointMaps& maps_b, const Intrinsics& K_b,
                           double dustbin_logit, const SamplingConfig& sampling,
                           const RansacConfig& cfg, Rng& rng) {
  sampling.validate();
  RansacConfig test_cfg = cfg;
  test_cfg.mode = RansacMode::kTest;
  test_cfg.validate();

  const auto sim = similarity_matrix(maps_a.descriptors, maps_b.descriptors, dustbin_logit);
  const auto P = correspondence_probability(match_distribution(sim, sampling.temperature),
                                            keypoint_distribution(maps_a.confidence),
                                            keypoint_distribution(maps_b.confidence));

  const std::uint64_t base = rng.next_u64();
  std::optional<Hypothesis> best;
  CorrespondenceSet best_set;
  for (int q = 0; q < sampling.samplings; ++q) {
    Rng stream = Rng::substream(base, static_cast<std::uint64_t>(q));
    CorrespondenceSet set = sample_set(P, maps_a, K_a, maps_b, K_b, sampling.set_size, stream,
                                       sampling.with_replacement);
    std::vector<Hypothesis> hypotheses;
    try {
      hypotheses = generate_hypotheses(set, test_cfg, stream);
    } catch (const NoHypothesisError&) {
      continue;
    } catch (const InsufficientDataError&) {
      continue;
    }
    const std::size_t k = select_best(hypotheses);
    if (!best || hypotheses[k].score > best->score) {
      best = std::move(hypotheses[k]);
      best_set = std::move(set);
    }
  }
  if (!best) throw NoHypothesisError("no sampled correspondence set produced a hypothesis");

  const Hypothesis winner = refine(*best, best_set, test_cfg);
  PoseEstimate est;
  est.pose = winner.pose;
  est.confidence = soft_inlier_count(winner.pose, best_set, cfg.tau, cfg.beta);
  est.inliers = hard_inliers(winner.pose, best_set, cfg.tau);
  est.correspondences = std::move(best_set);
  return est;
}

}  // namespace mrp
