// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mrp/commands.hpp"
#include "mrp/correspondence.hpp"
#include "mrp/evaluation.hpp"
#include "mrp/gradcheck.hpp"
#include "mrp/kabsch.hpp"
#include "mrp/objective.hpp"
#include "mrp/ransac.hpp"
#include "mrp/toy.hpp"
#include "mrp/training.hpp"
#include "support/oracles.hpp"

using namespace mrp;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome kabsch_exactness() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1);
  int passed = 0;
  double worst_rot = 0.0, worst_trans = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Pose truth = oracle::random_pose(rng);
    const int n = 3 + static_cast<int>(rng.index(48));
    AlignmentProblem p;
    for (int k = 0; k < n; ++k) {
      p.source.push_back(oracle::gaussian(rng));
      p.target.push_back(truth * p.source.back());
    }
    const Pose est = kabsch(p);
    const double rot = oracle::angle_deg(est.rotation * truth.rotation.transpose());
    const double trans = (est.translation - truth.translation).norm();
    worst_rot = std::max(worst_rot, rot);
    worst_trans = std::max(worst_trans, trans);
    passed += rot < 1e-6 && trans < 1e-9;
  }
  const double t = seconds_since(start);
  return {passed == 1000 && t < 5.0,
          fmt("%d/1000 exact, worst %.2e deg / %.2e m, %.2f s", passed, worst_rot, worst_trans, t)};
}

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const auto rows = run_gradcheck(GradcheckOptions{}, 0);
  const double t = seconds_since(start);
  bool ok = t < 60.0;
  std::string detail;
  for (const auto& row : rows) {
    ok = ok && row.passed() && row.instances == 100;
    detail += fmt("%s %.1e<%.0e, ", suite_name(row.suite), row.max_error, row.tolerance);
  }
  return {ok, detail + fmt("%.1f s", t)};
}

Outcome probability_oracles() {
  Rng rng(3);
  double worst_prob = 0.0, worst_loss = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd da(8, 5), db(8, 5);
    for (int c = 0; c < 5; ++c) {
      for (int d = 0; d < 8; ++d) {
        da(d, c) = rng.normal();
        db(d, c) = rng.normal();
      }
      da.col(c).normalize();
      db.col(c).normalize();
    }
    Eigen::VectorXd ca(5), cb(5);
    for (int c = 0; c < 5; ++c) {
      ca(c) = rng.normal();
      cb(c) = rng.normal();
    }
    const double dustbin = rng.normal();
    const double theta = 0.1;
    const auto sim = similarity_matrix(da, db, dustbin);
    const auto P = correspondence_probability(match_distribution(sim, theta), keypoint_distribution(ca),
                                              keypoint_distribution(cb));
    const auto pa = oracle::softmax(std::vector<double>(ca.data(), ca.data() + 5));
    const auto pb = oracle::softmax(std::vector<double>(cb.data(), cb.data() + 5));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        std::vector<double> row, col;
        for (int k = 0; k < 5; ++k) {
          row.push_back(da.col(i).dot(db.col(k)) / theta);
          col.push_back(da.col(k).dot(db.col(j)) / theta);
        }
        row.push_back(dustbin / theta);
        col.push_back(dustbin / theta);
        const double forward = oracle::softmax(row)[j];
        const double backward = oracle::softmax(col)[i];
        worst_prob = std::max(worst_prob, std::abs(P.match.forward(i, j) - forward));
        worst_prob = std::max(worst_prob, std::abs(P.match.backward(i, j) - backward));
        worst_prob = std::max(worst_prob, std::abs(P.joint(i, j) - pa[i] * forward * pb[j] * backward));
      }

    const int n = 1 + static_cast<int>(rng.index(20));
    std::vector<double> scores, losses;
    for (int k = 0; k < n; ++k) {
      scores.push_back(rng.uniform(0, 40));
      losses.push_back(rng.uniform(0, 200));
    }
    const NullHypothesis null{true, rng.uniform(0, 40), 120.0};
    std::vector<double> logits = scores;
    logits.push_back(null.score);
    const auto w = oracle::softmax(logits);
    double brute = w.back() * null.loss;
    for (int k = 0; k < n; ++k) brute += w[k] * losses[k];
    worst_loss = std::max(worst_loss, std::abs(expected_set_loss(scores, losses, null).value - brute));
  }
  return {worst_prob < 1e-12 && worst_loss < 1e-12,
          fmt("max probability error %.1e, max expected-loss error %.1e", worst_prob, worst_loss)};
}

Outcome sampling_fidelity() {
  Rng rng(4);
  Eigen::MatrixXd joint(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) joint(i, j) = std::exp(rng.normal());
  const Eigen::MatrixXd target = joint / joint.sum();
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(4, 4);
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    const auto pair = sample_pairs(joint, 1, rng)[0];
    counts(pair.a, pair.b) += 1.0;
  }
  const double tv = 0.5 * (counts / draws - target).cwiseAbs().sum();
  return {tv < 0.01, fmt("total variation %.4f over %d draws", tv, draws)};
}

Outcome robustness() {
  const auto start = std::chrono::steady_clock::now();
  SceneConfig cfg;
  cfg.grid_width = cfg.grid_height = 16;
  cfg.min_points = cfg.max_points = 100;
  cfg.noise_sigma = 0.01;
  cfg.outlier_fraction = 0.4;
  cfg.descriptor_dim = 8;
  const VirtualGrid grid = default_virtual_grid();
  int good = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng = Rng::substream(5, trial);
    const SyntheticScene s = generate_scene(cfg, rng);
    const CorrespondenceSet set = ground_truth_correspondences(s, rng.next_u64());
    if (set.size() != 100) return {false, "scene does not have 100 correspondences"};
    const PoseEstimate est = estimate_pose(set, RansacConfig::test(), rng);
    const double v = vcre(est.pose, s.gt_relative, s.camera_a.K, grid).value;
    worst = std::max(worst, v);
    good += v < 90.0;
  }
  const double t = seconds_since(start);
  const double bound = 1.0 - std::pow(1.0 - 0.6 * 0.6 * 0.6, 100);
  return {good >= 95 && t < 120.0,
          fmt("%d/100 below 90 px (all-inlier minimal set probability %.6f), worst %.2f px, %.1f s", good,
              bound, worst, t)};
}

Outcome soft_hard_convergence() {
  Rng rng(6);
  const double tau = 0.15, beta = 5.0 / tau;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(200));
    CorrespondenceSet set;
    for (int k = 0; k < n; ++k) {
      const double r = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.9 * tau) : rng.uniform(1.1 * tau, 10 * tau);
      Correspondence y;
      y.x = oracle::gaussian(rng);
      y.x_prime = y.x + oracle::gaussian(rng).normalized() * r;
      set.push_back(y);
    }
    const double soft = soft_inlier_count(Pose::identity(), set, tau, 100.0 * beta);
    const double hard = static_cast<double>(hard_inliers(Pose::identity(), set, tau).size());
    worst = std::max(worst, std::abs(soft - hard) / n);
  }
  return {worst < 0.05, fmt("max |soft - hard| / |Y| = %.2e", worst)};
}

Outcome end_to_end_learning() {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg;
  cfg.validate();
  Trainer trainer = run_trainer(cfg);
  const auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
  };
  const double initial = mean(trainer.pair_losses(0));
  trainer.run();
  const double final_loss = mean(trainer.pair_losses(trainer.iteration()));

  // Depth of the most confident cells against the noiseless truth.
  const int top = 10;
  int close = 0, total = 0;
  int distinct = 0, matched = 0;
  for (std::size_t s = 0; s < trainer.scenes().size(); ++s) {
    SyntheticScene clean = trainer.scenes()[s];
    clean.noise_sigma = 0.0;
    clean.outliers.clear();
    const auto obs = observe(clean);
    std::vector<KeypointMaps> learned;
    for (View view : {View::kA, View::kB}) {
      const KeypointMaps truth = render_ground_truth_maps(clean, view, clean.seed);
      const KeypointMaps maps = trainer.backbone().forward(2 * static_cast<int>(s) + static_cast<int>(view));
      std::vector<int> order(maps.size());
      for (int c = 0; c < maps.size(); ++c) order[c] = c;
      std::sort(order.begin(), order.end(),
                [&](int l, int r) { return maps.confidence(l) > maps.confidence(r); });
      for (int k = 0; k < top; ++k) {
        const int c = order[k];
        const bool occupied = truth.confidence(c) == kOccupiedConfidence;
        close += occupied && std::abs(maps.depth(c) - truth.depth(c)) < 0.1 * truth.depth(c);
        ++total;
      }
      learned.push_back(maps);
    }
    const auto sim = similarity_matrix(learned[0].descriptors, learned[1].descriptors, trainer.backbone().dustbin());
    const auto M = match_distribution(sim, cfg.sampling.temperature).mutual;
    for (const auto& o : obs) {
      ++distinct;
      bool best = true;
      for (int j = 0; j < M.cols(); ++j)
        if (j != o.cell_b && M(o.cell_a, j) >= M(o.cell_a, o.cell_b)) best = false;
      for (int i = 0; i < M.rows(); ++i)
        if (i != o.cell_a && M(i, o.cell_b) >= M(o.cell_a, o.cell_b)) best = false;
      matched += best;
    }
  }
  const double t = seconds_since(start);
  const bool reduced = final_loss <= 0.5 * initial;
  return {reduced && close == total && t < 600.0,
          fmt("mean expected VCRE %.2f -> %.2f px (%.1f%%), top-%d confidence depths within 10%%: %d/%d, "
              "descriptor matches best in %d/%d cells, %.0f s",
              initial, final_loss, 100.0 * (1.0 - final_loss / initial), top, close, total, matched, distinct, t)};
}

Outcome null_damping() {
  const NullHypothesis null = make_null_hypothesis(0.3, 100, 120.0);
  const std::vector<double> scores{null.score - 5.0, null.score - 7.0, null.score - 8.0, null.score - 9.0};
  const std::vector<double> losses{150.0, 200.0, 300.0, 400.0};
  const ExpectedLoss with = expected_set_loss(scores, losses, null);
  const ExpectedLoss without = expected_set_loss(scores, losses, NullHypothesis{false, 0.0, 120.0});
  bool smaller = true;
  double worst_ratio = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    smaller = smaller && std::abs(with.d_scores[k]) < std::abs(without.d_scores[k]);
    worst_ratio = std::max(worst_ratio, std::abs(with.d_scores[k]) / std::abs(without.d_scores[k]));
  }
  return {with.null_weight > 0.99 && smaller,
          fmt("null weight %.4f, largest gradient ratio with/without %.3f", with.null_weight, worst_ratio)};
}

Outcome evaluation_protocol() {
  const std::vector<Estimate> two{{"a", Pose::identity(), 5.0}, {"b", Pose::identity(), 1.0}};
  const double auc = auc_precision_curve(two, {true, false}).auc;
  const CurriculumSchedule schedule;
  const int first = schedule.size(48, 0);
  const int last = schedule.size(48, schedule.warmup_end);
  return {auc == 0.75 && first == 14 && last == 38,
          fmt("AUC %.17g, curriculum sizes %d and %d for B=48", auc, first, last)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"Kabsch exactness", kabsch_exactness},
      {"gradient suite", gradient_suite},
      {"softmax and probability oracles", probability_oracles},
      {"sampling fidelity", sampling_fidelity},
      {"robustness under outliers", robustness},
      {"soft to hard inlier convergence", soft_hard_convergence},
      {"end-to-end learning", end_to_end_learning},
      {"null-hypothesis damping", null_damping},
      {"evaluation protocol", evaluation_protocol},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::printf("criterion %zu %s: %s (%s)\n", k + 1, o.passed ? "PASS" : "FAIL", criteria[k].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
