#include <doctest.h>

#include <cmath>
#include <set>

#include "mrp/errors.hpp"
#include "mrp/objective.hpp"
#include "support/oracles.hpp"

using namespace mrp;

namespace {

Intrinsics query_camera() {
  Intrinsics K;
  K.fx = K.fy = 112.0;
  K.cx = K.cy = 56.0;
  K.width = K.height = 112;
  return K;
}

// Per-point projection oracle written without the library's projection.
double brute_vcre(const Pose& h, const Pose& gt, const Intrinsics& K, const VirtualGrid& grid) {
  const Pose rel = h * gt.inverse();
  double total = 0.0;
  for (const Vec3& v : grid.points) {
    const Vec3 w = rel.rotation * v + rel.translation;
    total += (oracle::pinhole(v, K.fx, K.fy, K.cx, K.cy) - oracle::pinhole(w, K.fx, K.fy, K.cx, K.cy)).norm();
  }
  return total / grid.size();
}

}  // namespace

TEST_CASE("virtual grid layout") {
  const VirtualGrid grid = default_virtual_grid();
  CHECK(grid.size() == 196);
  const VirtualGridSpec spec;
  for (const Vec3& p : grid.points)
    for (int a = 0; a < 3; ++a) CHECK(std::abs(p(a) - spec.center(a)) <= 0.5 * spec.dims(a) + 1e-12);
  for (const Vec3& p : grid.points) CHECK(p.z() > 0.0);
  CHECK(virtual_grid(Vec3(2.1, 1.2, 2.1), {7, 4, 7}).size() == 196);

  const VirtualGrid corners = virtual_grid(Vec3(0.3, 0.3, 0.3), {2, 2, 2});
  REQUIRE(corners.size() == 8);
  std::set<std::tuple<double, double, double>> seen;
  for (const Vec3& p : corners.points) {
    CHECK(p.cwiseAbs().isApprox(Vec3::Constant(0.15)));
    seen.emplace(p.x(), p.y(), p.z());
  }
  CHECK(seen.size() == 8);

  const VirtualGrid spaced = virtual_grid(Vec3(0.6, 0.3, 0.9), 0.3);
  CHECK(spaced.size() == 3 * 2 * 4);
  CHECK_THROWS_AS(virtual_grid(Vec3(0.3, 0.3, 0.3), 0.5), DomainError);
  CHECK_THROWS_AS(virtual_grid(Vec3(0.3, 0.3, 0.3), 0.0), DomainError);
  CHECK_THROWS_AS(virtual_grid(Vec3(0.3, -1.0, 0.3), {2, 2, 2}), DomainError);
}

TEST_CASE("vcre examples") {
  const Intrinsics K = query_camera();
  const VirtualGrid grid = default_virtual_grid();
  Rng rng(1);
  const Pose gt = oracle::random_pose(rng, 0.5);
  const VcreResult zero = vcre(gt, gt, K, grid);
  CHECK(zero.value < 1e-9);
  CHECK(!zero.high_error());

  Pose shift;
  shift.translation = Vec3(0.3, 0, 0);
  const Pose h = shift * gt;
  double parallax = 0.0;
  for (const Vec3& v : grid.points) parallax += K.fx * 0.3 / v.z();
  parallax /= grid.size();
  CHECK(vcre(h, gt, K, grid).value == doctest::Approx(parallax).epsilon(1e-12));
  CHECK(vcre(h, gt, K, grid).value == doctest::Approx(brute_vcre(h, gt, K, grid)).epsilon(1e-12));
}

TEST_CASE("vcre depends only on the relative error") {
  const Intrinsics K = query_camera();
  const VirtualGrid grid = default_virtual_grid();
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose gt = oracle::random_pose(rng);
    Pose err{axis_angle(oracle::gaussian(rng).normalized(), rng.uniform(0, 0.2)), oracle::gaussian(rng, 0.1)};
    const Pose h = err * gt;
    const Pose change = oracle::random_pose(rng);
    const double a = vcre(h, gt, K, grid).value;
    const double b = vcre(h * change, gt * change, K, grid).value;
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
    CHECK(a == doctest::Approx(brute_vcre(h, gt, K, grid)).epsilon(1e-12));
    CHECK(a > 0.0);
  }
}

TEST_CASE("vcre clamps points behind the camera") {
  const Intrinsics K = query_camera();
  const VirtualGrid grid = default_virtual_grid();
  Pose back;
  back.translation = Vec3(0, 0, -10);
  const VcreResult r = vcre(back, Pose::identity(), K, grid);
  CHECK(r.high_error());
  CHECK(r.clamped == 196);
  CHECK(std::isfinite(r.value));
  CHECK(r.value > 1e3);
}

TEST_CASE("vcre gradient matches central differences") {
  const Intrinsics K = query_camera();
  const VirtualGrid grid = default_virtual_grid();
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Pose gt = oracle::random_pose(rng);
    const Pose h = Pose{axis_angle(oracle::gaussian(rng).normalized(), 0.1), oracle::gaussian(rng, 0.1)} * gt;
    const PoseGradient g = vcre_gradient(h, gt, K, grid);
    std::vector<double> x, analytic;
    for (int k = 0; k < 9; ++k) {
      x.push_back(h.rotation(k / 3, k % 3));
      analytic.push_back(g.rotation(k / 3, k % 3));
    }
    for (int k = 0; k < 3; ++k) {
      x.push_back(h.translation(k));
      analytic.push_back(g.translation(k));
    }
    const auto f = [&](const std::vector<double>& v) {
      Pose p;
      for (int k = 0; k < 9; ++k) p.rotation(k / 3, k % 3) = v[k];
      p.translation = Vec3(v[9], v[10], v[11]);
      return vcre(p, gt, K, grid).value;
    };
    CHECK(oracle::relative_error(analytic, oracle::gradient(f, x)) < 1e-4);
  }
}

TEST_CASE("expected set loss examples") {
  const NullHypothesis off{false, 0.0, 120.0};
  const std::vector<double> one_score{3.0}, one_loss{42.0};
  CHECK(expected_set_loss(one_score, one_loss, off).value == doctest::Approx(42.0).epsilon(1e-15));

  const std::vector<double> two_scores{1.5, 1.5}, two_losses{10.0, 30.0};
  CHECK(expected_set_loss(two_scores, two_losses, off).value == doctest::Approx(20.0).epsilon(1e-15));

  const NullHypothesis null{true, 30.0, 120.0};
  const std::vector<double> s{10.0}, l{200.0};
  const ExpectedLoss e = expected_set_loss(s, l, null);
  const double expected = 120.0 + 80.0 * std::exp(-20.0) / (1.0 + std::exp(-20.0));
  CHECK(std::abs(e.value - expected) < 1e-12);
  CHECK(e.value == doctest::Approx(120.0 + 80.0 * std::exp(-20.0)).epsilon(1e-15));

  CHECK_THROWS_AS(expected_set_loss(std::vector<double>{}, std::vector<double>{}, off), EmptyError);
  CHECK_THROWS_AS(expected_set_loss(two_scores, one_loss, off), ShapeError);
  CHECK(make_null_hypothesis(0.3, 100, 120.0).score == doctest::Approx(30.0));
}

TEST_CASE("expected set loss against a brute-force weighted sum") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(30));
    std::vector<double> scores, losses;
    for (int k = 0; k < n; ++k) {
      scores.push_back(rng.uniform(0, 20));
      losses.push_back(rng.uniform(0, 150));
    }
    const NullHypothesis null{trial % 2 == 0, rng.uniform(0, 20), 120.0};
    std::vector<double> logits = scores;
    if (null.enabled) logits.push_back(null.score);
    const std::vector<double> w = oracle::softmax(logits);
    double brute = 0.0;
    for (int k = 0; k < n; ++k) brute += w[k] * losses[k];
    if (null.enabled) brute += w.back() * null.loss;
    const ExpectedLoss e = expected_set_loss(scores, losses, null);
    CHECK(std::abs(e.value - brute) < 1e-12 * std::max(1.0, brute));

    const double shift = rng.uniform(-50, 50);
    std::vector<double> shifted = scores;
    for (double& v : shifted) v += shift;
    NullHypothesis null_shifted = null;
    null_shifted.score += shift;
    CHECK(std::abs(expected_set_loss(shifted, losses, null_shifted).value - e.value) < 1e-12 * std::max(1.0, e.value));

    std::vector<double> x = scores;
    x.insert(x.end(), losses.begin(), losses.end());
    const auto f = [&](const std::vector<double>& v) {
      return expected_set_loss(std::span(v).first(n), std::span(v).subspan(n), null).value;
    };
    std::vector<double> analytic = e.d_scores;
    analytic.insert(analytic.end(), e.d_losses.begin(), e.d_losses.end());
    // Weights saturate easily, so compare against a unit floor.
    CHECK(oracle::relative_error(analytic, oracle::gradient(f, x), 1.0) < 1e-7);
  }
}

TEST_CASE("null hypothesis damps score gradients") {
  Rng rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const NullHypothesis null = make_null_hypothesis(0.3, 100, 120.0);
    const double top = rng.uniform(0, null.score - 5.0 - std::log(2.0));
    const std::vector<double> scores{top, top - rng.uniform(0, 1)};
    const double a = rng.uniform(0, 300);
    const double b = rng.uniform(0, 1) < 0.5 ? rng.uniform(0, std::max(0.0, a - 20)) : rng.uniform(a + 20, a + 300);
    const std::vector<double> losses{a, b};
    const ExpectedLoss with = expected_set_loss(scores, losses, null);
    const ExpectedLoss without = expected_set_loss(scores, losses, NullHypothesis{false, 0, 120});
    CHECK(with.null_weight > 0.99);
    for (int k = 0; k < 2; ++k) CHECK(std::abs(with.d_scores[k]) < std::abs(without.d_scores[k]));
  }
}

TEST_CASE("REINFORCE estimator") {
  std::vector<ReinforceSample> same(4);
  Rng rng(6);
  for (auto& s : same) {
    s.loss = 7.0;
    s.score_function = Eigen::VectorXd::Constant(5, rng.normal());
    s.pathwise = Eigen::VectorXd::Zero(5);
  }
  CHECK(reinforce_gradients(same).norm() == 0.0);

  // Two arms drawn with probability sigmoid(w) and 1 - sigmoid(w), evaluated at w = 0.
  std::vector<ReinforceSample> arms(2);
  arms[0].loss = 0.0;
  arms[0].score_function = Eigen::VectorXd::Constant(1, 0.5);
  arms[0].pathwise = Eigen::VectorXd::Zero(1);
  arms[1].loss = 1.0;
  arms[1].score_function = Eigen::VectorXd::Constant(1, -0.5);
  arms[1].pathwise = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd g = reinforce_gradients(arms);
  CHECK(g(0) < 0.0);
  // Exact two-point gradient of E[loss] = 1 - sigmoid(w) at w = 0 is -0.25.
  CHECK(g(0) == doctest::Approx(-0.25).epsilon(1e-15));

  std::vector<ReinforceSample> paths(3);
  for (int q = 0; q < 3; ++q) {
    paths[q].loss = q;
    paths[q].score_function = Eigen::VectorXd::Zero(2);
    paths[q].pathwise = Eigen::VectorXd::Constant(2, q + 1.0);
  }
  CHECK(reinforce_gradients(paths).isApprox(Eigen::VectorXd::Constant(2, 2.0)));

  CHECK_THROWS_AS(reinforce_gradients(std::span(arms).first(1)), DomainError);
  arms[1].pathwise = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(reinforce_gradients(arms), ShapeError);
}

TEST_CASE("curriculum schedule") {
  const CurriculumSchedule schedule;
  CHECK(schedule.size(48, 0) == 14);
  CHECK(schedule.min_pairs(48) == 14);
  CHECK(schedule.max_pairs(48) == 38);
  CHECK(schedule.size(48, schedule.warmup_end) == 38);
  CHECK(schedule.size(48, 1000000) == 38);
  CHECK(schedule.size(48, 4000) == 19);

  std::vector<double> losses(48);
  for (int k = 0; k < 48; ++k) losses[k] = std::sin(k * 1.7) * 10;
  CHECK(curriculum_select(losses, 0, schedule).size() == 14);

  int previous = 0;
  for (long it = 0; it < 30000; it += 250) {
    const int k = schedule.size(48, it);
    CHECK(k >= previous);
    CHECK(k >= schedule.min_pairs(48));
    CHECK(k <= schedule.max_pairs(48));
    previous = k;
  }

  std::vector<double> sorted(10);
  for (int k = 0; k < 10; ++k) sorted[k] = k;
  CHECK(curriculum_select(sorted, 0, schedule) == std::vector<int>{0, 1, 2});

  std::vector<double> ties{5, 1, 1, 1, 0, 9, 9, 9, 9, 9};
  CHECK(curriculum_select(ties, 0, schedule) == std::vector<int>{1, 2, 4});

  CHECK_THROWS_AS(curriculum_select(std::vector<double>{}, 0, schedule), EmptyError);
  CurriculumSchedule bad;
  bad.max_fraction = 0.1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
