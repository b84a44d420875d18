#include <doctest.h>

#include "mrp/errors.hpp"
#include "mrp/kabsch.hpp"
#include "support/oracles.hpp"

using namespace mrp;

namespace {

AlignmentProblem make_problem(Rng& rng, const Pose& truth, int n, double noise, bool weighted) {
  AlignmentProblem p;
  for (int k = 0; k < n; ++k) {
    const Vec3 x = oracle::gaussian(rng);
    p.source.push_back(x);
    p.target.push_back(truth * x + oracle::gaussian(rng, noise));
    if (weighted) p.weights.push_back(rng.uniform(0.2, 2.0));
  }
  return p;
}

double cost(const AlignmentProblem& p, const Pose& h) {
  double c = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) c += p.weight(k) * (h * p.source[k] - p.target[k]).squaredNorm();
  return c;
}

std::vector<double> flatten(const KabschGradient& g) {
  std::vector<double> out;
  for (const auto& v : g.source) out.insert(out.end(), v.data(), v.data() + 3);
  for (const auto& v : g.target) out.insert(out.end(), v.data(), v.data() + 3);
  out.insert(out.end(), g.weights.begin(), g.weights.end());
  return out;
}

std::vector<double> pack(const AlignmentProblem& p) {
  std::vector<double> out;
  for (const auto& v : p.source) out.insert(out.end(), v.data(), v.data() + 3);
  for (const auto& v : p.target) out.insert(out.end(), v.data(), v.data() + 3);
  for (std::size_t k = 0; k < p.size(); ++k) out.push_back(p.weight(k));
  return out;
}

AlignmentProblem unpack(const std::vector<double>& x, std::size_t n) {
  AlignmentProblem p;
  for (std::size_t k = 0; k < n; ++k) p.source.emplace_back(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
  for (std::size_t k = 0; k < n; ++k) p.target.emplace_back(x[3 * n + 3 * k], x[3 * n + 3 * k + 1], x[3 * n + 3 * k + 2]);
  p.weights.assign(x.begin() + 6 * n, x.end());
  return p;
}

}  // namespace

TEST_CASE("identity and exact recovery") {
  AlignmentProblem p;
  p.source = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  p.target = p.source;
  const Pose h = kabsch(p);
  CHECK((h.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(h.translation.norm() < 1e-12);

  const Pose truth{axis_angle(Vec3::UnitZ(), M_PI / 2), Vec3(1, 2, 3)};
  for (auto& x : p.target) x = Vec3::Zero();
  for (std::size_t k = 0; k < 3; ++k) p.target[k] = truth * p.source[k];
  const Pose e = kabsch(p);
  CHECK(oracle::angle_deg(e.rotation * truth.rotation.transpose()) < 1e-6);
  CHECK((e.translation - truth.translation).norm() < 1e-9);
}

TEST_CASE("kabsch beats a random search around the truth") {
  Rng rng(5);
  const Pose truth = oracle::random_pose(rng);
  const AlignmentProblem p = make_problem(rng, truth, 50, 0.01, false);
  const double best = cost(p, kabsch(p));
  double search = INFINITY;
  for (int k = 0; k < 1000000; ++k) {
    const Vec3 w = oracle::gaussian(rng, 0.01);
    const Pose cand{axis_angle(w.normalized(), w.norm()) * truth.rotation, truth.translation + oracle::gaussian(rng, 0.01)};
    search = std::min(search, cost(p, cand));
  }
  CHECK(best <= search);
}

TEST_CASE("degenerate and malformed problems") {
  AlignmentProblem line;
  for (int k = 0; k < 5; ++k) {
    line.source.emplace_back(k, 2 * k, 0);
    line.target.emplace_back(k, 2 * k, 1);
  }
  CHECK_THROWS_AS(kabsch(line), DegenerateConfigurationError);
  AlignmentProblem same;
  same.source.assign(4, Vec3(1, 1, 1));
  same.target.assign(4, Vec3(0, 1, 1));
  CHECK_THROWS_AS(kabsch(same), DegenerateConfigurationError);

  AlignmentProblem two;
  two.source = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  two.target = two.source;
  CHECK_THROWS_AS(kabsch(two), ValidationError);
  AlignmentProblem p;
  p.source = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  p.target = p.source;
  p.weights = {0, 0, 0};
  CHECK_THROWS_AS(kabsch(p), ValidationError);
  p.weights = {1, -1, 1};
  CHECK_THROWS_AS(kabsch(p), ValidationError);
  p.weights = {1, 1};
  CHECK_THROWS_AS(kabsch(p), ValidationError);
  p.weights.clear();
  p.target.pop_back();
  CHECK_THROWS_AS(kabsch(p), ValidationError);
}

TEST_CASE("planar inputs are solvable") {
  Rng rng(6);
  const Pose truth = oracle::random_pose(rng);
  AlignmentProblem p;
  for (int k = 0; k < 6; ++k) {
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), 0.0);
    p.source.push_back(x);
    p.target.push_back(truth * x);
  }
  const Pose e = kabsch(p);
  CHECK(oracle::angle_deg(e.rotation * truth.rotation.transpose()) < 1e-6);
  CHECK((e.translation - truth.translation).norm() < 1e-9);
}

TEST_CASE("equivariance, weight invariance and reflections") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const AlignmentProblem p = make_problem(rng, oracle::random_pose(rng), 10, 0.05, true);
    const Pose h = kabsch(p);
    CHECK(h.is_valid(1e-9));

    const Mat3 Q = oracle::random_rotation(rng);
    AlignmentProblem q = p;
    for (auto& x : q.source) x = Q * x;
    CHECK((kabsch(q).rotation - h.rotation * Q.transpose()).norm() < 1e-9);

    AlignmentProblem s = p;
    for (auto& w : s.weights) w *= 7.3;
    const Pose hs = kabsch(s);
    CHECK((hs.rotation - h.rotation).norm() < 1e-12);
    CHECK((hs.translation - h.translation).norm() < 1e-12);

    AlignmentProblem mirrored = p;
    for (auto& x : mirrored.target) x.x() = -x.x();
    const Pose hm = kabsch(mirrored);
    CHECK(hm.is_valid(1e-9));
    CHECK(hm.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("vjp of a zero upstream is zero") {
  Rng rng(8);
  const AlignmentProblem p = make_problem(rng, oracle::random_pose(rng), 8, 0.05, true);
  for (double v : flatten(kabsch_vjp(p, PoseGradient{}))) CHECK(v == 0.0);
}

TEST_CASE("translation-only loss on a centered source") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    AlignmentProblem p = make_problem(rng, oracle::random_pose(rng, 2.0), 12, 0.05, false);
    Vec3 mean = Vec3::Zero();
    for (const auto& x : p.source) mean += x;
    mean /= static_cast<double>(p.size());
    for (auto& x : p.source) x -= mean;
    const Pose h = kabsch(p);
    PoseGradient up;
    up.translation = 2.0 * h.translation;
    const KabschGradient g = kabsch_vjp(p, up);
    const Vec3 expected = -(2.0 / static_cast<double>(p.size())) * h.rotation.transpose() * h.translation;
    for (const auto& gx : g.source) CHECK((gx - expected).norm() < 1e-10 * (1.0 + expected.norm()));

    const auto f = [&](const std::vector<double>& x) { return kabsch(unpack(x, p.size())).translation.squaredNorm(); };
    AlignmentProblem pw = p;
    pw.weights.assign(p.size(), 1.0);
    const auto fd = oracle::gradient(f, pack(pw), 1e-6);
    for (std::size_t k = 0; k < p.size(); ++k)
      CHECK((Vec3(fd[3 * k], fd[3 * k + 1], fd[3 * k + 2]) - expected).norm() < 1e-6 * (1.0 + expected.norm()));
  }
}

TEST_CASE("vjp matches central differences on 100 random problems") {
  Rng rng(10);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 3 + static_cast<int>(rng.index(18));
    const AlignmentProblem p = make_problem(rng, oracle::random_pose(rng), n, 0.1, true);
    PoseGradient up;
    for (int k = 0; k < 9; ++k) up.rotation(k / 3, k % 3) = rng.normal(0, 1);
    up.translation = oracle::gaussian(rng);
    const auto analytic = flatten(kabsch_vjp(p, up));
    const auto f = [&](const std::vector<double>& x) {
      const Pose h = kabsch(unpack(x, p.size()));
      return (up.rotation.array() * h.rotation.array()).sum() + up.translation.dot(h.translation);
    };
    const auto fd = oracle::gradient(f, pack(p), 1e-5);
    for (std::size_t k = 0; k < fd.size(); ++k)
      if (!(std::abs(analytic[k] - fd[k]) <= 1e-4 * std::abs(fd[k]) + 1e-7)) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("duplicated pairs with half weights") {
  Rng rng(11);
  const AlignmentProblem p = make_problem(rng, oracle::random_pose(rng), 7, 0.05, true);
  AlignmentProblem d;
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t k = 0; k < p.size(); ++k) {
      d.source.push_back(p.source[k]);
      d.target.push_back(p.target[k]);
      d.weights.push_back(0.5 * p.weights[k]);
    }
  const Pose a = kabsch(p);
  const Pose b = kabsch(d);
  CHECK((a.rotation - b.rotation).norm() < 1e-9);
  CHECK((a.translation - b.translation).norm() < 1e-9);
  PoseGradient up;
  up.rotation = Mat3::Identity() * 0.3 + Mat3::Ones() * 0.1;
  up.translation = Vec3(0.2, -1, 0.5);
  const auto ga = kabsch_vjp(p, up);
  const auto gb = kabsch_vjp(d, up);
  for (std::size_t k = 0; k < p.size(); ++k) {
    CHECK((ga.source[k] - gb.source[k] - gb.source[k + p.size()]).norm() < 1e-9);
    CHECK((ga.target[k] - gb.target[k] - gb.target[k + p.size()]).norm() < 1e-9);
  }
}

TEST_CASE("ill-conditioned rotation differential is refused") {
  AlignmentProblem p;
  for (int a = 0; a < 3; ++a)
    for (double s : {1.0, -1.0}) {
      Vec3 x = Vec3::Zero();
      x(a) = s;
      p.source.push_back(x);
      p.target.push_back(-x);
    }
  const KabschSolution sol = kabsch_solve(p);
  CHECK(sol.reflection_sign == -1.0);
  CHECK(std::abs(sol.gradient_gap()) < 1e-12);
  PoseGradient up;
  up.rotation = Mat3::Ones();
  CHECK_THROWS_AS(kabsch_vjp(p, sol, up), IllConditionedGradientError);
  try {
    kabsch_vjp(p, sol, up);
  } catch (const IllConditionedGradientError& e) {
    CHECK(std::abs(e.gap()) < 1e-12);
  }
}
