#include "mrp/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "mrp/errors.hpp"
#include "mrp/kabsch.hpp"
#include "mrp/objective.hpp"
#include "mrp/ransac.hpp"
#include "mrp/rng.hpp"
#include "mrp/toy.hpp"
#include "mrp/training.hpp"

namespace mrp {
namespace {

Vec3 random_vec(Rng& rng, double sigma) {
  return {rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma)};
}

Pose random_pose(Rng& rng, double max_angle, double translation) {
  Vec3 axis = random_vec(rng, 1.0);
  while (axis.norm() < 1e-3) axis = random_vec(rng, 1.0);
  return {axis_angle(axis.normalized(), rng.uniform(-max_angle, max_angle)), random_vec(rng, translation)};
}

// Central differences of f over every coordinate of `x`, restoring it after.
std::vector<double> central_differences(std::vector<double*> coords, const std::function<double()>& f,
                                        double step) {
  std::vector<double> out;
  out.reserve(coords.size());
  for (double* c : coords) {
    const double saved = *c;
    *c = saved + step;
    const double up = f();
    *c = saved - step;
    const double down = f();
    *c = saved;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

void push(std::vector<double*>& coords, Mat3& m) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) coords.push_back(&m(r, c));
}
void push(std::vector<double*>& coords, Vec3& v) {
  for (int k = 0; k < 3; ++k) coords.push_back(&v(k));
}
void append(std::vector<double>& out, const Mat3& m) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
}
void append(std::vector<double>& out, const Vec3& v) {
  for (int k = 0; k < 3; ++k) out.push_back(v(k));
}

void corrupt(std::vector<double>& analytic) {
  double norm = 0.0;
  for (double a : analytic) norm += a * a;
  analytic.front() += 1e-2 * (std::sqrt(norm) + 1.0);
}

double kabsch_instance(Rng& rng, const GradcheckOptions& opt, bool inject) {
  const int n = 3 + static_cast<int>(rng.index(10));
  const Pose truth = random_pose(rng, M_PI, 1.0);
  AlignmentProblem p;
  for (int k = 0; k < n; ++k) {
    const Vec3 x = random_vec(rng, 1.0);
    p.source.push_back(x);
    p.target.push_back(truth * x + random_vec(rng, 0.05));
    p.weights.push_back(rng.uniform(0.5, 1.5));
  }
  PoseGradient upstream;
  for (int k = 0; k < 9; ++k) upstream.rotation(k / 3, k % 3) = rng.normal(0.0, 1.0);
  upstream.translation = random_vec(rng, 1.0);
  const auto loss = [&] {
    const Pose h = kabsch(p);
    return (upstream.rotation.array() * h.rotation.array()).sum() + upstream.translation.dot(h.translation);
  };
  const KabschGradient g = kabsch_vjp(p, upstream);
  std::vector<double> analytic;
  std::vector<double*> coords;
  for (int k = 0; k < n; ++k) {
    append(analytic, g.source[k]);
    push(coords, p.source[k]);
  }
  for (int k = 0; k < n; ++k) {
    append(analytic, g.target[k]);
    push(coords, p.target[k]);
  }
  for (int k = 0; k < n; ++k) {
    analytic.push_back(g.weights[k]);
    coords.push_back(&p.weights[k]);
  }
  if (inject) corrupt(analytic);
  return relative_error(analytic, central_differences(coords, loss, opt.step));
}

double soft_inlier_instance(Rng& rng, const GradcheckOptions& opt, bool inject) {
  const double tau = 0.15;
  const double beta = 5.0 / tau;
  const int n = 5 + static_cast<int>(rng.index(20));
  Pose h = random_pose(rng, 0.5, 1.0);
  CorrespondenceSet set(n);
  for (auto& c : set) {
    c.x = random_vec(rng, 1.0) + Vec3(0, 0, 3);
    c.x_prime = h * c.x + random_vec(rng, 0.1);
  }
  const auto loss = [&] { return soft_inlier_count(h, set, tau, beta); };
  const auto g = soft_inlier_count_vjp(h, set, tau, beta, 1.0);
  std::vector<double> analytic;
  std::vector<double*> coords;
  append(analytic, g.pose.rotation);
  push(coords, h.rotation);
  append(analytic, g.pose.translation);
  push(coords, h.translation);
  for (int k = 0; k < n; ++k) {
    append(analytic, g.source[k]);
    push(coords, set[k].x);
    append(analytic, g.target[k]);
    push(coords, set[k].x_prime);
  }
  if (inject) corrupt(analytic);
  return relative_error(analytic, central_differences(coords, loss, opt.step));
}

double vcre_instance(Rng& rng, const GradcheckOptions& opt, bool inject) {
  SceneConfig sc;
  const Intrinsics K = sc.intrinsics();
  const VirtualGrid grid = default_virtual_grid();
  const Pose gt = random_pose(rng, 0.3, 0.5);
  Pose h = random_pose(rng, 0.05, 0.1) * gt;
  const auto loss = [&] { return vcre(h, gt, K, grid).value; };
  const PoseGradient g = vcre_gradient(h, gt, K, grid);
  std::vector<double> analytic;
  std::vector<double*> coords;
  append(analytic, g.rotation);
  push(coords, h.rotation);
  append(analytic, g.translation);
  push(coords, h.translation);
  if (inject) corrupt(analytic);
  return relative_error(analytic, central_differences(coords, loss, opt.step));
}

// d(expected loss)/d(one log depth) of a toy pair with sampling frozen.
double chain_instance(Rng& rng, const GradcheckOptions& opt, bool inject) {
  SceneConfig sc;
  const SyntheticScene scene = generate_scene(sc, rng);
  TrainConfig cfg;
  const std::vector<SyntheticScene> scenes{scene};
  ToyBackbone backbone = initialize_backbone(scenes, cfg, rng);
  const VirtualGrid grid = virtual_grid(cfg.grid);
  const std::uint64_t seed = rng.next_u64();

  const PairEvaluation base = evaluate_pair(backbone, 0, scene, grid, cfg, seed, true);
  std::vector<Eigen::Index> candidates;
  double largest = 0.0;
  for (int image = 0; image < 2; ++image)
    for (int c = 0; c < backbone.cells(); ++c)
      largest = std::max(largest, std::abs(base.gradient(backbone.depth_index(image) + c)));
  for (int image = 0; image < 2; ++image)
    for (int c = 0; c < backbone.cells(); ++c) {
      const Eigen::Index idx = backbone.depth_index(image) + c;
      if (std::abs(base.gradient(idx)) > 1e-3 * largest) candidates.push_back(idx);
    }
  if (candidates.empty()) return 0.0;
  const Eigen::Index idx = candidates[rng.index(candidates.size())];

  std::vector<double> analytic{base.gradient(idx)};
  if (inject) corrupt(analytic);
  const auto loss = [&] { return evaluate_pair(backbone, 0, scene, grid, cfg, seed, false).loss; };
  return relative_error(analytic, central_differences({&backbone.parameters()(idx)}, loss, opt.step));
}

}  // namespace

const char* suite_name(GradSuite suite) {
  switch (suite) {
    case GradSuite::kKabsch: return "kabsch";
    case GradSuite::kSoftInlier: return "soft_inlier";
    case GradSuite::kVcre: return "vcre";
    case GradSuite::kChain: return "chain";
  }
  return "?";
}

GradSuite parse_suite(const std::string& name) {
  for (GradSuite s : all_suites())
    if (name == suite_name(s)) return s;
  throw ValidationError("unknown gradient suite '" + name + "'");
}

const std::vector<GradSuite>& all_suites() {
  static const std::vector<GradSuite> suites{GradSuite::kKabsch, GradSuite::kSoftInlier, GradSuite::kVcre,
                                             GradSuite::kChain};
  return suites;
}

double default_tolerance(GradSuite suite) { return suite == GradSuite::kChain ? 1e-3 : 1e-4; }

void GradcheckOptions::validate() const {
  if (instances < 1) throw ValidationError("gradcheck needs at least one instance");
  if (tolerance && !(*tolerance > 0.0)) throw ValidationError("gradcheck tolerance must be positive");
  if (!(step > 0.0)) throw ValidationError("finite-difference step must be positive");
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient lengths differ");
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
    na += analytic[k] * analytic[k];
    nn += numeric[k] * numeric[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

GradcheckRow run_suite(GradSuite suite, const GradcheckOptions& options, std::uint64_t seed) {
  options.validate();
  GradcheckRow row;
  row.suite = suite;
  row.instances = options.instances;
  row.tolerance = options.tolerance.value_or(default_tolerance(suite));
  const bool inject = options.inject == suite;
  for (int k = 0; k < options.instances; ++k) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(suite), static_cast<std::uint64_t>(k));
    double err = 0.0;
    switch (suite) {
      case GradSuite::kKabsch: err = kabsch_instance(rng, options, inject); break;
      case GradSuite::kSoftInlier: err = soft_inlier_instance(rng, options, inject); break;
      case GradSuite::kVcre: err = vcre_instance(rng, options, inject); break;
      case GradSuite::kChain: err = chain_instance(rng, options, inject); break;
    }
    if (!(err < row.tolerance)) ++row.failures;
    if (!(err <= row.max_error)) row.max_error = err;
  }
  return row;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options, std::uint64_t seed) {
  std::vector<GradcheckRow> rows;
  for (GradSuite s : all_suites()) rows.push_back(run_suite(s, options, seed));
  return rows;
}

}  // namespace mrp
