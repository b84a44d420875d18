#include "mrp/kabsch.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

void check_problem(const AlignmentProblem& problem) {
  if (problem.source.size() != problem.target.size())
    throw ValidationError("source and target point counts differ");
  if (problem.source.size() < 3) throw ValidationError("alignment needs at least 3 pairs");
  if (!problem.weights.empty()) {
    if (problem.weights.size() != problem.source.size())
      throw ValidationError("weight count differs from pair count");
    double total = 0.0;
    for (double w : problem.weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw ValidationError("all weights are zero");
  }
}

Vec3 vee(const Mat3& S) { return {S(2, 1), S(0, 2), S(1, 0)}; }

}  // namespace

KabschSolution kabsch_solve(const AlignmentProblem& problem) {
  check_problem(problem);
  KabschSolution sol;
  const std::size_t n = problem.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double w = problem.weight(k);
    sol.total_weight += w;
    sol.source_mean += w * problem.source[k];
    sol.target_mean += w * problem.target[k];
  }
  if (!sol.source_mean.allFinite() || !sol.target_mean.allFinite())
    throw ValidationError("non-finite point coordinates");
  sol.source_mean /= sol.total_weight;
  sol.target_mean /= sol.total_weight;

  Mat3 H = Mat3::Zero();
  for (std::size_t k = 0; k < n; ++k)
    H += problem.weight(k) * (problem.source[k] - sol.source_mean) *
         (problem.target[k] - sol.target_mean).transpose();

  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  sol.U = svd.matrixU();
  sol.V = svd.matrixV();
  sol.singular_values = svd.singularValues();
  const Vec3& s = sol.singular_values;
  if (!(s(0) > 0.0) || s(1) <= kKabschRankTolerance * s(0))
    throw DegenerateConfigurationError("cross-covariance has rank < 2 (points collinear or coincident)");

  sol.reflection_sign = (sol.V * sol.U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Vec3 d(1.0, 1.0, sol.reflection_sign);
  sol.pose.rotation = sol.V * d.asDiagonal() * sol.U.transpose();
  sol.pose.translation = sol.target_mean - sol.pose.rotation * sol.source_mean;
  return sol;
}

Pose kabsch(const AlignmentProblem& problem) { return kabsch_solve(problem).pose; }

KabschGradient kabsch_vjp(const AlignmentProblem& problem, const KabschSolution& sol,
                          const PoseGradient& upstream) {
  const std::size_t n = problem.size();
  const Mat3& R = sol.pose.rotation;
  const Vec3& s = sol.singular_values;

  // t = mu' - R mu
  const Vec3 d_target_mean = upstream.translation;
  const Vec3 d_source_mean = -R.transpose() * upstream.translation;
  const Mat3 G = upstream.rotation - upstream.translation * sol.source_mean.transpose();

  // With A = R H symmetric, a perturbation dH moves R by [psi]x R where
  // (tr(A) I - A) psi = -vee(R dH - (R dH)^T). K = tr(A) I - A shares V's
  // eigenvectors with eigenvalues tr(DS) - d_k s_k.
  const double gap = sol.gradient_gap();
  if (!(gap > kKabschGradientGapTolerance * s(0))) throw IllConditionedGradientError(gap);

  const Vec3 d(1.0, 1.0, sol.reflection_sign);
  const Vec3 ds = d.cwiseProduct(s);
  const Vec3 kappa = Vec3::Constant(ds.sum()) - ds;
  const Vec3 g = vee(G * R.transpose() - R * G.transpose());
  const Vec3 a = sol.V * (sol.V.transpose() * g).cwiseQuotient(kappa);
  const Mat3 dH = -R.transpose() * skew(a);

  KabschGradient out;
  out.source.resize(n);
  out.target.resize(n);
  out.weights.resize(n);
  const double W = sol.total_weight;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = problem.weight(k);
    const Vec3 xs = problem.source[k] - sol.source_mean;
    const Vec3 xt = problem.target[k] - sol.target_mean;
    out.source[k] = w * (dH * xt) + (w / W) * d_source_mean;
    out.target[k] = w * (dH.transpose() * xs) + (w / W) * d_target_mean;
    out.weights[k] = xs.dot(dH * xt) + (d_source_mean.dot(xs) + d_target_mean.dot(xt)) / W;
  }
  return out;
}

KabschGradient kabsch_vjp(const AlignmentProblem& problem, const PoseGradient& upstream) {
  return kabsch_vjp(problem, kabsch_solve(problem), upstream);
}

}  // namespace mrp
