#include "mrp/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

// Stable softmax of `logits` written into `out`; returns nothing, out sums to 1.
template <typename In, typename Out>
void softmax(const In& logits, Out&& out) {
  const double top = logits.maxCoeff();
  out = (logits.array() - top).exp().matrix();
  out /= out.sum();
}

}  // namespace

void KeypointMaps::validate() const {
  const int n = size();
  if (width <= 0 || height <= 0 || cell_size <= 0) throw ShapeError("empty keypoint grid");
  if (offsets.cols() != n || depth.size() != n || confidence.size() != n || descriptors.cols() != n)
    throw ShapeError("keypoint map sizes disagree with the grid");
  if ((offsets.array() < 0.0).any() || (offsets.array() > 1.0).any())
    throw DomainError("offsets outside [0,1]");
  if (!(depth.array() > 0.0).all()) throw DomainError("non-positive depth");
  if (!confidence.allFinite()) throw DomainError("non-finite confidence");
  for (int k = 0; k < n; ++k)
    if (std::abs(descriptors.col(k).norm() - 1.0) > 1e-6) throw DomainError("descriptor not unit norm");
}

SimilarityMatrix similarity_matrix(const Eigen::MatrixXd& descriptors_a,
                                   const Eigen::MatrixXd& descriptors_b, double dustbin_logit) {
  if (descriptors_a.rows() != descriptors_b.rows())
    throw ShapeError("descriptor lengths differ: " + std::to_string(descriptors_a.rows()) + " vs " +
                     std::to_string(descriptors_b.rows()));
  SimilarityMatrix m;
  m.values = descriptors_a.transpose() * descriptors_b;
  m.dustbin_logit = dustbin_logit;
  return m;
}

MatchDistribution match_distribution(const SimilarityMatrix& m, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("softmax temperature must be positive");
  const Eigen::Index n_a = m.values.rows();
  const Eigen::Index n_b = m.values.cols();
  const double dust = m.dustbin_logit / temperature;

  MatchDistribution out;
  out.forward.resize(n_a, n_b);
  out.backward.resize(n_a, n_b);
  out.forward_dustbin.resize(n_a);
  out.backward_dustbin.resize(n_b);

  Eigen::VectorXd row(n_b + 1);
  Eigen::VectorXd prob_row(n_b + 1);
  for (Eigen::Index i = 0; i < n_a; ++i) {
    row.head(n_b) = m.values.row(i).transpose() / temperature;
    row(n_b) = dust;
    softmax(row, prob_row);
    out.forward.row(i) = prob_row.head(n_b).transpose();
    out.forward_dustbin(i) = prob_row(n_b);
  }
  Eigen::VectorXd col(n_a + 1);
  Eigen::VectorXd prob_col(n_a + 1);
  for (Eigen::Index j = 0; j < n_b; ++j) {
    col.head(n_a) = m.values.col(j) / temperature;
    col(n_a) = dust;
    softmax(col, prob_col);
    out.backward.col(j) = prob_col.head(n_a);
    out.backward_dustbin(j) = prob_col(n_a);
  }
  out.mutual = out.forward.cwiseProduct(out.backward);
  return out;
}

Eigen::VectorXd keypoint_distribution(const Eigen::VectorXd& logits) {
  if (logits.size() == 0) throw ShapeError("empty confidence map");
  if (!logits.allFinite()) throw DomainError("non-finite confidence logits");
  Eigen::VectorXd out(logits.size());
  softmax(logits, out);
  return out;
}

CorrespondenceProbability correspondence_probability(MatchDistribution match,
                                                     Eigen::VectorXd keypoints_a,
                                                     Eigen::VectorXd keypoints_b) {
  if (match.forward.rows() != keypoints_a.size() || match.forward.cols() != keypoints_b.size() ||
      match.backward.rows() != keypoints_a.size() || match.backward.cols() != keypoints_b.size())
    throw ShapeError("correspondence factors have inconsistent shapes");
  CorrespondenceProbability P;
  // P(i,j) = [P_I(i) P(j|i)] [P_I'(j) P(i|j)]
  P.joint = (keypoints_a.asDiagonal() * match.forward)
                .cwiseProduct(match.backward * keypoints_b.asDiagonal());
  P.match = std::move(match);
  P.keypoints_a = std::move(keypoints_a);
  P.keypoints_b = std::move(keypoints_b);
  return P;
}

std::vector<CellPair> sample_pairs(const Eigen::MatrixXd& joint, int count, Rng& rng,
                                   bool with_replacement) {
  if (count < 1) throw DomainError("sample count must be positive");
  const Eigen::Index rows = joint.rows();
  std::vector<Eigen::Index> support;
  std::vector<double> weights;
  for (Eigen::Index k = 0; k < joint.size(); ++k) {
    // Column-major linear index; converted back below.
    const double p = joint.data()[k];
    if (p >= kMinSampleProbability && std::isfinite(p)) {
      support.push_back(k);
      weights.push_back(p);
    }
  }
  if (support.empty()) throw EmptyDistributionError("correspondence matrix has no sampleable entry");

  auto to_pair = [rows](Eigen::Index k) {
    return CellPair{static_cast<int>(k % rows), static_cast<int>(k / rows)};
  };

  std::vector<CellPair> out;
  out.reserve(count);
  if (with_replacement) {
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    for (int s = 0; s < count; ++s) out.push_back(to_pair(support[pick(rng.engine())]));
    return out;
  }

  if (static_cast<std::size_t>(count) > support.size())
    throw SupportError("requested " + std::to_string(count) + " pairs but only " +
                       std::to_string(support.size()) + " have non-zero probability");

  // Gumbel top-k: sorting log p + Gumbel noise reproduces sequential
  // categorical draws without replacement.
  std::vector<double> keys(support.size());
  for (std::size_t s = 0; s < support.size(); ++s) {
    double u = rng.uniform();
    if (u <= 0.0) u = std::numeric_limits<double>::min();
    keys[s] = std::log(weights[s]) - std::log(-std::log(u));
  }
  std::vector<std::size_t> order(support.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + count, order.end(),
                    [&](std::size_t l, std::size_t r) {
                      return keys[l] > keys[r] || (keys[l] == keys[r] && l < r);
                    });
  for (int s = 0; s < count; ++s) out.push_back(to_pair(support[order[s]]));
  return out;
}

CorrespondenceSet build_set(std::span<const CellPair> pairs, const Eigen::MatrixXd& joint,
                            const KeypointMaps& maps_a, const Intrinsics& K_a,
                            const KeypointMaps& maps_b, const Intrinsics& K_b) {
  CorrespondenceSet set;
  set.reserve(pairs.size());
  for (const CellPair& pair : pairs) {
    if (pair.a < 0 || pair.a >= maps_a.size() || pair.b < 0 || pair.b >= maps_b.size())
      throw ShapeError("cell pair outside the keypoint grids");
    set.push_back({pair.a, pair.b, maps_a.point(pair.a, K_a), maps_b.point(pair.b, K_b),
                   joint(pair.a, pair.b)});
  }
  return set;
}

CorrespondenceSet sample_set(const CorrespondenceProbability& P, const KeypointMaps& maps_a,
                             const Intrinsics& K_a, const KeypointMaps& maps_b,
                             const Intrinsics& K_b, int count, Rng& rng, bool with_replacement) {
  if (P.joint.rows() != maps_a.size() || P.joint.cols() != maps_b.size())
    throw ShapeError("probability matrix does not match the keypoint grids");
  const auto pairs = sample_pairs(P.joint, count, rng, with_replacement);
  return build_set(pairs, P.joint, maps_a, K_a, maps_b, K_b);
}

LogProbabilityGradient LogProbabilityGradient::zeros(int n_a, int n_b) {
  LogProbabilityGradient g;
  g.similarity = Eigen::MatrixXd::Zero(n_a, n_b);
  g.confidence_a = Eigen::VectorXd::Zero(n_a);
  g.confidence_b = Eigen::VectorXd::Zero(n_b);
  return g;
}

LogProbabilityGradient& LogProbabilityGradient::operator+=(const LogProbabilityGradient& other) {
  similarity += other.similarity;
  dustbin += other.dustbin;
  confidence_a += other.confidence_a;
  confidence_b += other.confidence_b;
  return *this;
}

LogProbabilityGradient& LogProbabilityGradient::operator*=(double s) {
  similarity *= s;
  dustbin *= s;
  confidence_a *= s;
  confidence_b *= s;
  return *this;
}

void accumulate_log_probability_gradient(const CorrespondenceProbability& P, double temperature,
                                         std::span<const CellPair> pairs, double coefficient,
                                         LogProbabilityGradient& out) {
  const auto& F = P.match.forward;
  const auto& B = P.match.backward;
  if (out.similarity.rows() != F.rows() || out.similarity.cols() != F.cols())
    throw ShapeError("gradient accumulator shape mismatch");
  const double c = coefficient;
  const double ct = coefficient / temperature;
  for (const CellPair& y : pairs) {
    // log P_I(i) and log P_I'(j): d/dC = e_i - softmax
    out.confidence_a(y.a) += c;
    out.confidence_b(y.b) += c;
    // log P(j|i): row softmax over [m(i,:), dustbin] / theta
    out.similarity.row(y.a) -= ct * F.row(y.a);
    out.similarity(y.a, y.b) += ct;
    out.dustbin -= ct * P.match.forward_dustbin(y.a);
    // log P(i|j): column softmax over [m(:,j), dustbin] / theta
    out.similarity.col(y.b) -= ct * B.col(y.b);
    out.similarity(y.a, y.b) += ct;
    out.dustbin -= ct * P.match.backward_dustbin(y.b);
  }
  const double total = c * static_cast<double>(pairs.size());
  out.confidence_a -= total * P.keypoints_a;
  out.confidence_b -= total * P.keypoints_b;
}

void similarity_vjp(const Eigen::MatrixXd& d_similarity, const Eigen::MatrixXd& descriptors_a,
                    const Eigen::MatrixXd& descriptors_b, Eigen::MatrixXd& d_descriptors_a,
                    Eigen::MatrixXd& d_descriptors_b) {
  // m = A^T B
  d_descriptors_a = descriptors_b * d_similarity.transpose();
  d_descriptors_b = descriptors_a * d_similarity;
}

}  // namespace mrp
