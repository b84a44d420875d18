#include "mrp/training.hpp"

#include <cmath>
#include <sstream>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

// Pair-local parameter space shared by the score-function and pathwise
// gradients of one image pair: [offsets A | depth A | offsets B | depth B |
// similarity | dustbin | confidence A | confidence B].
struct PairLayout {
  Eigen::Index cells_a;
  Eigen::Index cells_b;
  Eigen::Index offsets_a() const { return 0; }
  Eigen::Index depth_a() const { return 2 * cells_a; }
  Eigen::Index offsets_b() const { return 3 * cells_a; }
  Eigen::Index depth_b() const { return 3 * cells_a + 2 * cells_b; }
  Eigen::Index similarity() const { return 3 * (cells_a + cells_b); }
  Eigen::Index dustbin() const { return similarity() + cells_a * cells_b; }
  Eigen::Index confidence_a() const { return dustbin() + 1; }
  Eigen::Index confidence_b() const { return confidence_a() + cells_a; }
  Eigen::Index size() const { return confidence_b() + cells_b; }
};

struct ScoredHypothesis {
  Hypothesis hypothesis;
  AlignmentProblem problem;
  KabschSolution solution;
};

}  // namespace

void TrainConfig::validate() const {
  if (iterations < 0) throw ValidationError("iterations must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0,1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ValidationError("Adam betas must be in [0,1)");
  if (!(adam_epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  sampling.validate();
  if (sampling.samplings < 2) throw ValidationError("training needs at least two samplings per pair");
  ransac.validate();
  if (sampling.set_size < ransac.min_set) throw ValidationError("set_size below the minimal set size");
  if (!(null_score_fraction > 0.0)) throw ValidationError("null score fraction must be positive");
  if (!(vcre_max > 0.0)) throw ValidationError("vcre_max must be positive");
  curriculum.validate();
  if (checkpoint_interval < 1) throw ValidationError("checkpoint_interval must be >= 1");
}

PairEvaluation evaluate_pair(const ToyBackbone& backbone, int scene_index,
                             const SyntheticScene& scene, const VirtualGrid& grid,
                             const TrainConfig& cfg, std::uint64_t seed, bool with_gradient) {
  const int image_a = 2 * scene_index;
  const int image_b = image_a + 1;
  const KeypointMaps maps_a = backbone.forward(image_a);
  const KeypointMaps maps_b = backbone.forward(image_b);
  const Intrinsics& K_a = scene.camera_a.K;
  const Intrinsics& K_b = scene.camera_b.K;
  const double theta = cfg.sampling.temperature;

  const auto sim = similarity_matrix(maps_a.descriptors, maps_b.descriptors, backbone.dustbin());
  const auto P = correspondence_probability(match_distribution(sim, theta),
                                            keypoint_distribution(maps_a.confidence),
                                            keypoint_distribution(maps_b.confidence));

  RansacConfig ransac = cfg.ransac;
  ransac.mode = RansacMode::kTrain;
  const PairLayout layout{maps_a.size(), maps_b.size()};
  const NullHypothesis null_h = make_null_hypothesis(
      cfg.null_score_fraction, static_cast<std::size_t>(cfg.sampling.set_size), cfg.vcre_max,
      cfg.null_hypothesis);

  PairEvaluation out;
  std::vector<ReinforceSample> samples;
  samples.reserve(cfg.sampling.samplings);
  for (int q = 0; q < cfg.sampling.samplings; ++q) {
    Rng stream = Rng::substream(seed, static_cast<std::uint64_t>(q));
    const auto pairs = sample_pairs(P.joint, cfg.sampling.set_size, stream, cfg.sampling.with_replacement);
    const CorrespondenceSet set = build_set(pairs, P.joint, maps_a, K_a, maps_b, K_b);

    std::vector<ScoredHypothesis> pool;
    try {
      for (Hypothesis& h : generate_hypotheses(set, ransac, stream)) {
        ScoredHypothesis s{std::move(h), {}, {}};
        s.problem = alignment_problem(set, s.hypothesis.solve_set);
        s.solution = kabsch_solve(s.problem);
        // Hypotheses whose rotation cannot be differentiated are discarded.
        if (!(s.solution.gradient_gap() > kKabschGradientGapTolerance * s.solution.singular_values(0)))
          continue;
        pool.push_back(std::move(s));
      }
    } catch (const NoHypothesisError&) {
      pool.clear();
    }

    ReinforceSample sample;
    std::vector<double> scores;
    std::vector<double> losses;
    for (const auto& s : pool) {
      scores.push_back(s.hypothesis.score);
      losses.push_back(vcre(s.solution.pose, scene.gt_relative, K_a, grid).value);
    }
    ExpectedLoss expected;
    if (pool.empty()) {
      ++out.failed_samples;
      sample.loss = cfg.vcre_max;
    } else {
      expected = expected_set_loss(scores, losses, null_h);
      sample.loss = expected.value;
    }
    out.sample_losses.push_back(sample.loss);

    if (with_gradient) {
      sample.pathwise = Eigen::VectorXd::Zero(layout.size());
      sample.score_function = Eigen::VectorXd::Zero(layout.size());

      std::vector<Vec3> d_source(set.size(), Vec3::Zero());
      std::vector<Vec3> d_target(set.size(), Vec3::Zero());
      for (std::size_t k = 0; k < pool.size(); ++k) {
        const Pose& pose = pool[k].solution.pose;
        PoseGradient upstream = vcre_gradient(pose, scene.gt_relative, K_a, grid) * expected.d_losses[k];
        const auto soft = soft_inlier_count_vjp(pose, set, ransac.tau, ransac.beta, expected.d_scores[k]);
        upstream += soft.pose;
        for (std::size_t y = 0; y < set.size(); ++y) {
          d_source[y] += soft.source[y];
          d_target[y] += soft.target[y];
        }
        const auto kg = kabsch_vjp(pool[k].problem, pool[k].solution, upstream);
        const auto& members = pool[k].hypothesis.solve_set;
        for (std::size_t m = 0; m < members.size(); ++m) {
          d_source[members[m]] += kg.source[m];
          d_target[members[m]] += kg.target[m];
        }
      }
      MapsGradient ga = MapsGradient::zeros(maps_a.size(), 0);
      MapsGradient gb = MapsGradient::zeros(maps_b.size(), 0);
      for (std::size_t y = 0; y < set.size(); ++y) {
        accumulate_point_vjp(maps_a, set[y].cell_a, K_a, d_source[y], ga);
        accumulate_point_vjp(maps_b, set[y].cell_b, K_b, d_target[y], gb);
      }
      sample.pathwise.segment(layout.offsets_a(), 2 * layout.cells_a) =
          Eigen::Map<const Eigen::VectorXd>(ga.offsets.data(), 2 * layout.cells_a);
      sample.pathwise.segment(layout.depth_a(), layout.cells_a) = ga.depth;
      sample.pathwise.segment(layout.offsets_b(), 2 * layout.cells_b) =
          Eigen::Map<const Eigen::VectorXd>(gb.offsets.data(), 2 * layout.cells_b);
      sample.pathwise.segment(layout.depth_b(), layout.cells_b) = gb.depth;

      auto lpg = LogProbabilityGradient::zeros(static_cast<int>(layout.cells_a), static_cast<int>(layout.cells_b));
      accumulate_log_probability_gradient(P, theta, pairs, 1.0, lpg);
      sample.score_function.segment(layout.similarity(), layout.cells_a * layout.cells_b) =
          Eigen::Map<const Eigen::VectorXd>(lpg.similarity.data(), layout.cells_a * layout.cells_b);
      sample.score_function(layout.dustbin()) = lpg.dustbin;
      sample.score_function.segment(layout.confidence_a(), layout.cells_a) = lpg.confidence_a;
      sample.score_function.segment(layout.confidence_b(), layout.cells_b) = lpg.confidence_b;
    }
    samples.push_back(std::move(sample));
  }

  double total = 0.0;
  for (double l : out.sample_losses) total += l;
  out.loss = total / static_cast<double>(out.sample_losses.size());
  if (!with_gradient) return out;

  const Eigen::VectorXd local = reinforce_gradients(samples);

  // Chain the pair-local gradient into backbone parameters.
  const int dim = backbone.descriptor_dim();
  MapsGradient ga = MapsGradient::zeros(maps_a.size(), dim);
  MapsGradient gb = MapsGradient::zeros(maps_b.size(), dim);
  ga.offsets = Eigen::Map<const Eigen::Matrix2Xd>(local.data() + layout.offsets_a(), 2, layout.cells_a);
  ga.depth = local.segment(layout.depth_a(), layout.cells_a);
  gb.offsets = Eigen::Map<const Eigen::Matrix2Xd>(local.data() + layout.offsets_b(), 2, layout.cells_b);
  gb.depth = local.segment(layout.depth_b(), layout.cells_b);
  ga.confidence = local.segment(layout.confidence_a(), layout.cells_a);
  gb.confidence = local.segment(layout.confidence_b(), layout.cells_b);
  const Eigen::Map<const Eigen::MatrixXd> d_sim(local.data() + layout.similarity(), layout.cells_a, layout.cells_b);
  similarity_vjp(d_sim, maps_a.descriptors, maps_b.descriptors, ga.descriptors, gb.descriptors);

  out.gradient = Eigen::VectorXd::Zero(backbone.parameter_count());
  backbone_vjp(backbone, image_a, ga, out.gradient);
  backbone_vjp(backbone, image_b, gb, out.gradient);
  out.gradient(backbone.dustbin_index()) += local(layout.dustbin());
  return out;
}

ToyBackbone initialize_backbone(std::span<const SyntheticScene> scenes, const TrainConfig& cfg,
                                Rng& rng) {
  if (scenes.empty()) throw ValidationError("training needs at least one scene");
  const SyntheticScene& first = scenes.front();
  ToyBackbone backbone(2 * static_cast<int>(scenes.size()), first.grid_width, first.grid_height,
                       first.cell_size, first.descriptor_dim);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    SyntheticScene clean = scenes[s];
    if (clean.grid_width != first.grid_width || clean.grid_height != first.grid_height ||
        clean.descriptor_dim != first.descriptor_dim || clean.cell_size != first.cell_size)
      throw ValidationError("training scenes must share grid and descriptor layout");
    clean.noise_sigma = 0.0;
    clean.outliers.clear();
    for (View view : {View::kA, View::kB}) {
      KeypointMaps maps = render_ground_truth_maps(clean, view, clean.seed);
      const int image = 2 * static_cast<int>(s) + static_cast<int>(view);
      backbone.load_maps(image, maps);
      Eigen::VectorXd& p = backbone.parameters();
      for (Eigen::Index k = 0; k < 2 * backbone.cells(); ++k)
        p(backbone.offset_index(image) + k) += rng.normal(0.0, cfg.init.offset_noise);
      for (Eigen::Index k = 0; k < backbone.cells(); ++k) {
        p(backbone.depth_index(image) + k) += rng.normal(0.0, cfg.init.depth_noise);
        p(backbone.confidence_index(image) + k) = cfg.init.confidence;
      }
      const Eigen::Index n_desc = static_cast<Eigen::Index>(backbone.cells()) * backbone.descriptor_dim();
      for (Eigen::Index k = 0; k < n_desc; ++k)
        p(backbone.descriptor_index(image) + k) += rng.normal(0.0, cfg.init.descriptor_noise);
    }
  }
  backbone.dustbin() = cfg.dustbin_init;
  return backbone;
}

Trainer::Trainer(std::vector<SyntheticScene> scenes, TrainConfig cfg, ToyBackbone backbone)
    : scenes_(std::move(scenes)), cfg_(std::move(cfg)), backbone_(std::move(backbone)) {
  cfg_.validate();
  if (scenes_.empty()) throw ValidationError("training needs at least one scene");
  if (backbone_.images() != 2 * static_cast<int>(scenes_.size()))
    throw ShapeError("backbone image count must be twice the scene count");
  grid_ = virtual_grid(cfg_.grid);
  optimizer_.first = Eigen::VectorXd::Zero(backbone_.parameter_count());
  optimizer_.second = Eigen::VectorXd::Zero(backbone_.parameter_count());
}

std::uint64_t Trainer::pair_seed(long iteration, int scene) const {
  Rng r = cfg_.frozen_sampling
              ? Rng::substream(cfg_.seed, 0x7a11, static_cast<std::uint64_t>(scene))
              : Rng::substream(cfg_.seed, static_cast<std::uint64_t>(iteration) + 1,
                               static_cast<std::uint64_t>(scene));
  return r.next_u64();
}

std::vector<double> Trainer::pair_losses(long iteration) const {
  std::vector<double> out;
  for (std::size_t s = 0; s < scenes_.size(); ++s)
    out.push_back(evaluate_pair(backbone_, static_cast<int>(s), scenes_[s], grid_, cfg_,
                                pair_seed(iteration, static_cast<int>(s)), false)
                      .loss);
  return out;
}

HistoryRecord Trainer::step() {
  const long it = iteration_;
  std::vector<PairEvaluation> evals;
  std::vector<double> losses;
  for (std::size_t s = 0; s < scenes_.size(); ++s) {
    evals.push_back(evaluate_pair(backbone_, static_cast<int>(s), scenes_[s], grid_, cfg_,
                                  pair_seed(it, static_cast<int>(s)), true));
    losses.push_back(evals.back().loss);
  }
  if (cfg_.inject_nan_iteration == it) losses.front() = std::nan("");

  const auto selected = curriculum_select(losses, it, cfg_.curriculum);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(backbone_.parameter_count());
  HistoryRecord rec;
  rec.iteration = it;
  for (int s : selected) {
    grad += evals[s].gradient;
    rec.loss_selected += losses[s];
  }
  grad /= static_cast<double>(selected.size());
  rec.loss_selected /= static_cast<double>(selected.size());
  for (double l : losses) rec.loss_all += l;
  rec.loss_all /= static_cast<double>(losses.size());
  rec.gradient_norm = grad.norm();
  rec.selected = static_cast<int>(selected.size());

  if (!std::isfinite(rec.loss_all) || !std::isfinite(rec.gradient_norm)) {
    std::ostringstream diag;
    diag.precision(17);
    diag << "non-finite training state at iteration " << it << "\n";
    for (std::size_t s = 0; s < losses.size(); ++s) diag << "pair " << s << " loss " << losses[s] << "\n";
    diag << "gradient_norm " << rec.gradient_norm << "\n";
    diag << "parameter_norm " << backbone_.parameters().norm() << "\n";
    diag << "dustbin " << backbone_.dustbin() << "\n";
    diagnostic_ = diag.str();
    throw NumericalError("training diverged at iteration " + std::to_string(it));
  }

  apply_update(grad);
  history_.push_back(rec);
  ++iteration_;
  return rec;
}

void Trainer::apply_update(const Eigen::VectorXd& g) {
  Eigen::VectorXd& p = backbone_.parameters();
  ++optimizer_.step;
  if (cfg_.optimizer == OptimizerKind::kAdam) {
    optimizer_.first = cfg_.adam_beta1 * optimizer_.first + (1.0 - cfg_.adam_beta1) * g;
    optimizer_.second = cfg_.adam_beta2 * optimizer_.second + (1.0 - cfg_.adam_beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(optimizer_.step));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(optimizer_.step));
    p.array() -= cfg_.learning_rate * (optimizer_.first.array() / c1) /
                 ((optimizer_.second.array() / c2).sqrt() + cfg_.adam_epsilon);
  } else {
    optimizer_.first = cfg_.momentum * optimizer_.first + g;
    p -= cfg_.learning_rate * optimizer_.first;
  }
}

void Trainer::run(const std::function<void(const Trainer&)>& on_checkpoint) {
  while (iteration_ < cfg_.iterations) {
    step();
    if (on_checkpoint && (iteration_ % cfg_.checkpoint_interval == 0 || iteration_ == cfg_.iterations))
      on_checkpoint(*this);
  }
}

void Trainer::restore(long iteration, const Eigen::VectorXd& parameters,
                      const OptimizerState& optimizer) {
  if (parameters.size() != backbone_.parameter_count() ||
      optimizer.first.size() != parameters.size() || optimizer.second.size() != parameters.size())
    throw ShapeError("checkpoint does not match the backbone layout");
  backbone_.parameters() = parameters;
  optimizer_ = optimizer;
  iteration_ = iteration;
}

}  // namespace mrp
