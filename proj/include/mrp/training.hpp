#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mrp/objective.hpp"
#include "mrp/ransac.hpp"
#include "mrp/toy.hpp"

namespace mrp {

enum class OptimizerKind { kAdam, kMomentum };

struct BackboneInit {
  double offset_noise = 0.3;       // std of offset logits around the truth
  double depth_noise = 0.1;        // std of log depth around the truth
  double descriptor_noise = 0.08;  // per-component std added before normalization
  double confidence = 0.0;         // every logit starts here
};

struct TrainConfig {
  std::uint64_t seed = 0;
  int iterations = 2000;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  SamplingConfig sampling;
  RansacConfig ransac = RansacConfig::train();
  double dustbin_init = 1.0;
  bool null_hypothesis = true;
  double null_score_fraction = 0.3;
  double vcre_max = 120.0;
  VirtualGridSpec grid;
  CurriculumSchedule curriculum;
  BackboneInit init;

  /// Reuse the same sampling noise every iteration (common random numbers).
  bool frozen_sampling = true;
  int checkpoint_interval = 500;
  /// Fault injection for the divergence guard; negative disables.
  long inject_nan_iteration = -1;

  void validate() const;
};

/// Loss and gradient of one image pair under the current backbone.
struct PairEvaluation {
  double loss = 0.0;                 // mean expected VCRE over the Q draws
  std::vector<double> sample_losses; // one per draw
  int failed_samples = 0;            // draws with no usable hypothesis
  Eigen::VectorXd gradient;          // backbone parameter space; empty unless requested
};

/// Runs the Q-sample training objective for scene `scene_index` (backbone
/// images 2k and 2k+1). Randomness comes only from `seed`.
PairEvaluation evaluate_pair(const ToyBackbone& backbone, int scene_index,
                             const SyntheticScene& scene, const VirtualGrid& grid,
                             const TrainConfig& cfg, std::uint64_t seed, bool with_gradient);

/// Backbone for `scenes` initialized around the noiseless ground-truth maps.
ToyBackbone initialize_backbone(std::span<const SyntheticScene> scenes, const TrainConfig& cfg,
                                Rng& rng);

struct HistoryRecord {
  long iteration = 0;
  double loss_selected = 0.0;  // mean over curriculum-selected pairs
  double loss_all = 0.0;       // mean over every pair
  double gradient_norm = 0.0;
  int selected = 0;
  bool operator==(const HistoryRecord&) const = default;
};

struct OptimizerState {
  long step = 0;
  Eigen::VectorXd first;   // Adam m / momentum velocity
  Eigen::VectorXd second;  // Adam v
};

/// Curriculum-selected, null-hypothesis-damped REINFORCE training of a toy
/// backbone.
class Trainer {
 public:
  Trainer(std::vector<SyntheticScene> scenes, TrainConfig cfg, ToyBackbone backbone);

  /// One optimizer step. Throws NumericalError on a non-finite loss or
  /// gradient; diagnostic() then describes the state.
  HistoryRecord step();
  /// Steps until cfg.iterations; `on_checkpoint` fires every
  /// checkpoint_interval iterations and at the end.
  void run(const std::function<void(const Trainer&)>& on_checkpoint = {});

  /// Mean expected VCRE of every pair at the current parameters, using the
  /// evaluation seed of `iteration`.
  std::vector<double> pair_losses(long iteration) const;

  long iteration() const { return iteration_; }
  const ToyBackbone& backbone() const { return backbone_; }
  const OptimizerState& optimizer() const { return optimizer_; }
  const std::vector<HistoryRecord>& history() const { return history_; }
  const std::vector<SyntheticScene>& scenes() const { return scenes_; }
  const TrainConfig& config() const { return cfg_; }
  const std::string& diagnostic() const { return diagnostic_; }

  /// Restores parameters, optimizer state and the iteration counter.
  void restore(long iteration, const Eigen::VectorXd& parameters, const OptimizerState& optimizer);

 private:
  std::uint64_t pair_seed(long iteration, int scene) const;
  void apply_update(const Eigen::VectorXd& gradient);

  std::vector<SyntheticScene> scenes_;
  TrainConfig cfg_;
  ToyBackbone backbone_;
  VirtualGrid grid_;
  OptimizerState optimizer_;
  long iteration_ = 0;
  std::vector<HistoryRecord> history_;
  std::string diagnostic_;
};

}  // namespace mrp
