#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mrp/evaluation.hpp"
#include "mrp/gradcheck.hpp"
#include "mrp/objective.hpp"
#include "mrp/ransac.hpp"
#include "mrp/toy.hpp"
#include "mrp/training.hpp"

namespace mrp {

enum class SolveSource {
  kMaps,             // sample correspondence sets from rendered keypoint maps
  kCorrespondences,  // run RANSAC on the ground-truth correspondence list
};

/// Every tunable of the command-line tools. Defaults follow the published
/// training and inference settings; the curriculum ramp is compressed to the
/// length of the toy run.
struct RunConfig {
  std::uint64_t seed = 0;

  SceneConfig scene;
  int scenes = 4;

  double tau = 0.15;
  double beta = 5.0 / 0.15;
  int max_refine = 4;
  int degenerate_retries = 5;
  int train_hypotheses = 20;
  int train_min_set = 5;
  int test_hypotheses = 100;
  int test_min_set = 3;

  SamplingConfig sampling;
  double dustbin = 1.0;

  double vcre_max = 120.0;
  double null_score_fraction = 0.3;
  bool null_hypothesis = true;
  VirtualGridSpec grid;
  double threshold = kDefaultVcreThreshold;

  SolveSource solve_source = SolveSource::kMaps;

  /// Optimizer, schedule and initialization. Its sampling, RANSAC, grid and
  /// null-hypothesis fields are overwritten by training().
  TrainConfig train = default_train();

  GradcheckOptions gradcheck;

  RansacConfig train_ransac() const;
  RansacConfig test_ransac() const;
  TrainConfig training() const;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  static TrainConfig default_train();
};

/// Compact single-line JSON with sorted keys.
std::string to_json(const RunConfig& cfg);

/// Strict: unknown keys and wrong types throw ValidationError. Keys absent
/// from `json_text` keep the values of `base`.
RunConfig parse_run_config(std::string_view json_text, const RunConfig& base = RunConfig{});

/// Applies "dotted.key=value" overrides; values are JSON literals, or bare
/// strings when they do not parse as JSON.
RunConfig apply_overrides(const RunConfig& cfg, std::span<const std::string> overrides);

/// Defaults (seed from `default_seed` when given), then the optional file,
/// then overrides; the result is validated.
RunConfig load_run_config(const std::string& path, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> default_seed = std::nullopt);

}  // namespace mrp
