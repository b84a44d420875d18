#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mrp/config.hpp"
#include "mrp/evaluation.hpp"
#include "mrp/gradcheck.hpp"
#include "mrp/toy.hpp"
#include "mrp/training.hpp"

namespace mrp {

/// Scene k of a run: id "scene_<k>" drawn from its own seed substream.
SyntheticScene run_scene(const RunConfig& cfg, int index);
std::vector<SyntheticScene> run_scenes(const RunConfig& cfg);

/// Trainer over run_scenes(cfg) with the run's seeded backbone initialization.
Trainer run_trainer(const RunConfig& cfg);

/// Writes manifest.txt, gt.txt and one scene file per scene into `out_dir`.
/// Returns the number of scenes.
int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// One estimate per scene listed in `manifest`; unsolvable pairs get "none".
std::vector<Estimate> cmd_solve(const RunConfig& cfg, const std::filesystem::path& manifest,
                                const std::filesystem::path& out_estimates);

struct TrainSummary {
  long start_iteration = 0;
  long end_iteration = 0;
  double first_loss = 0.0;  // mean pair loss of the first recorded iteration
  double last_loss = 0.0;   // mean pair loss after the final update
};

/// Trains the toy backbone on run_scenes(cfg). Writes history.txt and
/// checkpoint.txt into `out_dir`; on divergence writes diagnostic.txt and
/// rethrows.
TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Matches estimates to ground truth by pair id (an empty estimates file
/// means nothing was estimated), writes the report and curve files.
Evaluation cmd_eval(const RunConfig& cfg, const std::filesystem::path& estimates,
                    const std::filesystem::path& ground_truth, const std::filesystem::path& out_report,
                    const std::filesystem::path& out_curve);

struct GradcheckTable {
  std::vector<GradcheckRow> rows;
  std::string text;
  bool passed = true;
};

GradcheckTable cmd_gradcheck(const RunConfig& cfg);

}  // namespace mrp
