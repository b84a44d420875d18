#include "mrp/commands.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "mrp/errors.hpp"
#include "mrp/io.hpp"
#include "mrp/ransac.hpp"
#include "mrp/training.hpp"

namespace mrp {
namespace {

constexpr std::uint64_t kSceneStream = 0x5ce;
constexpr std::uint64_t kSolveStream = 0x501e;
constexpr std::uint64_t kInitStream = 0x1417;

std::string scene_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", index);
  return buf;
}

Estimate solve_scene(const RunConfig& cfg, const SyntheticScene& scene, std::uint64_t stream) {
  Rng rng = Rng::substream(cfg.seed, kSolveStream, stream);
  Estimate e;
  e.pair_id = scene.id;
  try {
    PoseEstimate est;
    if (cfg.solve_source == SolveSource::kMaps) {
      const KeypointMaps a = render_ground_truth_maps(scene, View::kA, scene.seed);
      const KeypointMaps b = render_ground_truth_maps(scene, View::kB, scene.seed);
      est = estimate_pose(a, scene.camera_a.K, b, scene.camera_b.K, cfg.dustbin, cfg.sampling,
                          cfg.test_ransac(), rng);
    } else {
      est = estimate_pose(ground_truth_correspondences(scene, scene.seed), cfg.test_ransac(), rng);
    }
    e.pose = est.pose;
    e.confidence = est.confidence;
  } catch (const NoHypothesisError&) {
  } catch (const InsufficientDataError&) {
  } catch (const DegenerateConfigurationError&) {
  }
  return e;
}

}  // namespace

SyntheticScene run_scene(const RunConfig& cfg, int index) {
  Rng rng = Rng::substream(cfg.seed, kSceneStream, static_cast<std::uint64_t>(index));
  SyntheticScene s = generate_scene(cfg.scene, rng);
  s.id = scene_id(index);
  return s;
}

std::vector<SyntheticScene> run_scenes(const RunConfig& cfg) {
  std::vector<SyntheticScene> out;
  for (int k = 0; k < cfg.scenes; ++k) out.push_back(run_scene(cfg, k));
  return out;
}

Trainer run_trainer(const RunConfig& cfg) {
  const TrainConfig tc = cfg.training();
  std::vector<SyntheticScene> scenes = run_scenes(cfg);
  Rng init_rng = Rng::substream(cfg.seed, kInitStream);
  ToyBackbone backbone = initialize_backbone(scenes, tc, init_rng);
  return Trainer(std::move(scenes), tc, std::move(backbone));
}

int cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const std::string echo = to_json(cfg);
  Manifest manifest{echo, {}};
  GroundTruthFile gt{echo, {}};
  for (const SyntheticScene& s : run_scenes(cfg)) {
    const std::string file = s.id + ".txt";
    write_text(out_dir / file, serialize_scene(s));
    manifest.scenes.push_back(file);
    gt.pairs.push_back({s.id, s.gt_relative, s.camera_a.K});
  }
  write_text(out_dir / "gt.txt", serialize_ground_truth(gt));
  write_text(out_dir / "manifest.txt", serialize_manifest(manifest));
  return static_cast<int>(manifest.scenes.size());
}

std::vector<Estimate> cmd_solve(const RunConfig& cfg, const std::filesystem::path& manifest_path,
                                const std::filesystem::path& out_estimates) {
  cfg.validate();
  const Manifest manifest = parse_manifest(read_text(manifest_path));
  const std::filesystem::path dir = manifest_path.parent_path();
  EstimatesFile out{to_json(cfg), {}};
  for (std::size_t k = 0; k < manifest.scenes.size(); ++k) {
    const SyntheticScene scene = parse_scene(read_text(dir / manifest.scenes[k]));
    out.estimates.push_back(solve_scene(cfg, scene, k));
  }
  write_text(out_estimates, serialize_estimates(out));
  return out.estimates;
}

TrainSummary cmd_train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                       const std::optional<std::filesystem::path>& resume) {
  cfg.validate();
  if (cfg.scenes < 1) throw ValidationError("training needs scene.count >= 1");
  const std::string echo = to_json(cfg);
  Trainer trainer = run_trainer(cfg);

  HistoryFile history{echo, {}};
  const std::filesystem::path history_path = out_dir / "history.txt";
  if (resume) {
    const Checkpoint ck = parse_checkpoint(read_text(*resume));
    trainer.restore(ck.iteration, ck.backbone.parameters(), ck.optimizer);
    if (std::filesystem::exists(history_path))
      for (const auto& r : parse_history(read_text(history_path)).records)
        if (r.iteration < ck.iteration) history.records.push_back(r);
  }
  const std::size_t carried = history.records.size();

  TrainSummary summary;
  summary.start_iteration = trainer.iteration();
  const auto save = [&](const Trainer& t) {
    HistoryFile h = history;
    h.records.insert(h.records.end(), t.history().begin(), t.history().end());
    write_text(history_path, serialize_history(h));
    write_text(out_dir / "checkpoint.txt",
               serialize_checkpoint({echo, t.iteration(), t.backbone(), t.optimizer()}));
  };
  try {
    trainer.run(save);
  } catch (const NumericalError&) {
    save(trainer);
    write_text(out_dir / "diagnostic.txt", trainer.diagnostic());
    throw;
  }
  if (trainer.history().empty() && carried == 0) save(trainer);

  summary.end_iteration = trainer.iteration();
  const auto losses = trainer.pair_losses(trainer.iteration());
  double mean = 0.0;
  for (double l : losses) mean += l;
  summary.last_loss = mean / static_cast<double>(losses.size());
  summary.first_loss = !history.records.empty()      ? history.records.front().loss_all
                       : !trainer.history().empty() ? trainer.history().front().loss_all
                                                    : summary.last_loss;
  return summary;
}

Evaluation cmd_eval(const RunConfig& cfg, const std::filesystem::path& estimates_path,
                    const std::filesystem::path& gt_path, const std::filesystem::path& out_report,
                    const std::filesystem::path& out_curve) {
  cfg.validate();
  const EstimatesFile est = parse_estimates(read_text(estimates_path));
  const GroundTruthFile gt = parse_ground_truth(read_text(gt_path));

  std::set<std::string> gt_ids;
  for (const auto& g : gt.pairs)
    if (!gt_ids.insert(g.pair_id).second) throw ValidationError("duplicate ground-truth pair '" + g.pair_id + "'");
  std::map<std::string, const Estimate*> by_id;
  for (const auto& e : est.estimates) {
    if (!gt_ids.count(e.pair_id)) throw ValidationError("estimate for unknown pair '" + e.pair_id + "'");
    if (!by_id.emplace(e.pair_id, &e).second) throw ValidationError("duplicate estimate for pair '" + e.pair_id + "'");
  }
  if (!est.estimates.empty() && by_id.size() != gt_ids.size())
    throw ValidationError("estimates cover " + std::to_string(by_id.size()) + " of " +
                          std::to_string(gt_ids.size()) + " pairs");

  std::vector<Estimate> aligned;
  for (const auto& g : gt.pairs) {
    const auto it = by_id.find(g.pair_id);
    aligned.push_back(it == by_id.end() ? Estimate{g.pair_id, std::nullopt, 0.0} : *it->second);
  }
  const Evaluation ev = evaluate(aligned, gt.pairs, virtual_grid(cfg.grid), cfg.threshold);
  const std::string echo = to_json(cfg);
  write_text(out_report, serialize_report({echo, ev.report}));
  write_text(out_curve, serialize_curve({echo, ev.curve}));
  return ev;
}

GradcheckTable cmd_gradcheck(const RunConfig& cfg) {
  cfg.validate();
  GradcheckTable table;
  table.rows = run_gradcheck(cfg.gradcheck, cfg.seed);
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %9s %8s %14s %10s  %s\n", "suite", "instances", "failures",
                "max_rel_error", "tolerance", "status");
  out << line;
  for (const auto& r : table.rows) {
    std::snprintf(line, sizeof line, "%-12s %9d %8d %14.3e %10.1e  %s\n", suite_name(r.suite), r.instances,
                  r.failures, r.max_error, r.tolerance, r.passed() ? "PASS" : "FAIL");
    out << line;
    table.passed = table.passed && r.passed();
  }
  table.text = out.str();
  return table;
}

}  // namespace mrp
