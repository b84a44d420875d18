// mrp: command-line front end over the C library.
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrp/mrp.h"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "JSON run configuration");
  cmd->add_option("-s,--set", c.overrides, "Override a config field, e.g. train.iterations=500")
      ->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "Run seed (default: $MRP_SEED, else 0)");
}

int report(mrp_status status) {
  if (status != MRP_OK) std::fprintf(stderr, "mrp: %s\n", mrp_last_error());
  return static_cast<int>(status);
}

void print(mrp_text* text) {
  if (!text) return;
  std::fputs(mrp_text_data(text), stdout);
  mrp_text_destroy(text);
}

// Flags win over the config file, which wins over $MRP_SEED.
int make_config(Common& c, std::vector<std::string> extra, mrp_config** out) {
  std::optional<std::uint64_t> env_seed;
  if (const char* env = std::getenv("MRP_SEED"); env && *env) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || *end != '\0' || env[0] == '-') {
      std::fprintf(stderr, "mrp: MRP_SEED must be a non-negative integer\n");
      return MRP_ERR_VALIDATION;
    }
    env_seed = v;
  }
  std::vector<std::string> items = c.overrides;
  items.insert(items.end(), extra.begin(), extra.end());
  if (c.seed) items.push_back("seed=" + std::to_string(*c.seed));
  std::vector<const char*> ptrs;
  for (const auto& s : items) ptrs.push_back(s.c_str());
  return report(mrp_config_create(c.config.empty() ? nullptr : c.config.c_str(), ptrs.data(), ptrs.size(),
                                  env_seed ? &*env_seed : nullptr, out));
}

struct ConfigGuard {
  mrp_config* cfg = nullptr;
  ~ConfigGuard() { mrp_config_destroy(cfg); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable metric relative pose: synthetic scenes, solver, training, evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mrp_version()));

  Common common;
  bool print_config = false;
  app.add_flag("--print-config", print_config, "Echo the effective configuration before running");

  auto* gen = app.add_subcommand("generate", "Write seeded synthetic scenes, a manifest and ground truth");
  add_common(gen, common);
  std::string gen_out;
  std::optional<int> count;
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_option("-n,--count", count, "Number of scenes (scene.count)");

  auto* solve = app.add_subcommand("solve", "Estimate the relative pose of every scene in a manifest");
  add_common(solve, common);
  std::string manifest;
  std::string solve_out;
  solve->add_option("-m,--manifest", manifest, "Manifest written by generate")->required();
  solve->add_option("-o,--out", solve_out, "Estimates file")->required();

  auto* train = app.add_subcommand("train", "Train the toy backbone end to end");
  add_common(train, common);
  std::string train_out;
  std::string resume;
  std::optional<int> iterations;
  std::optional<double> lr;
  train->add_option("-o,--out", train_out, "Directory for history, checkpoint and diagnostics")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");
  train->add_option("--iterations", iterations, "Total iterations (train.iterations)");
  train->add_option("--lr", lr, "Learning rate (train.learning_rate)");

  auto* eval = app.add_subcommand("eval", "Score estimates against ground truth");
  add_common(eval, common);
  std::string estimates;
  std::string gt;
  std::string report_path;
  std::string curve_path;
  eval->add_option("-e,--estimates", estimates, "Estimates file")->required();
  eval->add_option("-g,--gt", gt, "Ground-truth file")->required();
  eval->add_option("-r,--report", report_path, "Report output")->required();
  eval->add_option("--curve", curve_path, "Precision-vs-ratio curve output")->required();
  std::optional<double> threshold;
  eval->add_option("--threshold", threshold, "VCRE threshold in pixels (eval.threshold)");

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  add_common(grad, common);
  std::optional<double> tolerance;
  std::string inject;
  std::optional<int> instances;
  grad->add_option("--tolerance", tolerance, "Relative error bound for every suite");
  grad->add_option("--inject", inject, "Corrupt one suite's analytic gradient (kabsch|soft_inlier|vcre|chain)");
  grad->add_option("--instances", instances, "Random instances per suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return MRP_ERR_VALIDATION;
  }

  const auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::vector<std::string> extra;
  if (count) extra.push_back("scene.count=" + std::to_string(*count));
  if (iterations) extra.push_back("train.iterations=" + std::to_string(*iterations));
  if (lr) extra.push_back("train.learning_rate=" + num(*lr));
  if (threshold) extra.push_back("eval.threshold=" + num(*threshold));
  if (tolerance) extra.push_back("gradcheck.tolerance=" + num(*tolerance));
  if (!inject.empty()) extra.push_back("gradcheck.inject=\"" + inject + "\"");
  if (instances) extra.push_back("gradcheck.instances=" + std::to_string(*instances));

  ConfigGuard guard;
  if (const int rc = make_config(common, extra, &guard.cfg); rc != 0) return rc;
  if (print_config) {
    mrp_text* json = nullptr;
    if (mrp_config_json(guard.cfg, &json) == MRP_OK) {
      print(json);
      std::fputc('\n', stdout);
    }
  }

  mrp_text* out = nullptr;
  mrp_status status = MRP_OK;
  if (*gen) {
    status = mrp_generate(guard.cfg, gen_out.c_str(), &out);
  } else if (*solve) {
    status = mrp_solve(guard.cfg, manifest.c_str(), solve_out.c_str(), &out);
  } else if (*train) {
    status = mrp_train(guard.cfg, train_out.c_str(), resume.empty() ? nullptr : resume.c_str(), &out);
  } else if (*eval) {
    status = mrp_eval(guard.cfg, estimates.c_str(), gt.c_str(), report_path.c_str(), curve_path.c_str(), &out);
  } else if (*grad) {
    status = mrp_gradcheck(guard.cfg, &out);
  }
  print(out);
  return report(status);
}
