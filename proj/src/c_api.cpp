#include "mrp/mrp.h"

#include <cstdio>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "mrp/commands.hpp"
#include "mrp/config.hpp"
#include "mrp/errors.hpp"
#include "mrp/io.hpp"
#include "mrp/kabsch.hpp"
#include "mrp/objective.hpp"
#include "mrp/ransac.hpp"

struct mrp_config {
  mrp::RunConfig value;
};
struct mrp_scene {
  mrp::SyntheticScene value;
};
struct mrp_text {
  std::string value;
};

namespace {

thread_local std::string last_error;

template <class F>
mrp_status guarded(F&& f) {
  last_error.clear();
  try {
    return f();
  } catch (const mrp::Error& e) {
    last_error = e.what();
    return static_cast<mrp_status>(e.error_class());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return MRP_ERR_INTERNAL;
}

mrp_status fail(mrp_status status, const char* message) {
  last_error = message;
  return status;
}

void emit(mrp_text** out, std::string text) {
  if (out) *out = new mrp_text{std::move(text)};
}

void write_pose(const mrp::Pose& pose, double out[12]) {
  const auto v = pose.to_row_major();
  for (int k = 0; k < 12; ++k) out[k] = v[k];
}

mrp::Pose read_pose(const double in[12]) {
  std::array<double, 12> v{};
  for (int k = 0; k < 12; ++k) v[k] = in[k];
  return mrp::Pose::from_row_major(v);
}

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

}  // namespace

extern "C" {

const char* mrp_version(void) { return "1.0.0"; }

const char* mrp_last_error(void) { return last_error.c_str(); }

const char* mrp_text_data(const mrp_text* text) { return text ? text->value.c_str() : ""; }

void mrp_text_destroy(mrp_text* text) { delete text; }

mrp_status mrp_config_create(const char* path, const char* const* overrides, size_t override_count,
                             const uint64_t* default_seed, mrp_config** out) {
  if (!out) return fail(MRP_ERR_VALIDATION, "null output handle");
  *out = nullptr;
  if (override_count && !overrides) return fail(MRP_ERR_VALIDATION, "null override list");
  return guarded([&] {
    std::vector<std::string> items;
    for (size_t k = 0; k < override_count; ++k) {
      if (!overrides[k]) return fail(MRP_ERR_VALIDATION, "null override entry");
      items.emplace_back(overrides[k]);
    }
    std::optional<std::uint64_t> seed;
    if (default_seed) seed = *default_seed;
    *out = new mrp_config{mrp::load_run_config(path ? path : "", items, seed)};
    return MRP_OK;
  });
}

void mrp_config_destroy(mrp_config* cfg) { delete cfg; }

mrp_status mrp_config_json(const mrp_config* cfg, mrp_text** out) {
  if (!cfg || !out) return fail(MRP_ERR_VALIDATION, "null handle");
  return guarded([&] {
    emit(out, mrp::to_json(cfg->value));
    return MRP_OK;
  });
}

uint64_t mrp_config_seed(const mrp_config* cfg) { return cfg ? cfg->value.seed : 0; }

mrp_status mrp_scene_generate(const mrp_config* cfg, int index, mrp_scene** out) {
  if (!cfg || !out) return fail(MRP_ERR_VALIDATION, "null handle");
  *out = nullptr;
  if (index < 0) return fail(MRP_ERR_VALIDATION, "scene index must be >= 0");
  return guarded([&] {
    *out = new mrp_scene{mrp::run_scene(cfg->value, index)};
    return MRP_OK;
  });
}

mrp_status mrp_scene_load(const char* path, mrp_scene** out) {
  if (!path || !out) return fail(MRP_ERR_VALIDATION, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new mrp_scene{mrp::parse_scene(mrp::read_text(path))};
    return MRP_OK;
  });
}

mrp_status mrp_scene_save(const mrp_scene* scene, const char* path) {
  if (!scene || !path) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    mrp::write_text(path, mrp::serialize_scene(scene->value));
    return MRP_OK;
  });
}

void mrp_scene_destroy(mrp_scene* scene) { delete scene; }

size_t mrp_scene_point_count(const mrp_scene* scene) { return scene ? scene->value.points.size() : 0; }

void mrp_scene_gt_relative(const mrp_scene* scene, double pose[12]) {
  if (scene && pose) write_pose(scene->value.gt_relative, pose);
}

mrp_status mrp_scene_solve(const mrp_config* cfg, const mrp_scene* scene, double pose[12], double* confidence,
                           int* has_estimate) {
  if (!cfg || !scene || !pose || !confidence || !has_estimate) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const mrp::RunConfig& c = cfg->value;
    const mrp::SyntheticScene& s = scene->value;
    mrp::Rng rng = mrp::Rng::substream(c.seed, 0x501e, 0);
    *has_estimate = 0;
    try {
      mrp::PoseEstimate est;
      if (c.solve_source == mrp::SolveSource::kMaps) {
        const auto a = mrp::render_ground_truth_maps(s, mrp::View::kA, s.seed);
        const auto b = mrp::render_ground_truth_maps(s, mrp::View::kB, s.seed);
        est = mrp::estimate_pose(a, s.camera_a.K, b, s.camera_b.K, c.dustbin, c.sampling, c.test_ransac(), rng);
      } else {
        est = mrp::estimate_pose(mrp::ground_truth_correspondences(s, s.seed), c.test_ransac(), rng);
      }
      write_pose(est.pose, pose);
      *confidence = est.confidence;
      *has_estimate = 1;
    } catch (const mrp::NoHypothesisError&) {
    }
    return MRP_OK;
  });
}

mrp_status mrp_kabsch(const double* source, const double* target, const double* weights, size_t n,
                      double pose[12]) {
  if (!source || !target || !pose) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    mrp::AlignmentProblem p;
    for (size_t k = 0; k < n; ++k) {
      p.source.emplace_back(source[3 * k], source[3 * k + 1], source[3 * k + 2]);
      p.target.emplace_back(target[3 * k], target[3 * k + 1], target[3 * k + 2]);
      if (weights) p.weights.push_back(weights[k]);
    }
    write_pose(mrp::kabsch(p), pose);
    return MRP_OK;
  });
}

mrp_status mrp_vcre(const double estimate[12], const double truth[12], const double intrinsics[4],
                    double* value) {
  if (!estimate || !truth || !intrinsics || !value) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    mrp::Intrinsics K;
    K.fx = intrinsics[0];
    K.fy = intrinsics[1];
    K.cx = intrinsics[2];
    K.cy = intrinsics[3];
    K.width = static_cast<int>(2.0 * K.cx);
    K.height = static_cast<int>(2.0 * K.cy);
    if (!(K.fx > 0.0 && K.fy > 0.0)) throw mrp::DomainError("focal lengths must be positive");
    *value = mrp::vcre(read_pose(estimate), read_pose(truth), K, mrp::default_virtual_grid()).value;
    return MRP_OK;
  });
}

mrp_status mrp_generate(const mrp_config* cfg, const char* out_dir, mrp_text** summary) {
  if (!cfg || !out_dir) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const int n = mrp::cmd_generate(cfg->value, out_dir);
    emit(summary, "generated " + std::to_string(n) + " scenes in " + out_dir + "\n");
    return MRP_OK;
  });
}

mrp_status mrp_solve(const mrp_config* cfg, const char* manifest, const char* out_estimates, mrp_text** summary) {
  if (!cfg || !manifest || !out_estimates) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const auto est = mrp::cmd_solve(cfg->value, manifest, out_estimates);
    int present = 0;
    for (const auto& e : est) present += e.pose.has_value();
    emit(summary, "solved " + std::to_string(present) + " of " + std::to_string(est.size()) + " pairs -> " +
                      out_estimates + "\n");
    return MRP_OK;
  });
}

mrp_status mrp_train(const mrp_config* cfg, const char* out_dir, const char* resume, mrp_text** summary) {
  if (!cfg || !out_dir) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    std::optional<std::filesystem::path> from;
    if (resume) from = resume;
    const auto s = mrp::cmd_train(cfg->value, out_dir, from);
    emit(summary, "iterations " + std::to_string(s.start_iteration) + " -> " + std::to_string(s.end_iteration) +
                      "\nfirst_loss " + fmt("%.6g", s.first_loss) + "\nlast_loss " + fmt("%.6g", s.last_loss) +
                      "\n");
    return MRP_OK;
  });
}

mrp_status mrp_eval(const mrp_config* cfg, const char* estimates, const char* ground_truth, const char* out_report,
                    const char* out_curve, mrp_text** summary) {
  if (!cfg || !estimates || !ground_truth || !out_report || !out_curve)
    return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const auto ev = mrp::cmd_eval(cfg->value, estimates, ground_truth, out_report, out_curve);
    emit(summary, mrp::serialize_report({"", ev.report}));
    return MRP_OK;
  });
}

mrp_status mrp_gradcheck(const mrp_config* cfg, mrp_text** table) {
  if (!cfg) return fail(MRP_ERR_VALIDATION, "null argument");
  return guarded([&] {
    const auto t = mrp::cmd_gradcheck(cfg->value);
    emit(table, t.text);
    if (!t.passed) return fail(MRP_ERR_NUMERICAL, "gradient check failed");
    return MRP_OK;
  });
}

}  // extern "C"
