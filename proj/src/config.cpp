#include "mrp/config.hpp"

#include <set>

#include <json.hpp>

#include "mrp/errors.hpp"
#include "mrp/io.hpp"

namespace mrp {
namespace {

using nlohmann::json;

json vec3(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

const std::set<std::string>& nullable_keys() {
  static const std::set<std::string> keys{"gradcheck.tolerance", "gradcheck.inject"};
  return keys;
}

bool same_kind(const json& base, const json& v) {
  if (base.is_boolean()) return v.is_boolean();
  if (base.is_number_integer()) return v.is_number_integer();
  if (base.is_number()) return v.is_number();
  if (base.is_string()) return v.is_string();
  if (base.is_array()) return v.is_array() && v.size() == base.size();
  return false;
}

void merge(json& base, const json& in, const std::string& path) {
  if (!in.is_object()) throw ValidationError("config section '" + path + "' must be an object");
  for (const auto& [k, v] : in.items()) {
    const std::string key = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ValidationError("unknown config key '" + key + "'");
    json& b = base[k];
    if (b.is_object()) {
      merge(b, v, key);
      continue;
    }
    const bool nullable = nullable_keys().count(key) > 0;
    if (nullable && (v.is_null() || b.is_null())) {
      b = v;
      continue;
    }
    if (!same_kind(b, v)) throw ValidationError("config key '" + key + "' has the wrong type");
    b = v;
  }
}

const char* source_name(SolveSource s) { return s == SolveSource::kMaps ? "maps" : "correspondences"; }

SolveSource parse_source(const std::string& s) {
  if (s == "maps") return SolveSource::kMaps;
  if (s == "correspondences") return SolveSource::kCorrespondences;
  throw ValidationError("solve.source must be 'maps' or 'correspondences'");
}

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "momentum"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "momentum") return OptimizerKind::kMomentum;
  throw ValidationError("train.optimizer must be 'adam' or 'momentum'");
}

json to_json_object(const RunConfig& c) {
  const SceneConfig& s = c.scene;
  const TrainConfig& t = c.train;
  json j;
  j["seed"] = c.seed;
  j["scene"] = {{"count", c.scenes},
                {"grid_width", s.grid_width},
                {"grid_height", s.grid_height},
                {"cell_size", s.cell_size},
                {"focal", s.focal},
                {"max_points", s.max_points},
                {"min_points", s.min_points},
                {"depth_min", s.depth_min},
                {"depth_max", s.depth_max},
                {"baseline_min", s.baseline_min},
                {"baseline_max", s.baseline_max},
                {"rotation_max_deg", s.rotation_max_deg},
                {"fixed_motion", s.fixed_motion},
                {"fixed_translation", vec3(s.fixed_translation)},
                {"fixed_rotation", vec3(s.fixed_rotation)},
                {"noise_sigma", s.noise_sigma},
                {"outlier_fraction", s.outlier_fraction},
                {"descriptor_dim", s.descriptor_dim},
                {"max_attempts", s.max_attempts}};
  j["ransac"] = {{"tau", c.tau},
                 {"beta", c.beta},
                 {"max_refine", c.max_refine},
                 {"degenerate_retries", c.degenerate_retries},
                 {"train_hypotheses", c.train_hypotheses},
                 {"train_min_set", c.train_min_set},
                 {"test_hypotheses", c.test_hypotheses},
                 {"test_min_set", c.test_min_set}};
  j["sampling"] = {{"temperature", c.sampling.temperature},
                   {"set_size", c.sampling.set_size},
                   {"samplings", c.sampling.samplings},
                   {"with_replacement", c.sampling.with_replacement},
                   {"dustbin", c.dustbin}};
  j["objective"] = {{"vcre_max", c.vcre_max},
                    {"null_score_fraction", c.null_score_fraction},
                    {"null_hypothesis", c.null_hypothesis},
                    {"grid",
                     {{"dims", vec3(c.grid.dims)},
                      {"counts", json::array({c.grid.counts[0], c.grid.counts[1], c.grid.counts[2]})},
                      {"center", vec3(c.grid.center)}}}};
  j["eval"] = {{"threshold", c.threshold}};
  j["solve"] = {{"source", source_name(c.solve_source)}};
  j["train"] = {{"iterations", t.iterations},
                {"learning_rate", t.learning_rate},
                {"optimizer", optimizer_name(t.optimizer)},
                {"momentum", t.momentum},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_epsilon", t.adam_epsilon},
                {"dustbin_init", t.dustbin_init},
                {"frozen_sampling", t.frozen_sampling},
                {"checkpoint_interval", t.checkpoint_interval},
                {"inject_nan_iteration", t.inject_nan_iteration},
                {"curriculum",
                 {{"start_fraction", t.curriculum.start_fraction},
                  {"increment_fraction", t.curriculum.increment_fraction},
                  {"increment_interval", t.curriculum.increment_interval},
                  {"max_fraction", t.curriculum.max_fraction},
                  {"warmup_end", t.curriculum.warmup_end}}},
                {"init",
                 {{"offset_noise", t.init.offset_noise},
                  {"depth_noise", t.init.depth_noise},
                  {"descriptor_noise", t.init.descriptor_noise},
                  {"confidence", t.init.confidence}}}};
  j["gradcheck"] = {{"instances", c.gradcheck.instances},
                    {"tolerance", c.gradcheck.tolerance ? json(*c.gradcheck.tolerance) : json(nullptr)},
                    {"inject", c.gradcheck.inject ? json(suite_name(*c.gradcheck.inject)) : json(nullptr)},
                    {"step", c.gradcheck.step}};
  return j;
}

RunConfig from_json_object(const json& j) {
  RunConfig c;
  const json& js = j.at("seed");
  if (js.is_number_integer() && !js.is_number_unsigned() && js.get<std::int64_t>() < 0)
    throw ValidationError("seed must be non-negative");
  c.seed = js.get<std::uint64_t>();

  const json& s = j.at("scene");
  c.scenes = s.at("count").get<int>();
  SceneConfig& sc = c.scene;
  sc.grid_width = s.at("grid_width").get<int>();
  sc.grid_height = s.at("grid_height").get<int>();
  sc.cell_size = s.at("cell_size").get<int>();
  sc.focal = s.at("focal").get<double>();
  sc.max_points = s.at("max_points").get<int>();
  sc.min_points = s.at("min_points").get<int>();
  sc.depth_min = s.at("depth_min").get<double>();
  sc.depth_max = s.at("depth_max").get<double>();
  sc.baseline_min = s.at("baseline_min").get<double>();
  sc.baseline_max = s.at("baseline_max").get<double>();
  sc.rotation_max_deg = s.at("rotation_max_deg").get<double>();
  sc.fixed_motion = s.at("fixed_motion").get<bool>();
  sc.fixed_translation = vec3(s.at("fixed_translation"));
  sc.fixed_rotation = vec3(s.at("fixed_rotation"));
  sc.noise_sigma = s.at("noise_sigma").get<double>();
  sc.outlier_fraction = s.at("outlier_fraction").get<double>();
  sc.descriptor_dim = s.at("descriptor_dim").get<int>();
  sc.max_attempts = s.at("max_attempts").get<int>();

  const json& r = j.at("ransac");
  c.tau = r.at("tau").get<double>();
  c.beta = r.at("beta").get<double>();
  c.max_refine = r.at("max_refine").get<int>();
  c.degenerate_retries = r.at("degenerate_retries").get<int>();
  c.train_hypotheses = r.at("train_hypotheses").get<int>();
  c.train_min_set = r.at("train_min_set").get<int>();
  c.test_hypotheses = r.at("test_hypotheses").get<int>();
  c.test_min_set = r.at("test_min_set").get<int>();

  const json& sm = j.at("sampling");
  c.sampling.temperature = sm.at("temperature").get<double>();
  c.sampling.set_size = sm.at("set_size").get<int>();
  c.sampling.samplings = sm.at("samplings").get<int>();
  c.sampling.with_replacement = sm.at("with_replacement").get<bool>();
  c.dustbin = sm.at("dustbin").get<double>();

  const json& o = j.at("objective");
  c.vcre_max = o.at("vcre_max").get<double>();
  c.null_score_fraction = o.at("null_score_fraction").get<double>();
  c.null_hypothesis = o.at("null_hypothesis").get<bool>();
  c.grid.dims = vec3(o.at("grid").at("dims"));
  for (int k = 0; k < 3; ++k) c.grid.counts[k] = o.at("grid").at("counts").at(k).get<int>();
  c.grid.center = vec3(o.at("grid").at("center"));

  c.threshold = j.at("eval").at("threshold").get<double>();
  c.solve_source = parse_source(j.at("solve").at("source").get<std::string>());

  const json& t = j.at("train");
  TrainConfig& tc = c.train;
  tc.iterations = t.at("iterations").get<int>();
  tc.learning_rate = t.at("learning_rate").get<double>();
  tc.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
  tc.momentum = t.at("momentum").get<double>();
  tc.adam_beta1 = t.at("adam_beta1").get<double>();
  tc.adam_beta2 = t.at("adam_beta2").get<double>();
  tc.adam_epsilon = t.at("adam_epsilon").get<double>();
  tc.dustbin_init = t.at("dustbin_init").get<double>();
  tc.frozen_sampling = t.at("frozen_sampling").get<bool>();
  tc.checkpoint_interval = t.at("checkpoint_interval").get<int>();
  tc.inject_nan_iteration = t.at("inject_nan_iteration").get<long>();
  const json& cu = t.at("curriculum");
  tc.curriculum.start_fraction = cu.at("start_fraction").get<double>();
  tc.curriculum.increment_fraction = cu.at("increment_fraction").get<double>();
  tc.curriculum.increment_interval = cu.at("increment_interval").get<long>();
  tc.curriculum.max_fraction = cu.at("max_fraction").get<double>();
  tc.curriculum.warmup_end = cu.at("warmup_end").get<long>();
  const json& in = t.at("init");
  tc.init.offset_noise = in.at("offset_noise").get<double>();
  tc.init.depth_noise = in.at("depth_noise").get<double>();
  tc.init.descriptor_noise = in.at("descriptor_noise").get<double>();
  tc.init.confidence = in.at("confidence").get<double>();

  const json& g = j.at("gradcheck");
  c.gradcheck.instances = g.at("instances").get<int>();
  if (!g.at("tolerance").is_null()) {
    if (!g.at("tolerance").is_number()) throw ValidationError("gradcheck.tolerance must be a number or null");
    c.gradcheck.tolerance = g.at("tolerance").get<double>();
  }
  if (!g.at("inject").is_null()) {
    if (!g.at("inject").is_string()) throw ValidationError("gradcheck.inject must be a suite name or null");
    c.gradcheck.inject = parse_suite(g.at("inject").get<std::string>());
  }
  c.gradcheck.step = g.at("step").get<double>();
  return c;
}

RunConfig merged(const RunConfig& base, const json& patch) {
  json full = to_json_object(base);
  merge(full, patch, "");
  try {
    return from_json_object(full);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

}  // namespace

TrainConfig RunConfig::default_train() {
  TrainConfig t;
  t.curriculum.increment_interval = 100;
  t.curriculum.max_fraction = 1.0;
  t.curriculum.warmup_end = 1000;
  return t;
}

RansacConfig RunConfig::train_ransac() const {
  RansacConfig r = RansacConfig::train();
  r.hypotheses = train_hypotheses;
  r.min_set = train_min_set;
  r.tau = tau;
  r.beta = beta;
  r.max_refine = max_refine;
  r.degenerate_retries = degenerate_retries;
  return r;
}

RansacConfig RunConfig::test_ransac() const {
  RansacConfig r = RansacConfig::test();
  r.hypotheses = test_hypotheses;
  r.min_set = test_min_set;
  r.tau = tau;
  r.beta = beta;
  r.max_refine = max_refine;
  r.degenerate_retries = degenerate_retries;
  return r;
}

TrainConfig RunConfig::training() const {
  TrainConfig t = train;
  t.seed = seed;
  t.sampling = sampling;
  t.ransac = train_ransac();
  t.null_hypothesis = null_hypothesis;
  t.null_score_fraction = null_score_fraction;
  t.vcre_max = vcre_max;
  t.grid = grid;
  return t;
}

void RunConfig::validate() const {
  scene.validate();
  if (scenes < 0) throw ValidationError("scene.count must be >= 0");
  train_ransac().validate();
  test_ransac().validate();
  sampling.validate();
  if (sampling.set_size < test_min_set) throw ValidationError("sampling.set_size below ransac.test_min_set");
  if (!std::isfinite(dustbin)) throw ValidationError("sampling.dustbin must be finite");
  if (!(threshold > 0.0)) throw ValidationError("eval.threshold must be positive");
  if (!(grid.dims.array() > 0.0).all()) throw ValidationError("objective.grid.dims must be positive");
  for (int n : grid.counts)
    if (n < 1) throw ValidationError("objective.grid.counts must be >= 1");
  training().validate();
  gradcheck.validate();
}

std::string to_json(const RunConfig& cfg) { return to_json_object(cfg).dump(); }

RunConfig parse_run_config(std::string_view json_text, const RunConfig& base) {
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return merged(base, patch);
}

RunConfig apply_overrides(const RunConfig& cfg, std::span<const std::string> overrides) {
  RunConfig out = cfg;
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json patch = value;
    std::size_t end = key.size();
    while (true) {
      const auto dot = key.rfind('.', end - 1);
      const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
      const std::string part = key.substr(begin, end - begin);
      if (part.empty()) throw ValidationError("override key '" + key + "' is malformed");
      patch = json{{part, patch}};
      if (dot == std::string::npos) break;
      end = dot;
    }
    out = merged(out, patch);
  }
  return out;
}

RunConfig load_run_config(const std::string& path, std::span<const std::string> overrides,
                          std::optional<std::uint64_t> default_seed) {
  RunConfig cfg;
  if (default_seed) cfg.seed = *default_seed;
  if (!path.empty()) cfg = parse_run_config(read_text(path), cfg);
  cfg = apply_overrides(cfg, overrides);
  cfg.validate();
  return cfg;
}

}  // namespace mrp
