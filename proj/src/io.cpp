#include "mrp/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

constexpr std::string_view kVersion = "v1";

class Lines {
 public:
  Lines(std::string_view text, std::string_view tag) {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string_view line = text.substr(pos, end - pos);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) lines_.push_back(line);
      pos = end + 1;
    }
    const auto header = tokens();
    if (header.size() != 2 || header[0] != tag)
      throw IoError("expected a '" + std::string(tag) + "' header");
    if (header[1] != kVersion)
      throw IoError("unsupported " + std::string(tag) + " version '" + std::string(header[1]) + "'");
  }

  bool done() const { return next_ >= lines_.size(); }

  /// Consumes an optional "config <json>" line.
  std::string config() {
    if (done()) return {};
    const std::string_view line = lines_[next_];
    if (line.substr(0, 7) != "config ") return {};
    ++next_;
    return std::string(line.substr(7));
  }

  std::vector<std::string_view> tokens() {
    if (done()) throw IoError("unexpected end of file");
    std::vector<std::string_view> out;
    const std::string_view line = lines_[next_++];
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      std::size_t end = pos;
      while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
      if (end > pos) out.push_back(line.substr(pos, end - pos));
      pos = end;
    }
    return out;
  }

  /// Next line, which must start with `key` and carry `count` values
  /// (negative: any number).
  std::vector<std::string_view> record(std::string_view key, int count = -1) {
    auto t = tokens();
    if (t.empty() || t[0] != key) throw IoError("expected record '" + std::string(key) + "'");
    t.erase(t.begin());
    if (count >= 0 && static_cast<int>(t.size()) != count)
      throw IoError("record '" + std::string(key) + "' has " + std::to_string(t.size()) +
                    " values, expected " + std::to_string(count));
    return t;
  }

 private:
  std::vector<std::string_view> lines_;
  std::size_t next_ = 0;
};

template <class Int>
Int parse_int(std::string_view token) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw IoError("malformed integer '" + std::string(token) + "'");
  return value;
}

void write_header(std::ostringstream& out, std::string_view tag, const std::string& config) {
  out << tag << ' ' << kVersion << '\n';
  if (!config.empty()) {
    if (config.find('\n') != std::string::npos) throw ValidationError("config echo must be a single line");
    out << "config " << config << '\n';
  }
}

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of(" \t\r\n") != std::string::npos || id == "none")
    throw ValidationError("identifier '" + id + "' must be non-empty without whitespace");
}

void put_pose(std::ostringstream& out, const Pose& pose) {
  for (double v : pose.to_row_major()) out << ' ' << format_double(v);
}

Pose take_pose(const std::vector<std::string_view>& t, std::size_t first) {
  if (t.size() < first + 12) throw IoError("pose needs 12 numbers");
  std::array<double, 12> v{};
  for (std::size_t k = 0; k < 12; ++k) v[k] = parse_double(t[first + k]);
  return Pose::from_row_major(v);
}

void put_intrinsics(std::ostringstream& out, const Intrinsics& K) {
  out << ' ' << format_double(K.fx) << ' ' << format_double(K.fy) << ' ' << format_double(K.cx) << ' '
      << format_double(K.cy) << ' ' << K.width << ' ' << K.height;
}

Intrinsics take_intrinsics(const std::vector<std::string_view>& t, std::size_t first) {
  if (t.size() < first + 6) throw IoError("intrinsics need 6 values");
  Intrinsics K;
  K.fx = parse_double(t[first]);
  K.fy = parse_double(t[first + 1]);
  K.cx = parse_double(t[first + 2]);
  K.cy = parse_double(t[first + 3]);
  K.width = parse_int<int>(t[first + 4]);
  K.height = parse_int<int>(t[first + 5]);
  return K;
}

void put_optional(std::ostringstream& out, const char* key, const std::optional<double>& v) {
  out << key << ' ' << (v ? format_double(*v) : std::string("none")) << '\n';
}

std::optional<double> take_optional(Lines& in, std::string_view key) {
  const auto t = in.record(key, 1);
  if (t[0] == "none") return std::nullopt;
  return parse_double(t[0]);
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

double parse_double(std::string_view token) {
  const std::string s(token);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw IoError("malformed number '" + s + "'");
  return v;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return buf.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string serialize_scene(const SyntheticScene& s) {
  check_id(s.id);
  std::ostringstream out;
  write_header(out, "mrp-scene", "");
  out << "id " << s.id << '\n';
  out << "seed " << s.seed << '\n';
  out << "grid " << s.grid_width << ' ' << s.grid_height << ' ' << s.cell_size << '\n';
  out << "descriptor_dim " << s.descriptor_dim << '\n';
  out << "depth_range " << format_double(s.depth_min) << ' ' << format_double(s.depth_max) << '\n';
  out << "noise_sigma " << format_double(s.noise_sigma) << '\n';
  out << "outlier_fraction " << format_double(s.outlier_fraction) << '\n';
  for (const auto& [key, cam] : {std::pair{"camera_a", &s.camera_a}, std::pair{"camera_b", &s.camera_b}}) {
    out << key;
    put_intrinsics(out, cam->K);
    put_pose(out, cam->pose);
    out << '\n';
  }
  out << "gt_relative";
  put_pose(out, s.gt_relative);
  out << '\n';
  out << "points " << s.points.size() << '\n';
  for (const Vec3& p : s.points)
    out << "p " << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
  out << "outliers " << s.outliers.size();
  for (int k : s.outliers) out << ' ' << k;
  out << '\n';
  return out.str();
}

SyntheticScene parse_scene(std::string_view text) {
  Lines in(text, "mrp-scene");
  in.config();
  SyntheticScene s;
  s.id = std::string(in.record("id", 1)[0]);
  s.seed = parse_int<std::uint64_t>(in.record("seed", 1)[0]);
  auto t = in.record("grid", 3);
  s.grid_width = parse_int<int>(t[0]);
  s.grid_height = parse_int<int>(t[1]);
  s.cell_size = parse_int<int>(t[2]);
  s.descriptor_dim = parse_int<int>(in.record("descriptor_dim", 1)[0]);
  t = in.record("depth_range", 2);
  s.depth_min = parse_double(t[0]);
  s.depth_max = parse_double(t[1]);
  s.noise_sigma = parse_double(in.record("noise_sigma", 1)[0]);
  s.outlier_fraction = parse_double(in.record("outlier_fraction", 1)[0]);
  for (const auto& [key, cam] : {std::pair{"camera_a", &s.camera_a}, std::pair{"camera_b", &s.camera_b}}) {
    t = in.record(key, 18);
    cam->K = take_intrinsics(t, 0);
    cam->pose = take_pose(t, 6);
  }
  s.gt_relative = take_pose(in.record("gt_relative", 12), 0);
  const auto n = parse_int<std::size_t>(in.record("points", 1)[0]);
  s.points.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    t = in.record("p", 3);
    s.points.emplace_back(parse_double(t[0]), parse_double(t[1]), parse_double(t[2]));
  }
  t = in.record("outliers");
  if (t.empty() || parse_int<std::size_t>(t[0]) != t.size() - 1) throw IoError("outlier count mismatch");
  for (std::size_t k = 1; k < t.size(); ++k) {
    const int idx = parse_int<int>(t[k]);
    if (idx < 0 || static_cast<std::size_t>(idx) >= s.points.size()) throw IoError("outlier index out of range");
    s.outliers.push_back(idx);
  }
  if (!in.done()) throw IoError("trailing content in scene file");
  return s;
}

std::string serialize_manifest(const Manifest& m) {
  std::ostringstream out;
  write_header(out, "mrp-manifest", m.config);
  out << "count " << m.scenes.size() << '\n';
  for (const auto& s : m.scenes) {
    check_id(s);
    out << "scene " << s << '\n';
  }
  return out.str();
}

Manifest parse_manifest(std::string_view text) {
  Lines in(text, "mrp-manifest");
  Manifest m;
  m.config = in.config();
  const auto n = parse_int<std::size_t>(in.record("count", 1)[0]);
  for (std::size_t k = 0; k < n; ++k) m.scenes.emplace_back(in.record("scene", 1)[0]);
  if (!in.done()) throw IoError("trailing content in manifest");
  return m;
}

std::string serialize_ground_truth(const GroundTruthFile& f) {
  std::ostringstream out;
  write_header(out, "mrp-gt", f.config);
  for (const auto& g : f.pairs) {
    check_id(g.pair_id);
    out << "pair " << g.pair_id;
    put_intrinsics(out, g.K);
    put_pose(out, g.pose);
    out << '\n';
  }
  return out.str();
}

GroundTruthFile parse_ground_truth(std::string_view text) {
  Lines in(text, "mrp-gt");
  GroundTruthFile f;
  f.config = in.config();
  while (!in.done()) {
    const auto t = in.record("pair", 19);
    f.pairs.push_back({std::string(t[0]), take_pose(t, 7), take_intrinsics(t, 1)});
  }
  return f;
}

std::string serialize_estimates(const EstimatesFile& f) {
  std::ostringstream out;
  write_header(out, "mrp-estimates", f.config);
  for (const auto& e : f.estimates) {
    check_id(e.pair_id);
    out << "pair " << e.pair_id << ' ' << format_double(e.confidence);
    if (e.pose) {
      put_pose(out, *e.pose);
    } else {
      out << " none";
    }
    out << '\n';
  }
  return out.str();
}

EstimatesFile parse_estimates(std::string_view text) {
  Lines in(text, "mrp-estimates");
  EstimatesFile f;
  f.config = in.config();
  while (!in.done()) {
    const auto t = in.record("pair");
    Estimate e;
    if (t.size() == 3 && t[2] == "none") {
      e.pair_id = std::string(t[0]);
      e.confidence = parse_double(t[1]);
    } else if (t.size() == 14) {
      e.pair_id = std::string(t[0]);
      e.confidence = parse_double(t[1]);
      e.pose = take_pose(t, 2);
    } else {
      throw IoError("estimate record needs '<id> <confidence> none' or '<id> <confidence> <12 numbers>'");
    }
    f.estimates.push_back(std::move(e));
  }
  return f;
}

std::string serialize_report(const ReportFile& f) {
  const EvalReport& r = f.report;
  std::ostringstream out;
  write_header(out, "mrp-report", f.config);
  out << "pairs " << r.pairs << '\n';
  out << "estimated " << r.estimated << '\n';
  out << "threshold " << format_double(r.threshold) << '\n';
  out << "precision " << format_double(r.precision) << '\n';
  out << "auc " << format_double(r.auc) << '\n';
  put_optional(out, "median_translation", r.median_translation);
  put_optional(out, "median_rotation", r.median_rotation);
  put_optional(out, "median_vcre", r.median_vcre);
  out << "estimate_rate " << format_double(r.estimate_rate) << '\n';
  out << "tie_break " << r.tie_break << '\n';
  return out.str();
}

ReportFile parse_report(std::string_view text) {
  Lines in(text, "mrp-report");
  ReportFile f;
  f.config = in.config();
  EvalReport& r = f.report;
  r.pairs = parse_int<int>(in.record("pairs", 1)[0]);
  r.estimated = parse_int<int>(in.record("estimated", 1)[0]);
  r.threshold = parse_double(in.record("threshold", 1)[0]);
  r.precision = parse_double(in.record("precision", 1)[0]);
  r.auc = parse_double(in.record("auc", 1)[0]);
  r.median_translation = take_optional(in, "median_translation");
  r.median_rotation = take_optional(in, "median_rotation");
  r.median_vcre = take_optional(in, "median_vcre");
  r.estimate_rate = parse_double(in.record("estimate_rate", 1)[0]);
  r.tie_break = std::string(in.record("tie_break", 1)[0]);
  if (!in.done()) throw IoError("trailing content in report");
  return f;
}

bool operator==(const PrecisionCurve& a, const PrecisionCurve& b) {
  return a.order == b.order && a.ratios == b.ratios && a.precisions == b.precisions && a.auc == b.auc;
}

std::string serialize_curve(const CurveFile& f) {
  const PrecisionCurve& c = f.curve;
  std::ostringstream out;
  write_header(out, "mrp-curve", f.config);
  out << "auc " << format_double(c.auc) << '\n';
  out << "# pair_id ratio precision\n";
  for (std::size_t k = 0; k < c.order.size(); ++k)
    out << "point " << c.order[k] << ' ' << format_double(c.ratios[k]) << ' '
        << format_double(c.precisions[k]) << '\n';
  return out.str();
}

CurveFile parse_curve(std::string_view text) {
  Lines in(text, "mrp-curve");
  CurveFile f;
  f.config = in.config();
  f.curve.auc = parse_double(in.record("auc", 1)[0]);
  while (!in.done()) {
    auto t = in.tokens();
    if (!t.empty() && t[0] == "#") continue;
    if (t.size() != 4 || t[0] != "point") throw IoError("malformed curve point");
    f.curve.order.emplace_back(t[1]);
    f.curve.ratios.push_back(parse_double(t[2]));
    f.curve.precisions.push_back(parse_double(t[3]));
  }
  return f;
}

std::string serialize_history(const HistoryFile& f) {
  std::ostringstream out;
  write_header(out, "mrp-history", f.config);
  out << "# iteration loss_selected loss_all gradient_norm selected\n";
  for (const auto& r : f.records)
    out << "iter " << r.iteration << ' ' << format_double(r.loss_selected) << ' '
        << format_double(r.loss_all) << ' ' << format_double(r.gradient_norm) << ' ' << r.selected << '\n';
  return out.str();
}

HistoryFile parse_history(std::string_view text) {
  Lines in(text, "mrp-history");
  HistoryFile f;
  f.config = in.config();
  while (!in.done()) {
    auto t = in.tokens();
    if (!t.empty() && t[0] == "#") continue;
    if (t.size() != 6 || t[0] != "iter") throw IoError("malformed history record");
    f.records.push_back({parse_int<long>(t[1]), parse_double(t[2]), parse_double(t[3]),
                         parse_double(t[4]), parse_int<int>(t[5])});
  }
  return f;
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  const ToyBackbone& x = a.backbone;
  const ToyBackbone& y = b.backbone;
  return a.config == b.config && a.iteration == b.iteration && x.images() == y.images() &&
         x.grid_width() == y.grid_width() && x.grid_height() == y.grid_height() &&
         x.cell_size() == y.cell_size() && x.descriptor_dim() == y.descriptor_dim() &&
         x.parameters() == y.parameters() && a.optimizer.step == b.optimizer.step &&
         a.optimizer.first == b.optimizer.first && a.optimizer.second == b.optimizer.second;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  const ToyBackbone& bb = c.backbone;
  const Eigen::Index n = bb.parameter_count();
  if (c.optimizer.first.size() != n || c.optimizer.second.size() != n)
    throw ShapeError("optimizer state does not match the backbone");
  std::ostringstream out;
  write_header(out, "mrp-checkpoint", c.config);
  out << "iteration " << c.iteration << '\n';
  out << "backbone " << bb.images() << ' ' << bb.grid_width() << ' ' << bb.grid_height() << ' '
      << bb.cell_size() << ' ' << bb.descriptor_dim() << '\n';
  out << "optimizer_step " << c.optimizer.step << '\n';
  out << "parameters " << n << '\n';
  out << "# value first_moment second_moment\n";
  for (Eigen::Index k = 0; k < n; ++k)
    out << format_double(bb.parameters()(k)) << ' ' << format_double(c.optimizer.first(k)) << ' '
        << format_double(c.optimizer.second(k)) << '\n';
  return out.str();
}

Checkpoint parse_checkpoint(std::string_view text) {
  Lines in(text, "mrp-checkpoint");
  Checkpoint c;
  c.config = in.config();
  c.iteration = parse_int<long>(in.record("iteration", 1)[0]);
  auto t = in.record("backbone", 5);
  c.backbone = ToyBackbone(parse_int<int>(t[0]), parse_int<int>(t[1]), parse_int<int>(t[2]),
                           parse_int<int>(t[3]), parse_int<int>(t[4]));
  c.optimizer.step = parse_int<long>(in.record("optimizer_step", 1)[0]);
  const auto n = parse_int<Eigen::Index>(in.record("parameters", 1)[0]);
  if (n != c.backbone.parameter_count()) throw IoError("parameter count does not match the backbone shape");
  c.optimizer.first.resize(n);
  c.optimizer.second.resize(n);
  Eigen::Index k = 0;
  while (k < n) {
    t = in.tokens();
    if (!t.empty() && t[0] == "#") continue;
    if (t.size() != 3) throw IoError("malformed checkpoint parameter line");
    c.backbone.parameters()(k) = parse_double(t[0]);
    c.optimizer.first(k) = parse_double(t[1]);
    c.optimizer.second(k) = parse_double(t[2]);
    ++k;
  }
  if (!in.done()) throw IoError("trailing content in checkpoint");
  return c;
}

}  // namespace mrp
