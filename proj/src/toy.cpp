#include "mrp/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mrp/errors.hpp"

namespace mrp {
namespace {

constexpr std::uint64_t kPointDescriptorStream = 0xde5c;
constexpr std::uint64_t kEmptyCellStream = 0xe117;

double draw(Rng& rng, double lo, double hi) { return lo == hi ? lo : rng.uniform(lo, hi); }

Vec3 random_unit(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Eigen::VectorXd random_descriptor(Rng& rng, int dim) {
  Eigen::VectorXd d(dim);
  for (int k = 0; k < dim; ++k) d(k) = rng.normal();
  return d.normalized();
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cell index and in-cell offset of a pixel, or -1 when outside the grid.
int locate(const Vec2& pixel, int grid_width, int grid_height, int cell_size, Vec2& offset) {
  const Vec2 cell_coord = pixel / static_cast<double>(cell_size);
  const double ci = std::floor(cell_coord.x());
  const double cj = std::floor(cell_coord.y());
  if (!(ci >= 0 && ci < grid_width && cj >= 0 && cj < grid_height)) return -1;
  offset = cell_coord - Vec2(ci, cj);
  return static_cast<int>(cj) * grid_width + static_cast<int>(ci);
}

}  // namespace

void SceneConfig::validate() const {
  if (grid_width < 1 || grid_height < 1 || cell_size < 1) throw ValidationError("scene grid must be non-empty");
  if (focal < 0.0) throw ValidationError("focal length must be >= 0");
  if (min_points < 20) throw ValidationError("scenes need at least 20 points");
  if (max_points != 0 && max_points < min_points) throw ValidationError("max_points below min_points");
  if (min_points > grid_width * grid_height) throw ValidationError("grid has fewer cells than min_points");
  if (!(depth_min > 0.0 && depth_max >= depth_min)) throw ValidationError("invalid depth range");
  if (!(baseline_min >= 0.0 && baseline_max >= baseline_min)) throw ValidationError("invalid baseline range");
  if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 180.0)) throw ValidationError("invalid rotation range");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
    throw ValidationError("outlier_fraction must be in [0,1)");
  if (descriptor_dim < 1) throw ValidationError("descriptor_dim must be positive");
  if (max_attempts < 1) throw ValidationError("max_attempts must be positive");
}

Intrinsics SceneConfig::intrinsics() const {
  Intrinsics K;
  K.width = grid_width * cell_size;
  K.height = grid_height * cell_size;
  K.fx = K.fy = focal > 0.0 ? focal : static_cast<double>(K.width);
  K.cx = 0.5 * K.width;
  K.cy = 0.5 * K.height;
  return K;
}

SyntheticScene generate_scene(const SceneConfig& cfg, Rng& rng) {
  cfg.validate();
  const Intrinsics K = cfg.intrinsics();
  const int cells = cfg.grid_width * cfg.grid_height;
  const int wanted = cfg.max_points > 0 ? cfg.max_points : cells;

  SyntheticScene scene;
  scene.seed = rng.next_u64();
  scene.grid_width = cfg.grid_width;
  scene.grid_height = cfg.grid_height;
  scene.cell_size = cfg.cell_size;
  scene.descriptor_dim = cfg.descriptor_dim;
  scene.depth_min = cfg.depth_min;
  scene.depth_max = cfg.depth_max;
  scene.noise_sigma = cfg.noise_sigma;
  scene.outlier_fraction = cfg.outlier_fraction;
  scene.camera_a.K = K;
  scene.camera_b.K = K;

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Pose cam_a;
    cam_a.rotation = axis_angle(random_unit(rng), rng.uniform(0.0, std::numbers::pi / 6.0));
    cam_a.translation = Vec3(rng.normal(), rng.normal(), rng.normal());

    Pose relative;
    if (cfg.fixed_motion) {
      relative.rotation = axis_angle(cfg.fixed_rotation, cfg.fixed_rotation.norm());
      relative.translation = cfg.fixed_translation;
    } else {
      const Vec3 axis = random_unit(rng);
      relative.rotation = axis_angle(axis, draw(rng, 0.0, cfg.rotation_max_deg) * std::numbers::pi / 180.0);
      const Vec3 direction = random_unit(rng);
      relative.translation = direction * draw(rng, cfg.baseline_min, cfg.baseline_max);
    }

    std::vector<int> order(cells);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());

    std::vector<bool> taken_b(cells, false);
    std::vector<Vec3> points;
    const Pose a_to_world = cam_a.inverse();
    for (int cell : order) {
      if (static_cast<int>(points.size()) >= wanted) break;
      const GridCell gc{cell % cfg.grid_width, cell / cfg.grid_width, cfg.cell_size};
      const Vec2 offset(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
      const double depth = draw(rng, cfg.depth_min, cfg.depth_max);
      const Vec3 x_a = backproject(grid_to_pixel(offset, gc), depth, K);
      const Vec3 x_b = relative * x_a;
      if (x_b.z() < 0.1) continue;
      Vec2 offset_b;
      const int cell_b = locate(project(x_b, K), cfg.grid_width, cfg.grid_height, cfg.cell_size, offset_b);
      if (cell_b < 0 || taken_b[cell_b]) continue;
      // Keep clear of cell borders so cell membership survives round-off.
      if ((offset_b.array() < 0.02).any() || (offset_b.array() > 0.98).any()) continue;
      taken_b[cell_b] = true;
      points.push_back(a_to_world * x_a);
    }
    if (static_cast<int>(points.size()) < cfg.min_points) continue;

    scene.camera_a.pose = cam_a;
    scene.camera_b.pose = relative * cam_a;
    scene.gt_relative = scene.camera_b.pose * cam_a.inverse();
    scene.points = std::move(points);

    const int corrupted = static_cast<int>(std::floor(cfg.outlier_fraction * scene.points.size() + 1e-9));
    std::vector<int> idx(scene.points.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    scene.outliers.assign(idx.begin(), idx.begin() + corrupted);
    std::sort(scene.outliers.begin(), scene.outliers.end());
    return scene;
  }
  throw GenerationError("fewer than " + std::to_string(cfg.min_points) + " co-visible points after " +
                        std::to_string(cfg.max_attempts) + " attempts");
}

std::vector<PointObservation> observe(const SyntheticScene& scene) {
  std::vector<PointObservation> out;
  out.reserve(scene.points.size());
  for (const Vec3& p : scene.points) {
    PointObservation o;
    const Vec3 x_a = scene.camera_a.pose * p;
    const Vec3 x_b = scene.camera_b.pose * p;
    o.cell_a = locate(project(x_a, scene.camera_a.K), scene.grid_width, scene.grid_height,
                      scene.cell_size, o.offset_a);
    o.cell_b = locate(project(x_b, scene.camera_b.K), scene.grid_width, scene.grid_height,
                      scene.cell_size, o.offset_b);
    if (o.cell_a < 0 || o.cell_b < 0 || x_a.z() <= 0.0 || x_b.z() <= 0.0)
      throw ValidationError("scene point not visible in both views");
    o.depth_a = x_a.z();
    o.depth_b = x_b.z();
    out.push_back(o);
  }
  return out;
}

KeypointMaps render_ground_truth_maps(const SyntheticScene& scene, View view,
                                      std::uint64_t render_seed) {
  const int cells = scene.grid_width * scene.grid_height;
  const int dim = scene.descriptor_dim;
  const bool is_b = view == View::kB;
  KeypointMaps maps;
  maps.width = scene.grid_width;
  maps.height = scene.grid_height;
  maps.cell_size = scene.cell_size;
  maps.offsets.resize(2, cells);
  maps.depth.resize(cells);
  maps.confidence.resize(cells);
  maps.descriptors.resize(dim, cells);

  Rng empty_rng = Rng::substream(scene.seed, kEmptyCellStream, static_cast<std::uint64_t>(view));
  for (int c = 0; c < cells; ++c) {
    maps.offsets.col(c) = Vec2(empty_rng.uniform(0.1, 0.9), empty_rng.uniform(0.1, 0.9));
    maps.depth(c) = draw(empty_rng, scene.depth_min, scene.depth_max);
    maps.confidence(c) = kEmptyConfidence;
    maps.descriptors.col(c) = random_descriptor(empty_rng, dim);
  }

  const auto obs = observe(scene);
  Rng descriptor_rng = Rng::substream(scene.seed, kPointDescriptorStream);
  Rng noise_rng = Rng::substream(render_seed, static_cast<std::uint64_t>(view));
  std::size_t next_outlier = 0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const Eigen::VectorXd descriptor = random_descriptor(descriptor_rng, dim);
    const int c = is_b ? obs[k].cell_b : obs[k].cell_a;
    Vec2 offset = is_b ? obs[k].offset_b : obs[k].offset_a;
    double depth = is_b ? obs[k].depth_b : obs[k].depth_a;
    if (scene.noise_sigma > 0.0) depth = std::max(depth + noise_rng.normal(0.0, scene.noise_sigma), 1e-3);
    const bool outlier = next_outlier < scene.outliers.size() &&
                         scene.outliers[next_outlier] == static_cast<int>(k);
    if (outlier) {
      ++next_outlier;
      if (is_b) {
        // Move the point at least 30% of its depth along (a new) ray.
        const double factor = noise_rng.uniform(1.3, 2.0);
        depth = noise_rng.uniform() < 0.5 ? depth * factor : depth / factor;
        offset = Vec2(noise_rng.uniform(0.05, 0.95), noise_rng.uniform(0.05, 0.95));
      }
    }
    maps.offsets.col(c) = offset;
    maps.depth(c) = depth;
    maps.confidence(c) = kOccupiedConfidence;
    maps.descriptors.col(c) = descriptor;
  }
  return maps;
}

CorrespondenceSet ground_truth_correspondences(const SyntheticScene& scene,
                                               std::uint64_t render_seed) {
  const KeypointMaps a = render_ground_truth_maps(scene, View::kA, render_seed);
  const KeypointMaps b = render_ground_truth_maps(scene, View::kB, render_seed);
  const auto obs = observe(scene);
  CorrespondenceSet set;
  set.reserve(obs.size());
  const double p = 1.0 / static_cast<double>(obs.size());
  for (const auto& o : obs)
    set.push_back({o.cell_a, o.cell_b, a.point(o.cell_a, scene.camera_a.K),
                   b.point(o.cell_b, scene.camera_b.K), p});
  return set;
}

ToyBackbone::ToyBackbone(int images, int grid_width, int grid_height, int cell_size,
                         int descriptor_dim)
    : images_(images),
      grid_width_(grid_width),
      grid_height_(grid_height),
      cell_size_(cell_size),
      descriptor_dim_(descriptor_dim) {
  if (images < 1 || grid_width < 1 || grid_height < 1 || cell_size < 1 || descriptor_dim < 1)
    throw ValidationError("invalid backbone dimensions");
  params_ = Eigen::VectorXd::Zero(images * block_size() + 1);
  // Unit first component keeps zero-initialized descriptors normalizable.
  for (int img = 0; img < images; ++img)
    for (int c = 0; c < cells(); ++c) params_(descriptor_index(img) + c * descriptor_dim) = 1.0;
  dustbin() = 1.0;
}

KeypointMaps ToyBackbone::forward(int image) const {
  const int n = cells();
  KeypointMaps maps;
  maps.width = grid_width_;
  maps.height = grid_height_;
  maps.cell_size = cell_size_;
  const Eigen::Map<const Eigen::Matrix2Xd> logits(params_.data() + offset_index(image), 2, n);
  maps.offsets = logits.unaryExpr([](double x) { return sigmoid(x); });
  maps.depth = params_.segment(depth_index(image), n).array().exp().matrix();
  maps.confidence = params_.segment(confidence_index(image), n);
  const Eigen::Map<const Eigen::MatrixXd> raw(params_.data() + descriptor_index(image), descriptor_dim_, n);
  maps.descriptors = raw;
  for (int c = 0; c < n; ++c) {
    const double norm = raw.col(c).norm();
    if (norm > 0.0) {
      maps.descriptors.col(c) /= norm;
    } else {
      maps.descriptors.col(c).setZero();
      maps.descriptors(0, c) = 1.0;
    }
  }
  return maps;
}

void ToyBackbone::load_maps(int image, const KeypointMaps& maps) {
  if (maps.width != grid_width_ || maps.height != grid_height_ || maps.descriptors.rows() != descriptor_dim_)
    throw ShapeError("maps do not match the backbone layout");
  const int n = cells();
  Eigen::Map<Eigen::Matrix2Xd> logits(params_.data() + offset_index(image), 2, n);
  logits = maps.offsets.unaryExpr([](double p) {
    p = std::clamp(p, 1e-9, 1.0 - 1e-9);
    return std::log(p / (1.0 - p));
  });
  params_.segment(depth_index(image), n) = maps.depth.array().log().matrix();
  params_.segment(confidence_index(image), n) = maps.confidence;
  Eigen::Map<Eigen::MatrixXd>(params_.data() + descriptor_index(image), descriptor_dim_, n) = maps.descriptors;
}

MapsGradient MapsGradient::zeros(int cells, int descriptor_dim) {
  MapsGradient g;
  g.offsets = Eigen::Matrix2Xd::Zero(2, cells);
  g.depth = Eigen::VectorXd::Zero(cells);
  g.confidence = Eigen::VectorXd::Zero(cells);
  g.descriptors = Eigen::MatrixXd::Zero(descriptor_dim, cells);
  return g;
}

void accumulate_point_vjp(const KeypointMaps& maps, int cell, const Intrinsics& K,
                          const Vec3& d_point, MapsGradient& out) {
  const double z = maps.depth(cell);
  const Vec3 x = maps.point(cell, K);
  const double f = maps.cell_size;
  out.offsets(0, cell) += d_point.x() * f * z / K.fx;
  out.offsets(1, cell) += d_point.y() * f * z / K.fy;
  out.depth(cell) += d_point.dot(x) / z;
}

void backbone_vjp(const ToyBackbone& backbone, int image, const MapsGradient& d_maps,
                  Eigen::VectorXd& grad) {
  const int n = backbone.cells();
  const int dim = backbone.descriptor_dim();
  const Eigen::VectorXd& params = backbone.parameters();
  for (int c = 0; c < n; ++c) {
    for (int a = 0; a < 2; ++a) {
      const Eigen::Index idx = backbone.offset_index(image) + 2 * c + a;
      const double s = sigmoid(params(idx));
      grad(idx) += d_maps.offsets(a, c) * s * (1.0 - s);
    }
    const Eigen::Index di = backbone.depth_index(image) + c;
    grad(di) += d_maps.depth(c) * std::exp(params(di));
    grad(backbone.confidence_index(image) + c) += d_maps.confidence(c);

    const Eigen::Index base = backbone.descriptor_index(image) + static_cast<Eigen::Index>(c) * dim;
    const auto raw = params.segment(base, dim);
    const double norm = raw.norm();
    if (norm > 0.0) {
      const Eigen::VectorXd unit = raw / norm;
      const auto g = d_maps.descriptors.col(c);
      grad.segment(base, dim) += (g - unit * unit.dot(g)) / norm;
    }
  }
}

}  // namespace mrp
