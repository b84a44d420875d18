#include <doctest.h>

#include "mrp/errors.hpp"
#include "mrp/geometry.hpp"
#include "support/oracles.hpp"

using namespace mrp;

namespace {
Intrinsics camera(double f = 100.0, double c = 50.0) {
  Intrinsics K;
  K.fx = K.fy = f;
  K.cx = K.cy = c;
  K.width = K.height = static_cast<int>(2 * c);
  return K;
}
}  // namespace

TEST_CASE("backproject examples") {
  const Intrinsics K = camera();
  CHECK((backproject({K.cx, K.cy}, 2.0, K) - Vec3(0, 0, 2.0)).norm() == 0.0);

  Intrinsics K2;
  K2.fx = K2.fy = 100.0;
  K2.cx = K2.cy = 0.0;
  K2.width = K2.height = 200;
  CHECK((backproject({100, 0}, 1.0, K2) - Vec3(1, 0, 1)).norm() < 1e-15);
}

TEST_CASE("backproject rejects non-positive depth and non-finite pixels") {
  const Intrinsics K = camera();
  CHECK_THROWS_AS(backproject({1, 1}, 0.0, K), DomainError);
  CHECK_THROWS_AS(backproject({1, 1}, -1.0, K), DomainError);
  CHECK_THROWS_AS(backproject({NAN, 1}, 1.0, K), DomainError);
}

TEST_CASE("project and backproject are inverse over random draws") {
  Rng rng(7);
  const Intrinsics K = camera(120.0, 56.0);
  double worst_px = 0.0;
  double worst_pt = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Vec3 x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.1, 10));
    const Vec2 u = project(x, K);
    worst_pt = std::max(worst_pt, (backproject(u, x.z(), K) - x).norm());
    const Vec2 v(rng.uniform(0, 112), rng.uniform(0, 112));
    worst_px = std::max(worst_px, (project(backproject(v, rng.uniform(0.1, 10), K), K) - v).norm());
  }
  CHECK(worst_px < 1e-9);
  CHECK(worst_pt < 1e-9);
}

TEST_CASE("transform examples") {
  Rng rng(1);
  CHECK((transform(Pose::identity(), Vec3(1, 2, 3)) - Vec3(1, 2, 3)).norm() == 0.0);
  const Pose h{axis_angle(Vec3::UnitZ(), M_PI / 2), Vec3(0, 0, 1)};
  CHECK((transform(h, Vec3(1, 0, 0)) - Vec3(0, 1, 1)).norm() < 1e-15);
  for (int k = 0; k < 100; ++k) {
    const Pose p = oracle::random_pose(rng);
    const Vec3 x = oracle::gaussian(rng, 2.0);
    CHECK((transform(p.inverse(), transform(p, x)) - x).norm() < 1e-12);
  }
}

TEST_CASE("pose composition and inverse preserve the rotation group") {
  Rng rng(2);
  Pose acc = Pose::identity();
  for (int k = 0; k < 1000; ++k) {
    acc = oracle::random_pose(rng) * acc;
    CHECK(acc.is_valid(1e-9));
    CHECK(acc.inverse().is_valid(1e-9));
  }
  const Pose a = oracle::random_pose(rng);
  const Pose b = oracle::random_pose(rng);
  const Vec3 x = oracle::gaussian(rng);
  CHECK(((a * b) * x - a * (b * x)).norm() < 1e-12);
}

TEST_CASE("pose row-major layout") {
  std::array<double, 12> v{};
  for (int k = 0; k < 12; ++k) v[k] = k;
  const Pose p = Pose::from_row_major(v);
  CHECK(p.rotation(0, 1) == 1.0);
  CHECK(p.rotation(2, 0) == 6.0);
  CHECK(p.translation(0) == 9.0);
  CHECK(p.to_row_major() == v);
}

TEST_CASE("residual examples and properties") {
  Rng rng(3);
  CHECK(residual(Vec3(0, 0, 1), Vec3(0, 0, 2), Pose::identity()) == doctest::Approx(1.0).epsilon(1e-15));
  for (int k = 0; k < 200; ++k) {
    const Pose h = oracle::random_pose(rng);
    const Vec3 x = oracle::gaussian(rng);
    CHECK(residual(x, transform(h, x), h) < 1e-12);
    const Vec3 xp = oracle::gaussian(rng);
    const double r = residual(x, xp, h);
    CHECK(r >= 0.0);
    CHECK(r == doctest::Approx(residual(xp, x, h.inverse())).epsilon(1e-12));
  }
}

TEST_CASE("grid_to_pixel examples") {
  CHECK((grid_to_pixel({0, 0}, {0, 0, 14}) - Vec2(0, 0)).norm() == 0.0);
  CHECK((grid_to_pixel({1, 1}, {0, 0, 14}) - Vec2(14, 14)).norm() == 0.0);
  CHECK((grid_to_pixel({0.5, 0.5}, {2, 3, 14}) - Vec2(35, 49)).norm() == 0.0);
  CHECK_THROWS_AS(grid_to_pixel({1.01, 0.5}, {0, 0, 14}), DomainError);
  CHECK_THROWS_AS(grid_to_pixel({0.5, -0.01}, {0, 0, 14}), DomainError);
}

TEST_CASE("grid_to_pixel covers exactly the image footprint") {
  const int w = 8;
  const int h = 6;
  double lo_u = 1e9, hi_u = -1e9, lo_v = 1e9, hi_v = -1e9;
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      for (double o : {0.0, 0.5, 1.0}) {
        const Vec2 p = grid_to_pixel({o, o}, {i, j, 14});
        CHECK(p.x() >= 14.0 * i);
        CHECK(p.x() <= 14.0 * (i + 1));
        lo_u = std::min(lo_u, p.x());
        hi_u = std::max(hi_u, p.x());
        lo_v = std::min(lo_v, p.y());
        hi_v = std::max(hi_v, p.y());
      }
  CHECK(lo_u == 0.0);
  CHECK(lo_v == 0.0);
  CHECK(hi_u == 14.0 * w);
  CHECK(hi_v == 14.0 * h);
}

TEST_CASE("rotation angle") {
  Rng rng(4);
  CHECK(rotation_angle_deg(Mat3::Identity()) == 0.0);
  CHECK(rotation_angle_deg(axis_angle(Vec3::UnitX(), M_PI)) == doctest::Approx(180.0).epsilon(1e-12));
  for (int k = 0; k < 100; ++k) {
    const Mat3 R = oracle::random_rotation(rng);
    CHECK(rotation_angle_deg(R) == doctest::Approx(oracle::angle_deg(R)).epsilon(1e-9));
  }
}

TEST_CASE("intrinsics validation") {
  Intrinsics K = camera();
  CHECK_NOTHROW(K.validate());
  K.fx = 0.0;
  CHECK_THROWS_AS(K.validate(), DomainError);
  K = camera();
  K.cx = K.width;
  CHECK_THROWS_AS(K.validate(), DomainError);
}
