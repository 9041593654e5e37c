#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "segeval/mirror.hpp"

using namespace segeval;

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

void check_close(const RigidTransform& got, const RigidTransform& want, double tol_rad,
                 double tol_mm) {
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(got.rotation_rad[a] - want.rotation_rad[a]) < tol_rad);
    CHECK(std::abs(got.translation_mm[a] - want.translation_mm[a]) < tol_mm);
  }
}

}  // namespace

TEST_CASE("rotation matrix round-trips through euler extraction") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 e = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
    const Vec3 back = euler_from_matrix(rotation_matrix(e));
    for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(e[a]).epsilon(1e-9));
  }
}

TEST_CASE("rotation matrix is orthonormal with determinant one") {
  const Mat3 r = rotation_matrix({0.3, -0.2, 0.7});
  const Mat3 rrt = mat_mul(r, mat_transpose(r));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(rrt[i][j] == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    }
  }
  const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                     r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                     r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
  CHECK(det == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("apply, inverse and compose are mutually consistent") {
  Rng rng(9);
  const Vec3 center = {10.0, -4.0, 6.0};
  for (int trial = 0; trial < 25; ++trial) {
    RigidTransform t;
    for (int a = 0; a < 3; ++a) {
      t.rotation_rad[a] = rng.uniform(-0.8, 0.8);
      t.translation_mm[a] = rng.uniform(-15.0, 15.0);
    }
    const Vec3 p = {rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(-30, 30)};

    const Vec3 q = apply_transform(t, p, center);
    const Vec3 back = apply_transform(inverse(t), q, center);
    for (int a = 0; a < 3; ++a) CHECK(back[a] == doctest::Approx(p[a]).epsilon(1e-9));

    const RigidTransform id = compose(inverse(t), t);
    CHECK(id.is_identity(1e-9));

    RigidTransform u;
    for (int a = 0; a < 3; ++a) {
      u.rotation_rad[a] = rng.uniform(-0.5, 0.5);
      u.translation_mm[a] = rng.uniform(-10.0, 10.0);
    }
    const Vec3 via_compose = apply_transform(compose(u, t), p, center);
    const Vec3 via_stages = apply_transform(u, apply_transform(t, p, center), center);
    for (int a = 0; a < 3; ++a) {
      CHECK(via_compose[a] == doctest::Approx(via_stages[a]).epsilon(1e-9));
    }
  }
}

TEST_CASE("transform json round-trip") {
  RigidTransform t;
  t.rotation_rad = {0.05, -0.1, 0.2};
  t.translation_mm = {3.5, -2.25, 0.125};
  const RigidTransform r = transform_from_json(transform_json(t));
  check_close(r, t, 1e-15, 1e-15);
  CHECK_THROWS_AS(transform_from_json("{"), std::invalid_argument);
  CHECK_THROWS_AS(transform_from_json(R"({"rotation_rad":[0,0,0]})"), std::invalid_argument);
}

TEST_CASE("flip_sagittal reverses width and is an involution") {
  VoxelGrid g({2, 3, 4}, {3.0, 0.45, 0.45}, {1.0, 2.0, 3.0});
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<double>(i);
  const VoxelGrid f = flip_sagittal(g);
  CHECK(f.dims() == g.dims());
  CHECK(f.spacing_mm() == g.spacing_mm());
  CHECK(f.origin_mm() == g.origin_mm());
  CHECK(f(0, 0, 0) == g(0, 0, 3));
  CHECK(f(1, 2, 1) == g(1, 2, 2));
  const VoxelGrid ff = flip_sagittal(f);
  CHECK(ff.data() == g.data());
}

TEST_CASE("resample_transform with the identity reproduces the grid") {
  const VoxelGrid g = oracle::blob_phantom({10, 16, 16}, {3.0, 1.5, 1.5}, 21);
  const VoxelGrid r = resample_transform(g, RigidTransform{}, GridGeometry::of(g));
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(r.data()[i] == doctest::Approx(g.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("resample_transform shifts content by whole voxels exactly") {
  const VoxelGrid g = oracle::blob_phantom({8, 12, 12}, {2.0, 1.0, 1.0}, 5);
  RigidTransform shift;
  shift.translation_mm = {0.0, 0.0, 2.0};  // two width voxels
  const VoxelGrid r = resample_transform(g, shift, GridGeometry::of(g));
  for (int z = 0; z < g.depth(); ++z) {
    for (int y = 0; y < g.height(); ++y) {
      for (int x = 2; x < g.width(); ++x) {
        CHECK(r(z, y, x) == doctest::Approx(g(z, y, x - 2)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("registration of an image to itself stays near the identity") {
  const VoxelGrid g = oracle::blob_phantom({12, 24, 24}, {3.0, 1.5, 1.5}, 77);
  const RegistrationResult res = rigid_register_trace(g, g);
  CHECK(res.transform.is_identity(1e-6));
  for (const auto& level : res.levels) {
    CHECK(level.mse_after <= level.mse_before + 1e-12);
  }
}

TEST_CASE("registration recovers a known rigid perturbation") {
  RigidTransform truth;
  truth.rotation_rad = {4.0 * kDeg, -2.0 * kDeg, 3.0 * kDeg};
  truth.translation_mm = {2.5, -4.0, 5.0};
  const VoxelGrid fixed = oracle::blob_phantom({16, 40, 40}, {3.0, 1.2, 1.2}, 1234);
  const VoxelGrid moving = oracle::blob_phantom({16, 40, 40}, {3.0, 1.2, 1.2}, 1234, truth);

  // the moving image views the same scene after the motion, so registering it
  // back should find the inverse; composing with truth must give the identity
  const RigidTransform found = rigid_register(moving, fixed);
  const RigidTransform residual = compose(found, truth);
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(residual.rotation_rad[a]) < 1.0 * kDeg);
    CHECK(std::abs(residual.translation_mm[a]) < 0.5);
  }
}

TEST_CASE("zero-variance images register to the identity") {
  VoxelGrid flat({6, 6, 6}, {1, 1, 1});
  for (double& v : flat.data()) v = 2.0;
  const VoxelGrid g = oracle::blob_phantom({6, 6, 6}, {1, 1, 1}, 3);
  CHECK(rigid_register(flat, g).is_identity());
  CHECK(rigid_register(g, flat).is_identity());
}

TEST_CASE("registration rejects malformed pyramids") {
  const VoxelGrid g = oracle::blob_phantom({6, 6, 6}, {1, 1, 1}, 3);
  RegistrationOptions opts;
  opts.pyramid = {4, 2};
  CHECK_THROWS_AS(rigid_register(g, g, opts), std::invalid_argument);
  opts.pyramid = {2, 4, 1};
  CHECK_THROWS_AS(rigid_register(g, g, opts), std::invalid_argument);
  opts.pyramid = {};
  CHECK_THROWS_AS(rigid_register(g, g, opts), std::invalid_argument);
}

TEST_CASE("mirror channel of a symmetric image is the image itself") {
  // symmetric in width: mirroring then registering should land back on it
  VoxelGrid g({6, 10, 11}, {3.0, 1.0, 1.0});
  for (int z = 0; z < 6; ++z) {
    for (int y = 0; y < 10; ++y) {
      for (int x = 0; x < 11; ++x) {
        const double cx = std::abs(x - 5.0);
        g(z, y, x) = std::exp(-0.1 * (z - 2.5) * (z - 2.5)) * std::exp(-0.2 * cx * cx) *
                     std::exp(-0.05 * (y - 4.5) * (y - 4.5));
      }
    }
  }
  const VoxelGrid m = build_mirror_channel(g);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    worst = std::max(worst, std::abs(m.data()[i] - g.data()[i]));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("hemisphere replacement splices the requested half only") {
  VoxelGrid g({2, 2, 5}, {1, 1, 1});
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<double>(i % 7) + 1.0;

  RegistrationResult reg;
  const VoxelGrid whole = build_mirror_channel(g, reg);
  const VoxelGrid left = build_mirror_channel(g, {}, Hemisphere::left);
  const VoxelGrid right = build_mirror_channel(g, {}, Hemisphere::right);

  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) {
      // width 5: indices 0,1 low, 2 midplane, 3,4 high; default sign keeps
      // left = low indices
      for (int x : {0, 1}) {
        CHECK(left(z, y, x) == whole(z, y, x));
        CHECK(right(z, y, x) == g(z, y, x));
      }
      CHECK(left(z, y, 2) == g(z, y, 2));
      CHECK(right(z, y, 2) == g(z, y, 2));
      for (int x : {3, 4}) {
        CHECK(left(z, y, x) == g(z, y, x));
        CHECK(right(z, y, x) == whole(z, y, x));
      }
    }
  }
}

TEST_CASE("hemisphere sides follow the world x sign") {
  VoxelGrid g({2, 2, 4}, {1, 1, 1});
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = static_cast<double>(i);
  VoxelGrid neg = g;
  neg.width_world_sign = -1;

  const VoxelGrid lp = build_mirror_channel(g, {}, Hemisphere::left);
  const VoxelGrid ln = build_mirror_channel(neg, {}, Hemisphere::left);

  // with positive sign the left hemisphere is the low-index half, with
  // negative sign it is the high-index half
  bool low_changed_pos = false, high_changed_neg = false;
  for (int z = 0; z < 2; ++z) {
    for (int y = 0; y < 2; ++y) {
      for (int x : {0, 1}) low_changed_pos |= (lp(z, y, x) != g(z, y, x));
      for (int x : {2, 3}) high_changed_neg |= (ln(z, y, x) != g(z, y, x));
      for (int x : {2, 3}) CHECK(lp(z, y, x) == g(z, y, x));
      for (int x : {0, 1}) CHECK(ln(z, y, x) == g(z, y, x));
    }
  }
  CHECK(low_changed_pos);
  CHECK(high_changed_neg);
}
