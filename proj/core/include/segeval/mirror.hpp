#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "segeval/voxel_grid.hpp"

namespace segeval {

using Vec3 = std::array<double, 3>;                 // (z,y,x)
using Mat3 = std::array<std::array<double, 3>, 3>;  // row-major, (z,y,x) components

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int k = 0; k < 3; ++k) m[i][j] += a[i][k] * b[k][j];
    }
  }
  return m;
}

inline Mat3 mat_transpose(const Mat3& a) {
  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = a[j][i];
  }
  return m;
}

inline Vec3 mat_vec(const Mat3& a, const Vec3& v) {
  Vec3 r{};
  for (int i = 0; i < 3; ++i) r[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
  return r;
}

// Rigid motion with Euler angles (rz, ry, rx) applied z-y-x, i.e.
// R = Rx(rx) * Ry(ry) * Rz(rz). Points transform as T(p) = R(p - c) + c + t
// where the rotation center c is, by convention, the physical center of the
// grid the transform targets; the center is not part of the serialized state.
struct RigidTransform {
  Vec3 rotation_rad{0.0, 0.0, 0.0};   // about the z, y, x axes
  Vec3 translation_mm{0.0, 0.0, 0.0};

  bool is_identity(double tol = 0.0) const {
    for (int a = 0; a < 3; ++a) {
      if (std::abs(rotation_rad[a]) > tol || std::abs(translation_mm[a]) > tol) return false;
    }
    return true;
  }
};

Mat3 rotation_matrix(const Vec3& euler_zyx_rad);
Vec3 euler_from_matrix(const Mat3& m);

Vec3 apply_transform(const RigidTransform& t, const Vec3& point, const Vec3& center);

// T^-1, valid about the same rotation center.
RigidTransform inverse(const RigidTransform& t);

// outer after inner, both about the same center.
RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner);

std::string transform_json(const RigidTransform& t);
RigidTransform transform_from_json(const std::string& text);

// Geometry of a target grid without its data.
struct GridGeometry {
  std::array<int, 3> dims{};
  Vec3 spacing_mm{};
  Vec3 origin_mm{};

  static GridGeometry of(const VoxelGrid& g) { return {g.dims(), g.spacing_mm(), g.origin_mm()}; }
  Vec3 physical_center() const {
    return {origin_mm[0] + 0.5 * (dims[0] - 1) * spacing_mm[0],
            origin_mm[1] + 0.5 * (dims[1] - 1) * spacing_mm[1],
            origin_mm[2] + 0.5 * (dims[2] - 1) * spacing_mm[2]};
  }
};

// Reverse the width (left-right) axis in place on the same grid geometry.
VoxelGrid flip_sagittal(const VoxelGrid& grid);

struct RegistrationOptions {
  std::vector<int> pyramid = {4, 2, 1};  // downsampling factors, descending to 1
  int max_iterations = 30;               // parameter sweeps per level
  double tol_mm = 0.01;
  double tol_rad = 0.0005;
};

struct RegistrationLevel {
  int factor = 1;
  int sweeps = 0;
  double mse_before = 0.0;
  double mse_after = 0.0;
};

struct RegistrationResult {
  RigidTransform transform;
  std::vector<RegistrationLevel> levels;
};

// Coarse-to-fine MSE minimization with a cyclic per-parameter golden-section
// line search. Intensities are standardized internally, so the result is
// invariant under affine intensity changes applied to both images. Rotation
// center is the fixed grid's physical center. A zero-variance image yields the
// identity transform with a warning on stderr.
RigidTransform rigid_register(const VoxelGrid& moving, const VoxelGrid& fixed,
                              const RegistrationOptions& opts = {});
RegistrationResult rigid_register_trace(const VoxelGrid& moving, const VoxelGrid& fixed,
                                        const RegistrationOptions& opts = {});

// Sample `moving` at T^-1 of each target voxel center. Out-of-bounds points
// take `fill`, defaulting to the minimum intensity of `moving`. Rotation
// center is the target's physical center.
VoxelGrid resample_transform(const VoxelGrid& moving, const RigidTransform& t,
                             const GridGeometry& target, Interp interp = Interp::trilinear,
                             std::optional<double> fill = std::nullopt);

// Side of the physical midplane along the width axis in world coordinates:
// left is the negative-x half once width_world_sign is taken into account.
enum class Hemisphere { left, right };

// flip_sagittal, register the flip back onto the original, resample onto the
// original grid. With `replace` set, only that hemisphere is replaced by the
// mirrored co-registered values; the other half (and the exact midplane
// column, for odd widths) keeps the original intensities.
VoxelGrid build_mirror_channel(const VoxelGrid& image, const RegistrationOptions& opts = {},
                               std::optional<Hemisphere> replace = std::nullopt);

// Same, also reporting the flip-to-original registration.
VoxelGrid build_mirror_channel(const VoxelGrid& image, RegistrationResult& registration,
                               const RegistrationOptions& opts = {},
                               std::optional<Hemisphere> replace = std::nullopt);

}  // namespace segeval
