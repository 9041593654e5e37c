#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "segeval/errors.hpp"

namespace segeval {

enum class Interp { trilinear, nearest };

/// Dense 3D scalar volume with physical voxel spacing.
///
/// Axis order is (depth, height, width) throughout the library: index 0 runs
/// over axial slices and index 2 over the left-right (sagittal flip) axis.
/// Data is row-major with the width index fastest. Spacing and origin are in
/// millimetres; anisotropic spacing such as (3.00, 0.45, 0.45) is the normal
/// case and nothing assumes axis equality. Voxel (i,j,k) is centred at
/// origin + (i,j,k) * spacing.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(std::array<int, 3> dims, std::array<double, 3> spacing_mm,
            std::array<double, 3> origin_mm = {0.0, 0.0, 0.0});

  int depth() const { return dims_[0]; }
  int height() const { return dims_[1]; }
  int width() const { return dims_[2]; }
  const std::array<int, 3>& dims() const { return dims_; }
  const std::array<double, 3>& spacing_mm() const { return spacing_; }
  const std::array<double, 3>& origin_mm() const { return origin_; }

  std::size_t size() const { return data_.size(); }
  double voxel_volume_mm3() const { return spacing_[0] * spacing_[1] * spacing_[2]; }

  std::size_t index(int z, int y, int x) const {
    return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[2] + x;
  }
  double operator()(int z, int y, int x) const { return data_[index(z, y, x)]; }
  double& operator()(int z, int y, int x) { return data_[index(z, y, x)]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  /// Physical coordinate of voxel centre i along one axis (0=depth, 1=height, 2=width).
  double physical(int axis, int i) const { return origin_[axis] + i * spacing_[axis]; }
  std::array<double, 3> physical_point(int z, int y, int x) const {
    return {physical(0, z), physical(1, y), physical(2, x)};
  }
  std::array<double, 3> physical_center() const {
    return {origin_[0] + 0.5 * (dims_[0] - 1) * spacing_[0],
            origin_[1] + 0.5 * (dims_[1] - 1) * spacing_[1],
            origin_[2] + 0.5 * (dims_[2] - 1) * spacing_[2]};
  }

  bool same_geometry(const VoxelGrid& other, double spacing_tol = 1e-9) const;

  /// World-x direction per width index step, read from a NIfTI affine when one
  /// was present (+1 otherwise). Metadata only; no operation reorients data.
  int width_world_sign = 1;

 private:
  std::array<int, 3> dims_{0, 0, 0};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  std::array<double, 3> origin_{0.0, 0.0, 0.0};
  std::vector<double> data_;
};

/// Binary (0/1) mask. Wraps a VoxelGrid whose values are exactly 0 or 1.
class BinaryMask {
 public:
  /// Validates the 0/1 invariant; throws std::invalid_argument otherwise.
  explicit BinaryMask(VoxelGrid grid);

  static BinaryMask zeros(std::array<int, 3> dims, std::array<double, 3> spacing_mm,
                          std::array<double, 3> origin_mm = {0.0, 0.0, 0.0});

  const VoxelGrid& grid() const { return grid_; }
  bool is_foreground(int z, int y, int x) const { return grid_(z, y, x) != 0.0; }
  bool is_foreground(std::size_t flat) const { return grid_.data()[flat] != 0.0; }
  std::size_t foreground_count() const;
  bool empty() const { return foreground_count() == 0; }

 private:
  VoxelGrid grid_;
};

/// Throws std::invalid_argument with a diagnostic naming `what` when the two
/// grids differ in dims or spacing.
void require_same_grid(const VoxelGrid& a, const VoxelGrid& b, const std::string& what);

/// Voxel -> 1 iff value > threshold.
BinaryMask binarize(const VoxelGrid& grid, double threshold = 0.5);

/// Foreground volume in millilitres: count * voxel volume (mm^3) / 1000.
double volume_ml(const BinaryMask& mask);

/// CT intensity normalization: nonzero voxels are clipped to the
/// [lo_pct, hi_pct] percentiles of the nonzero intensities (zero voxels pass
/// through as background), then the whole volume is z-scored. A volume with
/// no intensity variation after clipping maps to all zeros.
VoxelGrid normalize_ct(const VoxelGrid& grid, double lo_pct = 0.5, double hi_pct = 99.5);

/// Resample to a new spacing, preserving physical extent within one voxel per
/// axis. Identical spacing returns the grid unchanged. Throws
/// std::invalid_argument when the output would be empty along an axis.
VoxelGrid resample(const VoxelGrid& grid, std::array<double, 3> new_spacing_mm, Interp interp);

}  // namespace segeval
