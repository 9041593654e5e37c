#include "segeval/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "segeval/percentile.hpp"

namespace segeval {

VoxelGrid::VoxelGrid(std::array<int, 3> dims, std::array<double, 3> spacing_mm,
                     std::array<double, 3> origin_mm)
    : dims_(dims), spacing_(spacing_mm), origin_(origin_mm) {
  for (int a = 0; a < 3; ++a) {
    if (dims_[a] <= 0) throw std::invalid_argument("VoxelGrid dims must be positive");
    if (!(spacing_[a] > 0.0)) throw std::invalid_argument("VoxelGrid spacing must be positive");
  }
  data_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2], 0.0);
}

bool VoxelGrid::same_geometry(const VoxelGrid& other, double spacing_tol) const {
  if (dims_ != other.dims_) return false;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(spacing_[a] - other.spacing_[a]) > spacing_tol) return false;
  }
  return true;
}

BinaryMask::BinaryMask(VoxelGrid grid) : grid_(std::move(grid)) {
  for (double v : grid_.data()) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("BinaryMask requires values in {0,1}; got " + std::to_string(v));
    }
  }
}

BinaryMask BinaryMask::zeros(std::array<int, 3> dims, std::array<double, 3> spacing_mm,
                             std::array<double, 3> origin_mm) {
  return BinaryMask(VoxelGrid(dims, spacing_mm, origin_mm));
}

std::size_t BinaryMask::foreground_count() const {
  std::size_t n = 0;
  for (double v : grid_.data()) n += (v != 0.0);
  return n;
}

void require_same_grid(const VoxelGrid& a, const VoxelGrid& b, const std::string& what) {
  if (!a.same_geometry(b)) {
    std::ostringstream msg;
    msg << what << ": grid mismatch, dims (" << a.depth() << "," << a.height() << "," << a.width()
        << ") spacing (" << a.spacing_mm()[0] << "," << a.spacing_mm()[1] << ","
        << a.spacing_mm()[2] << ") vs dims (" << b.depth() << "," << b.height() << ","
        << b.width() << ") spacing (" << b.spacing_mm()[0] << "," << b.spacing_mm()[1] << ","
        << b.spacing_mm()[2] << ")";
    throw std::invalid_argument(msg.str());
  }
}

BinaryMask binarize(const VoxelGrid& grid, double threshold) {
  VoxelGrid out = grid;
  for (double& v : out.data()) v = (v > threshold) ? 1.0 : 0.0;
  return BinaryMask(std::move(out));
}

double volume_ml(const BinaryMask& mask) {
  return static_cast<double>(mask.foreground_count()) * mask.grid().voxel_volume_mm3() / 1000.0;
}

VoxelGrid normalize_ct(const VoxelGrid& grid, double lo_pct, double hi_pct) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0)) {
    throw std::invalid_argument("normalize_ct requires 0 <= lo_pct < hi_pct <= 100");
  }
  VoxelGrid out = grid;

  std::vector<double> nonzero;
  nonzero.reserve(grid.size());
  for (double v : grid.data()) {
    if (v != 0.0) nonzero.push_back(v);
  }
  if (!nonzero.empty()) {
    std::sort(nonzero.begin(), nonzero.end());
    const double lo = percentile_sorted(nonzero, lo_pct);
    const double hi = percentile_sorted(nonzero, hi_pct);
    for (double& v : out.data()) {
      if (v != 0.0) v = std::clamp(v, lo, hi);
    }
  }

  const double n = static_cast<double>(out.size());
  const double mean = std::accumulate(out.data().begin(), out.data().end(), 0.0) / n;
  double ss = 0.0;
  for (double v : out.data()) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (sd == 0.0) {
    std::fill(out.data().begin(), out.data().end(), 0.0);
    return out;
  }
  for (double& v : out.data()) v = (v - mean) / sd;
  return out;
}

namespace {

double sample_trilinear(const VoxelGrid& g, double z, double y, double x) {
  const auto clampf = [](double v, int hi) { return std::clamp(v, 0.0, static_cast<double>(hi)); };
  z = clampf(z, g.depth() - 1);
  y = clampf(y, g.height() - 1);
  x = clampf(x, g.width() - 1);
  const int z0 = std::min(static_cast<int>(z), g.depth() - 1);
  const int y0 = std::min(static_cast<int>(y), g.height() - 1);
  const int x0 = std::min(static_cast<int>(x), g.width() - 1);
  const int z1 = std::min(z0 + 1, g.depth() - 1);
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const double fz = z - z0, fy = y - y0, fx = x - x0;

  const double c00 = g(z0, y0, x0) * (1 - fx) + g(z0, y0, x1) * fx;
  const double c01 = g(z0, y1, x0) * (1 - fx) + g(z0, y1, x1) * fx;
  const double c10 = g(z1, y0, x0) * (1 - fx) + g(z1, y0, x1) * fx;
  const double c11 = g(z1, y1, x0) * (1 - fx) + g(z1, y1, x1) * fx;
  const double c0 = c00 * (1 - fy) + c01 * fy;
  const double c1 = c10 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

}  // namespace

VoxelGrid resample(const VoxelGrid& grid, std::array<double, 3> new_spacing_mm, Interp interp) {
  for (int a = 0; a < 3; ++a) {
    if (!(new_spacing_mm[a] > 0.0)) throw std::invalid_argument("resample spacing must be positive");
  }
  if (new_spacing_mm == grid.spacing_mm()) return grid;

  std::array<int, 3> new_dims{};
  for (int a = 0; a < 3; ++a) {
    new_dims[a] = static_cast<int>(
        std::llround(grid.dims()[a] * grid.spacing_mm()[a] / new_spacing_mm[a]));
    if (new_dims[a] <= 0) {
      throw std::invalid_argument("resample would produce an empty axis");
    }
  }

  VoxelGrid out(new_dims, new_spacing_mm, grid.origin_mm());
  out.width_world_sign = grid.width_world_sign;
  // output voxel centre j sits at j*new_spacing from the first voxel centre
  const double rz = new_spacing_mm[0] / grid.spacing_mm()[0];
  const double ry = new_spacing_mm[1] / grid.spacing_mm()[1];
  const double rx = new_spacing_mm[2] / grid.spacing_mm()[2];
  for (int z = 0; z < new_dims[0]; ++z) {
    for (int y = 0; y < new_dims[1]; ++y) {
      for (int x = 0; x < new_dims[2]; ++x) {
        const double sz = z * rz, sy = y * ry, sx = x * rx;
        double v;
        if (interp == Interp::nearest) {
          const int iz = std::clamp(static_cast<int>(std::llround(sz)), 0, grid.depth() - 1);
          const int iy = std::clamp(static_cast<int>(std::llround(sy)), 0, grid.height() - 1);
          const int ix = std::clamp(static_cast<int>(std::llround(sx)), 0, grid.width() - 1);
          v = grid(iz, iy, ix);
        } else {
          v = sample_trilinear(grid, sz, sy, sx);
        }
        out(z, y, x) = v;
      }
    }
  }
  return out;
}

}  // namespace segeval
