#include "segeval/distance_transform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace segeval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (x - i*h)^2 + f[i] sampled at x = q*h.
// v and z are scratch of size n and n+1, d of size n. Queries must not write
// into f directly: the envelope is evaluated against source values at vertex
// positions that later queries still read.
void dt_line(double* f, int n, double h, int* v, double* z, double* d) {
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double pq = q * h;
    double s = 0.0;
    while (k >= 0) {
      const double pr = v[k] * h;
      s = ((f[q] + pq * pq) - (f[v[k]] + pr * pr)) / (2.0 * (pq - pr));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = (k == 0) ? -kInf : s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(f, f + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double pq = q * h;
    while (z[j + 1] < pq) ++j;
    const double dx = pq - v[j] * h;
    d[q] = dx * dx + f[v[j]];
  }
  std::copy(d, d + n, f);
}

void dt_axis(std::vector<double>& g, const std::array<int, 3>& dims,
             const std::array<double, 3>& spacing, int axis) {
  const int n = dims[axis];
  std::vector<double> line(n);
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  std::vector<double> d(n);

  std::size_t stride;
  int outer_a, outer_b;
  switch (axis) {
    case 0: stride = static_cast<std::size_t>(dims[1]) * dims[2]; outer_a = 1; outer_b = 2; break;
    case 1: stride = static_cast<std::size_t>(dims[2]); outer_a = 0; outer_b = 2; break;
    default: stride = 1; outer_a = 0; outer_b = 1; break;
  }

  for (int i = 0; i < dims[outer_a]; ++i) {
    for (int j = 0; j < dims[outer_b]; ++j) {
      std::array<int, 3> at{};
      at[outer_a] = i;
      at[outer_b] = j;
      const std::size_t base =
          (static_cast<std::size_t>(at[0]) * dims[1] + at[1]) * dims[2] + at[2];
      for (int q = 0; q < n; ++q) line[q] = g[base + q * stride];
      dt_line(line.data(), n, spacing[axis], v.data(), z.data(), d.data());
      for (int q = 0; q < n; ++q) g[base + q * stride] = line[q];
    }
  }
}

}  // namespace

std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites,
                                const std::array<int, 3>& dims,
                                const std::array<double, 3>& spacing_mm) {
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (sites.size() != n) throw std::invalid_argument("squared_edt: sites size does not match dims");

  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = sites[i] ? 0.0 : kInf;
  for (int axis = 2; axis >= 0; --axis) dt_axis(g, dims, spacing_mm, axis);
  return g;
}

std::vector<double> squared_edt(const BinaryMask& mask) {
  const VoxelGrid& grid = mask.grid();
  std::vector<std::uint8_t> sites(grid.size());
  for (std::size_t i = 0; i < sites.size(); ++i) sites[i] = mask.is_foreground(i) ? 1 : 0;
  return squared_edt(sites, grid.dims(), grid.spacing_mm());
}

BinaryMask dilate_mm(const BinaryMask& mask, double radius_mm) {
  if (radius_mm < 0.0) throw std::invalid_argument("dilate_mm: negative radius");
  const std::vector<double> sq = squared_edt(mask);
  const double r2 = radius_mm * radius_mm;
  VoxelGrid out(mask.grid().dims(), mask.grid().spacing_mm(), mask.grid().origin_mm());
  out.width_world_sign = mask.grid().width_world_sign;
  for (std::size_t i = 0; i < sq.size(); ++i) out.data()[i] = (sq[i] <= r2) ? 1.0 : 0.0;
  return BinaryMask(std::move(out));
}

BinaryMask erode_mm(const BinaryMask& mask, double radius_mm) {
  if (radius_mm < 0.0) throw std::invalid_argument("erode_mm: negative radius");
  const VoxelGrid& grid = mask.grid();
  const auto d = grid.dims();

  // Pad one background layer so the outside of the array erodes the border.
  // The nearest out-of-array lattice point differs from an interior point
  // along exactly one axis, so a single layer is exact.
  const std::array<int, 3> pd = {d[0] + 2, d[1] + 2, d[2] + 2};
  std::vector<std::uint8_t> bg(static_cast<std::size_t>(pd[0]) * pd[1] * pd[2], 1);
  for (int zi = 0; zi < d[0]; ++zi) {
    for (int yi = 0; yi < d[1]; ++yi) {
      for (int xi = 0; xi < d[2]; ++xi) {
        const std::size_t p =
            (static_cast<std::size_t>(zi + 1) * pd[1] + (yi + 1)) * pd[2] + (xi + 1);
        bg[p] = mask.is_foreground(grid.index(zi, yi, xi)) ? 0 : 1;
      }
    }
  }
  const std::vector<double> sq = squared_edt(bg, pd, grid.spacing_mm());

  const double r2 = radius_mm * radius_mm;
  VoxelGrid out(d, grid.spacing_mm(), grid.origin_mm());
  out.width_world_sign = grid.width_world_sign;
  for (int zi = 0; zi < d[0]; ++zi) {
    for (int yi = 0; yi < d[1]; ++yi) {
      for (int xi = 0; xi < d[2]; ++xi) {
        const std::size_t p =
            (static_cast<std::size_t>(zi + 1) * pd[1] + (yi + 1)) * pd[2] + (xi + 1);
        const std::size_t q = grid.index(zi, yi, xi);
        out.data()[q] = (mask.is_foreground(q) && sq[p] > r2) ? 1.0 : 0.0;
      }
    }
  }
  return BinaryMask(std::move(out));
}

BinaryMask morph_mm(const BinaryMask& mask, double signed_radius_mm) {
  if (signed_radius_mm > 0.0) return dilate_mm(mask, signed_radius_mm);
  if (signed_radius_mm < 0.0) return erode_mm(mask, -signed_radius_mm);
  return mask;
}

}  // namespace segeval
