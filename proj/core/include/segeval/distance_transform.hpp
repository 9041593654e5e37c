#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "segeval/voxel_grid.hpp"

namespace segeval {

// Exact anisotropic squared Euclidean distance transform (separable parabola
// envelope, one pass per axis). `sites` is a dims-shaped array in (depth,
// height, width) order; nonzero entries are sites. The result holds, for every
// voxel, the squared distance in mm^2 from its center to the nearest site
// center, or +infinity when there are no sites at all.
std::vector<double> squared_edt(const std::vector<std::uint8_t>& sites,
                                const std::array<int, 3>& dims,
                                const std::array<double, 3>& spacing_mm);

// Distance to the nearest foreground voxel of the mask.
std::vector<double> squared_edt(const BinaryMask& mask);

// Morphology with a Euclidean ball of the given radius in mm. A voxel is
// inside the ball when its center lies within radius_mm of the structuring
// element's center. Erosion treats everything outside the array as background,
// so foreground touching the border is eaten from that side too.
BinaryMask dilate_mm(const BinaryMask& mask, double radius_mm);
BinaryMask erode_mm(const BinaryMask& mask, double radius_mm);

// Signed convenience wrapper: positive dilates, negative erodes, zero copies.
BinaryMask morph_mm(const BinaryMask& mask, double signed_radius_mm);

}  // namespace segeval
