#pragma once

#include <filesystem>

#include "segeval/voxel_grid.hpp"

namespace segeval {

enum class VolumeKind { image, mask };
enum class VolumeDType { uint8, int16, int32, float32, float64 };

/// Load a volume from disk. Format is chosen by extension:
///   .nii / .nii.gz   NIfTI-1 single file
///   .raw             little-endian payload with a <path>.json sidecar
///                    {dims, spacing_mm, origin_mm, dtype}
/// For kind == mask the values are binarized at 0.5 on load.
///
/// Throws io_error when the file cannot be read, format_error for an
/// unsupported format/datatype or a header that disagrees with the payload.
VoxelGrid load_volume(const std::filesystem::path& path, VolumeKind kind = VolumeKind::image);

BinaryMask load_mask(const std::filesystem::path& path);

/// Write a volume; format by extension as in load_volume. NIfTI output
/// supports float32 and uint8. uint8 requires integral values in [0,255].
void save_volume(const std::filesystem::path& path, const VoxelGrid& grid,
                 VolumeDType dtype = VolumeDType::float32);

void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace segeval
