#include "segeval/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace segeval {

static_assert(std::endian::native == std::endian::little,
              "volume payloads are little-endian; big-endian hosts are not supported");

namespace {

// NIfTI-1 single-file header, 348 bytes, no padding on any sane ABI.
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtInt32 = 8;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

int dtype_bytes(VolumeDType t) {
  switch (t) {
    case VolumeDType::uint8: return 1;
    case VolumeDType::int16: return 2;
    case VolumeDType::int32: return 4;
    case VolumeDType::float32: return 4;
    case VolumeDType::float64: return 8;
  }
  return 0;
}

std::string dtype_name(VolumeDType t) {
  switch (t) {
    case VolumeDType::uint8: return "uint8";
    case VolumeDType::int16: return "int16";
    case VolumeDType::int32: return "int32";
    case VolumeDType::float32: return "float32";
    case VolumeDType::float64: return "float64";
  }
  return "?";
}

VolumeDType dtype_from_name(const std::string& s, const std::string& where) {
  if (s == "uint8") return VolumeDType::uint8;
  if (s == "int16") return VolumeDType::int16;
  if (s == "int32") return VolumeDType::int32;
  if (s == "float32") return VolumeDType::float32;
  if (s == "float64") return VolumeDType::float64;
  throw format_error(where + ": unsupported dtype '" + s + "'");
}

void decode_payload(const std::vector<unsigned char>& raw, VolumeDType t, double slope,
                    double inter, std::vector<double>& out) {
  const std::size_t n = out.size();
  const bool scaled = slope != 0.0 && !(slope == 1.0 && inter == 0.0);
  auto apply = [&](double v) { return scaled ? v * slope + inter : v; };
  switch (t) {
    case VolumeDType::uint8:
      for (std::size_t i = 0; i < n; ++i) out[i] = apply(raw[i]);
      break;
    case VolumeDType::int16: {
      for (std::size_t i = 0; i < n; ++i) {
        std::int16_t v;
        std::memcpy(&v, raw.data() + 2 * i, 2);
        out[i] = apply(v);
      }
      break;
    }
    case VolumeDType::int32: {
      for (std::size_t i = 0; i < n; ++i) {
        std::int32_t v;
        std::memcpy(&v, raw.data() + 4 * i, 4);
        out[i] = apply(v);
      }
      break;
    }
    case VolumeDType::float32: {
      for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, raw.data() + 4 * i, 4);
        out[i] = apply(v);
      }
      break;
    }
    case VolumeDType::float64: {
      for (std::size_t i = 0; i < n; ++i) {
        double v;
        std::memcpy(&v, raw.data() + 8 * i, 8);
        out[i] = apply(v);
      }
      break;
    }
  }
}

std::vector<unsigned char> encode_payload(const VoxelGrid& grid, VolumeDType t,
                                          const std::string& where) {
  const auto& d = grid.data();
  std::vector<unsigned char> raw(d.size() * dtype_bytes(t));
  switch (t) {
    case VolumeDType::uint8:
      for (std::size_t i = 0; i < d.size(); ++i) {
        const double v = d[i];
        if (v < 0.0 || v > 255.0 || v != static_cast<double>(static_cast<unsigned char>(v))) {
          throw std::invalid_argument(where + ": value " + std::to_string(v) +
                                      " not representable as uint8");
        }
        raw[i] = static_cast<unsigned char>(v);
      }
      break;
    case VolumeDType::int16:
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto v = static_cast<std::int16_t>(d[i]);
        std::memcpy(raw.data() + 2 * i, &v, 2);
      }
      break;
    case VolumeDType::int32:
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto v = static_cast<std::int32_t>(d[i]);
        std::memcpy(raw.data() + 4 * i, &v, 4);
      }
      break;
    case VolumeDType::float32:
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto v = static_cast<float>(d[i]);
        std::memcpy(raw.data() + 4 * i, &v, 4);
      }
      break;
    case VolumeDType::float64:
      std::memcpy(raw.data(), d.data(), d.size() * 8);
      break;
  }
  return raw;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// ---- NIfTI ----

// Geometry fields are float32 in the header; plain widening injects sub-ulp
// noise (0.45f != 0.45) that breaks exact geometry matches after a save/load
// round trip. The shortest decimal that reproduces the float is what the
// writer most plausibly meant, so parse that as double.
double widen(float v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  double d = 0.0;
  std::from_chars(buf, r.ptr, d);
  return d;
}

VoxelGrid load_nifti(const std::filesystem::path& path) {
  const std::string name = path.string();
  gzFile f = gzopen(name.c_str(), "rb");
  if (f == nullptr) throw io_error("cannot open volume file: " + name);

  NiftiHeader hdr{};
  if (gzread(f, &hdr, sizeof(hdr)) != static_cast<int>(sizeof(hdr))) {
    gzclose(f);
    throw format_error(name + ": truncated NIfTI header");
  }
  if (hdr.sizeof_hdr != 348) {
    gzclose(f);
    if (hdr.sizeof_hdr == 0x5C010000) {  // 348 byte-swapped
      throw format_error(name + ": big-endian NIfTI is not supported");
    }
    throw format_error(name + ": not a NIfTI-1 file (sizeof_hdr != 348)");
  }
  if (std::memcmp(hdr.magic, "n+1", 4) != 0) {
    gzclose(f);
    if (std::memcmp(hdr.magic, "ni1", 4) == 0) {
      throw format_error(name + ": two-file NIfTI (.hdr/.img) is not supported");
    }
    throw format_error(name + ": missing NIfTI magic");
  }
  if (hdr.dim[0] < 3) {
    gzclose(f);
    throw format_error(name + ": expected a 3D volume, dim[0]=" + std::to_string(hdr.dim[0]));
  }
  for (int a = 4; a <= hdr.dim[0] && a < 8; ++a) {
    if (hdr.dim[a] > 1) {
      gzclose(f);
      throw format_error(name + ": time series / multi-volume NIfTI is not supported");
    }
  }
  const int nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
  if (nx <= 0 || ny <= 0 || nz <= 0) {
    gzclose(f);
    throw format_error(name + ": non-positive image dimensions");
  }

  VolumeDType dtype;
  switch (hdr.datatype) {
    case kDtUint8: dtype = VolumeDType::uint8; break;
    case kDtInt16: dtype = VolumeDType::int16; break;
    case kDtInt32: dtype = VolumeDType::int32; break;
    case kDtFloat32: dtype = VolumeDType::float32; break;
    case kDtFloat64: dtype = VolumeDType::float64; break;
    default:
      gzclose(f);
      throw format_error(name + ": unsupported NIfTI datatype code " +
                         std::to_string(hdr.datatype));
  }

  // spacing from pixdim; sform column norms as fallback. The affine is used
  // only for spacing, origin and the left-right axis sign; data is never
  // reoriented.
  std::array<double, 3> spacing = {widen(hdr.pixdim[3]), widen(hdr.pixdim[2]),
                                   widen(hdr.pixdim[1])};
  if (!(spacing[0] > 0.0 && spacing[1] > 0.0 && spacing[2] > 0.0) && hdr.sform_code > 0) {
    auto col_norm = [&](int c) {
      const double vx = widen(hdr.srow_x[c]), vy = widen(hdr.srow_y[c]),
                   vz = widen(hdr.srow_z[c]);
      return std::sqrt(vx * vx + vy * vy + vz * vz);
    };
    spacing = {col_norm(2), col_norm(1), col_norm(0)};
  }
  if (!(spacing[0] > 0.0 && spacing[1] > 0.0 && spacing[2] > 0.0)) {
    gzclose(f);
    throw format_error(name + ": non-positive voxel spacing");
  }

  std::array<double, 3> origin = {0.0, 0.0, 0.0};
  if (hdr.sform_code > 0) {
    origin = {widen(hdr.srow_z[3]), widen(hdr.srow_y[3]), widen(hdr.srow_x[3])};
  } else if (hdr.qform_code > 0) {
    origin = {widen(hdr.qoffset_z), widen(hdr.qoffset_y), widen(hdr.qoffset_x)};
  }

  const long payload_at = static_cast<long>(hdr.vox_offset);
  if (payload_at < static_cast<long>(sizeof(hdr))) {
    gzclose(f);
    throw format_error(name + ": invalid vox_offset");
  }
  // skip extensions between header and payload
  for (long skip = payload_at - static_cast<long>(sizeof(hdr)); skip > 0;) {
    char buf[512];
    const int chunk = static_cast<int>(std::min<long>(skip, sizeof(buf)));
    if (gzread(f, buf, chunk) != chunk) {
      gzclose(f);
      throw format_error(name + ": truncated before voxel data");
    }
    skip -= chunk;
  }

  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  std::vector<unsigned char> raw(n * dtype_bytes(dtype));
  std::size_t got = 0;
  while (got < raw.size()) {
    const int chunk = static_cast<int>(std::min<std::size_t>(raw.size() - got, 1u << 30));
    const int r = gzread(f, raw.data() + got, chunk);
    if (r <= 0) break;
    got += static_cast<std::size_t>(r);
  }
  gzclose(f);
  if (got != raw.size()) {
    throw format_error(name + ": payload shorter than header dimensions (" +
                       std::to_string(got) + " of " + std::to_string(raw.size()) + " bytes)");
  }

  VoxelGrid grid({nz, ny, nx}, spacing, origin);
  decode_payload(raw, dtype, hdr.scl_slope, hdr.scl_inter, grid.data());
  if (hdr.sform_code > 0) grid.width_world_sign = (hdr.srow_x[0] < 0.0f) ? -1 : 1;
  return grid;
}

void save_nifti(const std::filesystem::path& path, const VoxelGrid& grid, VolumeDType dtype) {
  const std::string name = path.string();
  if (dtype != VolumeDType::float32 && dtype != VolumeDType::uint8) {
    throw std::invalid_argument(name + ": NIfTI output supports float32 and uint8 only");
  }

  NiftiHeader hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  hdr.dim[1] = static_cast<std::int16_t>(grid.width());
  hdr.dim[2] = static_cast<std::int16_t>(grid.height());
  hdr.dim[3] = static_cast<std::int16_t>(grid.depth());
  for (int a = 4; a < 8; ++a) hdr.dim[a] = 1;
  hdr.datatype = (dtype == VolumeDType::float32) ? kDtFloat32 : kDtUint8;
  hdr.bitpix = static_cast<std::int16_t>(8 * dtype_bytes(dtype));
  hdr.pixdim[0] = 1.0f;
  hdr.pixdim[1] = static_cast<float>(grid.spacing_mm()[2]);
  hdr.pixdim[2] = static_cast<float>(grid.spacing_mm()[1]);
  hdr.pixdim[3] = static_cast<float>(grid.spacing_mm()[0]);
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  hdr.xyzt_units = 2;  // mm
  hdr.sform_code = 1;
  hdr.srow_x[0] = static_cast<float>(grid.width_world_sign * grid.spacing_mm()[2]);
  hdr.srow_x[3] = static_cast<float>(grid.origin_mm()[2]);
  hdr.srow_y[1] = static_cast<float>(grid.spacing_mm()[1]);
  hdr.srow_y[3] = static_cast<float>(grid.origin_mm()[1]);
  hdr.srow_z[2] = static_cast<float>(grid.spacing_mm()[0]);
  hdr.srow_z[3] = static_cast<float>(grid.origin_mm()[0]);
  std::memcpy(hdr.magic, "n+1", 4);

  const std::vector<unsigned char> raw = encode_payload(grid, dtype, name);
  const char extender[4] = {0, 0, 0, 0};

  // gzopen in transparent mode writes plain bytes for .nii
  const char* mode = ends_with(name, ".gz") ? "wb6" : "wbT";
  gzFile f = gzopen(name.c_str(), mode);
  if (f == nullptr) throw io_error("cannot open for writing: " + name);
  bool ok = gzwrite(f, &hdr, sizeof(hdr)) == static_cast<int>(sizeof(hdr));
  ok = ok && gzwrite(f, extender, 4) == 4;
  for (std::size_t at = 0; ok && at < raw.size();) {
    const int chunk = static_cast<int>(std::min<std::size_t>(raw.size() - at, 1u << 30));
    ok = gzwrite(f, raw.data() + at, chunk) == chunk;
    at += static_cast<std::size_t>(chunk);
  }
  if (gzclose(f) != Z_OK || !ok) throw io_error("write failed: " + name);
}

// ---- raw payload + JSON sidecar ----

VoxelGrid load_raw(const std::filesystem::path& path) {
  const std::string name = path.string();
  const std::filesystem::path sidecar = path.string() + ".json";

  std::ifstream sj(sidecar);
  if (!sj) throw io_error("cannot open sidecar: " + sidecar.string());
  nlohmann::json j;
  try {
    sj >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(sidecar.string() + ": invalid JSON (" + e.what() + ")");
  }

  std::array<int, 3> dims{};
  std::array<double, 3> spacing{}, origin{0.0, 0.0, 0.0};
  VolumeDType dtype;
  try {
    for (int a = 0; a < 3; ++a) dims[a] = j.at("dims").at(a).get<int>();
    for (int a = 0; a < 3; ++a) spacing[a] = j.at("spacing_mm").at(a).get<double>();
    if (j.contains("origin_mm")) {
      for (int a = 0; a < 3; ++a) origin[a] = j.at("origin_mm").at(a).get<double>();
    }
    dtype = dtype_from_name(j.at("dtype").get<std::string>(), sidecar.string());
  } catch (const nlohmann::json::exception& e) {
    throw format_error(sidecar.string() + ": missing or malformed field (" + e.what() + ")");
  }
  if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    throw format_error(sidecar.string() + ": non-positive dims");
  }
  if (!(spacing[0] > 0.0 && spacing[1] > 0.0 && spacing[2] > 0.0)) {
    throw format_error(sidecar.string() + ": non-positive spacing");
  }

  std::ifstream pf(path, std::ios::binary);
  if (!pf) throw io_error("cannot open volume file: " + name);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(pf)),
                                 std::istreambuf_iterator<char>());
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::size_t expect = n * dtype_bytes(dtype);
  if (raw.size() != expect) {
    throw format_error(name + ": payload size " + std::to_string(raw.size()) +
                       " does not match sidecar dims (" + std::to_string(expect) + " bytes)");
  }

  VoxelGrid grid(dims, spacing, origin);
  decode_payload(raw, dtype, 1.0, 0.0, grid.data());
  return grid;
}

void save_raw(const std::filesystem::path& path, const VoxelGrid& grid, VolumeDType dtype) {
  const std::string name = path.string();
  const std::vector<unsigned char> raw = encode_payload(grid, dtype, name);

  std::ofstream pf(path, std::ios::binary | std::ios::trunc);
  if (!pf) throw io_error("cannot open for writing: " + name);
  pf.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!pf) throw io_error("write failed: " + name);
  pf.close();

  nlohmann::json j;
  j["dims"] = grid.dims();
  j["spacing_mm"] = grid.spacing_mm();
  j["origin_mm"] = grid.origin_mm();
  j["dtype"] = dtype_name(dtype);
  std::ofstream sj(path.string() + ".json", std::ios::trunc);
  if (!sj) throw io_error("cannot open for writing: " + name + ".json");
  sj << j.dump(2) << "\n";
  if (!sj) throw io_error("write failed: " + name + ".json");
}

enum class Format { nifti, raw };

Format format_of(const std::filesystem::path& path) {
  const std::string name = path.string();
  if (ends_with(name, ".nii") || ends_with(name, ".nii.gz")) return Format::nifti;
  if (ends_with(name, ".raw")) return Format::raw;
  throw format_error(name + ": unsupported volume format (expected .nii, .nii.gz or .raw)");
}

}  // namespace

VoxelGrid load_volume(const std::filesystem::path& path, VolumeKind kind) {
  VoxelGrid grid = (format_of(path) == Format::nifti) ? load_nifti(path) : load_raw(path);
  if (kind == VolumeKind::mask) {
    const int sign = grid.width_world_sign;
    grid = binarize(grid, 0.5).grid();
    grid.width_world_sign = sign;
  }
  return grid;
}

BinaryMask load_mask(const std::filesystem::path& path) {
  return BinaryMask(load_volume(path, VolumeKind::mask));
}

void save_volume(const std::filesystem::path& path, const VoxelGrid& grid, VolumeDType dtype) {
  if (format_of(path) == Format::nifti) {
    save_nifti(path, grid, dtype);
  } else {
    save_raw(path, grid, dtype);
  }
}

void save_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  save_volume(path, mask.grid(), VolumeDType::uint8);
}

}  // namespace segeval
