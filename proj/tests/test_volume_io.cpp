#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "segeval/errors.hpp"
#include "segeval/rng.hpp"
#include "segeval/volume_io.hpp"
#include "test_util.hpp"

using namespace segeval;
using testutil::TempDir;

namespace {

VoxelGrid sample_grid() {
  VoxelGrid g({4, 6, 5}, {3.0, 0.45, 0.45}, {-10.0, 2.5, 7.0});
  Rng rng(41);
  for (double& v : g.data()) v = std::floor(rng.uniform(-100.0, 100.0));
  return g;
}

void check_round_trip(const VoxelGrid& g, const std::filesystem::path& path,
                      VolumeDType dtype = VolumeDType::float32) {
  save_volume(path, g, dtype);
  const VoxelGrid r = load_volume(path);
  REQUIRE(r.dims() == g.dims());
  for (int a = 0; a < 3; ++a) {
    CHECK(r.spacing_mm()[a] == doctest::Approx(g.spacing_mm()[a]).epsilon(1e-6));
    CHECK(r.origin_mm()[a] == doctest::Approx(g.origin_mm()[a]).epsilon(1e-4));
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(r.data()[i] == doctest::Approx(g.data()[i]).epsilon(1e-6));
  }
}

}  // namespace

TEST_CASE("nifti round-trip preserves dims, spacing, origin and data") {
  TempDir tmp("nifti");
  const VoxelGrid g = sample_grid();
  check_round_trip(g, tmp / "vol.nii");
  check_round_trip(g, tmp / "vol.nii.gz");
}

TEST_CASE("raw round-trip with sidecar") {
  TempDir tmp("raw");
  const VoxelGrid g = sample_grid();
  check_round_trip(g, tmp / "vol.raw");
  CHECK(std::filesystem::exists(tmp / "vol.raw.json"));
  check_round_trip(g, tmp / "vol64.raw", VolumeDType::float64);
}

TEST_CASE("uint8 output demands integral values in range") {
  TempDir tmp("u8");
  VoxelGrid g({2, 2, 2}, {1, 1, 1});
  g(0, 0, 0) = 1.0;
  g(1, 1, 1) = 255.0;
  check_round_trip(g, tmp / "mask.nii.gz", VolumeDType::uint8);

  g(0, 0, 1) = 0.5;
  CHECK_THROWS_AS(save_volume(tmp / "bad.nii", g, VolumeDType::uint8), std::invalid_argument);
  g(0, 0, 1) = 300.0;
  CHECK_THROWS_AS(save_volume(tmp / "bad.nii", g, VolumeDType::uint8), std::invalid_argument);
}

TEST_CASE("nifti writes only float32 and uint8") {
  TempDir tmp("dtype");
  CHECK_THROWS_AS(save_volume(tmp / "v.nii", sample_grid(), VolumeDType::int16),
                  std::invalid_argument);
  // raw accepts the full dtype set
  VoxelGrid g({2, 2, 2}, {1, 1, 1});
  g(0, 0, 0) = -7.0;
  check_round_trip(g, tmp / "v16.raw", VolumeDType::int16);
  check_round_trip(g, tmp / "v32.raw", VolumeDType::int32);
}

TEST_CASE("mask loading binarizes at 0.5") {
  TempDir tmp("maskload");
  VoxelGrid g({2, 2, 2}, {1, 1, 1});
  g(0, 0, 0) = 0.2;
  g(0, 0, 1) = 0.9;
  g(1, 1, 1) = 1.0;
  save_volume(tmp / "soft.nii", g);
  const BinaryMask m = load_mask(tmp / "soft.nii");
  CHECK_FALSE(m.is_foreground(0, 0, 0));
  CHECK(m.is_foreground(0, 0, 1));
  CHECK(m.is_foreground(1, 1, 1));
  CHECK(m.foreground_count() == 2);
}

TEST_CASE("save_mask and load_mask round-trip") {
  TempDir tmp("mask");
  VoxelGrid g({3, 4, 4}, {3.0, 0.45, 0.45});
  Rng rng(5);
  for (double& v : g.data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  const BinaryMask m{g};
  for (const char* name : {"m.nii", "m.nii.gz", "m.raw"}) {
    save_mask(tmp / name, m);
    const BinaryMask r = load_mask(tmp / name);
    CHECK(r.grid().data() == m.grid().data());
  }
}

TEST_CASE("missing file raises io_error") {
  CHECK_THROWS_AS(load_volume("/nonexistent/path/vol.nii"), io_error);
  CHECK_THROWS_AS(load_volume("/nonexistent/path/vol.raw"), io_error);
}

TEST_CASE("unknown extension raises format_error") {
  TempDir tmp("ext");
  testutil::spit(tmp / "vol.mhd", "not a volume");
  CHECK_THROWS_AS(load_volume(tmp / "vol.mhd"), format_error);
  CHECK_THROWS_AS(save_volume(tmp / "vol.mhd", sample_grid()), format_error);
}

TEST_CASE("corrupt nifti headers are rejected with format_error") {
  TempDir tmp("corrupt");
  const auto path = tmp / "vol.nii";
  save_volume(path, sample_grid());
  std::string bytes = testutil::slurp(path);

  SUBCASE("truncated header") {
    testutil::spit(tmp / "short.nii", bytes.substr(0, 100));
    CHECK_THROWS_AS(load_volume(tmp / "short.nii"), format_error);
  }
  SUBCASE("bad magic") {
    bytes[344] = 'x';
    testutil::spit(tmp / "magic.nii", bytes);
    CHECK_THROWS_AS(load_volume(tmp / "magic.nii"), format_error);
  }
  SUBCASE("two-file magic ni1 unsupported") {
    std::memcpy(bytes.data() + 344, "ni1\0", 4);
    testutil::spit(tmp / "ni1.nii", bytes);
    CHECK_THROWS_AS(load_volume(tmp / "ni1.nii"), format_error);
  }
  SUBCASE("big-endian header") {
    // sizeof_hdr = 348 stored big-endian
    bytes[0] = 0;
    bytes[1] = 0;
    bytes[2] = 0x01;
    bytes[3] = 0x5C;
    testutil::spit(tmp / "be.nii", bytes);
    CHECK_THROWS_AS(load_volume(tmp / "be.nii"), format_error);
  }
  SUBCASE("payload shorter than the header promises") {
    testutil::spit(tmp / "shortpay.nii", bytes.substr(0, bytes.size() - 40));
    CHECK_THROWS_AS(load_volume(tmp / "shortpay.nii"), format_error);
  }
}

TEST_CASE("raw sidecar disagreements are rejected") {
  TempDir tmp("sidecar");
  const auto path = tmp / "vol.raw";
  save_volume(path, sample_grid());

  SUBCASE("missing sidecar") {
    std::filesystem::remove(tmp / "vol.raw.json");
    CHECK_THROWS_AS(load_volume(path), io_error);
  }
  SUBCASE("dims disagree with payload size") {
    testutil::spit(tmp / "vol.raw.json",
                   R"({"dims":[4,6,9],"spacing_mm":[3.0,0.45,0.45],"origin_mm":[0,0,0],)"
                   R"("dtype":"float32"})");
    CHECK_THROWS_AS(load_volume(path), format_error);
  }
  SUBCASE("unknown dtype") {
    testutil::spit(tmp / "vol.raw.json",
                   R"({"dims":[4,6,5],"spacing_mm":[3.0,0.45,0.45],"origin_mm":[0,0,0],)"
                   R"("dtype":"complex64"})");
    CHECK_THROWS_AS(load_volume(path), format_error);
  }
  SUBCASE("malformed json") {
    testutil::spit(tmp / "vol.raw.json", "{nope");
    CHECK_THROWS_AS(load_volume(path), format_error);
  }
}

TEST_CASE("int16 nifti with scl_slope rescales on load") {
  TempDir tmp("slope");
  // hand-build: save a float volume, then rewrite as int16 with slope/inter
  VoxelGrid g({1, 1, 4}, {1, 1, 1});
  g(0, 0, 0) = 0.0;
  g(0, 0, 1) = 1.0;
  g(0, 0, 2) = 2.0;
  g(0, 0, 3) = 3.0;
  const auto path = tmp / "f.nii";
  save_volume(path, g);
  std::string bytes = testutil::slurp(path);

  std::int16_t dtype = 4, bitpix = 16;
  std::memcpy(bytes.data() + 70, &dtype, 2);
  std::memcpy(bytes.data() + 72, &bitpix, 2);
  float slope = 2.5f, inter = -1.0f;
  std::memcpy(bytes.data() + 112, &slope, 4);
  std::memcpy(bytes.data() + 116, &inter, 4);
  std::string payload;
  for (std::int16_t v : {std::int16_t{0}, std::int16_t{1}, std::int16_t{2}, std::int16_t{3}}) {
    payload.append(reinterpret_cast<const char*>(&v), 2);
  }
  bytes = bytes.substr(0, 352) + payload;
  testutil::spit(tmp / "i16.nii", bytes);

  const VoxelGrid r = load_volume(tmp / "i16.nii");
  CHECK(r.data()[0] == doctest::Approx(-1.0));
  CHECK(r.data()[1] == doctest::Approx(1.5));
  CHECK(r.data()[3] == doctest::Approx(6.5));
}

TEST_CASE("width_world_sign follows the sagittal affine column") {
  TempDir tmp("sign");
  VoxelGrid g({2, 2, 2}, {1, 1, 1});
  g.width_world_sign = -1;
  const auto path = tmp / "neg.nii";
  save_volume(path, g);
  const VoxelGrid r = load_volume(path);
  CHECK(r.width_world_sign == -1);

  g.width_world_sign = 1;
  save_volume(tmp / "pos.nii", g);
  CHECK(load_volume(tmp / "pos.nii").width_world_sign == 1);
}

TEST_CASE("gzip output is deterministic") {
  TempDir tmp("det");
  const VoxelGrid g = sample_grid();
  save_volume(tmp / "a.nii.gz", g);
  save_volume(tmp / "b.nii.gz", g);
  CHECK(testutil::slurp(tmp / "a.nii.gz") == testutil::slurp(tmp / "b.nii.gz"));
}
