#include <doctest.h>

#include <filesystem>
#include <set>

#include "segeval/rng.hpp"
#include "segeval/synth.hpp"
#include "segeval/volume_io.hpp"
#include "test_util.hpp"

using namespace segeval;

namespace {

LesionSpec small_lesion(std::uint64_t seed) {
  LesionSpec spec;
  spec.dims = {10, 40, 40};
  spec.spacing_mm = {3.0, 0.45, 0.45};
  spec.radius_mm_lo = 3.0;
  spec.radius_mm_hi = 7.0;
  spec.center_jitter_mm = 4.0;
  spec.seed = seed;
  return spec;
}

bool masks_equal(const BinaryMask& a, const BinaryMask& b) {
  if (!a.grid().same_geometry(b.grid())) return false;
  for (std::size_t i = 0; i < a.grid().size(); ++i) {
    if (a.is_foreground(i) != b.is_foreground(i)) return false;
  }
  return true;
}

// Pure signed morphology: a degenerate radius range and no flips.
BinaryMask morph_mm(const BinaryMask& mask, double radius_mm) {
  return perturb_rater(mask, {radius_mm, radius_mm, 0.0, 0.0}, 1);
}

}  // namespace

TEST_CASE("lesion generation is deterministic for fixed parameters and seed") {
  const LesionSpec spec = small_lesion(42);
  const BinaryMask a = generate_lesion(spec);
  const BinaryMask b = generate_lesion(spec);
  CHECK(masks_equal(a, b));

  LesionSpec other = spec;
  other.seed = 43;
  const BinaryMask c = generate_lesion(other);
  CHECK_FALSE(masks_equal(a, c));
}

TEST_CASE("lesions with centered jitter and sane radii are nonempty") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const BinaryMask m = generate_lesion(small_lesion(seed));
    CHECK(m.foreground_count() > 0);
  }
}

TEST_CASE("zero ellipsoids produce an empty mask") {
  LesionSpec spec = small_lesion(1);
  spec.n_ellipsoids = 0;
  CHECK(generate_lesion(spec).empty());
}

TEST_CASE("lesion spec validation") {
  LesionSpec spec = small_lesion(1);
  spec.n_ellipsoids = -1;
  CHECK_THROWS_AS(generate_lesion(spec), std::invalid_argument);

  spec = small_lesion(1);
  spec.radius_mm_lo = 0.0;
  CHECK_THROWS_AS(generate_lesion(spec), std::invalid_argument);

  spec = small_lesion(1);
  spec.radius_mm_hi = spec.radius_mm_lo - 1.0;
  CHECK_THROWS_AS(generate_lesion(spec), std::invalid_argument);

  spec = small_lesion(1);
  spec.center_jitter_mm = -0.1;
  CHECK_THROWS_AS(generate_lesion(spec), std::invalid_argument);
}

TEST_CASE("a no-op rater spec reproduces the input exactly") {
  const BinaryMask truth = generate_lesion(small_lesion(7));
  const BinaryMask drawn = perturb_rater(truth, RaterSpec{}, 99);
  CHECK(masks_equal(truth, drawn));
}

TEST_CASE("empty_prob one always yields an empty mask on the same grid") {
  const BinaryMask truth = generate_lesion(small_lesion(7));
  RaterSpec spec;
  spec.empty_prob = 1.0;
  const BinaryMask drawn = perturb_rater(truth, spec, 5);
  CHECK(drawn.empty());
  CHECK(drawn.grid().same_geometry(truth.grid()));
}

TEST_CASE("signed morphology radius dilates or erodes") {
  const BinaryMask truth = generate_lesion(small_lesion(11));
  const std::size_t base = truth.foreground_count();
  REQUIRE(base > 0);

  RaterSpec grow;
  grow.radius_mm_lo = grow.radius_mm_hi = 1.5;
  const BinaryMask grown = perturb_rater(truth, grow, 3);
  CHECK(grown.foreground_count() > base);
  for (std::size_t i = 0; i < truth.grid().size(); ++i) {
    if (truth.is_foreground(i)) CHECK(grown.is_foreground(i));
  }

  RaterSpec shrink;
  shrink.radius_mm_lo = shrink.radius_mm_hi = -1.5;
  const BinaryMask shrunk = perturb_rater(truth, shrink, 3);
  CHECK(shrunk.foreground_count() < base);
  for (std::size_t i = 0; i < truth.grid().size(); ++i) {
    if (shrunk.is_foreground(i)) CHECK(truth.is_foreground(i));
  }
}

TEST_CASE("flip_prob one flips exactly the boundary band") {
  // Single voxel: the voxel itself is surface, its six face neighbors are the
  // background side of the boundary. All seven flip, leaving a hollow plus.
  VoxelGrid g({5, 5, 5}, {1.0, 1.0, 1.0});
  g.data()[g.index(2, 2, 2)] = 1.0;
  const BinaryMask single((VoxelGrid(g)));

  RaterSpec spec;
  spec.flip_prob = 1.0;
  const BinaryMask flipped = perturb_rater(single, spec, 17);

  CHECK(flipped.foreground_count() == 6);
  CHECK_FALSE(flipped.is_foreground(g.index(2, 2, 2)));
  CHECK(flipped.is_foreground(g.index(1, 2, 2)));
  CHECK(flipped.is_foreground(g.index(3, 2, 2)));
  CHECK(flipped.is_foreground(g.index(2, 1, 2)));
  CHECK(flipped.is_foreground(g.index(2, 3, 2)));
  CHECK(flipped.is_foreground(g.index(2, 2, 1)));
  CHECK(flipped.is_foreground(g.index(2, 2, 3)));
}

TEST_CASE("boundary flips leave the deep interior and far background alone") {
  const BinaryMask truth = generate_lesion(small_lesion(13));
  RaterSpec spec;
  spec.flip_prob = 0.5;
  const BinaryMask drawn = perturb_rater(truth, spec, 21);
  // The flip band is one face-neighbor wide, at most 3 mm at this spacing.
  const BinaryMask core = morph_mm(truth, -3.5);
  const BinaryMask halo = morph_mm(truth, 3.5);
  for (std::size_t i = 0; i < truth.grid().size(); ++i) {
    if (core.is_foreground(i)) CHECK(drawn.is_foreground(i));
    if (!halo.is_foreground(i)) CHECK_FALSE(drawn.is_foreground(i));
  }
}

TEST_CASE("rater draws are deterministic per seed") {
  const BinaryMask truth = generate_lesion(small_lesion(23));
  RaterSpec spec;
  spec.radius_mm_lo = -1.0;
  spec.radius_mm_hi = 1.0;
  spec.flip_prob = 0.3;
  const BinaryMask a = perturb_rater(truth, spec, 100);
  const BinaryMask b = perturb_rater(truth, spec, 100);
  const BinaryMask c = perturb_rater(truth, spec, 101);
  CHECK(masks_equal(a, b));
  CHECK_FALSE(masks_equal(a, c));
}

TEST_CASE("rater spec validation") {
  const BinaryMask truth = generate_lesion(small_lesion(1));
  RaterSpec spec;
  spec.flip_prob = 1.5;
  CHECK_THROWS_AS(perturb_rater(truth, spec, 0), std::invalid_argument);
  spec = RaterSpec{};
  spec.empty_prob = -0.1;
  CHECK_THROWS_AS(perturb_rater(truth, spec, 0), std::invalid_argument);
  spec = RaterSpec{};
  spec.radius_mm_lo = 1.0;
  spec.radius_mm_hi = 0.5;
  CHECK_THROWS_AS(perturb_rater(truth, spec, 0), std::invalid_argument);
}

namespace {

CohortSpec tiny_cohort(std::uint64_t seed, const std::string& format) {
  CohortSpec spec;
  spec.n_cases = 3;
  spec.lesion = small_lesion(0);
  spec.raters = {{"training", RaterSpec{}},
                 {"expert", {-0.9, 0.9, 0.02, 0.0}},
                 {"model", {-0.5, 0.5, 0.01, 0.0}}};
  spec.training_rater = "training";
  spec.test_raters = {"expert"};
  spec.model_rater = "model";
  spec.seed = seed;
  spec.format = format;
  return spec;
}

}  // namespace

TEST_CASE("generate_cohort writes the expected tree and manifest") {
  testutil::TempDir tmp;
  const CohortSpec spec = tiny_cohort(555, "nii");
  const Manifest manifest = generate_cohort(spec, tmp.path());

  CHECK(manifest.cases.size() == 3);
  CHECK(manifest.raters == std::vector<std::string>{"training", "expert", "model"});
  CHECK(manifest.roles.training_rater == "training");
  CHECK(manifest.roles.model == "model");
  CHECK(manifest.roles.test_raters == std::vector<std::string>{"expert"});

  CHECK(std::filesystem::exists(tmp.path() / "manifest.json"));
  for (int c = 0; c < 3; ++c) {
    char name[16];
    std::snprintf(name, sizeof(name), "case_%03d", c);
    for (const char* rater : {"training", "expert", "model"}) {
      CHECK(std::filesystem::exists(tmp.path() / name / (std::string(rater) + ".nii")));
    }
  }
  CHECK(manifest.cases[0].case_id == "case_000");
  CHECK(manifest.cases[2].case_id == "case_002");

  const Manifest loaded = load_manifest(tmp.path() / "manifest.json");
  CHECK(loaded.cases.size() == manifest.cases.size());
  CHECK(loaded.raters == manifest.raters);
  CHECK(loaded.roles.training_rater == manifest.roles.training_rater);
  CHECK(loaded.roles.model == manifest.roles.model);
  CHECK(loaded.roles.test_raters == manifest.roles.test_raters);
  for (std::size_t i = 0; i < loaded.cases.size(); ++i) {
    CHECK(loaded.cases[i].case_id == manifest.cases[i].case_id);
    CHECK(loaded.cases[i].mask_paths == manifest.cases[i].mask_paths);
  }
}

TEST_CASE("the unperturbed training rater stores the lesion itself") {
  testutil::TempDir tmp;
  const CohortSpec spec = tiny_cohort(777, "nii");
  const Manifest manifest = generate_cohort(spec, tmp.path());

  for (int c = 0; c < spec.n_cases; ++c) {
    LesionSpec lesion = spec.lesion;
    lesion.seed = derive_seed(derive_seed(spec.seed, static_cast<std::uint64_t>(c)), 0);
    const BinaryMask truth = generate_lesion(lesion);
    const BinaryMask stored =
        load_mask(manifest.resolve(manifest.cases[c].mask_paths.at("training")));
    CHECK(masks_equal(truth, stored));
  }
}

TEST_CASE("cohort generation is reproducible per seed") {
  testutil::TempDir a, b, c;
  generate_cohort(tiny_cohort(31, "nii.gz"), a.path());
  generate_cohort(tiny_cohort(31, "nii.gz"), b.path());
  generate_cohort(tiny_cohort(32, "nii.gz"), c.path());

  const auto rel = std::filesystem::path("case_001") / "expert.nii.gz";
  CHECK(testutil::slurp(a.path() / rel) == testutil::slurp(b.path() / rel));
  CHECK(masks_equal(load_mask(a.path() / rel), load_mask(b.path() / rel)));
  CHECK_FALSE(masks_equal(load_mask(a.path() / rel), load_mask(c.path() / rel)));
}

TEST_CASE("cohort spec validation") {
  testutil::TempDir tmp;
  CohortSpec spec = tiny_cohort(1, "nii");
  spec.n_cases = 0;
  CHECK_THROWS_AS(generate_cohort(spec, tmp.path()), std::invalid_argument);

  spec = tiny_cohort(1, "nii");
  spec.raters.clear();
  CHECK_THROWS_AS(generate_cohort(spec, tmp.path()), std::invalid_argument);

  spec = tiny_cohort(1, "dicom");
  CHECK_THROWS_AS(generate_cohort(spec, tmp.path()), std::invalid_argument);
}
