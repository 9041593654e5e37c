#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segeval/cohort.hpp"
#include "segeval/voxel_grid.hpp"

namespace segeval {

struct LesionSpec {
  std::array<int, 3> dims = {24, 96, 96};
  std::array<double, 3> spacing_mm = {3.0, 0.45, 0.45};
  int n_ellipsoids = 3;
  double radius_mm_lo = 4.0;
  double radius_mm_hi = 12.0;
  double center_jitter_mm = 10.0;
  std::uint64_t seed = 0;
};

// Union of ellipsoids with per-axis radii drawn from the radius range and
// centers jittered around the volume's physical center. Pure function of the
// spec.
BinaryMask generate_lesion(const LesionSpec& spec);

struct RaterSpec {
  // Signed morphology radius range in mm: positive dilates, negative erodes.
  double radius_mm_lo = 0.0;
  double radius_mm_hi = 0.0;
  double flip_prob = 0.0;   // per boundary voxel
  double empty_prob = 0.0;  // chance of not segmenting at all
};

// Draw order per call: empty decision, morphology radius, then one flip
// decision per boundary voxel (foreground surface and face-adjacent
// background, scan order).
BinaryMask perturb_rater(const BinaryMask& mask, const RaterSpec& spec, std::uint64_t seed);

struct SynthRater {
  std::string id;
  RaterSpec spec;
};

struct CohortSpec {
  int n_cases = 32;
  LesionSpec lesion;  // its seed field is ignored, per-case seeds derive from `seed`
  std::vector<SynthRater> raters;
  std::string training_rater;
  std::vector<std::string> test_raters;
  std::string model_rater;
  std::uint64_t seed = 0;
  std::string format = "nii.gz";  // nii.gz | nii | raw
};

// Writes out_dir/case_NNN/<rater>.<ext> for every case and rater plus
// out_dir/manifest.json, and returns the manifest. Case c uses lesion seed
// derive_seed(case_seed, 0) and rater i seed derive_seed(case_seed, i+1) with
// case_seed = derive_seed(master, c), so the tree is reproducible per seed
// and stable under parallel generation.
Manifest generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir);

}  // namespace segeval
