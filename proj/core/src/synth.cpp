#include "segeval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "segeval/distance_transform.hpp"
#include "segeval/rng.hpp"
#include "segeval/volume_io.hpp"

namespace segeval {

BinaryMask generate_lesion(const LesionSpec& spec) {
  if (spec.n_ellipsoids < 0 || spec.radius_mm_lo <= 0.0 ||
      spec.radius_mm_hi < spec.radius_mm_lo || spec.center_jitter_mm < 0.0) {
    throw std::invalid_argument("generate_lesion: invalid spec");
  }

  VoxelGrid grid(spec.dims, spec.spacing_mm);
  const auto center = grid.physical_center();

  Rng rng(spec.seed);
  struct Ellipsoid {
    std::array<double, 3> c;
    std::array<double, 3> r;
  };
  std::vector<Ellipsoid> blobs(spec.n_ellipsoids);
  for (auto& e : blobs) {
    for (int a = 0; a < 3; ++a) {
      e.c[a] = center[a] + rng.uniform(-spec.center_jitter_mm, spec.center_jitter_mm);
    }
    for (int a = 0; a < 3; ++a) e.r[a] = rng.uniform(spec.radius_mm_lo, spec.radius_mm_hi);
  }

  for (int z = 0; z < grid.depth(); ++z) {
    const double pz = grid.physical(0, z);
    for (int y = 0; y < grid.height(); ++y) {
      const double py = grid.physical(1, y);
      for (int x = 0; x < grid.width(); ++x) {
        const double px = grid.physical(2, x);
        for (const auto& e : blobs) {
          const double qz = (pz - e.c[0]) / e.r[0];
          const double qy = (py - e.c[1]) / e.r[1];
          const double qx = (px - e.c[2]) / e.r[2];
          if (qz * qz + qy * qy + qx * qx <= 1.0) {
            grid.data()[grid.index(z, y, x)] = 1.0;
            break;
          }
        }
      }
    }
  }
  return BinaryMask(std::move(grid));
}

BinaryMask perturb_rater(const BinaryMask& mask, const RaterSpec& spec, std::uint64_t seed) {
  if (spec.flip_prob < 0.0 || spec.flip_prob > 1.0 || spec.empty_prob < 0.0 ||
      spec.empty_prob > 1.0 || spec.radius_mm_hi < spec.radius_mm_lo) {
    throw std::invalid_argument("perturb_rater: invalid spec");
  }

  Rng rng(seed);
  if (rng.bernoulli(spec.empty_prob)) {
    return BinaryMask(
        VoxelGrid(mask.grid().dims(), mask.grid().spacing_mm(), mask.grid().origin_mm()));
  }

  const double radius = rng.uniform(spec.radius_mm_lo, spec.radius_mm_hi);
  BinaryMask morphed = morph_mm(mask, radius);
  if (spec.flip_prob == 0.0) return morphed;

  const VoxelGrid& g = morphed.grid();
  const int dz = g.depth(), dy = g.height(), dx = g.width();
  auto fg_at = [&](int z, int y, int x) {
    if (z < 0 || z >= dz || y < 0 || y >= dy || x < 0 || x >= dx) return false;
    return morphed.is_foreground(g.index(z, y, x));
  };

  VoxelGrid out = g;
  for (int z = 0; z < dz; ++z) {
    for (int y = 0; y < dy; ++y) {
      for (int x = 0; x < dx; ++x) {
        const bool fg = morphed.is_foreground(g.index(z, y, x));
        const bool all_neighbors_fg = fg_at(z - 1, y, x) && fg_at(z + 1, y, x) &&
                                      fg_at(z, y - 1, x) && fg_at(z, y + 1, x) &&
                                      fg_at(z, y, x - 1) && fg_at(z, y, x + 1);
        const bool any_neighbor_fg = fg_at(z - 1, y, x) || fg_at(z + 1, y, x) ||
                                     fg_at(z, y - 1, x) || fg_at(z, y + 1, x) ||
                                     fg_at(z, y, x - 1) || fg_at(z, y, x + 1);
        // boundary voxel: foreground touching background (incl. array edge) or
        // background touching foreground
        const bool candidate = fg ? !all_neighbors_fg : any_neighbor_fg;
        if (candidate && rng.bernoulli(spec.flip_prob)) {
          out.data()[out.index(z, y, x)] = fg ? 0.0 : 1.0;
        }
      }
    }
  }
  return BinaryMask(std::move(out));
}

Manifest generate_cohort(const CohortSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.n_cases < 1) throw std::invalid_argument("generate_cohort: n_cases must be >= 1");
  if (spec.raters.empty()) throw std::invalid_argument("generate_cohort: no raters");
  if (spec.format != "nii.gz" && spec.format != "nii" && spec.format != "raw") {
    throw std::invalid_argument("generate_cohort: unknown mask format " + spec.format);
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("generate_cohort: cannot create " + out_dir.string());

  Manifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& r : spec.raters) manifest.raters.push_back(r.id);
  manifest.roles.training_rater = spec.training_rater;
  manifest.roles.test_raters = spec.test_raters;
  manifest.roles.model = spec.model_rater;

  for (int c = 0; c < spec.n_cases; ++c) {
    const std::uint64_t case_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(c));
    LesionSpec lesion = spec.lesion;
    lesion.seed = derive_seed(case_seed, 0);
    const BinaryMask truth = generate_lesion(lesion);

    ManifestCase mc;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "case_%03d", c);
    mc.case_id = buf;
    const std::filesystem::path case_dir = out_dir / mc.case_id;
    std::filesystem::create_directories(case_dir, ec);
    if (ec) throw io_error("generate_cohort: cannot create " + case_dir.string());

    for (std::size_t i = 0; i < spec.raters.size(); ++i) {
      const auto& rater = spec.raters[i];
      const BinaryMask drawn =
          perturb_rater(truth, rater.spec, derive_seed(case_seed, i + 1));
      const std::string rel = mc.case_id + "/" + rater.id + "." + spec.format;
      save_mask(out_dir / rel, drawn);
      mc.mask_paths[rater.id] = rel;
    }
    manifest.cases.push_back(std::move(mc));
  }

  manifest.validate();
  save_manifest_json(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace segeval
