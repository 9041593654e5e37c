#include "segeval/mirror.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace segeval {

namespace {

Vec3 vec_sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 vec_add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

}  // namespace

Mat3 rotation_matrix(const Vec3& e) {
  const double cz = std::cos(e[0]), sz = std::sin(e[0]);
  const double cy = std::cos(e[1]), sy = std::sin(e[1]);
  const double cx = std::cos(e[2]), sx = std::sin(e[2]);
  // Rz mixes (y,x), Ry mixes (z,x), Rx mixes (z,y); components ordered (z,y,x)
  const Mat3 rz = {{{1, 0, 0}, {0, cz, -sz}, {0, sz, cz}}};
  const Mat3 ry = {{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rx = {{{cx, -sx, 0}, {sx, cx, 0}, {0, 0, 1}}};
  return mat_mul(rx, mat_mul(ry, rz));
}

Vec3 euler_from_matrix(const Mat3& m) {
  const double sy = -m[2][0];
  if (std::abs(sy) > 1.0 - 1e-12) {
    // gimbal lock: rx and rz are coupled, fold everything into rx
    const double rx = std::atan2(-m[0][1], m[1][1]);
    return {0.0, std::asin(std::clamp(sy, -1.0, 1.0)), rx};
  }
  const double ry = std::asin(sy);
  const double rx = std::atan2(m[1][0], m[0][0]);
  const double rz = std::atan2(m[2][1], m[2][2]);
  return {rz, ry, rx};
}

Vec3 apply_transform(const RigidTransform& t, const Vec3& point, const Vec3& center) {
  const Mat3 r = rotation_matrix(t.rotation_rad);
  return vec_add(vec_add(mat_vec(r, vec_sub(point, center)), center), t.translation_mm);
}

RigidTransform inverse(const RigidTransform& t) {
  const Mat3 rt = mat_transpose(rotation_matrix(t.rotation_rad));
  const Vec3 tau = mat_vec(rt, t.translation_mm);
  return {euler_from_matrix(rt), {-tau[0], -tau[1], -tau[2]}};
}

RigidTransform compose(const RigidTransform& outer, const RigidTransform& inner) {
  const Mat3 ro = rotation_matrix(outer.rotation_rad);
  const Mat3 ri = rotation_matrix(inner.rotation_rad);
  const Vec3 tau = vec_add(mat_vec(ro, inner.translation_mm), outer.translation_mm);
  return {euler_from_matrix(mat_mul(ro, ri)), tau};
}

std::string transform_json(const RigidTransform& t) {
  nlohmann::json j;
  j["rotation_rad"] = t.rotation_rad;
  j["translation_mm"] = t.translation_mm;
  return j.dump();
}

RigidTransform transform_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("transform_from_json: invalid JSON: ") + e.what());
  }
  RigidTransform t;
  try {
    for (int a = 0; a < 3; ++a) t.rotation_rad[a] = j.at("rotation_rad").at(a).get<double>();
    for (int a = 0; a < 3; ++a) t.translation_mm[a] = j.at("translation_mm").at(a).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("transform_from_json: bad fields: ") + e.what());
  }
  return t;
}

VoxelGrid flip_sagittal(const VoxelGrid& grid) {
  VoxelGrid out(grid.dims(), grid.spacing_mm(), grid.origin_mm());
  out.width_world_sign = grid.width_world_sign;
  const int dz = grid.depth(), dy = grid.height(), dx = grid.width();
  for (int z = 0; z < dz; ++z) {
    for (int y = 0; y < dy; ++y) {
      for (int x = 0; x < dx; ++x) {
        out.data()[out.index(z, y, x)] = grid.data()[grid.index(z, y, dx - 1 - x)];
      }
    }
  }
  return out;
}

namespace {

// Trilinear sample at continuous index, fill outside [0, dim-1].
double sample_at(const VoxelGrid& g, const Vec3& idx, double fill) {
  for (int a = 0; a < 3; ++a) {
    if (idx[a] < 0.0 || idx[a] > static_cast<double>(g.dims()[a] - 1)) return fill;
  }
  const int z0 = static_cast<int>(idx[0]);
  const int y0 = static_cast<int>(idx[1]);
  const int x0 = static_cast<int>(idx[2]);
  const int z1 = std::min(z0 + 1, g.depth() - 1);
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const double fz = idx[0] - z0, fy = idx[1] - y0, fx = idx[2] - x0;

  auto v = [&](int z, int y, int x) { return g.data()[g.index(z, y, x)]; };
  const double c00 = v(z0, y0, x0) * (1 - fx) + v(z0, y0, x1) * fx;
  const double c01 = v(z0, y1, x0) * (1 - fx) + v(z0, y1, x1) * fx;
  const double c10 = v(z1, y0, x0) * (1 - fx) + v(z1, y0, x1) * fx;
  const double c11 = v(z1, y1, x0) * (1 - fx) + v(z1, y1, x1) * fx;
  return (c00 * (1 - fy) + c01 * fy) * (1 - fz) + (c10 * (1 - fy) + c11 * fy) * fz;
}

double sample_nearest(const VoxelGrid& g, const Vec3& idx, double fill) {
  for (int a = 0; a < 3; ++a) {
    if (idx[a] < -0.5 || idx[a] > static_cast<double>(g.dims()[a] - 1) + 0.5) return fill;
  }
  const int z = std::clamp(static_cast<int>(std::llround(idx[0])), 0, g.depth() - 1);
  const int y = std::clamp(static_cast<int>(std::llround(idx[1])), 0, g.height() - 1);
  const int x = std::clamp(static_cast<int>(std::llround(idx[2])), 0, g.width() - 1);
  return g.data()[g.index(z, y, x)];
}

double min_intensity(const VoxelGrid& g) {
  return *std::min_element(g.data().begin(), g.data().end());
}

// Mean squared difference between fixed and moving pulled through the inverse
// transform, over the fixed voxels whose pull-back lands inside the moving
// grid. Filling the non-overlap instead of masking it lets the border
// mismatch outweigh the content and drags the minimum off the true pose.
// Candidates overlapping less than a quarter of the fixed grid are rejected:
// a vanishing overlap can score a deceptively low error.
double mse_under(const VoxelGrid& moving, const VoxelGrid& fixed, const RigidTransform& t,
                 const Vec3& center) {
  const RigidTransform ti = inverse(t);
  const Mat3 r = rotation_matrix(ti.rotation_rad);

  double acc = 0.0;
  std::size_t n = 0;
  const auto& msp = moving.spacing_mm();
  const auto& mor = moving.origin_mm();
  for (int z = 0; z < fixed.depth(); ++z) {
    const double pz = fixed.physical(0, z);
    for (int y = 0; y < fixed.height(); ++y) {
      const double py = fixed.physical(1, y);
      for (int x = 0; x < fixed.width(); ++x) {
        const double px = fixed.physical(2, x);
        const Vec3 d = {pz - center[0], py - center[1], px - center[2]};
        const Vec3 q = {r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2] + center[0] +
                            ti.translation_mm[0],
                        r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2] + center[1] +
                            ti.translation_mm[1],
                        r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2] + center[2] +
                            ti.translation_mm[2]};
        const Vec3 idx = {(q[0] - mor[0]) / msp[0], (q[1] - mor[1]) / msp[1],
                          (q[2] - mor[2]) / msp[2]};
        if (idx[0] < 0.0 || idx[0] > static_cast<double>(moving.depth() - 1) ||
            idx[1] < 0.0 || idx[1] > static_cast<double>(moving.height() - 1) ||
            idx[2] < 0.0 || idx[2] > static_cast<double>(moving.width() - 1)) {
          continue;
        }
        const double m = sample_at(moving, idx, 0.0);
        const double dv = m - fixed.data()[fixed.index(z, y, x)];
        acc += dv * dv;
        ++n;
      }
    }
  }
  if (4 * n < fixed.size()) return std::numeric_limits<double>::infinity();
  return acc / static_cast<double>(n);
}

VoxelGrid block_downsample(const VoxelGrid& g, int factor) {
  if (factor == 1) return g;
  const auto d = g.dims();
  const std::array<int, 3> nd = {(d[0] + factor - 1) / factor, (d[1] + factor - 1) / factor,
                                 (d[2] + factor - 1) / factor};
  const auto sp = g.spacing_mm();
  const std::array<double, 3> nsp = {sp[0] * factor, sp[1] * factor, sp[2] * factor};
  const auto org = g.origin_mm();
  const std::array<double, 3> norg = {org[0] + 0.5 * (factor - 1) * sp[0],
                                      org[1] + 0.5 * (factor - 1) * sp[1],
                                      org[2] + 0.5 * (factor - 1) * sp[2]};
  VoxelGrid out(nd, nsp, norg);
  out.width_world_sign = g.width_world_sign;
  for (int z = 0; z < nd[0]; ++z) {
    for (int y = 0; y < nd[1]; ++y) {
      for (int x = 0; x < nd[2]; ++x) {
        double sum = 0.0;
        int cnt = 0;
        for (int zz = z * factor; zz < std::min((z + 1) * factor, d[0]); ++zz) {
          for (int yy = y * factor; yy < std::min((y + 1) * factor, d[1]); ++yy) {
            for (int xx = x * factor; xx < std::min((x + 1) * factor, d[2]); ++xx) {
              sum += g.data()[g.index(zz, yy, xx)];
              ++cnt;
            }
          }
        }
        out.data()[out.index(z, y, x)] = sum / cnt;
      }
    }
  }
  return out;
}

// Z-score with population std; returns false when the variance is zero.
bool standardize(VoxelGrid& g) {
  double mean = 0.0;
  for (double v : g.data()) mean += v;
  mean /= static_cast<double>(g.size());
  double var = 0.0;
  for (double v : g.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(g.size());
  if (var <= 0.0) return false;
  const double inv = 1.0 / std::sqrt(var);
  for (double& v : g.data()) v = (v - mean) * inv;
  return true;
}

double golden_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
  constexpr double invphi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

constexpr double kRotBracketRad = 0.6;
constexpr double kTransBracketMm = 24.0;

}  // namespace

RegistrationResult rigid_register_trace(const VoxelGrid& moving, const VoxelGrid& fixed,
                                        const RegistrationOptions& opts) {
  if (opts.pyramid.empty() || opts.pyramid.back() != 1) {
    throw std::invalid_argument("rigid_register: pyramid must end at factor 1");
  }
  for (std::size_t i = 0; i < opts.pyramid.size(); ++i) {
    if (opts.pyramid[i] <= 0 || (i > 0 && opts.pyramid[i] >= opts.pyramid[i - 1])) {
      throw std::invalid_argument("rigid_register: pyramid factors must descend to 1");
    }
  }

  VoxelGrid mov = moving;
  VoxelGrid fix = fixed;
  if (!standardize(mov) || !standardize(fix)) {
    std::cerr << "rigid_register: zero-variance image, returning identity transform\n";
    return {RigidTransform{}, {}};
  }
  const Vec3 center = GridGeometry::of(fixed).physical_center();

  RegistrationResult result;
  std::array<double, 6> p{};  // rz, ry, rx, tz, ty, tx
  for (std::size_t li = 0; li < opts.pyramid.size(); ++li) {
    const int factor = opts.pyramid[li];
    const VoxelGrid mov_l = block_downsample(mov, factor);
    const VoxelGrid fix_l = block_downsample(fix, factor);

    auto cost = [&](const std::array<double, 6>& q) {
      return mse_under(mov_l, fix_l,
                       {{q[0], q[1], q[2]}, {q[3], q[4], q[5]}}, center);
    };

    const double scale = std::exp2(-static_cast<double>(li));
    std::array<double, 6> h = {kRotBracketRad * scale,  kRotBracketRad * scale,
                               kRotBracketRad * scale,  kTransBracketMm * scale,
                               kTransBracketMm * scale, kTransBracketMm * scale};

    RegistrationLevel level;
    level.factor = factor;
    level.mse_before = cost(p);
    double cur = level.mse_before;

    // Coordinate descent from the identity falls into wrong-correspondence
    // minima once all three rotations are offset at once. The coarsest level
    // is cheap, so seed it from a rotation grid, fitting translations
    // greedily per candidate.
    if (li == 0) {
      constexpr double kRotStep = 0.1;  // rad
      constexpr int kRotSpan = 3;
      std::array<double, 6> best = p;
      for (int iz = -kRotSpan; iz <= kRotSpan; ++iz) {
        for (int iy = -kRotSpan; iy <= kRotSpan; ++iy) {
          for (int ix = -kRotSpan; ix <= kRotSpan; ++ix) {
            std::array<double, 6> q = {iz * kRotStep, iy * kRotStep, ix * kRotStep,
                                       p[3],          p[4],          p[5]};
            double qc = cost(q);
            for (int pass = 0; pass < 2; ++pass) {
              for (int a = 3; a < 6; ++a) {
                double bv = q[a];
                for (int s = -6; s <= 6; ++s) {
                  std::array<double, 6> w = q;
                  w[a] = s * 4.0;
                  const double wc = cost(w);
                  if (wc < qc) {
                    qc = wc;
                    bv = w[a];
                  }
                }
                q[a] = bv;
              }
            }
            if (qc < cur) {
              cur = qc;
              best = q;
            }
          }
        }
      }
      p = best;
    }
    for (int sweep = 0; sweep < opts.max_iterations; ++sweep) {
      bool moved = false;
      for (int i = 0; i < 6; ++i) {
        const double tol = (i < 3) ? opts.tol_rad : opts.tol_mm;
        auto f1 = [&](double v) {
          std::array<double, 6> q = p;
          q[i] = v;
          return cost(q);
        };
        // The cost along one parameter is not unimodal on blocky images:
        // scan the bracket first, then refine around the best sample.
        constexpr int kScan = 12;
        double best_v = p[i];
        double best_c = cur;
        for (int s = 0; s <= kScan; ++s) {
          const double v = p[i] - h[i] + (2.0 * h[i] * s) / kScan;
          const double c = f1(v);
          if (c < best_c) {
            best_c = c;
            best_v = v;
          }
        }
        const double step = 2.0 * h[i] / kScan;
        const double cand = golden_min(f1, best_v - step, best_v + step, 0.5 * tol);
        std::array<double, 6> q = p;
        q[i] = cand;
        const double cc = cost(q);
        if (cc < cur && std::abs(cand - p[i]) > tol) {
          cur = cc;
          p = q;
          moved = true;
        }
        h[i] = std::max(0.5 * h[i], 8.0 * tol);
      }
      ++level.sweeps;
      if (!moved) break;
    }
    level.mse_after = cur;
    result.levels.push_back(level);
  }

  result.transform = {{p[0], p[1], p[2]}, {p[3], p[4], p[5]}};
  return result;
}

RigidTransform rigid_register(const VoxelGrid& moving, const VoxelGrid& fixed,
                              const RegistrationOptions& opts) {
  return rigid_register_trace(moving, fixed, opts).transform;
}

VoxelGrid resample_transform(const VoxelGrid& moving, const RigidTransform& t,
                             const GridGeometry& target, Interp interp,
                             std::optional<double> fill) {
  const double fv = fill.value_or(min_intensity(moving));
  const Vec3 center = target.physical_center();
  const RigidTransform ti = inverse(t);
  const Mat3 r = rotation_matrix(ti.rotation_rad);

  VoxelGrid out(target.dims, target.spacing_mm, target.origin_mm);
  out.width_world_sign = moving.width_world_sign;
  const auto& msp = moving.spacing_mm();
  const auto& mor = moving.origin_mm();
  for (int z = 0; z < target.dims[0]; ++z) {
    for (int y = 0; y < target.dims[1]; ++y) {
      for (int x = 0; x < target.dims[2]; ++x) {
        const Vec3 d = {target.origin_mm[0] + z * target.spacing_mm[0] - center[0],
                        target.origin_mm[1] + y * target.spacing_mm[1] - center[1],
                        target.origin_mm[2] + x * target.spacing_mm[2] - center[2]};
        const Vec3 q = {r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2] + center[0] +
                            ti.translation_mm[0],
                        r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2] + center[1] +
                            ti.translation_mm[1],
                        r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2] + center[2] +
                            ti.translation_mm[2]};
        const Vec3 idx = {(q[0] - mor[0]) / msp[0], (q[1] - mor[1]) / msp[1],
                          (q[2] - mor[2]) / msp[2]};
        out.data()[out.index(z, y, x)] = (interp == Interp::trilinear)
                                             ? sample_at(moving, idx, fv)
                                             : sample_nearest(moving, idx, fv);
      }
    }
  }
  return out;
}

VoxelGrid build_mirror_channel(const VoxelGrid& image, const RegistrationOptions& opts,
                               std::optional<Hemisphere> replace) {
  RegistrationResult unused;
  return build_mirror_channel(image, unused, opts, replace);
}

VoxelGrid build_mirror_channel(const VoxelGrid& image, RegistrationResult& registration,
                               const RegistrationOptions& opts,
                               std::optional<Hemisphere> replace) {
  const VoxelGrid flipped = flip_sagittal(image);
  registration = rigid_register_trace(flipped, image, opts);
  const RigidTransform& t = registration.transform;
  VoxelGrid mirrored = resample_transform(flipped, t, GridGeometry::of(image));
  if (!replace.has_value()) return mirrored;

  // splice: replaced hemisphere takes the mirrored values, the rest stays
  const double mid = 0.5 * (image.width() - 1);
  const bool left_is_low_index = image.width_world_sign >= 0;
  const bool replace_low = (*replace == Hemisphere::left) == left_is_low_index;

  VoxelGrid out = image;
  for (int z = 0; z < image.depth(); ++z) {
    for (int y = 0; y < image.height(); ++y) {
      for (int x = 0; x < image.width(); ++x) {
        const bool low = static_cast<double>(x) < mid;
        const bool high = static_cast<double>(x) > mid;
        if ((replace_low && low) || (!replace_low && high)) {
          out.data()[out.index(z, y, x)] = mirrored.data()[mirrored.index(z, y, x)];
        }
      }
    }
  }
  return out;
}

}  // namespace segeval
