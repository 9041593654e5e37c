#include "segeval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "segeval/distance_transform.hpp"
#include "segeval/percentile.hpp"

namespace segeval {

namespace {

MetricValue defined(double v, EmptyReason r = EmptyReason::none) { return {v, r}; }
MetricValue undefined(EmptyReason r) { return {std::nullopt, r}; }

// Distances from each voxel of `from` to the nearest site of the EDT that was
// computed over `to`'s sites, squared, in mm^2.
std::vector<double> sample_squared(const SurfaceSet& from, const std::vector<double>& to_sq) {
  std::vector<double> out;
  out.reserve(from.voxels.size());
  for (const auto& v : from.voxels) {
    const std::size_t idx =
        (static_cast<std::size_t>(v[0]) * from.dims[1] + v[1]) * from.dims[2] + v[2];
    out.push_back(to_sq[idx]);
  }
  return out;
}

std::vector<std::uint8_t> site_array(const SurfaceSet& s) {
  std::vector<std::uint8_t> sites(
      static_cast<std::size_t>(s.dims[0]) * s.dims[1] * s.dims[2], 0);
  for (const auto& v : s.voxels) {
    sites[(static_cast<std::size_t>(v[0]) * s.dims[1] + v[1]) * s.dims[2] + v[2]] = 1;
  }
  return sites;
}

double p95_of_squared(std::vector<double> sq) {
  for (double& v : sq) v = std::sqrt(v);
  return percentile(std::move(sq), 95.0);
}

}  // namespace

MetricValue& metric_by_key(MetricRecord& record, std::string_view key) {
  if (key == "vs") return record.vs;
  if (key == "avd_ml") return record.avd_ml;
  if (key == "dice") return record.dice;
  if (key == "precision") return record.precision;
  if (key == "recall") return record.recall;
  if (key == "hd95_mm") return record.hd95_mm;
  if (key == "sdt") return record.sdt;
  throw std::invalid_argument("unknown metric key: " + std::string(key));
}

const MetricValue& metric_by_key(const MetricRecord& record, std::string_view key) {
  return metric_by_key(const_cast<MetricRecord&>(record), key);
}

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& ref) {
  require_same_grid(pred.grid(), ref.grid(), "confusion_counts");
  ConfusionCounts c;
  const std::size_t n = pred.grid().size();
  for (std::size_t i = 0; i < n; ++i) {
    const bool p = pred.is_foreground(i);
    const bool r = ref.is_foreground(i);
    if (p && r) ++c.tp;
    else if (p) ++c.fp;
    else if (r) ++c.fn;
    else ++c.tn;
  }
  return c;
}

OverlapMetrics overlap_metrics(const ConfusionCounts& c, const EmptyPolicy& policy) {
  const bool pred_empty = c.tp + c.fp == 0;
  const bool ref_empty = c.tp + c.fn == 0;

  OverlapMetrics m;
  if (pred_empty && ref_empty) {
    m.dice = defined(policy.both_empty_value, EmptyReason::both_empty);
    m.precision = defined(policy.both_empty_value, EmptyReason::both_empty);
    m.recall = defined(policy.both_empty_value, EmptyReason::both_empty);
    return m;
  }
  m.dice = defined(2.0 * c.tp / static_cast<double>(2 * c.tp + c.fn + c.fp));
  m.precision = pred_empty ? defined(policy.one_empty_value, EmptyReason::one_empty)
                           : defined(c.tp / static_cast<double>(c.tp + c.fp));
  m.recall = ref_empty ? defined(policy.one_empty_value, EmptyReason::one_empty)
                       : defined(c.tp / static_cast<double>(c.tp + c.fn));
  return m;
}

VolumeMetrics volume_metrics(const BinaryMask& pred, const BinaryMask& ref) {
  require_same_grid(pred.grid(), ref.grid(), "volume_metrics");
  const double vp = volume_ml(pred);
  const double vr = volume_ml(ref);
  const EmptyReason r = (pred.empty() && ref.empty()) ? EmptyReason::both_empty
                                                      : EmptyReason::none;
  VolumeMetrics m;
  m.avd_ml = defined(std::abs(vp - vr), r);
  m.vs = defined(1.0 - std::abs(vp - vr) / (vp + vr + kVsEpsilonMl), r);
  return m;
}

SurfaceSet surface_extract(const BinaryMask& mask) {
  const VoxelGrid& g = mask.grid();
  SurfaceSet s;
  s.dims = g.dims();
  s.spacing_mm = g.spacing_mm();

  const int dz = g.depth(), dy = g.height(), dx = g.width();
  auto bg_at = [&](int z, int y, int x) {
    if (z < 0 || z >= dz || y < 0 || y >= dy || x < 0 || x >= dx) return true;
    return !mask.is_foreground(g.index(z, y, x));
  };
  for (int z = 0; z < dz; ++z) {
    for (int y = 0; y < dy; ++y) {
      for (int x = 0; x < dx; ++x) {
        if (!mask.is_foreground(g.index(z, y, x))) continue;
        if (bg_at(z - 1, y, x) || bg_at(z + 1, y, x) || bg_at(z, y - 1, x) ||
            bg_at(z, y + 1, x) || bg_at(z, y, x - 1) || bg_at(z, y, x + 1)) {
          s.voxels.push_back({z, y, x});
        }
      }
    }
  }
  return s;
}

std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to) {
  if (from.empty() || to.empty()) {
    throw std::invalid_argument("directed_distances: empty surface set");
  }
  if (from.dims != to.dims || from.spacing_mm != to.spacing_mm) {
    throw std::invalid_argument("directed_distances: surface sets on different grids");
  }
  const std::vector<double> to_sq = squared_edt(site_array(to), to.dims, to.spacing_mm);
  std::vector<double> d = sample_squared(from, to_sq);
  for (double& v : d) v = std::sqrt(v);
  return d;
}

MetricValue hd95(const BinaryMask& pred, const BinaryMask& ref) {
  require_same_grid(pred.grid(), ref.grid(), "hd95");
  const bool pe = pred.empty(), re = ref.empty();
  if (pe && re) return undefined(EmptyReason::both_empty);
  if (pe || re) return undefined(EmptyReason::one_empty);

  const SurfaceSet sp = surface_extract(pred);
  const SurfaceSet sr = surface_extract(ref);
  const std::vector<double> sq_p = squared_edt(site_array(sp), sp.dims, sp.spacing_mm);
  const std::vector<double> sq_r = squared_edt(site_array(sr), sr.dims, sr.spacing_mm);
  const double fwd = p95_of_squared(sample_squared(sp, sq_r));
  const double bwd = p95_of_squared(sample_squared(sr, sq_p));
  return defined(std::max(fwd, bwd));
}

MetricValue surface_dice_at_tolerance(const BinaryMask& pred, const BinaryMask& ref,
                                      double tol_mm) {
  require_same_grid(pred.grid(), ref.grid(), "surface_dice_at_tolerance");
  if (tol_mm < 0.0) throw std::invalid_argument("surface_dice_at_tolerance: negative tolerance");
  const bool pe = pred.empty(), re = ref.empty();
  EmptyPolicy policy;
  if (pe && re) return defined(policy.both_empty_value, EmptyReason::both_empty);
  if (pe || re) return defined(policy.one_empty_value, EmptyReason::one_empty);

  const SurfaceSet sp = surface_extract(pred);
  const SurfaceSet sr = surface_extract(ref);
  const std::vector<double> sq_p = squared_edt(site_array(sp), sp.dims, sp.spacing_mm);
  const std::vector<double> sq_r = squared_edt(site_array(sr), sr.dims, sr.spacing_mm);
  const double t2 = tol_mm * tol_mm;
  std::size_t hits = 0;
  for (double v : sample_squared(sp, sq_r)) hits += (v <= t2);
  for (double v : sample_squared(sr, sq_p)) hits += (v <= t2);
  return defined(static_cast<double>(hits) / static_cast<double>(sp.size() + sr.size()));
}

MetricRecord evaluate_pair(const BinaryMask& pred, const BinaryMask& ref, double tol_mm,
                           const EmptyPolicy& policy) {
  require_same_grid(pred.grid(), ref.grid(), "evaluate_pair");
  if (tol_mm < 0.0) throw std::invalid_argument("evaluate_pair: negative tolerance");

  MetricRecord rec;
  rec.counts = confusion_counts(pred, ref);
  rec.pred_volume_ml = volume_ml(pred);
  rec.ref_volume_ml = volume_ml(ref);

  const bool pe = pred.empty(), re = ref.empty();
  const OverlapMetrics ov = overlap_metrics(rec.counts, policy);
  rec.dice = ov.dice;
  rec.precision = ov.precision;
  rec.recall = ov.recall;

  if (pe && re) {
    rec.vs = defined(policy.both_empty_value, EmptyReason::both_empty);
    rec.avd_ml = defined(0.0, EmptyReason::both_empty);
    rec.sdt = defined(policy.both_empty_value, EmptyReason::both_empty);
    rec.hd95_mm = undefined(EmptyReason::both_empty);
    return rec;
  }
  if (pe || re) {
    rec.vs = defined(policy.one_empty_value, EmptyReason::one_empty);
    rec.avd_ml = defined(std::abs(rec.pred_volume_ml - rec.ref_volume_ml));
    rec.sdt = defined(policy.one_empty_value, EmptyReason::one_empty);
    rec.hd95_mm = undefined(EmptyReason::one_empty);
    return rec;
  }

  const VolumeMetrics vm = volume_metrics(pred, ref);
  rec.vs = vm.vs;
  rec.avd_ml = vm.avd_ml;

  const SurfaceSet sp = surface_extract(pred);
  const SurfaceSet sr = surface_extract(ref);
  const std::vector<double> sq_p = squared_edt(site_array(sp), sp.dims, sp.spacing_mm);
  const std::vector<double> sq_r = squared_edt(site_array(sr), sr.dims, sr.spacing_mm);
  const std::vector<double> fwd_sq = sample_squared(sp, sq_r);
  const std::vector<double> bwd_sq = sample_squared(sr, sq_p);

  rec.hd95_mm = defined(std::max(p95_of_squared(fwd_sq), p95_of_squared(bwd_sq)));

  const double t2 = tol_mm * tol_mm;
  std::size_t hits = 0;
  for (double v : fwd_sq) hits += (v <= t2);
  for (double v : bwd_sq) hits += (v <= t2);
  rec.sdt = defined(static_cast<double>(hits) / static_cast<double>(sp.size() + sr.size()));
  return rec;
}

std::string metric_record_json(const MetricRecord& record) {
  nlohmann::json j;
  nlohmann::json flags = nlohmann::json::object();
  for (const std::string_view key : kMetricKeys) {
    const MetricValue& m = metric_by_key(record, key);
    const std::string k(key);
    if (m.defined()) {
      j[k] = *m.value;
    } else {
      j[k] = nullptr;
    }
    if (m.reason == EmptyReason::both_empty) flags[k] = "both-empty";
    if (m.reason == EmptyReason::one_empty) flags[k] = "one-empty";
  }
  j["flags"] = flags;
  j["pred_volume_ml"] = record.pred_volume_ml;
  j["ref_volume_ml"] = record.ref_volume_ml;
  j["counts"] = {{"tp", record.counts.tp},
                 {"fp", record.counts.fp},
                 {"fn", record.counts.fn},
                 {"tn", record.counts.tn}};
  return j.dump();
}

LossBreakdown dice_focal_loss(const VoxelGrid& prob, const BinaryMask& ref,
                              const LossConfig& cfg) {
  if (prob.dims() != ref.grid().dims()) {
    throw std::invalid_argument("dice_focal_loss: probability map and mask dims differ");
  }
  const std::size_t n = prob.size();
  double sum_p = 0.0, sum_r = 0.0, sum_pr = 0.0, sum_focal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = prob.data()[i];
    if (p < 0.0 || p > 1.0) {
      throw std::invalid_argument("dice_focal_loss: probability out of [0,1]");
    }
    const bool fg = ref.is_foreground(i);
    sum_p += p;
    if (fg) {
      sum_r += 1.0;
      sum_pr += p;
    }
    const double pt = fg ? p : 1.0 - p;
    const double at = fg ? cfg.alpha : 1.0 - cfg.alpha;
    sum_focal += -at * std::pow(1.0 - pt, cfg.gamma) * std::log(std::max(pt, 1e-12));
  }
  const double soft_dice = (2.0 * sum_pr + kSoftDiceSmooth) / (sum_p + sum_r + kSoftDiceSmooth);

  LossBreakdown out;
  out.dice_term = 1.0 - soft_dice;
  out.focal_term = sum_focal / static_cast<double>(n);
  out.total = cfg.dice_weight * out.dice_term + cfg.focal_weight * out.focal_term;
  return out;
}

}  // namespace segeval
