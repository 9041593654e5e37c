#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "segeval/voxel_grid.hpp"

namespace segeval {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
};

// Why a metric value is missing or was forced by policy rather than computed.
enum class EmptyReason { none, both_empty, one_empty };

struct MetricValue {
  std::optional<double> value;
  EmptyReason reason = EmptyReason::none;

  bool defined() const { return value.has_value(); }
};

// One evaluated rater pair. Bounded metrics live in [0,1]; avd is in ml and
// hd95 in mm. hd95 is undefined whenever either mask is empty.
struct MetricRecord {
  MetricValue vs;
  MetricValue avd_ml;
  MetricValue dice;
  MetricValue precision;
  MetricValue recall;
  MetricValue hd95_mm;
  MetricValue sdt;

  ConfusionCounts counts;
  double pred_volume_ml = 0.0;
  double ref_volume_ml = 0.0;
};

// Canonical metric order for tables and reports.
inline constexpr std::array<std::string_view, 7> kMetricKeys = {
    "vs", "avd_ml", "dice", "precision", "recall", "hd95_mm", "sdt"};

const MetricValue& metric_by_key(const MetricRecord& record, std::string_view key);
MetricValue& metric_by_key(MetricRecord& record, std::string_view key);

// How zero denominators of bounded metrics are resolved.
struct EmptyPolicy {
  double both_empty_value = 1.0;
  double one_empty_value = 0.0;
};

struct OverlapMetrics {
  MetricValue dice;
  MetricValue precision;
  MetricValue recall;
};

struct VolumeMetrics {
  MetricValue vs;
  MetricValue avd_ml;
};

// Surface voxels of a mask: foreground with at least one face-adjacent
// background neighbor, where outside the array counts as background.
struct SurfaceSet {
  std::vector<std::array<int, 3>> voxels;  // (z,y,x) indices
  std::array<int, 3> dims{};
  std::array<double, 3> spacing_mm{};

  bool empty() const { return voxels.empty(); }
  std::size_t size() const { return voxels.size(); }
};

struct LossConfig {
  double alpha = 0.5;
  double gamma = 2.0;
  double dice_weight = 1.0;
  double focal_weight = 1.0;
};

struct LossBreakdown {
  double dice_term = 0.0;   // 1 - softDice, unweighted
  double focal_term = 0.0;  // mean focal entropy, unweighted
  double total = 0.0;
};

inline constexpr double kVsEpsilonMl = 1e-9;
inline constexpr double kSoftDiceSmooth = 1e-5;
inline constexpr double kDefaultSurfaceTolMm = 5.0;

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& ref);

// Dice, precision, recall from counts. Zero-denominator cases are resolved by
// the policy and flagged; a denominator that is zero for every overlap metric
// means both masks were empty.
OverlapMetrics overlap_metrics(const ConfusionCounts& c, const EmptyPolicy& policy = {});

// vs = 1 - ||Vp|-|Vr|| / (|Vp|+|Vr|+eps), avd = ||Vp|-|Vr|| in ml. Pure
// formula; the one-empty forcing of vs to the policy value happens in
// evaluate_pair, not here.
VolumeMetrics volume_metrics(const BinaryMask& pred, const BinaryMask& ref);

SurfaceSet surface_extract(const BinaryMask& mask);

// For each voxel in `from`, the distance in mm from its center to the nearest
// voxel center in `to`. Both sets must be nonempty and share dims/spacing.
std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to);

// max of the two directed 95th percentiles (linear interpolation); undefined
// when either mask is empty.
MetricValue hd95(const BinaryMask& pred, const BinaryMask& ref);

MetricValue surface_dice_at_tolerance(const BinaryMask& pred, const BinaryMask& ref,
                                      double tol_mm);

// All seven metrics with the empty-mask policy applied. Surface distance
// transforms are computed once and shared between hd95 and sdt.
MetricRecord evaluate_pair(const BinaryMask& pred, const BinaryMask& ref,
                           double tol_mm = kDefaultSurfaceTolMm,
                           const EmptyPolicy& policy = {});

// Flat JSON object: {"vs": value|null, ..., "flags": {"hd95_mm": "both-empty", ...}}
// plus "pred_volume_ml", "ref_volume_ml" and the raw "counts" {tp,fp,fn,tn}.
// Flags appear only for metrics the policy touched.
std::string metric_record_json(const MetricRecord& record);

// Forward evaluation of the training objective on a probability map.
LossBreakdown dice_focal_loss(const VoxelGrid& prob, const BinaryMask& ref,
                              const LossConfig& cfg = {});

}  // namespace segeval
