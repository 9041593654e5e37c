#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace segeval {

struct BootstrapSummary {
  double median = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double half_width = 0.0;  // max(median - ci_lo, ci_hi - median)
  int n_resamples = 0;
  std::uint64_t seed = 0;
};

// Percentile bootstrap of the median: n_resamples draws with replacement,
// CI = (2.5th, 97.5th) percentiles of the resampled medians. Deterministic
// for a fixed seed. Throws on empty input.
BootstrapSummary bootstrap_median_ci(std::span<const double> values, int n_resamples,
                                     std::uint64_t seed);

enum class WilcoxonMethod { exact, normal, all_zero };

struct WilcoxonResult {
  std::optional<double> p;  // unset when every difference is zero
  int n_used = 0;           // nonzero differences entering the test
  double w_plus = 0.0;
  WilcoxonMethod method = WilcoxonMethod::all_zero;
};

// One-sided signed-rank test of H1: median(diff) > 0. Zero differences are
// dropped; |diff| ranked with average ties. Routing: when every used
// difference has the same sign the tail is a single sign pattern and p is
// 2^-n (positive) or 1 (negative) exactly, at any n; otherwise exact
// enumeration for n_used <= 25 without ties, normal approximation with tie,
// continuity and fourth-cumulant corrections beyond that.
WilcoxonResult wilcoxon_one_sided(std::span<const double> diffs);

// P(W+ >= w_plus) under H0 for tie-free ranks 1..n, by exact enumeration.
// n must be <= 62 so subset counts fit in 64 bits.
double signed_rank_p_exact(double w_plus, int n);

// Upper-tail normal approximation of P(W+ >= w_plus) given the ranks actually
// assigned (average ties allowed), with continuity correction and an Edgeworth
// fourth-cumulant term. The plain normal with continuity correction misses the
// exact tail by a few 1e-3 at n around 26; the kurtosis term brings the whole
// CDF within about 1e-5 of exact.
double signed_rank_p_normal(double w_plus, std::span<const double> ranks);

enum class Direction { higher_better, lower_better };
enum class Range { bounded_unit, milliliters, millimeters };

struct MetricMeta {
  std::string name;
  Direction direction = Direction::higher_better;
  Range range = Range::bounded_unit;
};

// Meta for the seven canonical metric keys (vs, avd_ml, dice, precision,
// recall, hd95_mm, sdt). Throws on unknown keys.
MetricMeta metric_meta(std::string_view key);

struct NonInferiorityMargin {
  double bounded_unit = 0.2;
  double avd_ml = 3.0;
  double hd95_mm = 3.0;
};

double margin_for(const MetricMeta& meta, const NonInferiorityMargin& margins);

struct NonInferiorityOutcome {
  std::string metric;
  int n_pairs = 0;    // pairs entering the signed-rank test
  int n_dropped = 0;  // undefined pairs plus zero differences
  std::optional<double> p_raw;
  std::optional<double> p_adjusted;
  bool significant = false;
  double margin_used = 0.0;
};

// Paired one-sided non-inferiority test. Per case i the shifted difference is
// model_i - inter_i + margin for higher-better metrics and
// inter_i - model_i + margin for lower-better ones; H1 is median > 0. Pairs
// with an undefined side are dropped into n_dropped. Throws when fewer than
// two defined pairs remain. significant refers to p_raw; apply_holm rewrites
// it against the adjusted value.
NonInferiorityOutcome noninferiority_test(std::span<const std::optional<double>> model,
                                          std::span<const std::optional<double>> inter,
                                          const MetricMeta& meta,
                                          const NonInferiorityMargin& margins = {},
                                          double alpha = 0.05);

// Holm-Bonferroni step-down, returned in input order.
std::vector<double> holm_adjust(const std::vector<double>& p_values);

// Adjusts the defined p_raw values of a family in place and resets
// `significant` against alpha. Degenerate outcomes (no p) stay non-significant
// and do not count toward the family size.
void apply_holm(std::vector<NonInferiorityOutcome>& outcomes, double alpha = 0.05);

std::string noninferiority_outcome_json(const NonInferiorityOutcome& outcome);

// Pearson correlation of average-tie ranks. Requires equal lengths >= 3 and
// nonzero rank variance on both sides.
double spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace segeval
