#include "segeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "segeval/percentile.hpp"
#include "segeval/rng.hpp"

namespace segeval {

namespace {

// Average-tie ranks (1-based) of the given values.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double upper_tail_normal(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double sample_median_inplace(std::vector<double>& buf) {
  const std::size_t n = buf.size();
  const std::size_t hi = n / 2;
  std::nth_element(buf.begin(), buf.begin() + hi, buf.end());
  if (n % 2 == 1) return buf[hi];
  const double upper = buf[hi];
  const double lower = *std::max_element(buf.begin(), buf.begin() + hi);
  return 0.5 * (lower + upper);
}

}  // namespace

BootstrapSummary bootstrap_median_ci(std::span<const double> values, int n_resamples,
                                     std::uint64_t seed) {
  if (values.empty()) throw std::invalid_argument("bootstrap_median_ci: empty input");
  if (n_resamples <= 0) throw std::invalid_argument("bootstrap_median_ci: n_resamples must be positive");

  const std::size_t n = values.size();
  Rng rng(seed);
  std::vector<double> buf(n);
  std::vector<double> medians(n_resamples);
  for (int r = 0; r < n_resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = values[rng.below(n)];
    medians[r] = sample_median_inplace(buf);
  }
  std::sort(medians.begin(), medians.end());

  BootstrapSummary s;
  s.median = median(std::vector<double>(values.begin(), values.end()));
  s.ci_lo = percentile_sorted(medians, 2.5);
  s.ci_hi = percentile_sorted(medians, 97.5);
  s.half_width = std::max(s.median - s.ci_lo, s.ci_hi - s.median);
  s.n_resamples = n_resamples;
  s.seed = seed;
  return s;
}

double signed_rank_p_exact(double w_plus, int n) {
  if (n < 1 || n > 62) throw std::invalid_argument("signed_rank_p_exact: n out of [1,62]");
  const int max_sum = n * (n + 1) / 2;
  // ways[s] = number of subsets of {1..n} summing to s
  std::vector<std::uint64_t> ways(max_sum + 1, 0);
  ways[0] = 1;
  for (int r = 1; r <= n; ++r) {
    for (int s = max_sum; s >= r; --s) ways[s] += ways[s - r];
  }
  const int threshold = static_cast<int>(std::ceil(w_plus - 1e-9));
  long double tail = 0.0L;
  for (int s = std::max(threshold, 0); s <= max_sum; ++s) tail += ways[s];
  return static_cast<double>(tail / std::exp2l(static_cast<long double>(n)));
}

double signed_rank_p_normal(double w_plus, std::span<const double> ranks) {
  const std::size_t n = ranks.size();
  if (n == 0) throw std::invalid_argument("signed_rank_p_normal: no ranks");
  double sum_r = 0.0, sum_r2 = 0.0, sum_r4 = 0.0;
  for (double r : ranks) {
    sum_r += r;
    sum_r2 += r * r;
    sum_r4 += r * r * r * r;
  }
  const double mu = sum_r / 2.0;
  const double var = sum_r2 / 4.0;  // equals the tie-corrected n(n+1)(2n+1)/24 form
  if (var <= 0.0) throw std::invalid_argument("signed_rank_p_normal: zero variance");
  const double sigma = std::sqrt(var);
  const double kappa4 = -sum_r4 / 8.0;
  const double gamma2 = kappa4 / (var * var);

  const double x = (w_plus - 0.5 - mu) / sigma;
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::acos(-1.0));
  const double p = upper_tail_normal(x) + phi * (gamma2 / 24.0) * (x * x * x - 3.0 * x);
  return std::clamp(p, 0.0, 1.0);
}

WilcoxonResult wilcoxon_one_sided(std::span<const double> diffs) {
  if (diffs.empty()) throw std::invalid_argument("wilcoxon_one_sided: empty input");

  std::vector<double> abs_d;
  std::vector<bool> positive;
  for (double d : diffs) {
    if (d == 0.0) continue;
    abs_d.push_back(std::abs(d));
    positive.push_back(d > 0.0);
  }

  WilcoxonResult res;
  res.n_used = static_cast<int>(abs_d.size());
  if (abs_d.empty()) return res;  // all zero, p unset

  const std::vector<double> ranks = average_ranks(abs_d);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (positive[i]) w_plus += ranks[i];
  }
  res.w_plus = w_plus;

  const std::size_t n_pos =
      static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  if (n_pos == positive.size()) {
    // W+ takes its maximum on exactly one of the 2^n sign patterns, with or
    // without ties, so the tail probability is exact at any n.
    res.p = std::exp2(-static_cast<double>(res.n_used));
    res.method = WilcoxonMethod::exact;
    return res;
  }
  if (n_pos == 0) {
    res.p = 1.0;  // P(W+ >= 0)
    res.method = WilcoxonMethod::exact;
    return res;
  }

  std::vector<double> sorted_abs = abs_d;
  std::sort(sorted_abs.begin(), sorted_abs.end());
  const bool tied = std::adjacent_find(sorted_abs.begin(), sorted_abs.end()) != sorted_abs.end();
  if (!tied && res.n_used <= 25) {
    res.p = signed_rank_p_exact(w_plus, res.n_used);
    res.method = WilcoxonMethod::exact;
  } else {
    res.p = signed_rank_p_normal(w_plus, ranks);
    res.method = WilcoxonMethod::normal;
  }
  return res;
}

MetricMeta metric_meta(std::string_view key) {
  if (key == "vs" || key == "dice" || key == "precision" || key == "recall" || key == "sdt") {
    return {std::string(key), Direction::higher_better, Range::bounded_unit};
  }
  if (key == "avd_ml") return {"avd_ml", Direction::lower_better, Range::milliliters};
  if (key == "hd95_mm") return {"hd95_mm", Direction::lower_better, Range::millimeters};
  throw std::invalid_argument("metric_meta: unknown metric key: " + std::string(key));
}

double margin_for(const MetricMeta& meta, const NonInferiorityMargin& margins) {
  switch (meta.range) {
    case Range::bounded_unit: return margins.bounded_unit;
    case Range::milliliters: return margins.avd_ml;
    case Range::millimeters: return margins.hd95_mm;
  }
  return margins.bounded_unit;
}

NonInferiorityOutcome noninferiority_test(std::span<const std::optional<double>> model,
                                          std::span<const std::optional<double>> inter,
                                          const MetricMeta& meta,
                                          const NonInferiorityMargin& margins, double alpha) {
  if (model.size() != inter.size()) {
    throw std::invalid_argument("noninferiority_test: paired lists differ in length");
  }
  const double margin = margin_for(meta, margins);
  if (margin < 0.0) throw std::invalid_argument("noninferiority_test: negative margin");

  std::vector<double> d;
  int dropped_undefined = 0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (!model[i].has_value() || !inter[i].has_value()) {
      ++dropped_undefined;
      continue;
    }
    const double shifted = (meta.direction == Direction::higher_better)
                               ? *model[i] - *inter[i] + margin
                               : *inter[i] - *model[i] + margin;
    d.push_back(shifted);
  }
  if (d.size() < 2) {
    throw std::invalid_argument("noninferiority_test: fewer than 2 usable pairs for " + meta.name);
  }

  const WilcoxonResult w = wilcoxon_one_sided(d);

  NonInferiorityOutcome out;
  out.metric = meta.name;
  out.n_pairs = w.n_used;
  out.n_dropped = dropped_undefined + (static_cast<int>(d.size()) - w.n_used);
  out.p_raw = w.p;
  out.margin_used = margin;
  out.significant = w.p.has_value() && *w.p < alpha;
  return out;
}

std::vector<double> holm_adjust(const std::vector<double>& p_values) {
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("holm_adjust: p outside [0,1]");
  }
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });

  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double scaled = static_cast<double>(m - j) * p_values[order[j]];
    running = std::max(running, scaled);
    adjusted[order[j]] = std::min(1.0, running);
  }
  return adjusted;
}

void apply_holm(std::vector<NonInferiorityOutcome>& outcomes, double alpha) {
  std::vector<double> p;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].p_raw.has_value()) {
      p.push_back(*outcomes[i].p_raw);
      where.push_back(i);
    } else {
      outcomes[i].p_adjusted.reset();
      outcomes[i].significant = false;
    }
  }
  const std::vector<double> adj = holm_adjust(p);
  for (std::size_t k = 0; k < where.size(); ++k) {
    outcomes[where[k]].p_adjusted = adj[k];
    outcomes[where[k]].significant = adj[k] < alpha;
  }
}

std::string noninferiority_outcome_json(const NonInferiorityOutcome& outcome) {
  nlohmann::json j;
  j["metric"] = outcome.metric;
  j["n_pairs"] = outcome.n_pairs;
  j["n_dropped"] = outcome.n_dropped;
  j["p_raw"] = outcome.p_raw.has_value() ? nlohmann::json(*outcome.p_raw) : nlohmann::json();
  j["p_adjusted"] =
      outcome.p_adjusted.has_value() ? nlohmann::json(*outcome.p_adjusted) : nlohmann::json();
  j["significant"] = outcome.significant;
  j["margin_used"] = outcome.margin_used;
  return j.dump();
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("spearman_rho: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("spearman_rho: need at least 3 points");

  const std::vector<double> rx = average_ranks(std::vector<double>(x.begin(), x.end()));
  const std::vector<double> ry = average_ranks(std::vector<double>(y.begin(), y.end()));
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // rank mean, ties preserve the total

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    const double a = rx[i] - mean;
    const double b = ry[i] - mean;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("spearman_rho: zero rank variance");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace segeval
