#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segeval/cohort.hpp"
#include "segeval/stats.hpp"

namespace segeval {

struct ReportConfig {
  NonInferiorityMargin margins;
  double alpha = 0.05;
  int n_resamples = 10000;
  std::uint64_t seed = 0;
};

struct ReportLine {
  std::string test_expert;
  std::string metric;  // canonical key
  std::string inter_pair_id;
  std::string model_pair_id;
  BootstrapSummary inter;
  BootstrapSummary model;
  int n_inter_defined = 0;
  int n_model_defined = 0;
  NonInferiorityOutcome outcome;
};

struct Report {
  std::vector<ReportLine> lines;  // test experts in role order, metrics in canonical order
  double tol_mm = kDefaultSurfaceTolMm;
  ReportConfig config;
  int n_cases = 0;
  int family_size = 0;  // tests entering the Holm adjustment
  std::vector<CaseFailure> excluded;
};

// Bootstraps inter-expert and model-expert agreement per test expert and
// metric, runs the paired non-inferiority tests, and Holm-adjusts the whole
// family (every defined test in this report). Bootstrap seeds derive from
// config.seed and the line's stable position, so regeneration is
// byte-identical. Lines whose samples are too degenerate to test (fewer than
// two defined pairs) are reported with an unset p.
Report noninferiority_report(const AgreementTable& table, const Roles& roles,
                             const ReportConfig& config);

// "0.63 ± 0.16": median and CI half-width, two decimals.
std::string format_median_ci(const BootstrapSummary& s);

// Human-readable table grouped Volume / Overlap / Distance with significance
// markers, footnotes and the mandatory exclusion section.
std::string render_markdown(const Report& report);

// Machine table, one row per (test_expert, metric), full precision.
std::string render_csv(const Report& report);

}  // namespace segeval
