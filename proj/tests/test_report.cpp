#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "segeval/report.hpp"
#include "segeval/run_config.hpp"

using namespace segeval;

namespace {

MetricRecord record_with(double bounded, double avd, double hd) {
  MetricRecord rec;
  rec.vs.value = bounded;
  rec.dice.value = bounded;
  rec.precision.value = bounded;
  rec.recall.value = bounded;
  rec.sdt.value = bounded;
  rec.avd_ml.value = avd;
  rec.hd95_mm.value = hd;
  return rec;
}

// Twelve cases where the model tracks the expert strictly better than the
// training rater does, on every metric.
AgreementTable better_model_table() {
  AgreementTable table;
  table.tol_mm = 5.0;
  table.pairs = {{"a", "training"}, {"a", "model"}, {"training", "model"}};
  for (int i = 0; i < 12; ++i) {
    const double wiggle = 0.01 * (i % 5);
    AgreementRow row;
    row.case_id = "case_" + std::to_string(i);
    row.records["a_to_training"] = record_with(0.60 + wiggle, 6.0 + wiggle, 7.0 + wiggle);
    row.records["a_to_model"] = record_with(0.72 + wiggle, 4.5 + wiggle, 5.5 + wiggle);
    row.records["training_to_model"] = record_with(0.80, 2.0, 3.0);
    table.rows.push_back(std::move(row));
  }
  return table;
}

Roles single_expert_roles() {
  Roles roles;
  roles.training_rater = "training";
  roles.test_raters = {"a"};
  roles.model = "model";
  return roles;
}

}  // namespace

TEST_CASE("report covers every metric for every test expert in order") {
  ReportConfig config;
  config.seed = 42;
  config.n_resamples = 2000;
  const Report report = noninferiority_report(better_model_table(), single_expert_roles(), config);

  REQUIRE(report.lines.size() == kMetricKeys.size());
  CHECK(report.n_cases == 12);
  CHECK(report.family_size == 7);
  for (std::size_t i = 0; i < kMetricKeys.size(); ++i) {
    const ReportLine& line = report.lines[i];
    CHECK(line.metric == std::string(kMetricKeys[i]));
    CHECK(line.test_expert == "a");
    CHECK(line.inter_pair_id == "a_to_training");
    CHECK(line.model_pair_id == "a_to_model");
    CHECK(line.n_inter_defined == 12);
    CHECK(line.n_model_defined == 12);
    CHECK(line.outcome.n_pairs == 12);
    CHECK(line.outcome.n_dropped == 0);
  }
}

TEST_CASE("a strictly better model is significant on every metric") {
  ReportConfig config;
  config.seed = 7;
  config.n_resamples = 2000;
  const Report report = noninferiority_report(better_model_table(), single_expert_roles(), config);

  // Every shifted difference is positive, so p_raw is exactly 2^-12 and even
  // the fully Holm-penalized value stays far below alpha.
  for (const ReportLine& line : report.lines) {
    REQUIRE(line.outcome.p_raw.has_value());
    CHECK(*line.outcome.p_raw == doctest::Approx(std::exp2(-12)).epsilon(1e-12));
    REQUIRE(line.outcome.p_adjusted.has_value());
    CHECK(*line.outcome.p_adjusted <= 7 * *line.outcome.p_raw + 1e-15);
    CHECK(line.outcome.significant);
  }
}

TEST_CASE("bootstrap summaries sit on the sample medians") {
  ReportConfig config;
  config.seed = 3;
  config.n_resamples = 1000;
  const Report report = noninferiority_report(better_model_table(), single_expert_roles(), config);
  const ReportLine& dice = report.lines[2];
  // Values are 0.60..0.64-ish; the sample median must be bracketed by the CI.
  CHECK(dice.inter.median >= 0.60);
  CHECK(dice.inter.median <= 0.65);
  CHECK(dice.inter.ci_lo <= dice.inter.median);
  CHECK(dice.inter.ci_hi >= dice.inter.median);
  CHECK(dice.model.median >= 0.72);
}

TEST_CASE("report generation is deterministic for a fixed seed") {
  ReportConfig config;
  config.seed = 11;
  config.n_resamples = 500;
  const AgreementTable table = better_model_table();
  const Roles roles = single_expert_roles();
  const Report a = noninferiority_report(table, roles, config);
  const Report b = noninferiority_report(table, roles, config);
  CHECK(render_csv(a) == render_csv(b));
  CHECK(render_markdown(a) == render_markdown(b));
}

TEST_CASE("metrics undefined everywhere become degenerate lines outside the family") {
  AgreementTable table = better_model_table();
  for (auto& row : table.rows) {
    for (auto& [id, rec] : row.records) {
      rec.hd95_mm.value.reset();
      rec.hd95_mm.reason = EmptyReason::one_empty;
    }
  }
  ReportConfig config;
  config.seed = 5;
  config.n_resamples = 500;
  const Report report = noninferiority_report(table, single_expert_roles(), config);
  CHECK(report.family_size == 6);

  const ReportLine& hd = report.lines[5];
  CHECK(hd.metric == "hd95_mm");
  CHECK(hd.n_inter_defined == 0);
  CHECK(hd.outcome.n_pairs == 0);
  CHECK(hd.outcome.n_dropped == 12);
  CHECK_FALSE(hd.outcome.p_raw.has_value());
  CHECK_FALSE(hd.outcome.significant);

  const std::string md = render_markdown(report);
  CHECK(md.find("| n/a |") != std::string::npos);
  const std::string csv = render_csv(report);
  CHECK(csv.find("NA,NA,NA") != std::string::npos);
}

TEST_CASE("report requires the expert's pair columns") {
  AgreementTable table = better_model_table();
  Roles roles = single_expert_roles();
  roles.test_raters = {"b"};
  ReportConfig config;
  CHECK_THROWS_AS(noninferiority_report(table, roles, config), std::invalid_argument);
}

TEST_CASE("median and CI render as median plus-minus half-width") {
  BootstrapSummary s;
  s.median = 0.63;
  s.ci_lo = 0.47;
  s.ci_hi = 0.79;
  s.half_width = 0.16;
  CHECK(format_median_ci(s) == "0.63 ± 0.16");

  s.median = 1.0;
  s.ci_lo = 1.0;
  s.ci_hi = 1.0;
  s.half_width = 0.0;
  CHECK(format_median_ci(s) == "1.00 ± 0.00");
}

TEST_CASE("markdown report carries headers, tables, footnotes and exclusions") {
  ReportConfig config;
  config.seed = 2;
  config.n_resamples = 500;
  AgreementTable table = better_model_table();
  table.excluded.push_back({"case_bad", "mask unreadable"});
  const Report report = noninferiority_report(table, single_expert_roles(), config);
  const std::string md = render_markdown(report);

  CHECK(md.find("# Agreement report") == 0);
  CHECK(md.find("## Test expert a (n = 12)") != std::string::npos);
  CHECK(md.find("| Category | Metric | a_to_training¹ | a_to_model¹ | n² | p³ |") !=
        std::string::npos);
  CHECK(md.find("| Volume | VS |") != std::string::npos);
  CHECK(md.find("| Overlap | Dice |") != std::string::npos);
  CHECK(md.find("| Distance | SDT 5mm |") != std::string::npos);
  CHECK(md.find("HD95 (mm)") != std::string::npos);
  // 2^-12 with the Holm factor lands in the <0.01 bucket, starred.
  CHECK(md.find("<0.01*") != std::string::npos);
  CHECK(md.find("¹ Median ± half-width") != std::string::npos);
  CHECK(md.find("## Exclusions") != std::string::npos);
  CHECK(md.find("| case_bad | mask unreadable |") != std::string::npos);

  table.excluded.clear();
  const Report clean = noninferiority_report(table, single_expert_roles(), config);
  CHECK(render_markdown(clean).find("None.") != std::string::npos);
}

TEST_CASE("csv report has the full-precision schema") {
  ReportConfig config;
  config.seed = 2;
  config.n_resamples = 500;
  const Report report = noninferiority_report(better_model_table(), single_expert_roles(), config);
  const std::string csv = render_csv(report);
  CHECK(csv.find("test_expert,metric,inter_pair,model_pair,inter_median,inter_ci_lo,"
                 "inter_ci_hi,model_median,model_ci_lo,model_ci_hi,n_inter,n_model,"
                 "n_pairs,n_dropped,margin,p_raw,p_adjusted,significant\n") == 0);
  CHECK(csv.find("a,dice,a_to_training,a_to_model,") != std::string::npos);
  // One header plus one row per line.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(report.lines.size()));
}

TEST_CASE("default run config pins the protocol parameters") {
  const RunConfig config;
  CHECK(config.tol_mm == 5.0);
  CHECK(config.margins.bounded_unit == 0.2);
  CHECK(config.margins.avd_ml == 3.0);
  CHECK(config.margins.hd95_mm == 3.0);
  CHECK(config.alpha == 0.05);
  CHECK(config.n_resamples == 10000);
  CHECK_FALSE(config.seed.has_value());
  CHECK(config.split.n_ids == 232);
  CHECK(config.split.n_test == 32);
  CHECK(config.split.k_folds == 5);

  const std::string snapshot = run_config_snapshot_json(config);
  CHECK(snapshot ==
        R"({"alpha":0.05,"margin_avd_ml":3.0,"margin_bounded":0.2,"margin_hd95_mm":3.0,)"
        R"("n_resamples":10000,"split":{"k_folds":5,"n_ids":232,"n_test":32},"tol_mm":5.0})");
}

TEST_CASE("default out dir honors SEGEVAL_OUT") {
  ::unsetenv("SEGEVAL_OUT");
  CHECK(default_out_dir() == std::filesystem::path("."));
  ::setenv("SEGEVAL_OUT", "/tmp/elsewhere", 1);
  CHECK(default_out_dir() == std::filesystem::path("/tmp/elsewhere"));
  ::setenv("SEGEVAL_OUT", "", 1);
  CHECK(default_out_dir() == std::filesystem::path("."));
  ::unsetenv("SEGEVAL_OUT");
}
