#include "segeval/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "csv_util.hpp"
#include "segeval/rng.hpp"

namespace segeval {

using detail::double_repr;

namespace {

std::string metric_label(std::string_view key, double tol_mm) {
  if (key == "vs") return "VS";
  if (key == "avd_ml") return "AVD (ml)";
  if (key == "dice") return "Dice";
  if (key == "precision") return "Precision";
  if (key == "recall") return "Recall";
  if (key == "hd95_mm") return "HD95 (mm)";
  if (key == "sdt") {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", tol_mm);
    return std::string("SDT ") + buf + "mm";
  }
  return std::string(key);
}

std::string category_label(std::string_view key) {
  if (key == "vs" || key == "avd_ml") return "Volume";
  if (key == "hd95_mm" || key == "sdt") return "Distance";
  return "Overlap";
}

std::string p_bucket(const std::optional<double>& p, bool significant) {
  if (!p.has_value()) return "n/a";
  std::string s;
  if (*p < 0.0001) s = "<0.0001";
  else if (*p < 0.001) s = "<0.001";
  else if (*p < 0.01) s = "<0.01";
  else if (*p < 0.05) s = "<0.05";
  else {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", *p);
    s = buf;
  }
  if (significant) s += "*";
  return s;
}

std::vector<double> defined_values(const AgreementTable& table, const std::string& pair_id,
                                   std::string_view key) {
  std::vector<double> out;
  for (const auto& row : table.rows) {
    const MetricValue& m = metric_by_key(row.records.at(pair_id), key);
    if (m.defined()) out.push_back(*m.value);
  }
  return out;
}

std::vector<std::optional<double>> all_values(const AgreementTable& table,
                                              const std::string& pair_id, std::string_view key) {
  std::vector<std::optional<double>> out;
  for (const auto& row : table.rows) {
    out.push_back(metric_by_key(row.records.at(pair_id), key).value);
  }
  return out;
}

}  // namespace

Report noninferiority_report(const AgreementTable& table, const Roles& roles,
                             const ReportConfig& config) {
  Report report;
  report.tol_mm = table.tol_mm;
  report.config = config;
  report.n_cases = static_cast<int>(table.rows.size());
  report.excluded = table.excluded;

  auto has_pair = [&](const std::string& id) {
    return std::any_of(table.pairs.begin(), table.pairs.end(),
                       [&](const RaterPair& p) { return p.id() == id; });
  };

  std::uint64_t stable_index = 0;
  for (const auto& expert : roles.test_raters) {
    const std::string inter_id = RaterPair{expert, roles.training_rater}.id();
    const std::string model_id = RaterPair{expert, roles.model}.id();
    if (!has_pair(inter_id) || !has_pair(model_id)) {
      throw std::invalid_argument("noninferiority_report: table lacks pair columns " + inter_id +
                                  " / " + model_id);
    }
    for (const auto key : kMetricKeys) {
      ReportLine line;
      line.test_expert = expert;
      line.metric = std::string(key);
      line.inter_pair_id = inter_id;
      line.model_pair_id = model_id;

      const std::vector<double> inter_def = defined_values(table, inter_id, key);
      const std::vector<double> model_def = defined_values(table, model_id, key);
      line.n_inter_defined = static_cast<int>(inter_def.size());
      line.n_model_defined = static_cast<int>(model_def.size());
      const std::uint64_t seed_inter = derive_seed(config.seed, stable_index++);
      const std::uint64_t seed_model = derive_seed(config.seed, stable_index++);
      if (!inter_def.empty()) {
        line.inter = bootstrap_median_ci(inter_def, config.n_resamples, seed_inter);
      }
      if (!model_def.empty()) {
        line.model = bootstrap_median_ci(model_def, config.n_resamples, seed_model);
      }

      const MetricMeta meta = metric_meta(key);
      try {
        line.outcome = noninferiority_test(all_values(table, model_id, key),
                                           all_values(table, inter_id, key), meta,
                                           config.margins, config.alpha);
      } catch (const std::invalid_argument&) {
        line.outcome.metric = meta.name;
        line.outcome.n_pairs = 0;
        line.outcome.n_dropped = report.n_cases;
        line.outcome.margin_used = margin_for(meta, config.margins);
        line.outcome.significant = false;
      }
      report.lines.push_back(std::move(line));
    }
  }

  std::vector<NonInferiorityOutcome> family;
  family.reserve(report.lines.size());
  for (const auto& line : report.lines) family.push_back(line.outcome);
  apply_holm(family, config.alpha);
  for (std::size_t i = 0; i < family.size(); ++i) report.lines[i].outcome = family[i];
  report.family_size = static_cast<int>(
      std::count_if(family.begin(), family.end(),
                    [](const NonInferiorityOutcome& o) { return o.p_raw.has_value(); }));
  return report;
}

std::string format_median_ci(const BootstrapSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", s.median, s.half_width);
  return buf;
}

std::string render_markdown(const Report& report) {
  std::ostringstream md;
  md << "# Agreement report\n\n";
  md << "- Cases evaluated: " << report.n_cases << "\n";
  md << "- Surface tolerance: " << double_repr(report.tol_mm) << " mm\n";
  md << "- Non-inferiority margins: " << double_repr(report.config.margins.bounded_unit)
     << " (unit-range), " << double_repr(report.config.margins.avd_ml) << " ml (AVD), "
     << double_repr(report.config.margins.hd95_mm) << " mm (HD95)\n";
  md << "- Alpha: " << double_repr(report.config.alpha) << ", Holm-adjusted family of "
     << report.family_size << " tests\n";
  md << "- Bootstrap: " << report.config.n_resamples << " resamples, seed "
     << report.config.seed << "\n";

  std::string current_expert;
  for (const auto& line : report.lines) {
    if (line.test_expert != current_expert) {
      current_expert = line.test_expert;
      md << "\n## Test expert " << current_expert << " (n = " << report.n_cases << ")\n\n";
      md << "| Category | Metric | " << line.inter_pair_id << "¹ | " << line.model_pair_id
         << "¹ | n² | p³ |\n";
      md << "|---|---|---|---|---|---|\n";
    }
    md << "| " << category_label(line.metric) << " | " << metric_label(line.metric, report.tol_mm)
       << " | ";
    md << (line.n_inter_defined > 0 ? format_median_ci(line.inter) : std::string("n/a")) << " | ";
    md << (line.n_model_defined > 0 ? format_median_ci(line.model) : std::string("n/a")) << " | ";
    md << line.outcome.n_pairs;
    if (line.outcome.n_dropped > 0) md << " (" << line.outcome.n_dropped << " dropped)";
    md << " | " << p_bucket(line.outcome.p_adjusted, line.outcome.significant) << " |\n";
  }

  md << "\n¹ Median ± half-width of the bootstrapped 95% CI ("
     << report.config.n_resamples << " resamples).\n";
  md << "² Case pairs entering the test; dropped counts undefined or zero-difference "
        "pairs.\n";
  md << "³ One-sided Wilcoxon signed-rank non-inferiority test at the stated margins, "
        "Holm-adjusted; * marks adjusted p < "
     << double_repr(report.config.alpha) << ".\n";

  md << "\n## Exclusions\n\n";
  if (report.excluded.empty()) {
    md << "None.\n";
  } else {
    md << "| Case | Reason |\n|---|---|\n";
    for (const auto& e : report.excluded) {
      md << "| " << e.case_id << " | " << e.reason << " |\n";
    }
  }
  return md.str();
}

std::string render_csv(const Report& report) {
  std::ostringstream csv;
  csv << "test_expert,metric,inter_pair,model_pair,inter_median,inter_ci_lo,inter_ci_hi,"
         "model_median,model_ci_lo,model_ci_hi,n_inter,n_model,n_pairs,n_dropped,margin,"
         "p_raw,p_adjusted,significant\n";
  for (const auto& line : report.lines) {
    csv << line.test_expert << "," << line.metric << "," << line.inter_pair_id << ","
        << line.model_pair_id << ",";
    if (line.n_inter_defined > 0) {
      csv << double_repr(line.inter.median) << "," << double_repr(line.inter.ci_lo) << ","
          << double_repr(line.inter.ci_hi) << ",";
    } else {
      csv << "NA,NA,NA,";
    }
    if (line.n_model_defined > 0) {
      csv << double_repr(line.model.median) << "," << double_repr(line.model.ci_lo) << ","
          << double_repr(line.model.ci_hi) << ",";
    } else {
      csv << "NA,NA,NA,";
    }
    csv << line.n_inter_defined << "," << line.n_model_defined << "," << line.outcome.n_pairs
        << "," << line.outcome.n_dropped << "," << double_repr(line.outcome.margin_used) << ",";
    csv << (line.outcome.p_raw.has_value() ? double_repr(*line.outcome.p_raw) : "NA") << ",";
    csv << (line.outcome.p_adjusted.has_value() ? double_repr(*line.outcome.p_adjusted) : "NA")
        << ",";
    csv << (line.outcome.significant ? "true" : "false") << "\n";
  }
  return csv.str();
}

}  // namespace segeval
