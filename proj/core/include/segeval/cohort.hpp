#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segeval/metrics.hpp"

namespace segeval {

struct ManifestCase {
  std::string case_id;
  std::optional<std::string> image_path;
  std::map<std::string, std::string> mask_paths;  // rater id -> path
};

struct Roles {
  std::string training_rater;
  std::vector<std::string> test_raters;
  std::string model;
};

struct Manifest {
  std::vector<ManifestCase> cases;
  std::vector<std::string> raters;  // stable order for output columns
  Roles roles;
  std::filesystem::path base_dir;  // relative mask paths resolve against this

  std::filesystem::path resolve(const std::string& path) const;
  void validate() const;
};

// When a manifest carries no explicit roles (CSV always, JSON optionally):
// training is the first rater, the model is the rater literally named "model"
// when present and the last rater otherwise, everyone else is a test expert.
Roles default_roles(const std::vector<std::string>& raters);

// JSON ({cases: [{case_id, image_path?, mask_paths}], raters?, roles?}) or
// long-format CSV (case_id, rater_id, mask_path, image_path?) by extension.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest_json(const std::filesystem::path& path, const Manifest& manifest);

// Ordered pair: first rater is evaluated as the prediction, second as the
// reference, reading "B to A" as B scored against A.
struct RaterPair {
  std::string pred;
  std::string ref;

  std::string id() const { return pred + "_to_" + ref; }
};

// Per test expert X: (X, training) and (X, model), plus (training, model).
std::vector<RaterPair> default_pairs(const Roles& roles);

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::string> test_ids;
  std::vector<std::string> train_ids;
  std::vector<std::vector<std::string>> folds;
};

// Seeded shuffle, first n_test ids to test, remainder chunked into k folds
// whose sizes differ by at most one (earlier folds take the remainder).
SplitPlan split_cohort(const std::vector<std::string>& ids, int n_test, int k_folds,
                       std::uint64_t seed);

std::string split_plan_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text);

struct CaseFailure {
  std::string case_id;
  std::string reason;
};

struct AgreementRow {
  std::string case_id;
  std::map<std::string, MetricRecord> records;  // pair id -> record
  std::map<std::string, double> volumes_ml;     // rater id -> volume
};

struct AgreementTable {
  std::vector<RaterPair> pairs;
  std::vector<AgreementRow> rows;      // manifest order, failed cases excluded
  std::vector<CaseFailure> excluded;
  double tol_mm = kDefaultSurfaceTolMm;
};

// Evaluates every configured pair on every case. Case load or geometry
// failures exclude the case and are recorded, never silently dropped. With
// jobs > 1, cases run on a small thread pool; the table is assembled in
// manifest order either way.
AgreementTable run_agreement_study(const Manifest& manifest,
                                   double tol_mm = kDefaultSurfaceTolMm, int jobs = 1,
                                   const std::vector<RaterPair>* pairs = nullptr);

// Wide CSV: case_id then one <pair>.<metric> column per pair and metric.
// Undefined cells render as NA:<reason>; numbers use shortest round-trip form.
void save_agreement_csv(const std::filesystem::path& path, const AgreementTable& table);
AgreementTable load_agreement_csv(const std::filesystem::path& path);

// case_id plus one volume column per rater, in manifest rater order.
void save_volumes_csv(const std::filesystem::path& path, const AgreementTable& table,
                      const std::vector<std::string>& raters);

struct StudyMeta {
  Roles roles;
  std::vector<std::string> raters;
  std::vector<RaterPair> pairs;
  double tol_mm = kDefaultSurfaceTolMm;
  std::vector<CaseFailure> excluded;
  int n_cases_evaluated = 0;
};

void save_meta_json(const std::filesystem::path& path, const StudyMeta& meta);
StudyMeta load_meta_json(const std::filesystem::path& path);

struct PairRho {
  std::string pair_id;
  std::optional<double> rho;  // unset when a volume vector is constant
  int n = 0;
  std::string note;
};

// One CSV per pair (case_id, rater_a_ml, rater_b_ml) plus spearman.csv with
// rho per pair. Needs at least 3 evaluated cases.
std::vector<PairRho> export_volume_scatter(const AgreementTable& table,
                                           const std::filesystem::path& out_dir);

}  // namespace segeval
