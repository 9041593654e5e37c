// segeval: evaluation protocol frontend.
//
// Subcommands: evaluate, cohort, report, mirror, split, synth. Every default
// is the published protocol value; runs are deterministic per seed and input,
// so regenerating an output directory is byte-identical.
//
// Exit codes: 0 success, 2 usage, 3 unreadable/unwritable file, 4 unsupported
// or corrupt file content, 5 invalid argument values, 1 anything else.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "segeval/cohort.hpp"
#include "segeval/errors.hpp"
#include "segeval/metrics.hpp"
#include "segeval/mirror.hpp"
#include "segeval/report.hpp"
#include "segeval/run_config.hpp"
#include "segeval/synth.hpp"
#include "segeval/volume_io.hpp"

namespace fs = std::filesystem;
using namespace segeval;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitFormat = 4;
constexpr int kExitInvalid = 5;

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw io_error("write failed: " + path.string());
}

std::vector<std::string> split_fields(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? pos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_num(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw std::invalid_argument(what + ": not a number: '" + s + "'");
  }
  return v;
}

template <typename T>
std::array<T, 3> parse_triple(const std::string& s, const std::string& what) {
  const auto fields = split_fields(s, ',');
  if (fields.size() != 3) throw std::invalid_argument(what + ": expected z,y,x, got '" + s + "'");
  std::array<T, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = static_cast<T>(parse_num(fields[i], what));
  return out;
}

// "id,lo,hi,flip,empty"; trailing fields may be omitted and default to 0.
SynthRater parse_rater(const std::string& s) {
  const auto fields = split_fields(s, ',');
  if (fields.empty() || fields.size() > 5 || fields[0].empty()) {
    throw std::invalid_argument("--rater: expected id,lo,hi[,flip[,empty]], got '" + s + "'");
  }
  SynthRater r;
  r.id = fields[0];
  if (fields.size() > 1) r.spec.radius_mm_lo = parse_num(fields[1], "--rater lo");
  if (fields.size() > 2) r.spec.radius_mm_hi = parse_num(fields[2], "--rater hi");
  if (fields.size() > 3) r.spec.flip_prob = parse_num(fields[3], "--rater flip");
  if (fields.size() > 4) r.spec.empty_prob = parse_num(fields[4], "--rater empty");
  return r;
}

struct EvaluateArgs {
  std::string pred, ref;
  double tol_mm = kDefaultSurfaceTolMm;
  std::string out;  // empty -> stdout
};

int run_evaluate(const EvaluateArgs& a) {
  const BinaryMask pred = load_mask(a.pred);
  const BinaryMask ref = load_mask(a.ref);
  const MetricRecord record = evaluate_pair(pred, ref, a.tol_mm);
  const std::string json = metric_record_json(record) + "\n";
  if (a.out.empty()) {
    std::cout << json;
  } else {
    write_text_file(a.out, json);
  }
  return kExitOk;
}

struct CohortArgs {
  std::string manifest;
  double tol_mm = kDefaultSurfaceTolMm;
  int jobs = 1;
  fs::path out;
};

int run_cohort(const CohortArgs& a) {
  const Manifest manifest = load_manifest(a.manifest);
  const AgreementTable table = run_agreement_study(manifest, a.tol_mm, a.jobs);
  fs::create_directories(a.out);

  save_agreement_csv(a.out / "agreement.csv", table);
  StudyMeta meta;
  meta.roles = manifest.roles;
  meta.raters = manifest.raters;
  meta.pairs = table.pairs;
  meta.tol_mm = table.tol_mm;
  meta.excluded = table.excluded;
  meta.n_cases_evaluated = static_cast<int>(table.rows.size());
  save_meta_json(a.out / "meta.json", meta);
  save_volumes_csv(a.out / "volumes.csv", table, manifest.raters);
  if (table.rows.size() >= 3) {
    export_volume_scatter(table, a.out);
  } else {
    std::cerr << "segeval: fewer than 3 evaluated cases, skipping scatter/spearman export\n";
  }

  std::cout << "evaluated " << table.rows.size() << " cases (" << table.excluded.size()
            << " excluded) into " << a.out.string() << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::string input;  // agreement.csv or a directory holding it plus meta.json
  ReportConfig config;
  fs::path out;
};

int run_report(const ReportArgs& a) {
  fs::path agreement = a.input;
  if (fs::is_directory(agreement)) agreement /= "agreement.csv";
  const fs::path meta_path = agreement.parent_path() / "meta.json";

  AgreementTable table = load_agreement_csv(agreement);
  const StudyMeta meta = load_meta_json(meta_path);
  table.tol_mm = meta.tol_mm;
  table.excluded = meta.excluded;

  const Report report = noninferiority_report(table, meta.roles, a.config);
  const std::string md = render_markdown(report);
  fs::create_directories(a.out);
  write_text_file(a.out / "report.md", md);
  write_text_file(a.out / "report.csv", render_csv(report));
  std::cout << md;
  return kExitOk;
}

struct MirrorArgs {
  std::string image;
  std::string replace;  // "", "left", "right"
  fs::path out;
};

int run_mirror(const MirrorArgs& a) {
  const VoxelGrid image = load_volume(a.image);
  std::optional<Hemisphere> replace;
  if (a.replace == "left") replace = Hemisphere::left;
  if (a.replace == "right") replace = Hemisphere::right;

  RegistrationResult reg;
  const VoxelGrid mirror = build_mirror_channel(image, reg, {}, replace);

  // keep the input's container format for the output volume
  fs::path name = fs::path(a.image).filename();
  std::string ext;
  while (name.has_extension()) {
    ext = name.extension().string() + ext;
    name = name.stem();
  }
  fs::create_directories(a.out);
  const fs::path volume_path = a.out / (name.string() + "_mirror" + ext);
  save_volume(volume_path, mirror);
  write_text_file(a.out / (name.string() + "_mirror_transform.json"),
                  transform_json(reg.transform) + "\n");

  std::cout << "wrote " << volume_path.string() << "\n";
  for (const auto& level : reg.levels) {
    std::printf("level /%d: %d sweeps, mse %.6g -> %.6g\n", level.factor, level.sweeps,
                level.mse_before, level.mse_after);
  }
  return kExitOk;
}

struct SplitArgs {
  int n = 232;
  int n_test = 32;
  int k_folds = 5;
  std::uint64_t seed = 0;
  std::string ids_file;  // one id per line, overrides --n
  std::string out;       // empty -> stdout
};

int run_split(const SplitArgs& a) {
  std::vector<std::string> ids;
  if (!a.ids_file.empty()) {
    std::ifstream in(a.ids_file);
    if (!in) throw io_error("cannot read id list: " + a.ids_file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) ids.push_back(line);
    }
  } else {
    ids.reserve(a.n);
    for (int i = 0; i < a.n; ++i) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "case_%03d", i);
      ids.push_back(buf);
    }
  }

  const SplitPlan plan = split_cohort(ids, a.n_test, a.k_folds, a.seed);
  const std::string json = split_plan_json(plan) + "\n";
  if (a.out.empty()) {
    std::cout << json;
  } else {
    write_text_file(a.out, json);
  }
  return kExitOk;
}

struct SynthArgs {
  CohortSpec spec;
  std::string dims = "24,96,96";
  std::string spacing = "3.0,0.45,0.45";
  std::vector<std::string> raters;
  std::string training, model;
  std::vector<std::string> test;
  fs::path out;
};

int run_synth(SynthArgs& a) {
  a.spec.lesion.dims = parse_triple<int>(a.dims, "--dims");
  a.spec.lesion.spacing_mm = parse_triple<double>(a.spacing, "--spacing");

  if (a.raters.empty()) {
    a.spec.raters = {{"training", {-1.2, 1.2, 0.02, 0.0}},
                     {"expert_a", {-1.2, 1.2, 0.02, 0.0}},
                     {"expert_b", {-1.2, 1.2, 0.02, 0.0}},
                     {"model", {-0.6, 0.6, 0.01, 0.0}}};
  } else {
    for (const auto& r : a.raters) a.spec.raters.push_back(parse_rater(r));
  }

  std::vector<std::string> ids;
  for (const auto& r : a.spec.raters) ids.push_back(r.id);
  Roles roles = default_roles(ids);
  if (!a.training.empty()) roles.training_rater = a.training;
  if (!a.model.empty()) roles.model = a.model;
  if (!a.test.empty()) roles.test_raters = a.test;
  a.spec.training_rater = roles.training_rater;
  a.spec.test_raters = roles.test_raters;
  a.spec.model_rater = roles.model;

  const Manifest manifest = generate_cohort(a.spec, a.out);
  std::cout << "wrote " << manifest.cases.size() << " cases, "
            << a.spec.raters.size() << " raters to " << (a.out / "manifest.json").string() << "\n";
  return kExitOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"segeval: agreement metrics and non-inferiority analysis for 3D segmentations"};
  app.require_subcommand(1);

  const RunConfig defaults;  // protocol values
  const std::string out_dir_default = default_out_dir().string();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand(
      "evaluate", "Score one predicted mask against a reference mask, JSON to stdout");
  evaluate->add_option("pred", ev.pred, "Predicted mask (.nii, .nii.gz or .raw)")->required();
  evaluate->add_option("ref", ev.ref, "Reference mask")->required();
  evaluate->add_option("--tol", ev.tol_mm, "Surface Dice tolerance in mm")
      ->capture_default_str();
  evaluate->add_option("--out", ev.out, "Write the record JSON here instead of stdout");

  CohortArgs co;
  co.out = out_dir_default;
  auto* cohort = app.add_subcommand(
      "cohort", "Evaluate every rater pair of a manifest into agreement/volume tables");
  cohort->add_option("manifest", co.manifest, "Manifest (.json or long-format .csv)")->required();
  cohort->add_option("--tol", co.tol_mm, "Surface Dice tolerance in mm")->capture_default_str();
  cohort->add_option("--jobs", co.jobs, "Parallel case evaluations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cohort->add_option("--out", co.out, "Output directory (default: $SEGEVAL_OUT or .)");

  ReportArgs re;
  re.config.margins = defaults.margins;
  re.config.alpha = defaults.alpha;
  re.config.n_resamples = defaults.n_resamples;
  re.out = out_dir_default;
  auto* report = app.add_subcommand(
      "report", "Non-inferiority report from an agreement table (markdown to stdout)");
  report->add_option("input", re.input, "agreement.csv or the directory holding it")->required();
  report
      ->add_option("--margin-unit", re.config.margins.bounded_unit,
                   "Margin for unit-range metrics")
      ->capture_default_str();
  report->add_option("--margin-avd", re.config.margins.avd_ml, "AVD margin in ml")
      ->capture_default_str();
  report->add_option("--margin-hd", re.config.margins.hd95_mm, "HD95 margin in mm")
      ->capture_default_str();
  report->add_option("--alpha", re.config.alpha, "Familywise significance level")
      ->capture_default_str();
  report->add_option("--resamples", re.config.n_resamples, "Bootstrap resamples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  report->add_option("--seed", re.config.seed, "Bootstrap seed")->required();
  report->add_option("--out", re.out, "Output directory (default: $SEGEVAL_OUT or .)");

  MirrorArgs mi;
  mi.out = out_dir_default;
  auto* mirror = app.add_subcommand(
      "mirror", "Build the mirrored co-registered channel of an image");
  mirror->add_option("image", mi.image, "Input image volume")->required();
  mirror
      ->add_option("--replace", mi.replace,
                   "Replace one hemisphere with its mirrored counterpart")
      ->check(CLI::IsMember({"left", "right"}));
  mirror->add_option("--out", mi.out, "Output directory (default: $SEGEVAL_OUT or .)");

  SplitArgs sp;
  sp.n = defaults.split.n_ids;
  sp.n_test = defaults.split.n_test;
  sp.k_folds = defaults.split.k_folds;
  auto* split = app.add_subcommand("split", "Shuffle ids into a test set and training folds");
  split->add_option("--n", sp.n, "Number of generated case ids (case_000...)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  split->add_option("--ids", sp.ids_file, "Read ids from this file instead, one per line");
  split->add_option("--test", sp.n_test, "Held-out test cases")->capture_default_str();
  split->add_option("--folds", sp.k_folds, "Cross-validation folds over the remainder")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  split->add_option("--seed", sp.seed, "Shuffle seed")->required();
  split->add_option("--out", sp.out, "Write the plan JSON here instead of stdout");

  SynthArgs sy;
  sy.out = out_dir_default;
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic multi-rater cohort with a manifest");
  synth->add_option("--cases", sy.spec.n_cases, "Number of cases")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", sy.spec.seed, "Master seed")->required();
  synth->add_option("--dims", sy.dims, "Grid size z,y,x")->capture_default_str();
  synth->add_option("--spacing", sy.spacing, "Voxel spacing z,y,x in mm")->capture_default_str();
  synth->add_option("--blobs", sy.spec.lesion.n_ellipsoids, "Ellipsoids per lesion")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth->add_option("--radius-lo", sy.spec.lesion.radius_mm_lo, "Smallest ellipsoid radius, mm")
      ->capture_default_str();
  synth->add_option("--radius-hi", sy.spec.lesion.radius_mm_hi, "Largest ellipsoid radius, mm")
      ->capture_default_str();
  synth
      ->add_option("--rater", sy.raters,
                   "Rater as id,lo,hi[,flip[,empty]]: signed morphology radius range in mm, "
                   "boundary flip and empty-mask probabilities. Default: training, expert_a, "
                   "expert_b at +-1.2mm/0.02 and model at +-0.6mm/0.01")
      ->take_all();
  synth->add_option("--training", sy.training, "Training rater id (default: first rater)");
  synth->add_option("--model", sy.model,
                    "Model rater id (default: the rater named 'model', else the last)");
  synth->add_option("--test", sy.test, "Test expert ids (default: everyone else)")->take_all();
  synth->add_option("--format", sy.spec.format, "Mask file format: nii.gz, nii or raw")
      ->capture_default_str()
      ->check(CLI::IsMember({"nii.gz", "nii", "raw"}));
  synth->add_option("--out", sy.out, "Output directory (default: $SEGEVAL_OUT or .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the diagnostic
    return kExitUsage;
  }

  if (evaluate->parsed()) return run_evaluate(ev);
  if (cohort->parsed()) return run_cohort(co);
  if (report->parsed()) return run_report(re);
  if (mirror->parsed()) return run_mirror(mi);
  if (split->parsed()) return run_split(sp);
  if (synth->parsed()) return run_synth(sy);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const io_error& e) {
    std::cerr << "segeval: " << e.what() << "\n";
    return kExitIo;
  } catch (const format_error& e) {
    std::cerr << "segeval: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "segeval: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "segeval: " << e.what() << "\n";
    return kExitFailure;
  }
}
