#include "segeval/cohort.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "csv_util.hpp"
#include "segeval/errors.hpp"
#include "segeval/rng.hpp"
#include "segeval/stats.hpp"
#include "segeval/volume_io.hpp"

namespace segeval {

using detail::csv_quote;
using detail::csv_split;
using detail::double_repr;
using detail::parse_double;

namespace {

void check_identifier(const std::string& id, const std::string& what) {
  if (id.empty()) throw std::invalid_argument(what + ": empty identifier");
  if (id.find_first_of(",\".\n") != std::string::npos || id.find("_to_") != std::string::npos) {
    throw std::invalid_argument(what + ": identifier '" + id +
                                "' may not contain '.', ',', quotes or '_to_'");
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path.string());
  return out;
}

std::string reason_suffix(EmptyReason r) {
  switch (r) {
    case EmptyReason::both_empty: return "both-empty";
    case EmptyReason::one_empty: return "one-empty";
    case EmptyReason::none: break;
  }
  return "undefined";
}

}  // namespace

std::filesystem::path Manifest::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

void Manifest::validate() const {
  if (raters.empty()) throw std::invalid_argument("manifest: no raters");
  std::set<std::string> rater_set;
  for (const auto& r : raters) {
    check_identifier(r, "manifest rater");
    if (!rater_set.insert(r).second) {
      throw std::invalid_argument("manifest: duplicate rater " + r);
    }
  }
  std::set<std::string> ids;
  for (const auto& c : cases) {
    check_identifier(c.case_id, "manifest case");
    if (!ids.insert(c.case_id).second) {
      throw std::invalid_argument("manifest: duplicate case_id " + c.case_id);
    }
  }
  auto known = [&](const std::string& r) { return rater_set.count(r) > 0; };
  if (!known(roles.training_rater)) {
    throw std::invalid_argument("manifest: training rater " + roles.training_rater +
                                " not among raters");
  }
  if (!known(roles.model)) {
    throw std::invalid_argument("manifest: model rater " + roles.model + " not among raters");
  }
  for (const auto& t : roles.test_raters) {
    if (!known(t)) throw std::invalid_argument("manifest: test rater " + t + " not among raters");
    if (t == roles.training_rater) {
      throw std::invalid_argument("manifest: training rater also listed as test rater");
    }
  }
}

Roles default_roles(const std::vector<std::string>& raters) {
  if (raters.empty()) throw std::invalid_argument("default_roles: no raters");
  Roles roles;
  roles.training_rater = raters.front();
  const auto named_model = std::find(raters.begin(), raters.end(), "model");
  roles.model = (named_model != raters.end()) ? *named_model : raters.back();
  for (const auto& r : raters) {
    if (r != roles.training_rater && r != roles.model) roles.test_raters.push_back(r);
  }
  return roles;
}

namespace {

Manifest load_manifest_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": invalid JSON (" + e.what() + ")");
  }

  Manifest m;
  m.base_dir = path.parent_path();
  try {
    for (const auto& jc : j.at("cases")) {
      ManifestCase c;
      c.case_id = jc.at("case_id").get<std::string>();
      if (jc.contains("image_path") && !jc.at("image_path").is_null()) {
        c.image_path = jc.at("image_path").get<std::string>();
      }
      for (const auto& [rater, p] : jc.at("mask_paths").items()) {
        c.mask_paths[rater] = p.get<std::string>();
      }
      m.cases.push_back(std::move(c));
    }
    if (j.contains("raters")) {
      for (const auto& r : j.at("raters")) m.raters.push_back(r.get<std::string>());
    } else {
      std::set<std::string> seen;
      for (const auto& c : m.cases) {
        for (const auto& [rater, p] : c.mask_paths) seen.insert(rater);
      }
      m.raters.assign(seen.begin(), seen.end());
    }
    if (j.contains("roles")) {
      const auto& jr = j.at("roles");
      m.roles.training_rater = jr.at("training_rater").get<std::string>();
      m.roles.model = jr.at("model").get<std::string>();
      for (const auto& t : jr.at("test_raters")) m.roles.test_raters.push_back(t.get<std::string>());
    } else {
      m.roles = default_roles(m.raters);
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": missing or malformed field (" + e.what() + ")");
  }
  m.validate();
  return m;
}

Manifest load_manifest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open manifest: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw format_error(path.string() + ": empty manifest");
  const std::vector<std::string> header = csv_split(line);
  auto col = [&](const std::string& name) -> int {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_case = col("case_id"), c_rater = col("rater_id"), c_mask = col("mask_path");
  const int c_image = col("image_path");
  if (c_case < 0 || c_rater < 0 || c_mask < 0) {
    throw format_error(path.string() + ": manifest CSV needs case_id, rater_id, mask_path columns");
  }

  Manifest m;
  m.base_dir = path.parent_path();
  std::vector<std::string> case_order;
  std::map<std::string, ManifestCase> by_id;
  std::set<std::string> rater_seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = csv_split(line);
    const int needed = std::max({c_case, c_rater, c_mask, c_image});
    if (static_cast<int>(f.size()) <= needed) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": too few columns");
    }
    const std::string& id = f[c_case];
    if (!by_id.count(id)) {
      case_order.push_back(id);
      by_id[id].case_id = id;
    }
    ManifestCase& c = by_id[id];
    if (c.mask_paths.count(f[c_rater])) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": duplicate mask for " +
                         id + "/" + f[c_rater]);
    }
    c.mask_paths[f[c_rater]] = f[c_mask];
    if (c_image >= 0 && !f[c_image].empty() && !c.image_path.has_value()) {
      c.image_path = f[c_image];
    }
    if (rater_seen.insert(f[c_rater]).second) m.raters.push_back(f[c_rater]);
  }
  for (const auto& id : case_order) m.cases.push_back(by_id[id]);
  m.roles = default_roles(m.raters);
  m.validate();
  return m;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  const std::string name = path.string();
  if (name.size() >= 4 && name.compare(name.size() - 4, 4, ".csv") == 0) {
    return load_manifest_csv(path);
  }
  return load_manifest_json(path);
}

void save_manifest_json(const std::filesystem::path& path, const Manifest& manifest) {
  nlohmann::json j;
  j["cases"] = nlohmann::json::array();
  for (const auto& c : manifest.cases) {
    nlohmann::json jc;
    jc["case_id"] = c.case_id;
    if (c.image_path.has_value()) jc["image_path"] = *c.image_path;
    jc["mask_paths"] = c.mask_paths;
    j["cases"].push_back(std::move(jc));
  }
  j["raters"] = manifest.raters;
  j["roles"] = {{"training_rater", manifest.roles.training_rater},
                {"test_raters", manifest.roles.test_raters},
                {"model", manifest.roles.model}};
  auto out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path.string());
}

std::vector<RaterPair> default_pairs(const Roles& roles) {
  std::vector<RaterPair> pairs;
  for (const auto& x : roles.test_raters) {
    pairs.push_back({x, roles.training_rater});
    pairs.push_back({x, roles.model});
  }
  pairs.push_back({roles.training_rater, roles.model});
  return pairs;
}

SplitPlan split_cohort(const std::vector<std::string>& ids, int n_test, int k_folds,
                       std::uint64_t seed) {
  if (ids.empty()) throw std::invalid_argument("split_cohort: no ids");
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw std::invalid_argument("split_cohort: duplicate ids");
  }
  const int n = static_cast<int>(ids.size());
  if (n_test < 0 || n_test >= n) {
    throw std::invalid_argument("split_cohort: n_test must be in [0, n)");
  }
  const int remainder = n - n_test;
  if (k_folds < 1 || k_folds > remainder) {
    throw std::invalid_argument("split_cohort: k_folds must be in [1, n - n_test]");
  }

  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto jdx = rng.below(static_cast<std::uint64_t>(i) + 1);
    std::swap(shuffled[i], shuffled[jdx]);
  }

  SplitPlan plan;
  plan.seed = seed;
  plan.test_ids.assign(shuffled.begin(), shuffled.begin() + n_test);
  plan.train_ids.assign(shuffled.begin() + n_test, shuffled.end());

  const int base = remainder / k_folds;
  const int extra = remainder % k_folds;
  int at = 0;
  for (int f = 0; f < k_folds; ++f) {
    const int size = base + (f < extra ? 1 : 0);
    plan.folds.emplace_back(plan.train_ids.begin() + at, plan.train_ids.begin() + at + size);
    at += size;
  }
  return plan;
}

std::string split_plan_json(const SplitPlan& plan) {
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["test"] = plan.test_ids;
  j["train"] = plan.train_ids;
  j["folds"] = plan.folds;
  return j.dump(2) + "\n";
}

SplitPlan split_plan_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.test_ids = j.at("test").get<std::vector<std::string>>();
    plan.train_ids = j.at("train").get<std::vector<std::string>>();
    plan.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("split plan: invalid JSON (") + e.what() + ")");
  }
}

AgreementTable run_agreement_study(const Manifest& manifest, double tol_mm, int jobs,
                                   const std::vector<RaterPair>* pairs) {
  manifest.validate();

  AgreementTable table;
  table.tol_mm = tol_mm;
  table.pairs = pairs ? *pairs : default_pairs(manifest.roles);
  if (table.pairs.empty()) throw std::invalid_argument("run_agreement_study: no rater pairs");

  std::set<std::string> needed;
  for (const auto& p : table.pairs) {
    needed.insert(p.pred);
    needed.insert(p.ref);
  }

  struct Slot {
    std::optional<AgreementRow> row;
    std::optional<CaseFailure> failure;
  };
  std::vector<Slot> slots(manifest.cases.size());

  auto work = [&](std::size_t ci) {
    const ManifestCase& mc = manifest.cases[ci];
    try {
      std::map<std::string, BinaryMask> masks;
      for (const auto& rater : needed) {
        const auto it = mc.mask_paths.find(rater);
        if (it == mc.mask_paths.end()) {
          throw std::runtime_error("no mask for rater " + rater);
        }
        masks.emplace(rater, load_mask(manifest.resolve(it->second)));
      }
      AgreementRow row;
      row.case_id = mc.case_id;
      for (const auto& [rater, mask] : masks) row.volumes_ml[rater] = volume_ml(mask);
      for (const auto& p : table.pairs) {
        row.records[p.id()] = evaluate_pair(masks.at(p.pred), masks.at(p.ref), tol_mm);
      }
      slots[ci].row = std::move(row);
    } catch (const std::exception& e) {
      slots[ci].failure = CaseFailure{mc.case_id, e.what()};
    }
  };

  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(manifest.cases.size())));
  if (workers == 1) {
    for (std::size_t ci = 0; ci < manifest.cases.size(); ++ci) work(ci);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t ci = next.fetch_add(1);
          if (ci >= manifest.cases.size()) return;
          work(ci);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  for (auto& slot : slots) {
    if (slot.row.has_value()) table.rows.push_back(std::move(*slot.row));
    if (slot.failure.has_value()) table.excluded.push_back(std::move(*slot.failure));
  }
  return table;
}

void save_agreement_csv(const std::filesystem::path& path, const AgreementTable& table) {
  auto out = open_out(path);
  out << "case_id";
  for (const auto& p : table.pairs) {
    for (const auto key : kMetricKeys) out << "," << p.id() << "." << key;
  }
  out << "\n";
  for (const auto& row : table.rows) {
    out << csv_quote(row.case_id);
    for (const auto& p : table.pairs) {
      const MetricRecord& rec = row.records.at(p.id());
      for (const auto key : kMetricKeys) {
        const MetricValue& m = metric_by_key(rec, key);
        out << ",";
        if (m.defined()) {
          out << double_repr(*m.value);
        } else {
          out << "NA:" << reason_suffix(m.reason);
        }
      }
    }
    out << "\n";
  }
  if (!out) throw io_error("write failed: " + path.string());
}

AgreementTable load_agreement_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open agreement table: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw format_error(path.string() + ": empty table");
  const std::vector<std::string> header = csv_split(line);
  if (header.empty() || header[0] != "case_id") {
    throw format_error(path.string() + ": first column must be case_id");
  }

  AgreementTable table;
  std::vector<std::pair<std::string, std::string>> columns;  // pair id, metric key
  std::set<std::string> pair_seen;
  for (std::size_t i = 1; i < header.size(); ++i) {
    const std::string& h = header[i];
    const std::size_t dot = h.rfind('.');
    if (dot == std::string::npos) {
      throw format_error(path.string() + ": column '" + h + "' is not <pair>.<metric>");
    }
    const std::string pair_id = h.substr(0, dot);
    const std::string key = h.substr(dot + 1);
    if (std::find(kMetricKeys.begin(), kMetricKeys.end(), key) == kMetricKeys.end()) {
      throw format_error(path.string() + ": unknown metric '" + key + "' in column '" + h + "'");
    }
    columns.emplace_back(pair_id, key);
    if (pair_seen.insert(pair_id).second) {
      const std::size_t sep = pair_id.find("_to_");
      if (sep == std::string::npos) {
        throw format_error(path.string() + ": pair id '" + pair_id + "' is not <pred>_to_<ref>");
      }
      table.pairs.push_back({pair_id.substr(0, sep), pair_id.substr(sep + 4)});
    }
  }

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = csv_split(line);
    if (f.size() != header.size()) {
      throw format_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(header.size()) + " columns, got " +
                         std::to_string(f.size()));
    }
    AgreementRow row;
    row.case_id = f[0];
    for (std::size_t i = 0; i < columns.size(); ++i) {
      const std::string& cell = f[i + 1];
      MetricRecord& rec = row.records[columns[i].first];
      MetricValue m;
      if (cell.rfind("NA", 0) == 0) {
        if (cell == "NA:both-empty") m.reason = EmptyReason::both_empty;
        if (cell == "NA:one-empty") m.reason = EmptyReason::one_empty;
      } else {
        m.value = parse_double(cell, path.string() + ":" + std::to_string(lineno));
      }
      metric_by_key(rec, columns[i].second) = m;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void save_volumes_csv(const std::filesystem::path& path, const AgreementTable& table,
                      const std::vector<std::string>& raters) {
  auto out = open_out(path);
  out << "case_id";
  for (const auto& r : raters) out << "," << csv_quote(r + "_ml");
  out << "\n";
  for (const auto& row : table.rows) {
    out << csv_quote(row.case_id);
    for (const auto& r : raters) {
      const auto it = row.volumes_ml.find(r);
      out << ",";
      if (it != row.volumes_ml.end()) out << double_repr(it->second);
      else out << "NA";
    }
    out << "\n";
  }
  if (!out) throw io_error("write failed: " + path.string());
}

void save_meta_json(const std::filesystem::path& path, const StudyMeta& meta) {
  nlohmann::json j;
  j["roles"] = {{"training_rater", meta.roles.training_rater},
                {"test_raters", meta.roles.test_raters},
                {"model", meta.roles.model}};
  j["raters"] = meta.raters;
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : meta.pairs) j["pairs"].push_back({{"pred", p.pred}, {"ref", p.ref}});
  j["tol_mm"] = meta.tol_mm;
  j["excluded"] = nlohmann::json::array();
  for (const auto& e : meta.excluded) {
    j["excluded"].push_back({{"case_id", e.case_id}, {"reason", e.reason}});
  }
  j["n_cases_evaluated"] = meta.n_cases_evaluated;
  auto out = open_out(path);
  out << j.dump(2) << "\n";
  if (!out) throw io_error("write failed: " + path.string());
}

StudyMeta load_meta_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open meta: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    StudyMeta meta;
    meta.roles.training_rater = j.at("roles").at("training_rater").get<std::string>();
    meta.roles.model = j.at("roles").at("model").get<std::string>();
    meta.roles.test_raters =
        j.at("roles").at("test_raters").get<std::vector<std::string>>();
    meta.raters = j.at("raters").get<std::vector<std::string>>();
    for (const auto& jp : j.at("pairs")) {
      meta.pairs.push_back({jp.at("pred").get<std::string>(), jp.at("ref").get<std::string>()});
    }
    meta.tol_mm = j.at("tol_mm").get<double>();
    for (const auto& je : j.at("excluded")) {
      meta.excluded.push_back(
          {je.at("case_id").get<std::string>(), je.at("reason").get<std::string>()});
    }
    meta.n_cases_evaluated = j.at("n_cases_evaluated").get<int>();
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path.string() + ": invalid meta JSON (" + e.what() + ")");
  }
}

std::vector<PairRho> export_volume_scatter(const AgreementTable& table,
                                           const std::filesystem::path& out_dir) {
  if (table.rows.size() < 3) {
    throw std::invalid_argument("export_volume_scatter: need at least 3 cases");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw io_error("export_volume_scatter: cannot create " + out_dir.string());

  std::vector<PairRho> rhos;
  for (const auto& p : table.pairs) {
    std::vector<double> a, b;
    auto out = open_out(out_dir / ("scatter_" + p.id() + ".csv"));
    out << "case_id,rater_a_ml,rater_b_ml\n";
    for (const auto& row : table.rows) {
      const double va = row.volumes_ml.at(p.pred);
      const double vb = row.volumes_ml.at(p.ref);
      a.push_back(va);
      b.push_back(vb);
      out << csv_quote(row.case_id) << "," << double_repr(va) << "," << double_repr(vb) << "\n";
    }
    if (!out) throw io_error("write failed for scatter of " + p.id());

    PairRho r;
    r.pair_id = p.id();
    r.n = static_cast<int>(a.size());
    try {
      r.rho = spearman_rho(a, b);
    } catch (const std::invalid_argument& e) {
      r.note = e.what();
    }
    rhos.push_back(std::move(r));
  }

  auto out = open_out(out_dir / "spearman.csv");
  out << "pair,n,rho,note\n";
  for (const auto& r : rhos) {
    out << r.pair_id << "," << r.n << ",";
    if (r.rho.has_value()) out << double_repr(*r.rho);
    else out << "NA";
    out << "," << csv_quote(r.note) << "\n";
  }
  if (!out) throw io_error("write failed: spearman.csv");
  return rhos;
}

}  // namespace segeval
