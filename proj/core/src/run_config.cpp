#include "segeval/run_config.hpp"

#include <cstdlib>

#include <json.hpp>

namespace segeval {

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("SEGEVAL_OUT"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return std::filesystem::path(".");
}

std::string run_config_snapshot_json(const RunConfig& config) {
  nlohmann::json j;
  j["tol_mm"] = config.tol_mm;
  j["margin_bounded"] = config.margins.bounded_unit;
  j["margin_avd_ml"] = config.margins.avd_ml;
  j["margin_hd95_mm"] = config.margins.hd95_mm;
  j["alpha"] = config.alpha;
  j["n_resamples"] = config.n_resamples;
  j["split"] = {{"n_ids", config.split.n_ids},
                {"n_test", config.split.n_test},
                {"k_folds", config.split.k_folds}};
  return j.dump();
}

}  // namespace segeval
