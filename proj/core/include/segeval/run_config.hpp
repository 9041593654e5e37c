#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "segeval/stats.hpp"

namespace segeval {

struct SplitConfig {
  int n_ids = 232;
  int n_test = 32;
  int k_folds = 5;
};

// Study configuration. Every default is the published protocol value; the
// seed has deliberately no default so runs are always explicitly seeded.
struct RunConfig {
  double tol_mm = 5.0;
  NonInferiorityMargin margins;  // 0.2 unit / 3 ml / 3 mm
  double alpha = 0.05;
  int n_resamples = 10000;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;
  int jobs = 1;
  SplitConfig split;
};

// Default output directory from the SEGEVAL_OUT environment variable, falling
// back to the current directory.
std::filesystem::path default_out_dir();

// Canonical JSON of the protocol parameters (seed and paths excluded), used
// to pin the defaults in tests.
std::string run_config_snapshot_json(const RunConfig& config);

}  // namespace segeval
