#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsedm/diffusion.hpp"
#include "sparsedm/model.hpp"
#include "sparsedm/trainer.hpp"

namespace sparsedm {

/// Every knob of a run. Loaded from a JSON file (unknown keys rejected), then
/// overridden by command-line flags, then validated before any compute.
struct RunConfig {
  std::string data = "gauss8";
  std::uint64_t seed = 0;

  // training
  int steps = 2000;
  int batch_size = 256;
  double lr = 0.1;
  std::string lr_schedule = "constant";
  double lambda_w = 1e-4;
  double lambda_dense = 0.5;
  double lambda_diff = 0.5;
  int mask_refresh = 1;
  int teacher_pool = 2048;

  // mask schedule
  std::string schedule = "fixed";
  std::vector<std::string> patterns;  // empty: use the student's own pattern
  int switch_interval = 1000;

  // diffusion and model
  int time_steps = kDefaultSteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  int hidden = 128;
  int embed_dim = 64;

  // sampling / evaluation
  int n = 2000;

  // sweep
  std::vector<std::string> sweep_patterns;  // empty: the default ten
  // bench
  std::string bench_sizes;                  // empty: defaults
  int bench_reps = 9;

  static RunConfig from_json(const nlohmann::ordered_json& j);
  static RunConfig from_file(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  void validate() const;

  TrainConfig train_config() const;
  NoiseSchedule noise_schedule() const;
  Architecture architecture() const;
  ToyDataset dataset() const;
  std::vector<NMPattern> parsed_patterns() const;
  std::vector<NMPattern> parsed_sweep_patterns() const;
  /// Mask schedule for a run of `steps` steps; `fallback` when no patterns are set.
  MaskSchedule mask_schedule(const NMPattern& fallback) const;
};

/// Worker cap from SPARSEDM_THREADS (default: hardware concurrency, at least 1).
unsigned worker_threads();

}  // namespace sparsedm
