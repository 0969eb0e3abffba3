#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agwm/eval.hpp"
#include "agwm/train.hpp"

namespace agwm {

/// Experiment-level configuration: serialized as a sectioned key=value text
/// file with a schema_version header. Unknown sections or keys are rejected.
struct ExperimentConfig {
  int schema_version = 1;

  // [experiment]
  std::string env = "relay";
  std::vector<std::string> variants = {"vanilla", "sc_only", "agwm"};
  std::vector<std::uint64_t> seeds = {42, 123, 456};
  bool small_obs = false;

  // [data]
  int n_train = 500;
  int n_eval = 100;
  std::uint64_t data_seed = 7;
  double data_fraction = 1.0;

  // [train]
  TrainConfig train;

  // [model]
  ModelHyper model;

  // [eval]
  std::string graph_source = "predicted";
  bool monotonicity = true;
  int warmup = 10;
  int horizon = 8;
  int threads = 1;

  std::string serialize() const;
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  /// Reduced-scale profile used for CPU-budget runs: half-resolution
  /// observations, smaller splits, fewer epochs.
  static ExperimentConfig desk_profile();
  /// Micro profile for integration tests: a couple of episodes and epochs.
  static ExperimentConfig smoke_profile();
};

}  // namespace agwm
