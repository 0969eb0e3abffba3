#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agwm/env.hpp"
#include "agwm/schema.hpp"

namespace agwm {

/// One episode. observations has T+1 entries of obs_size floats; actions,
/// sc_labels, rewards and done have T entries; graphs has T+1 entries of
/// schema.dim() bits (one byte per bit in memory).
struct Trajectory {
  std::vector<std::vector<float>> observations;
  std::vector<std::uint8_t> actions;
  std::vector<std::uint8_t> sc_labels;
  std::vector<float> rewards;
  std::vector<std::uint8_t> done;
  std::vector<std::vector<std::uint8_t>> graphs;

  int transitions() const { return static_cast<int>(actions.size()); }
};

struct DatasetManifest {
  std::string env_name;
  std::string schema_hash;
  std::string schema_text;
  int n_episodes = 0;
  std::vector<int> obs_shape;  // {H, W, C}
  int action_count = 0;
  int graph_dim = 0;
  std::uint64_t seed = 0;
  bool small_obs = false;
  std::string split;              // "train" or "eval"
  std::vector<int> kd_levels;     // keydungeon only; needed to replay episodes

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trajectory> episodes;

  int obs_size() const {
    return manifest.obs_shape[0] * manifest.obs_shape[1] * manifest.obs_shape[2];
  }
};

/// Rolls one episode with the scripted policy. The policy noise stream is
/// derived from the episode seed, so collection is order-independent.
Trajectory collect_episode(const EnvSpec& spec, const AffordanceSchema& schema,
                           std::uint64_t episode_seed);

/// Episode seeds for (dataset_seed, split, index); the eval stream is disjoint
/// from train by construction.
std::uint64_t episode_seed(std::uint64_t dataset_seed, const std::string& split, int index);

/// Writes train.bin / eval.bin under out_dir in the packed binary format
/// (magic, JSON manifest, per-episode records; float32 observations, uint8
/// actions/labels, bit-packed graphs). Returns measured SC rates per split.
struct CollectSummary {
  int n_train = 0;
  int n_eval = 0;
  double train_sc_rate = 0.0;
  double eval_sc_rate = 0.0;
};
CollectSummary collect_dataset(const EnvSpec& spec, int n_train, int n_eval, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

void write_dataset(const Dataset& dataset, const std::filesystem::path& file);
Dataset read_dataset(const std::filesystem::path& file);

/// Manifest-only read (no episode payloads).
DatasetManifest read_manifest(const std::filesystem::path& file);

/// Fraction of transitions with sc_label = 1.
double sc_rate(const std::vector<Trajectory>& episodes);

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits);
std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bytes, int n_bits);

}  // namespace agwm
