#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "agwm/model.hpp"
#include "agwm/optim.hpp"
#include "agwm/trajectory.hpp"

namespace agwm {

struct TrainConfig {
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  float lambda_sc = 1.0f;
  float lambda_graph = 2.0f;
  float pos_weight = 5.0f;
  int seq_len = 16;
  int batch_size = 16;  // sequence windows per batch
  int epochs = 100;
  double data_fraction = 1.0;
  std::uint64_t seed = 42;
};

/// Model hyperparameters that are not derivable from a dataset manifest.
struct ModelHyper {
  int latent_dim = 256;
  int graph_embed_dim = 32;
  float threshold = 0.5f;
  bool graph_to_gru = true;
  bool graph_to_decoder = true;
};

ModelConfig make_model_config(const DatasetManifest& manifest, const ModelHyper& hyper);

/// A batch of sequence windows in time-major stacked-row layout: row t*B + b
/// holds window b at step t.
template <typename T>
struct WindowBatch {
  int batch = 0;
  int seq_len = 0;
  nn::TensorData<T> obs;      // [(T+1)*B, obs_size]
  nn::TensorData<T> actions;  // [T*B, action_count], one-hot
  nn::TensorData<T> graphs;   // [(T+1)*B, graph_dim]; empty for variants without a graph
  nn::TensorData<T> sc;       // [T*B, 1]
};

/// (episode index, start offset) pairs; each window spans seq_len transitions.
using WindowIndex = std::vector<std::pair<int, int>>;

template <typename T>
WindowBatch<T> make_batch(const Dataset& data, const WindowIndex& windows, int seq_len,
                          bool with_graphs);

template <typename T>
struct LossGraph {
  nn::Var<T> total, recon, dyn, sc, graph;
  nn::Var<T> sc_probs;     // [T*B, 1], defined for SC-capable variants
  nn::Var<T> graph_probs;  // [T*B, d], defined for the graph variant
};

/// Builds the full training loss for one batch:
///   L = L_recon + L_dyn + lambda_SC * L_SC + lambda_graph * L_graph
/// with variant-inapplicable terms absent. The dynamics target is the encoder
/// output with gradients stopped; teacher forcing feeds ground-truth graphs.
template <typename T>
LossGraph<T> compute_losses(const WorldModel<T>& model, const WindowBatch<T>& batch,
                            const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_recon = 0.0;
  double loss_dyn = 0.0;
  double loss_sc = 0.0;
  double loss_graph = 0.0;
  double sc_precision = 0.0;
  double sc_recall = 0.0;
  double graph_acc = 0.0;
  int batches = 0;

  std::string to_json() const;
};

/// Episodes used under a data fraction: the first ceil(f*n) indices of a
/// shuffle seeded by the dataset seed, so every variant trains on the same
/// subset.
std::vector<int> data_fraction_subset(int n_episodes, double fraction, std::uint64_t dataset_seed);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Full training loop: shuffled non-overlapping windows with per-epoch random
/// episode offsets, AdamW with global-norm clipping. Deterministic given
/// (config, dataset, model seed).
std::vector<EpochLog> train_model(WorldModel<float>& model, const Dataset& data,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Loads train.bin from data_dir, trains a fresh model and writes
/// checkpoint.bin plus metrics.jsonl under out_dir.
struct TrainingJob {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  Variant variant = Variant::Vanilla;
  TrainConfig train;
  ModelHyper hyper;
};

void run_training_job(const TrainingJob& job);

}  // namespace agwm
