#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agwm/layers.hpp"
#include "agwm/schema.hpp"
#include "agwm/trajectory.hpp"

namespace agwm {

enum class Variant { Vanilla, SCOnly, AGWM };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Where the affordance graph fed to the model comes from at evaluation time.
/// Predicted is the self-evolved default; Oracle feeds ground truth at every
/// step; Frozen pins the episode-start graph; Zeroed feeds the all-zero
/// vector; OracleStale feeds an externally supplied alternative sequence.
enum class GraphSource { Predicted, Oracle, Frozen, Zeroed, OracleStale };

std::string to_string(GraphSource source);
GraphSource graph_source_from_string(const std::string& name);

struct ModelConfig {
  int obs_h = 0;
  int obs_w = 0;
  int obs_c = 3;
  int action_count = 0;
  int graph_dim = 0;  // consulted only by the AGWM variant
  int latent_dim = 256;
  int gru_hidden = 512;
  int head_hidden = 256;
  int mlp_hidden = 512;
  int graph_embed_dim = 32;
  float threshold = 0.5f;
  std::array<int, 3> conv_channels = {32, 64, 64};
  int conv_kernel = 3;
  int conv_stride = 2;
  // Graph routing. Disabling the decoder path reproduces the
  // "passive graph input" failure mode; disabling both isolates the head-only
  // gradient pathway.
  bool graph_to_gru = true;
  bool graph_to_decoder = true;

  int obs_size() const { return obs_h * obs_w * obs_c; }
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// GRU-based world model with optional SC-classifier and affordance-graph
/// heads. The three variants share one backbone:
///   z_t = Enc(o_t)
///   h_t = GRU([z_t, a_t (, e_t)], h_{t-1})        e_t = GraphEnc(g_t)
///   z^_{t+1} = f_dyn(h_t)
///   o^_{t+1} = Dec([z^_{t+1} (, e_{t+1})])
///   p^_sc    = sigmoid(f_sc([h_t, a_t (, e_t)]))   (SCOnly, AGWM)
///   g^_{t+1} = sigmoid(f_graph([h_t, a_t, e_t]))   (AGWM)
template <typename T>
class WorldModel {
 public:
  WorldModel(Variant variant, ModelConfig config, std::uint64_t seed);

  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }
  std::size_t parameter_count() const { return params_.parameter_count(); }

  bool has_sc_head() const { return variant_ != Variant::Vanilla; }
  bool has_graph() const { return variant_ == Variant::AGWM; }
  int gru_input_dim() const;
  int head_input_dim() const;

  /// obs_rows is [N, H*W*C]; returns [N, latent].
  nn::Var<T> encode(const nn::Var<T>& obs_rows) const;
  /// g_rows is [N, graph_dim]; returns [N, d_e].
  nn::Var<T> embed_graph(const nn::Var<T>& g_rows) const;
  /// One recurrent step; e is consulted only when the variant has a graph and
  /// graph_to_gru is set.
  nn::Var<T> core_step(const nn::Var<T>& h, const nn::Var<T>& z, const nn::Var<T>& a,
                       const nn::Var<T>& e) const;
  nn::Var<T> predict_latent(const nn::Var<T>& h) const;
  nn::Var<T> predict_sc(const nn::Var<T>& h, const nn::Var<T>& a, const nn::Var<T>& e) const;
  nn::Var<T> predict_graph(const nn::Var<T>& h, const nn::Var<T>& a, const nn::Var<T>& e) const;
  nn::Var<T> decode(const nn::Var<T>& z_hat, const nn::Var<T>& e_next) const;

 private:
  Variant variant_;
  ModelConfig cfg_;
  nn::ParameterSet<T> params_;
  nn::Conv2d<T> conv1_, conv2_, conv3_;
  nn::Linear<T> enc_fc_;
  nn::Linear<T> graph_enc_;
  nn::GRUCell<T> gru_;
  nn::Mlp2<T> dyn_;
  nn::Mlp2<T> dec_;
  nn::Mlp2<T> sc_head_;
  nn::Mlp2<T> graph_head_;
};

nn::TensorData<float> one_hot(int index, int count);

struct CheckpointManifest {
  std::string variant;
  std::string env_name;
  std::string schema_hash;
  std::string schema_text;
  std::vector<int> obs_shape;
  int action_count = 0;
  std::uint64_t seed = 0;
  ModelConfig config;
};

void save_checkpoint(const WorldModel<float>& model, const CheckpointManifest& manifest,
                     const std::filesystem::path& file);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& file);
/// Rebuilds the model described by the manifest and loads its weights.
std::pair<WorldModel<float>, CheckpointManifest> load_checkpoint(const std::filesystem::path& file);

struct RolloutOptions {
  GraphSource warmup_source = GraphSource::Predicted;
  GraphSource imagine_source = GraphSource::Predicted;
  bool monotonicity = true;

  static RolloutOptions uniform(GraphSource source, bool monotone = true) {
    return RolloutOptions{source, source, monotone};
  }
};

/// Recurrent state carried through posterior warmup and imagination.
struct ModelState {
  nn::TensorData<float> h;       // [1, gru_hidden]
  nn::TensorData<float> z_pred;  // [1, latent], f_dyn output for the next step
  GraphState g;                  // current graph estimate (AGWM only)
  int t = 0;                     // transitions consumed / imagined so far
};

/// Drives one episode through a model: teacher-forced posterior steps over
/// ground-truth observations, then open-loop imagination that feeds the
/// model its own latent and (for AGWM) its own evolved graph. All work runs
/// gradient-free; instances are independent, so episodes may run on separate
/// threads against one shared model.
class EpisodeRollout {
 public:
  EpisodeRollout(const WorldModel<float>& model, const AffordanceSchema& schema,
                 RolloutOptions options);

  /// stale_graphs, when provided, supplies the OracleStale sequence (one
  /// packed bit vector per observation).
  void begin(const Trajectory& episode,
             const std::vector<std::vector<std::uint8_t>>* stale_graphs = nullptr);

  /// Consumes transition t (true observation + action). Records the SC and
  /// graph head outputs for metric readouts.
  void posterior_step();

  /// Prediction of the observation at the current time from the rollout
  /// state; does not advance.
  std::vector<float> imagine_predict();

  /// Advances the rollout state with an action, feeding the model its own
  /// z_hat (and evolved graph).
  void imagine_advance(int action);

  struct OneStep {
    std::vector<float> obs_pred;
    float sc_prob = 0.0f;
  };
  /// Counterfactual branch: one-step prediction from the current posterior
  /// under `action`, consuming the true observation at the current time.
  /// Does not mutate the rollout state.
  OneStep one_step_prediction(int action) const;

  int t() const { return state_.t; }
  float last_sc_prob() const { return last_sc_prob_; }
  const std::vector<float>& last_graph_probs() const { return last_graph_probs_; }
  const std::vector<float>& hidden() const { return state_.h.v; }
  const GraphState& graph() const { return state_.g; }

 private:
  GraphState advance_graph(GraphSource source, const GraphState& current,
                           const std::vector<float>& probs, int next_t) const;
  nn::Var<float> embed_current_graph() const;

  const WorldModel<float>& model_;
  const AffordanceSchema& schema_;
  RolloutOptions options_;
  const Trajectory* episode_ = nullptr;
  const std::vector<std::vector<std::uint8_t>>* stale_graphs_ = nullptr;
  ModelState state_;
  float last_sc_prob_ = 0.0f;
  std::vector<float> last_graph_probs_;
};

}  // namespace agwm
