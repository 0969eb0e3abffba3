#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agwm/model.hpp"
#include "agwm/trajectory.hpp"

namespace agwm {

struct EvalOptions {
  RolloutOptions rollout;
  int warmup = 10;
  int horizon = 8;
  int threads = 1;
};

/// Abstract per-episode model protocol used by every metric. The production
/// implementation wraps EpisodeRollout; tests substitute analytic stubs to
/// validate the metric arithmetic independently of the network stack.
class RolloutDriver {
 public:
  virtual ~RolloutDriver() = default;
  virtual void begin(const Trajectory& episode, int episode_index) = 0;
  virtual void posterior_step() = 0;
  virtual std::vector<float> imagine_predict() = 0;
  virtual void imagine_advance(int action) = 0;
  virtual EpisodeRollout::OneStep one_step_prediction(int action) = 0;
  virtual float last_sc_prob() const = 0;
  virtual const std::vector<float>& last_graph_probs() const = 0;
  virtual const std::vector<float>& hidden() const = 0;
};

/// One driver per concurrently evaluated episode.
using DriverFactory = std::function<std::unique_ptr<RolloutDriver>()>;

/// Stale graph sequences for OracleStale rollouts: base-schema affordance
/// readouts recomputed over replayed episodes (per episode, per observation,
/// one byte per bit).
using StaleGraphs = std::vector<std::vector<std::vector<std::uint8_t>>>;

DriverFactory model_driver_factory(const WorldModel<float>& model, const AffordanceSchema& schema,
                                   const RolloutOptions& options,
                                   const StaleGraphs* stale = nullptr);

struct MseReport {
  std::vector<double> per_step;  // raw pixel MSE per imagined step
  double avg = 0.0;
  double degradation_ratio = 0.0;
  int episodes_used = 0;
  int episodes_skipped = 0;
};

/// Imagination MSE: posterior warmup on the first `warmup` transitions, then
/// `horizon` open-loop predictions against ground truth using the episode's
/// recorded actions. Episodes shorter than warmup + horizon - 1 transitions
/// are skipped and counted.
MseReport eval_mse(const DriverFactory& factory, const Dataset& eval_data, const EvalOptions& opts);
MseReport eval_mse(const WorldModel<float>& model, const AffordanceSchema& schema,
                   const Dataset& eval_data, const EvalOptions& opts,
                   const StaleGraphs* stale = nullptr);

struct CdaReport {
  double cda = 0.0;  // fraction of true SC transitions flagged
  double fpr = 0.0;  // fraction of non-SC transitions flagged
  int positives = 0;
  int negatives = 0;
};

/// Classifier-mode CDA: the SC head output at every ground-truth SC
/// transition, thresholded at 0.5, evaluated on teacher-forced posterior
/// states.
CdaReport eval_cda_classifier(const DriverFactory& factory, const Dataset& eval_data,
                              const EvalOptions& opts);
CdaReport eval_cda_classifier(const WorldModel<float>& model, const AffordanceSchema& schema,
                              const Dataset& eval_data, const EvalOptions& opts);

struct ProbeConfig {
  int epochs = 200;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

/// Probe-mode CDA: a logistic probe trained on frozen posterior hidden states
/// from the train split, scored on the eval split's SC decisions.
CdaReport eval_cda_probe(const DriverFactory& factory, const Dataset& train_data,
                         const Dataset& eval_data, const EvalOptions& opts,
                         const ProbeConfig& probe);
CdaReport eval_cda_probe(const WorldModel<float>& model, const AffordanceSchema& schema,
                         const Dataset& train_data, const Dataset& eval_data,
                         const EvalOptions& opts, const ProbeConfig& probe);

/// Next-step affordance accuracy of the graph head under teacher forcing with
/// oracle graph inputs: thresholded predictions vs g_{t+1}, averaged over all
/// dimensions and steps.
double eval_aff_acc(const DriverFactory& factory, const Dataset& eval_data, const EvalOptions& opts);
double eval_aff_acc(const WorldModel<float>& model, const AffordanceSchema& schema,
                    const Dataset& eval_data, const EvalOptions& opts);

/// Per-dimension logistic probes on frozen hidden states, for variants
/// without a graph head.
double eval_aff_acc_probe(const DriverFactory& factory, const Dataset& train_data,
                          const Dataset& eval_data, const EvalOptions& opts,
                          const ProbeConfig& probe);

struct CfGapReport {
  double gap = 0.0;  // mean L2 distance between SC and non-SC one-step predictions
  int decisions = 0;
  int skipped = 0;
};

/// Counterfactual gap: at each ground-truth SC transition, decode the
/// one-step prediction under the SC action and under the first non-SC action
/// at the same state (actions probed in index order against the replayed
/// environment), and measure the L2 distance between the two predictions.
CfGapReport eval_cf_gap(const DriverFactory& factory, const Dataset& eval_data,
                        const EvalOptions& opts);
CfGapReport eval_cf_gap(const WorldModel<float>& model, const AffordanceSchema& schema,
                        const Dataset& eval_data, const EvalOptions& opts);

/// Recomputes base-schema affordance sequences over replayed episodes of a
/// level-5 keydungeon dataset; used as the OracleStale condition.
StaleGraphs stale_graph_sequences(const Dataset& data);

/// Replays an episode's environment states from its seed (datasets are
/// regenerable by construction). Returns one state per observation.
std::vector<EnvState> replay_episode_states(const DatasetManifest& manifest, int episode_index);

struct EvalReport {
  std::string env_name;
  std::string variant;
  std::string graph_source = "predicted";
  bool monotonicity = true;
  std::uint64_t seed = 0;
  MseReport mse;
  std::optional<CdaReport> cda;
  std::string cda_mode;  // "classifier" or "probe"
  std::optional<double> aff_acc;
  std::string aff_acc_mode;  // "head" or "probe"
  std::optional<CfGapReport> cf_gap;

  std::string to_json() const;
  static EvalReport from_json(const std::string& text);
};

struct AblationRow {
  std::string label;
  double mse_avg = 0.0;
  double mse_step1 = 0.0;
  double mse_step8 = 0.0;
  double degradation_ratio = 0.0;
};

/// Table-4 protocol: one trained graph-conditioned checkpoint evaluated under
/// {zeroed, frozen, predicted, oracle} graphs without retraining.
std::vector<AblationRow> ablate_graph_source(const std::filesystem::path& checkpoint,
                                             const std::filesystem::path& data_dir, int threads);

/// Oracle-control protocol on a novel-rule split: {oracle_current,
/// oracle_stale, oracle_zero, self_evolved} degradation ratios.
std::vector<AblationRow> ablate_oracle_control(const std::filesystem::path& checkpoint,
                                               const std::filesystem::path& data_dir, int threads);

/// Monotonicity-constraint protocol: {vanilla, oracle-warmup unconstrained,
/// predicted unconstrained, constrained} degradation ratios from one Vanilla
/// and one graph-conditioned checkpoint.
std::vector<AblationRow> ablate_monotonicity(const std::filesystem::path& vanilla_checkpoint,
                                             const std::filesystem::path& agwm_checkpoint,
                                             const std::filesystem::path& data_dir, int threads);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& file);

struct EvalJob {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;  // expects eval.bin (and train.bin for probes)
  std::vector<std::string> metrics = {"mse", "cda", "affacc", "cfgap"};
  GraphSource graph_source = GraphSource::Predicted;
  bool monotonicity = true;
  bool allow_ood_schema = false;  // permit hash mismatch when dims agree
  int threads = 1;
  std::filesystem::path out_file;
};

EvalReport run_eval_job(const EvalJob& job);

}  // namespace agwm
