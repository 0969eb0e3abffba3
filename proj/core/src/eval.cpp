#include "agwm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "agwm/errors.hpp"
#include "agwm/optim.hpp"
#include "agwm/train.hpp"

namespace agwm {

namespace {

using json = nlohmann::json;
using nn::TensorData;
using nn::Var;

class ModelDriver final : public RolloutDriver {
 public:
  ModelDriver(const WorldModel<float>& model, const AffordanceSchema& schema,
              const RolloutOptions& options, const StaleGraphs* stale)
      : rollout_(model, schema, options), stale_(stale) {}

  void begin(const Trajectory& episode, int episode_index) override {
    const std::vector<std::vector<std::uint8_t>>* stale_seq = nullptr;
    if (stale_) stale_seq = &(*stale_)[static_cast<std::size_t>(episode_index)];
    rollout_.begin(episode, stale_seq);
  }
  void posterior_step() override { rollout_.posterior_step(); }
  std::vector<float> imagine_predict() override { return rollout_.imagine_predict(); }
  void imagine_advance(int action) override { rollout_.imagine_advance(action); }
  EpisodeRollout::OneStep one_step_prediction(int action) override {
    return rollout_.one_step_prediction(action);
  }
  float last_sc_prob() const override { return rollout_.last_sc_prob(); }
  const std::vector<float>& last_graph_probs() const override {
    return rollout_.last_graph_probs();
  }
  const std::vector<float>& hidden() const override { return rollout_.hidden(); }

 private:
  EpisodeRollout rollout_;
  const StaleGraphs* stale_;
};

/// Runs fn(episode_index) across a pool; results must be written to
/// index-addressed slots so that the reduction order is deterministic.
void for_each_episode(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, threads);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += threads) fn(i);
    });
  for (auto& t : pool) t.join();
}

bool cells_adjacent(const Cell& a, const Cell& b) {
  return std::abs(a.r - b.r) + std::abs(a.c - b.c) == 1;
}

/// Logistic probe on fixed features; returns eval-split predictions.
std::vector<float> fit_probe_and_predict(const std::vector<float>& train_x,
                                         const std::vector<float>& train_y,
                                         const std::vector<float>& eval_x, int dim,
                                         const ProbeConfig& cfg) {
  const int n = static_cast<int>(train_y.size());
  Rng rng(Rng::derive(cfg.seed, 0x505242ULL, 0));
  nn::ParameterSet<float> params;
  nn::Linear<float> probe(params, "probe", dim, 1, rng);
  nn::AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = 0.0;
  oc.clip_norm = 0.0;
  nn::AdamW<float> opt(params, oc);
  auto x = Var<float>::constant(TensorData<float>({n, dim}, train_x));
  TensorData<float> y({n, 1}, train_y);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto p = nn::sigmoid(probe.forward(x));
    auto loss = nn::bce_weighted(p, y, 1.0f);
    params.zero_grad();
    nn::backward(loss);
    opt.step(params);
  }
  nn::NoGradGuard no_grad;
  const int m = static_cast<int>(eval_x.size()) / dim;
  auto p = nn::sigmoid(probe.forward(Var<float>::constant(TensorData<float>({m, dim}, eval_x))));
  return p.value().v;
}

struct PosteriorScan {
  std::vector<float> hidden;       // [steps, hidden_dim]
  std::vector<float> sc_probs;     // [steps]
  std::vector<float> graph_probs;  // [steps, d]
  std::vector<std::uint8_t> sc_labels;
  std::vector<std::uint8_t> graph_next;  // [steps, d]
  int hidden_dim = 0;
  int graph_dim = 0;
};

/// Teacher-forced pass over a whole split, concatenating per-step records in
/// episode order.
PosteriorScan posterior_scan(const DriverFactory& factory, const Dataset& data, int threads,
                             bool want_graph) {
  const int n = static_cast<int>(data.episodes.size());
  std::vector<PosteriorScan> slots(static_cast<std::size_t>(n));
  for_each_episode(n, threads, [&](int i) {
    auto driver = factory();
    const auto& ep = data.episodes[static_cast<std::size_t>(i)];
    auto& slot = slots[static_cast<std::size_t>(i)];
    driver->begin(ep, i);
    for (int t = 0; t < ep.transitions(); ++t) {
      driver->posterior_step();
      const auto& h = driver->hidden();
      slot.hidden_dim = static_cast<int>(h.size());
      slot.hidden.insert(slot.hidden.end(), h.begin(), h.end());
      slot.sc_probs.push_back(driver->last_sc_prob());
      slot.sc_labels.push_back(ep.sc_labels[static_cast<std::size_t>(t)]);
      if (want_graph) {
        const auto& g = driver->last_graph_probs();
        slot.graph_dim = static_cast<int>(g.size());
        slot.graph_probs.insert(slot.graph_probs.end(), g.begin(), g.end());
        const auto& target = ep.graphs[static_cast<std::size_t>(t + 1)];
        slot.graph_next.insert(slot.graph_next.end(), target.begin(), target.end());
      }
    }
  });
  PosteriorScan merged;
  for (const auto& slot : slots) {
    merged.hidden_dim = std::max(merged.hidden_dim, slot.hidden_dim);
    merged.graph_dim = std::max(merged.graph_dim, slot.graph_dim);
    merged.hidden.insert(merged.hidden.end(), slot.hidden.begin(), slot.hidden.end());
    merged.sc_probs.insert(merged.sc_probs.end(), slot.sc_probs.begin(), slot.sc_probs.end());
    merged.sc_labels.insert(merged.sc_labels.end(), slot.sc_labels.begin(), slot.sc_labels.end());
    merged.graph_probs.insert(merged.graph_probs.end(), slot.graph_probs.begin(),
                              slot.graph_probs.end());
    merged.graph_next.insert(merged.graph_next.end(), slot.graph_next.begin(),
                             slot.graph_next.end());
  }
  return merged;
}

CdaReport cda_from_predictions(const std::vector<std::uint8_t>& labels,
                               const std::vector<float>& probs) {
  CdaReport report;
  long flagged_pos = 0, flagged_neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool flag = probs[i] >= 0.5f;
    if (labels[i]) {
      ++report.positives;
      flagged_pos += flag;
    } else {
      ++report.negatives;
      flagged_neg += flag;
    }
  }
  if (report.positives == 0) throw DataError("evaluation split contains no SC events");
  report.cda = static_cast<double>(flagged_pos) / report.positives;
  report.fpr = report.negatives > 0 ? static_cast<double>(flagged_neg) / report.negatives : 0.0;
  return report;
}

}  // namespace

DriverFactory model_driver_factory(const WorldModel<float>& model, const AffordanceSchema& schema,
                                   const RolloutOptions& options, const StaleGraphs* stale) {
  return [&model, &schema, options, stale]() {
    return std::make_unique<ModelDriver>(model, schema, options, stale);
  };
}

MseReport eval_mse(const DriverFactory& factory, const Dataset& eval_data, const EvalOptions& opts) {
  const int n = static_cast<int>(eval_data.episodes.size());
  const int needed = opts.warmup + opts.horizon - 1;
  if (opts.horizon < 1) throw UsageError("imagination horizon must be >= 1");
  MseReport report;
  report.per_step.assign(static_cast<std::size_t>(opts.horizon), 0.0);
  std::vector<std::vector<double>> slots(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> used(static_cast<std::size_t>(n), 0);
  for_each_episode(n, opts.threads, [&](int i) {
    const auto& ep = eval_data.episodes[static_cast<std::size_t>(i)];
    if (ep.transitions() < needed) return;
    auto driver = factory();
    driver->begin(ep, i);
    for (int t = 0; t < opts.warmup; ++t) driver->posterior_step();
    std::vector<double> per_step(static_cast<std::size_t>(opts.horizon), 0.0);
    for (int k = 0; k < opts.horizon; ++k) {
      const int target_t = opts.warmup + k;
      if (k > 0) driver->imagine_advance(ep.actions[static_cast<std::size_t>(target_t - 1)]);
      const auto pred = driver->imagine_predict();
      const auto& truth = ep.observations[static_cast<std::size_t>(target_t)];
      if (pred.size() != truth.size()) throw DataError("prediction size mismatch in eval_mse");
      double err = 0.0;
      for (std::size_t j = 0; j < pred.size(); ++j) {
        const double diff = static_cast<double>(pred[j]) - static_cast<double>(truth[j]);
        err += diff * diff;
      }
      per_step[static_cast<std::size_t>(k)] = err / static_cast<double>(pred.size());
    }
    slots[static_cast<std::size_t>(i)] = std::move(per_step);
    used[static_cast<std::size_t>(i)] = 1;
  });
  for (int i = 0; i < n; ++i) {
    if (!used[static_cast<std::size_t>(i)]) {
      ++report.episodes_skipped;
      continue;
    }
    ++report.episodes_used;
    for (int k = 0; k < opts.horizon; ++k)
      report.per_step[static_cast<std::size_t>(k)] += slots[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }
  if (report.episodes_used == 0) throw DataError("no evaluation episodes long enough for a rollout");
  for (auto& v : report.per_step) v /= report.episodes_used;
  double total = 0.0;
  for (const double v : report.per_step) total += v;
  report.avg = total / static_cast<double>(opts.horizon);
  report.degradation_ratio =
      report.per_step.front() > 0.0 ? report.per_step.back() / report.per_step.front() : 0.0;
  return report;
}

MseReport eval_mse(const WorldModel<float>& model, const AffordanceSchema& schema,
                   const Dataset& eval_data, const EvalOptions& opts, const StaleGraphs* stale) {
  return eval_mse(model_driver_factory(model, schema, opts.rollout, stale), eval_data, opts);
}

CdaReport eval_cda_classifier(const DriverFactory& factory, const Dataset& eval_data,
                              const EvalOptions& opts) {
  const auto scan = posterior_scan(factory, eval_data, opts.threads, false);
  return cda_from_predictions(scan.sc_labels, scan.sc_probs);
}

CdaReport eval_cda_classifier(const WorldModel<float>& model, const AffordanceSchema& schema,
                              const Dataset& eval_data, const EvalOptions& opts) {
  return eval_cda_classifier(model_driver_factory(model, schema, opts.rollout), eval_data, opts);
}

CdaReport eval_cda_probe(const DriverFactory& factory, const Dataset& train_data,
                         const Dataset& eval_data, const EvalOptions& opts,
                         const ProbeConfig& probe) {
  const auto train_scan = posterior_scan(factory, train_data, opts.threads, false);
  const auto eval_scan = posterior_scan(factory, eval_data, opts.threads, false);
  std::vector<float> train_y(train_scan.sc_labels.begin(), train_scan.sc_labels.end());
  const auto preds = fit_probe_and_predict(train_scan.hidden, train_y, eval_scan.hidden,
                                           train_scan.hidden_dim, probe);
  return cda_from_predictions(eval_scan.sc_labels, preds);
}

CdaReport eval_cda_probe(const WorldModel<float>& model, const AffordanceSchema& schema,
                         const Dataset& train_data, const Dataset& eval_data,
                         const EvalOptions& opts, const ProbeConfig& probe) {
  return eval_cda_probe(model_driver_factory(model, schema, opts.rollout), train_data, eval_data,
                        opts, probe);
}

double eval_aff_acc(const DriverFactory& factory, const Dataset& eval_data,
                    const EvalOptions& opts) {
  const auto scan = posterior_scan(factory, eval_data, opts.threads, true);
  if (scan.graph_next.empty()) throw DataError("affordance accuracy needs graph predictions");
  long correct = 0;
  for (std::size_t i = 0; i < scan.graph_next.size(); ++i) {
    const bool pred = scan.graph_probs[i] >= 0.5f;
    correct += pred == static_cast<bool>(scan.graph_next[i]) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(scan.graph_next.size());
}

double eval_aff_acc(const WorldModel<float>& model, const AffordanceSchema& schema,
                    const Dataset& eval_data, const EvalOptions& opts) {
  // Teacher-forced with oracle graph inputs, matching the training condition.
  return eval_aff_acc(model_driver_factory(model, schema, RolloutOptions::uniform(GraphSource::Oracle)),
                      eval_data, opts);
}

double eval_aff_acc_probe(const DriverFactory& factory, const Dataset& train_data,
                          const Dataset& eval_data, const EvalOptions& opts,
                          const ProbeConfig& probe) {
  const AffordanceSchema schema = AffordanceSchema::parse(eval_data.manifest.schema_text);
  const int d = schema.dim();
  auto collect_targets = [&](const Dataset& data) {
    std::vector<std::uint8_t> out;
    for (const auto& ep : data.episodes)
      for (int t = 1; t <= ep.transitions(); ++t)
        out.insert(out.end(), ep.graphs[static_cast<std::size_t>(t)].begin(),
                   ep.graphs[static_cast<std::size_t>(t)].end());
    return out;
  };
  const auto train_scan = posterior_scan(factory, train_data, opts.threads, false);
  const auto eval_scan = posterior_scan(factory, eval_data, opts.threads, false);
  const auto train_g = collect_targets(train_data);
  const auto eval_g = collect_targets(eval_data);
  const std::size_t train_steps = train_scan.sc_labels.size();
  const std::size_t eval_steps = eval_scan.sc_labels.size();
  long correct = 0;
  for (int dim = 0; dim < d; ++dim) {
    std::vector<float> train_y(train_steps);
    for (std::size_t i = 0; i < train_steps; ++i)
      train_y[i] = static_cast<float>(train_g[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(dim)]);
    ProbeConfig cfg = probe;
    cfg.seed = Rng::derive(probe.seed, 0x414441ULL, static_cast<std::uint64_t>(dim));
    const auto preds = fit_probe_and_predict(train_scan.hidden, train_y, eval_scan.hidden,
                                             train_scan.hidden_dim, cfg);
    for (std::size_t i = 0; i < eval_steps; ++i) {
      const bool pred = preds[i] >= 0.5f;
      const bool truth = eval_g[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(dim)];
      correct += pred == truth ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / (static_cast<double>(eval_steps) * d);
}

CfGapReport eval_cf_gap(const DriverFactory& factory, const Dataset& eval_data,
                        const EvalOptions& opts) {
  const EnvSpec spec = [&] {
    EnvSpec s = make_spec(env_from_string(eval_data.manifest.env_name), eval_data.manifest.small_obs);
    if (!eval_data.manifest.kd_levels.empty()) s.kd_levels = eval_data.manifest.kd_levels;
    return s;
  }();
  const AffordanceSchema schema = build_schema(spec);
  const int n = static_cast<int>(eval_data.episodes.size());
  std::vector<double> gap_slots(static_cast<std::size_t>(n), 0.0);
  std::vector<int> count_slots(static_cast<std::size_t>(n), 0);
  std::vector<int> skip_slots(static_cast<std::size_t>(n), 0);
  for_each_episode(n, opts.threads, [&](int i) {
    const auto& ep = eval_data.episodes[static_cast<std::size_t>(i)];
    const auto states = replay_episode_states(eval_data.manifest, i);
    auto driver = factory();
    driver->begin(ep, i);
    for (int t = 0; t < ep.transitions(); ++t) {
      if (ep.sc_labels[static_cast<std::size_t>(t)]) {
        // Find the lowest-index action that does not trigger an SC event here.
        int non_sc_action = -1;
        for (int a = 0; a < spec.action_count; ++a) {
          if (env_step(spec, schema, states[static_cast<std::size_t>(t)], a).sc_event == 0) {
            non_sc_action = a;
            break;
          }
        }
        if (non_sc_action < 0) {
          ++skip_slots[static_cast<std::size_t>(i)];
        } else {
          const auto sc_pred =
              driver->one_step_prediction(ep.actions[static_cast<std::size_t>(t)]);
          const auto non_pred = driver->one_step_prediction(non_sc_action);
          double sq = 0.0;
          for (std::size_t j = 0; j < sc_pred.obs_pred.size(); ++j) {
            const double diff = static_cast<double>(sc_pred.obs_pred[j]) -
                                static_cast<double>(non_pred.obs_pred[j]);
            sq += diff * diff;
          }
          gap_slots[static_cast<std::size_t>(i)] += std::sqrt(sq);
          ++count_slots[static_cast<std::size_t>(i)];
        }
      }
      driver->posterior_step();
    }
  });
  CfGapReport report;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    total += gap_slots[static_cast<std::size_t>(i)];
    report.decisions += count_slots[static_cast<std::size_t>(i)];
    report.skipped += skip_slots[static_cast<std::size_t>(i)];
  }
  if (report.decisions == 0) throw DataError("no usable SC decision points for the CF gap");
  report.gap = total / report.decisions;
  return report;
}

CfGapReport eval_cf_gap(const WorldModel<float>& model, const AffordanceSchema& schema,
                        const Dataset& eval_data, const EvalOptions& opts) {
  return eval_cf_gap(model_driver_factory(model, schema, opts.rollout), eval_data, opts);
}

std::vector<EnvState> replay_episode_states(const DatasetManifest& manifest, int episode_index) {
  EnvSpec spec = make_spec(env_from_string(manifest.env_name), manifest.small_obs);
  if (!manifest.kd_levels.empty()) spec.kd_levels = manifest.kd_levels;
  const AffordanceSchema schema = build_schema(spec);
  const std::uint64_t seed = episode_seed(manifest.seed, manifest.split, episode_index);
  EnvState state = env_reset(spec, seed);
  Rng policy_rng(Rng::derive(seed, 0x504f4cULL, 0));
  std::vector<EnvState> states;
  states.push_back(state);
  for (int t = 0; t < spec.max_episode_len; ++t) {
    const int action = scripted_policy(spec, state, policy_rng);
    StepResult result = env_step(spec, schema, state, action);
    state = std::move(result.state);
    states.push_back(state);
  }
  return states;
}

StaleGraphs stale_graph_sequences(const Dataset& data) {
  if (data.manifest.env_name != "keydungeon" || data.manifest.kd_levels != std::vector<int>{5})
    throw DataError("stale graphs are defined for the level-5 keydungeon split");
  const AffordanceSchema base = schema_keydungeon();
  StaleGraphs out;
  out.reserve(data.episodes.size());
  for (int i = 0; i < static_cast<int>(data.episodes.size()); ++i) {
    const auto states = replay_episode_states(data.manifest, i);
    std::vector<std::vector<std::uint8_t>> seq;
    seq.reserve(states.size());
    // Training-time (single key/door) affordance readout applied to the
    // novel-rule episode: tracks only the first key/door pair.
    bool found = false, reached = false;
    for (const auto& state : states) {
      if (!state.key_cells.empty()) {
        if (state.agent == state.key_cells[0] || state.key_held[0]) found = true;
        if (cells_adjacent(state.agent, state.door_cells[0])) reached = true;
      }
      std::vector<std::uint8_t> active = {
          static_cast<std::uint8_t>(found ? 1 : 0), state.key_held.empty() ? std::uint8_t(0) : state.key_held[0],
          static_cast<std::uint8_t>(reached ? 1 : 0),
          state.door_open.empty() ? std::uint8_t(0) : state.door_open[0],
          static_cast<std::uint8_t>(state.reached_goal ? 1 : 0)};
      seq.push_back(graph_from_node_active(base, std::move(active)).packed());
    }
    out.push_back(std::move(seq));
  }
  return out;
}

namespace {

AblationRow row_from_mse(const std::string& label, const MseReport& mse) {
  AblationRow row;
  row.label = label;
  row.mse_avg = mse.avg;
  row.mse_step1 = mse.per_step.front();
  row.mse_step8 = mse.per_step.back();
  row.degradation_ratio = mse.degradation_ratio;
  return row;
}

}  // namespace

std::vector<AblationRow> ablate_graph_source(const std::filesystem::path& checkpoint,
                                             const std::filesystem::path& data_dir, int threads) {
  auto [model, ck] = load_checkpoint(checkpoint);
  if (model.variant() != Variant::AGWM)
    throw DataError("the graph-source ablation needs a graph-conditioned checkpoint");
  const Dataset eval_data = read_dataset(data_dir / "eval.bin");
  const AffordanceSchema schema = AffordanceSchema::parse(eval_data.manifest.schema_text);
  std::vector<AblationRow> rows;
  for (const GraphSource source :
       {GraphSource::Zeroed, GraphSource::Frozen, GraphSource::Predicted, GraphSource::Oracle}) {
    EvalOptions opts;
    opts.rollout = RolloutOptions::uniform(source);
    opts.threads = threads;
    rows.push_back(row_from_mse(to_string(source), eval_mse(model, schema, eval_data, opts)));
  }
  return rows;
}

std::vector<AblationRow> ablate_oracle_control(const std::filesystem::path& checkpoint,
                                               const std::filesystem::path& data_dir, int threads) {
  auto [model, ck] = load_checkpoint(checkpoint);
  if (model.variant() != Variant::AGWM)
    throw DataError("the oracle-control ablation needs a graph-conditioned checkpoint");
  const Dataset eval_data = read_dataset(data_dir / "eval.bin");
  const AffordanceSchema schema = AffordanceSchema::parse(eval_data.manifest.schema_text);
  const AffordanceSchema trained = AffordanceSchema::parse(ck.schema_text);
  if (trained.dim() != schema.dim())
    throw DataError("schema-incompatible checkpoint: graph dimensions differ");
  const StaleGraphs stale = stale_graph_sequences(eval_data);
  std::vector<AblationRow> rows;
  struct Condition {
    std::string label;
    GraphSource source;
  };
  for (const auto& [label, source] :
       std::vector<Condition>{{"oracle_current", GraphSource::Oracle},
                              {"oracle_stale", GraphSource::OracleStale},
                              {"oracle_zero", GraphSource::Zeroed},
                              {"self_evolved", GraphSource::Predicted}}) {
    EvalOptions opts;
    opts.rollout = RolloutOptions::uniform(source);
    opts.threads = threads;
    rows.push_back(row_from_mse(label, eval_mse(model, schema, eval_data, opts, &stale)));
  }
  return rows;
}

std::vector<AblationRow> ablate_monotonicity(const std::filesystem::path& vanilla_checkpoint,
                                             const std::filesystem::path& agwm_checkpoint,
                                             const std::filesystem::path& data_dir, int threads) {
  const Dataset eval_data = read_dataset(data_dir / "eval.bin");
  const AffordanceSchema schema = AffordanceSchema::parse(eval_data.manifest.schema_text);
  std::vector<AblationRow> rows;
  {
    auto [model, ck] = load_checkpoint(vanilla_checkpoint);
    if (model.variant() != Variant::Vanilla)
      throw DataError("the monotonicity ablation needs a vanilla checkpoint for its baseline row");
    EvalOptions opts;
    opts.threads = threads;
    rows.push_back(row_from_mse("vanilla", eval_mse(model, schema, eval_data, opts)));
  }
  auto [model, ck] = load_checkpoint(agwm_checkpoint);
  if (model.variant() != Variant::AGWM)
    throw DataError("the monotonicity ablation needs a graph-conditioned checkpoint");
  struct Condition {
    std::string label;
    RolloutOptions rollout;
  };
  const std::vector<Condition> conditions = {
      {"oracle_no_constraint",
       RolloutOptions{GraphSource::Oracle, GraphSource::Predicted, false}},
      {"predicted_no_constraint",
       RolloutOptions{GraphSource::Predicted, GraphSource::Predicted, false}},
      {"constrained", RolloutOptions::uniform(GraphSource::Predicted, true)},
  };
  for (const auto& [label, rollout] : conditions) {
    EvalOptions opts;
    opts.rollout = rollout;
    opts.threads = threads;
    rows.push_back(row_from_mse(label, eval_mse(model, schema, eval_data, opts)));
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw DataError("cannot write ablation table: " + file.string());
  out << "condition,mse_avg,mse_step1,mse_step8,degradation_ratio\n";
  char buf[256];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g\n", row.label.c_str(), row.mse_avg,
                  row.mse_step1, row.mse_step8, row.degradation_ratio);
    out << buf;
  }
}

std::string EvalReport::to_json() const {
  json j;
  j["env_name"] = env_name;
  j["variant"] = variant;
  j["graph_source"] = graph_source;
  j["monotonicity"] = monotonicity;
  j["seed"] = seed;
  j["mse"] = {{"per_step", mse.per_step},
              {"avg", mse.avg},
              {"degradation_ratio", mse.degradation_ratio},
              {"episodes_used", mse.episodes_used},
              {"episodes_skipped", mse.episodes_skipped}};
  if (cda) {
    j["cda"] = {{"cda", cda->cda},
                {"fpr", cda->fpr},
                {"positives", cda->positives},
                {"negatives", cda->negatives}};
    j["cda_mode"] = cda_mode;
  }
  if (aff_acc) {
    j["aff_acc"] = *aff_acc;
    j["aff_acc_mode"] = aff_acc_mode;
  }
  if (cf_gap) {
    j["cf_gap"] = {{"gap", cf_gap->gap}, {"decisions", cf_gap->decisions}, {"skipped", cf_gap->skipped}};
  }
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  json j = json::parse(text);
  EvalReport r;
  r.env_name = j["env_name"];
  r.variant = j["variant"];
  r.graph_source = j["graph_source"];
  r.monotonicity = j["monotonicity"];
  r.seed = j["seed"];
  r.mse.per_step = j["mse"]["per_step"].get<std::vector<double>>();
  r.mse.avg = j["mse"]["avg"];
  r.mse.degradation_ratio = j["mse"]["degradation_ratio"];
  r.mse.episodes_used = j["mse"]["episodes_used"];
  r.mse.episodes_skipped = j["mse"]["episodes_skipped"];
  if (j.contains("cda")) {
    CdaReport c;
    c.cda = j["cda"]["cda"];
    c.fpr = j["cda"]["fpr"];
    c.positives = j["cda"]["positives"];
    c.negatives = j["cda"]["negatives"];
    r.cda = c;
    r.cda_mode = j["cda_mode"];
  }
  if (j.contains("aff_acc")) {
    r.aff_acc = j["aff_acc"].get<double>();
    r.aff_acc_mode = j["aff_acc_mode"];
  }
  if (j.contains("cf_gap")) {
    CfGapReport c;
    c.gap = j["cf_gap"]["gap"];
    c.decisions = j["cf_gap"]["decisions"];
    c.skipped = j["cf_gap"]["skipped"];
    r.cf_gap = c;
  }
  return r;
}

EvalReport run_eval_job(const EvalJob& job) {
  auto [model, ck] = load_checkpoint(job.checkpoint);
  const Dataset eval_data = read_dataset(job.data_dir / "eval.bin");
  const AffordanceSchema schema = AffordanceSchema::parse(eval_data.manifest.schema_text);

  if (ck.schema_hash != eval_data.manifest.schema_hash) {
    if (!job.allow_ood_schema)
      throw DataError("checkpoint schema does not match the dataset (pass --ood to evaluate "
                      "novel-rule splits with matching dimensions)");
    const AffordanceSchema trained = AffordanceSchema::parse(ck.schema_text);
    if (trained.dim() != schema.dim())
      throw DataError("schema-incompatible checkpoint: graph dimensions differ");
  }
  if (model.variant() != Variant::AGWM &&
      (job.graph_source != GraphSource::Predicted || !job.monotonicity))
    throw UsageError("graph source and monotonicity overrides apply to the agwm variant");

  EvalOptions opts;
  opts.rollout = RolloutOptions::uniform(job.graph_source, job.monotonicity);
  opts.threads = job.threads;

  StaleGraphs stale;
  const StaleGraphs* stale_ptr = nullptr;
  if (job.graph_source == GraphSource::OracleStale) {
    stale = stale_graph_sequences(eval_data);
    stale_ptr = &stale;
  }

  EvalReport report;
  report.env_name = eval_data.manifest.env_name;
  report.variant = ck.variant;
  report.graph_source = to_string(job.graph_source);
  report.monotonicity = job.monotonicity;
  report.seed = ck.seed;

  auto want = [&](const std::string& name) {
    return std::find(job.metrics.begin(), job.metrics.end(), name) != job.metrics.end();
  };

  if (want("mse")) report.mse = eval_mse(model, schema, eval_data, opts, stale_ptr);
  if (want("cda")) {
    if (model.has_sc_head()) {
      report.cda = eval_cda_classifier(model, schema, eval_data, opts);
      report.cda_mode = "classifier";
    } else {
      const Dataset train_data = read_dataset(job.data_dir / "train.bin");
      ProbeConfig probe;
      probe.seed = ck.seed;
      report.cda = eval_cda_probe(model, schema, train_data, eval_data, opts, probe);
      report.cda_mode = "probe";
    }
  }
  if (want("affacc")) {
    if (model.has_graph()) {
      report.aff_acc = eval_aff_acc(model, schema, eval_data, opts);
      report.aff_acc_mode = "head";
    } else {
      const Dataset train_data = read_dataset(job.data_dir / "train.bin");
      ProbeConfig probe;
      probe.seed = ck.seed;
      report.aff_acc = eval_aff_acc_probe(model_driver_factory(model, schema, opts.rollout),
                                          train_data, eval_data, opts, probe);
      report.aff_acc_mode = "probe";
    }
  }
  if (want("cfgap")) report.cf_gap = eval_cf_gap(model, schema, eval_data, opts);

  if (!job.out_file.empty()) {
    std::filesystem::create_directories(job.out_file.parent_path());
    std::ofstream out(job.out_file);
    if (!out) throw DataError("cannot write report: " + job.out_file.string());
    out << report.to_json() << "\n";
  }
  return report;
}

}  // namespace agwm
