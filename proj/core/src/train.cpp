#include "agwm/train.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "agwm/errors.hpp"

namespace agwm {

namespace {

using json = nlohmann::json;
using nn::TensorData;
using nn::Var;

}  // namespace

ModelConfig make_model_config(const DatasetManifest& manifest, const ModelHyper& hyper) {
  ModelConfig cfg;
  cfg.obs_h = manifest.obs_shape[0];
  cfg.obs_w = manifest.obs_shape[1];
  cfg.obs_c = manifest.obs_shape[2];
  cfg.action_count = manifest.action_count;
  cfg.graph_dim = manifest.graph_dim;
  cfg.latent_dim = hyper.latent_dim;
  cfg.graph_embed_dim = hyper.graph_embed_dim;
  cfg.threshold = hyper.threshold;
  cfg.graph_to_gru = hyper.graph_to_gru;
  cfg.graph_to_decoder = hyper.graph_to_decoder;
  return cfg;
}

template <typename T>
WindowBatch<T> make_batch(const Dataset& data, const WindowIndex& windows, int seq_len,
                          bool with_graphs) {
  const int b = static_cast<int>(windows.size());
  const int t_len = seq_len;
  const int obs_size = data.obs_size();
  const int action_count = data.manifest.action_count;
  const int d = data.manifest.graph_dim;

  WindowBatch<T> batch;
  batch.batch = b;
  batch.seq_len = t_len;
  batch.obs = TensorData<T>::zeros({(t_len + 1) * b, obs_size});
  batch.actions = TensorData<T>::zeros({t_len * b, action_count});
  batch.sc = TensorData<T>::zeros({t_len * b, 1});
  if (with_graphs) batch.graphs = TensorData<T>::zeros({(t_len + 1) * b, d});

  for (int k = 0; k < b; ++k) {
    const auto& [ep_index, offset] = windows[static_cast<std::size_t>(k)];
    const Trajectory& ep = data.episodes[static_cast<std::size_t>(ep_index)];
    if (offset + t_len > ep.transitions()) throw DataError("window exceeds episode length");
    for (int t = 0; t <= t_len; ++t) {
      const auto& obs = ep.observations[static_cast<std::size_t>(offset + t)];
      T* dst = batch.obs.v.data() +
               (static_cast<std::size_t>(t) * static_cast<std::size_t>(b) + static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(obs_size);
      for (int i = 0; i < obs_size; ++i) dst[i] = static_cast<T>(obs[static_cast<std::size_t>(i)]);
      if (with_graphs) {
        const auto& g = ep.graphs[static_cast<std::size_t>(offset + t)];
        T* gd = batch.graphs.v.data() +
                (static_cast<std::size_t>(t) * static_cast<std::size_t>(b) + static_cast<std::size_t>(k)) *
                    static_cast<std::size_t>(d);
        for (int i = 0; i < d; ++i) gd[i] = static_cast<T>(g[static_cast<std::size_t>(i)]);
      }
    }
    for (int t = 0; t < t_len; ++t) {
      const std::size_t row = static_cast<std::size_t>(t) * static_cast<std::size_t>(b) +
                              static_cast<std::size_t>(k);
      batch.actions.v[row * static_cast<std::size_t>(action_count) +
                      static_cast<std::size_t>(ep.actions[static_cast<std::size_t>(offset + t)])] = T(1);
      batch.sc.v[row] = static_cast<T>(ep.sc_labels[static_cast<std::size_t>(offset + t)]);
    }
  }
  return batch;
}

template WindowBatch<float> make_batch<float>(const Dataset&, const WindowIndex&, int, bool);
template WindowBatch<double> make_batch<double>(const Dataset&, const WindowIndex&, int, bool);

template <typename T>
LossGraph<T> compute_losses(const WorldModel<T>& model, const WindowBatch<T>& batch,
                            const TrainConfig& cfg) {
  const int b = batch.batch;
  const int t_len = batch.seq_len;
  const auto& mc = model.config();

  LossGraph<T> out;
  auto obs_in = Var<T>::constant(batch.obs);
  auto z_all = model.encode(obs_in);  // [(T+1)B, z]
  Var<T> e_all;
  if (model.has_graph()) e_all = model.embed_graph(Var<T>::constant(batch.graphs));
  auto a_all = Var<T>::constant(batch.actions);

  auto h = Var<T>::constant(TensorData<T>::zeros({b, mc.gru_hidden}));
  std::vector<Var<T>> hs;
  hs.reserve(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    auto z_t = nn::slice_rows(z_all, t * b, (t + 1) * b);
    auto a_t = nn::slice_rows(a_all, t * b, (t + 1) * b);
    Var<T> e_t;
    if (model.has_graph()) e_t = nn::slice_rows(e_all, t * b, (t + 1) * b);
    h = model.core_step(h, z_t, a_t, e_t);
    hs.push_back(h);
  }
  auto h_stack = nn::concat_rows(hs);                 // [T*B, H]
  auto z_hat = model.predict_latent(h_stack);         // [T*B, z]

  // Dynamics target: encoder outputs for steps 1..T, gradients stopped.
  TensorData<T> z_target = TensorData<T>::zeros({t_len * b, mc.latent_dim});
  std::copy_n(z_all.value().v.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(mc.latent_dim),
              z_target.v.size(), z_target.v.data());
  out.dyn = nn::mse_loss(z_hat, z_target);

  Var<T> e_next;
  if (model.has_graph() && mc.graph_to_decoder)
    e_next = nn::slice_rows(e_all, b, (t_len + 1) * b);
  auto o_hat = model.decode(z_hat, e_next);
  TensorData<T> obs_target = TensorData<T>::zeros({t_len * b, mc.obs_size()});
  std::copy_n(batch.obs.v.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(mc.obs_size()),
              obs_target.v.size(), obs_target.v.data());
  out.recon = nn::mse_loss(o_hat, obs_target);

  out.total = nn::add(out.recon, out.dyn);
  if (model.has_sc_head()) {
    Var<T> e_cur;
    if (model.has_graph()) e_cur = nn::slice_rows(e_all, 0, t_len * b);
    out.sc_probs = model.predict_sc(h_stack, a_all, e_cur);
    out.sc = nn::bce_weighted(out.sc_probs, batch.sc, static_cast<T>(cfg.pos_weight));
    if (cfg.lambda_sc != 0.0f)
      out.total = nn::add(out.total, nn::scale(out.sc, static_cast<T>(cfg.lambda_sc)));
  }
  if (model.has_graph()) {
    auto e_cur = nn::slice_rows(e_all, 0, t_len * b);
    out.graph_probs = model.predict_graph(h_stack, a_all, e_cur);
    TensorData<T> g_target = TensorData<T>::zeros({t_len * b, mc.graph_dim});
    std::copy_n(batch.graphs.v.data() + static_cast<std::size_t>(b) * static_cast<std::size_t>(mc.graph_dim),
                g_target.v.size(), g_target.v.data());
    out.graph = nn::bce_weighted(out.graph_probs, g_target, T(1));
    if (cfg.lambda_graph != 0.0f)
      out.total = nn::add(out.total, nn::scale(out.graph, static_cast<T>(cfg.lambda_graph)));
  }
  return out;
}

template LossGraph<float> compute_losses<float>(const WorldModel<float>&, const WindowBatch<float>&,
                                                const TrainConfig&);
template LossGraph<double> compute_losses<double>(const WorldModel<double>&,
                                                  const WindowBatch<double>&, const TrainConfig&);

std::string EpochLog::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["loss_total"] = loss_total;
  j["loss_recon"] = loss_recon;
  j["loss_dyn"] = loss_dyn;
  j["loss_sc"] = loss_sc;
  j["loss_graph"] = loss_graph;
  j["sc_precision"] = sc_precision;
  j["sc_recall"] = sc_recall;
  j["graph_acc"] = graph_acc;
  j["batches"] = batches;
  return j.dump();
}

std::vector<int> data_fraction_subset(int n_episodes, double fraction, std::uint64_t dataset_seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw UsageError("data fraction must be in (0, 1]");
  std::vector<int> indices(static_cast<std::size_t>(n_episodes));
  for (int i = 0; i < n_episodes; ++i) indices[static_cast<std::size_t>(i)] = i;
  Rng rng(Rng::derive(dataset_seed, 0x465241ULL, 0));
  shuffle(indices, rng);
  const int keep = static_cast<int>(std::ceil(fraction * n_episodes));
  indices.resize(static_cast<std::size_t>(std::max(1, keep)));
  return indices;
}

std::vector<EpochLog> train_model(WorldModel<float>& model, const Dataset& data,
                                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (data.episodes.empty()) throw DataError("training dataset is empty");
  const auto subset = data_fraction_subset(static_cast<int>(data.episodes.size()),
                                           cfg.data_fraction, data.manifest.seed);
  nn::AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  opt_cfg.clip_norm = cfg.clip_norm;
  nn::AdamW<float> optimizer(model.params(), opt_cfg);

  Rng rng(Rng::derive(cfg.seed, 0x545249ULL, 0));
  std::vector<EpochLog> logs;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    WindowIndex windows;
    for (int ep : subset) {
      const int t = data.episodes[static_cast<std::size_t>(ep)].transitions();
      if (t < cfg.seq_len) continue;
      const int slack = t % cfg.seq_len;
      const int offset = slack > 0 ? rng.uniform_int(slack + 1) : 0;
      for (int start = offset; start + cfg.seq_len <= t; start += cfg.seq_len)
        windows.emplace_back(ep, start);
    }
    if (windows.empty()) throw DataError("no training windows: episodes shorter than seq_len");
    shuffle(windows, rng);

    EpochLog log;
    log.epoch = epoch;
    long sc_tp = 0, sc_fp = 0, sc_fn = 0;
    long graph_correct = 0, graph_total = 0;
    const int full_batches = static_cast<int>(windows.size()) / cfg.batch_size;
    for (int bi = 0; bi < full_batches; ++bi) {
      WindowIndex slice(windows.begin() + static_cast<std::ptrdiff_t>(bi) * cfg.batch_size,
                        windows.begin() + static_cast<std::ptrdiff_t>(bi + 1) * cfg.batch_size);
      auto batch = make_batch<float>(data, slice, cfg.seq_len, model.has_graph());
      auto losses = compute_losses(model, batch, cfg);
      const double total = losses.total.value().v[0];
      if (!std::isfinite(total)) throw NumericError("training loss is not finite");
      model.params().zero_grad();
      nn::backward(losses.total);
      optimizer.step(model.params());

      log.loss_total += total;
      log.loss_recon += losses.recon.value().v[0];
      log.loss_dyn += losses.dyn.value().v[0];
      if (losses.sc.defined()) log.loss_sc += losses.sc.value().v[0];
      if (losses.graph.defined()) log.loss_graph += losses.graph.value().v[0];
      ++log.batches;

      if (losses.sc_probs.defined()) {
        const auto& probs = losses.sc_probs.value().v;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          const bool pred = probs[i] >= 0.5f;
          const bool truth = batch.sc.v[i] >= 0.5f;
          if (pred && truth) ++sc_tp;
          if (pred && !truth) ++sc_fp;
          if (!pred && truth) ++sc_fn;
        }
      }
      if (losses.graph_probs.defined()) {
        const auto& probs = losses.graph_probs.value().v;
        const int d = model.config().graph_dim;
        const std::size_t rows = probs.size() / static_cast<std::size_t>(d);
        const std::size_t base = static_cast<std::size_t>(batch.batch) * static_cast<std::size_t>(d);
        for (std::size_t i = 0; i < rows * static_cast<std::size_t>(d); ++i) {
          const bool pred = probs[i] >= 0.5f;
          const bool truth = batch.graphs.v[base + i] >= 0.5f;
          graph_correct += pred == truth ? 1 : 0;
          ++graph_total;
        }
      }
    }
    if (log.batches > 0) {
      log.loss_total /= log.batches;
      log.loss_recon /= log.batches;
      log.loss_dyn /= log.batches;
      log.loss_sc /= log.batches;
      log.loss_graph /= log.batches;
    }
    log.sc_precision = sc_tp + sc_fp > 0 ? static_cast<double>(sc_tp) / (sc_tp + sc_fp) : 0.0;
    log.sc_recall = sc_tp + sc_fn > 0 ? static_cast<double>(sc_tp) / (sc_tp + sc_fn) : 0.0;
    log.graph_acc = graph_total > 0 ? static_cast<double>(graph_correct) / graph_total : 0.0;
    if (on_epoch) on_epoch(log);
    logs.push_back(log);
  }
  return logs;
}

void run_training_job(const TrainingJob& job) {
  const Dataset data = read_dataset(job.data_dir / "train.bin");
  const AffordanceSchema schema = AffordanceSchema::parse(data.manifest.schema_text);
  if (schema.hash() != data.manifest.schema_hash)
    throw DataError("dataset schema text does not match its recorded hash");

  ModelConfig mc = make_model_config(data.manifest, job.hyper);
  WorldModel<float> model(job.variant, mc, job.train.seed);

  std::filesystem::create_directories(job.out_dir);
  std::ofstream metrics(job.out_dir / "metrics.jsonl");
  if (!metrics) throw DataError("cannot open metrics log for writing");
  train_model(model, data, job.train, [&](const EpochLog& log) { metrics << log.to_json() << "\n"; });
  metrics.flush();

  CheckpointManifest manifest;
  manifest.variant = to_string(job.variant);
  manifest.env_name = data.manifest.env_name;
  manifest.schema_hash = data.manifest.schema_hash;
  manifest.schema_text = data.manifest.schema_text;
  manifest.obs_shape = data.manifest.obs_shape;
  manifest.action_count = data.manifest.action_count;
  manifest.seed = job.train.seed;
  manifest.config = mc;
  save_checkpoint(model, manifest, job.out_dir / "checkpoint.bin");
}

}  // namespace agwm
