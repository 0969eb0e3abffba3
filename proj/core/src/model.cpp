#include "agwm/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "agwm/errors.hpp"

namespace agwm {

namespace {

using json = nlohmann::json;
using nn::TensorData;
using nn::Var;

constexpr char kMagic[8] = {'A', 'G', 'W', 'M', 'C', 'K', '1', '\n'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw DataError("checkpoint file truncated");
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

json config_to_json_obj(const ModelConfig& c) {
  json j;
  j["obs_h"] = c.obs_h;
  j["obs_w"] = c.obs_w;
  j["obs_c"] = c.obs_c;
  j["action_count"] = c.action_count;
  j["graph_dim"] = c.graph_dim;
  j["latent_dim"] = c.latent_dim;
  j["gru_hidden"] = c.gru_hidden;
  j["head_hidden"] = c.head_hidden;
  j["mlp_hidden"] = c.mlp_hidden;
  j["graph_embed_dim"] = c.graph_embed_dim;
  j["threshold"] = c.threshold;
  j["conv_channels"] = c.conv_channels;
  j["conv_kernel"] = c.conv_kernel;
  j["conv_stride"] = c.conv_stride;
  j["graph_to_gru"] = c.graph_to_gru;
  j["graph_to_decoder"] = c.graph_to_decoder;
  return j;
}

ModelConfig config_from_json_obj(const json& j) {
  ModelConfig c;
  c.obs_h = j["obs_h"];
  c.obs_w = j["obs_w"];
  c.obs_c = j["obs_c"];
  c.action_count = j["action_count"];
  c.graph_dim = j["graph_dim"];
  c.latent_dim = j["latent_dim"];
  c.gru_hidden = j["gru_hidden"];
  c.head_hidden = j["head_hidden"];
  c.mlp_hidden = j["mlp_hidden"];
  c.graph_embed_dim = j["graph_embed_dim"];
  c.threshold = j["threshold"];
  c.conv_channels = j["conv_channels"];
  c.conv_kernel = j["conv_kernel"];
  c.conv_stride = j["conv_stride"];
  c.graph_to_gru = j["graph_to_gru"];
  c.graph_to_decoder = j["graph_to_decoder"];
  return c;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::SCOnly: return "sc_only";
    case Variant::AGWM: return "agwm";
  }
  throw DataError("invalid variant");
}

Variant variant_from_string(const std::string& name) {
  if (name == "vanilla") return Variant::Vanilla;
  if (name == "sc_only" || name == "sconly") return Variant::SCOnly;
  if (name == "agwm") return Variant::AGWM;
  throw UsageError("unknown variant: " + name);
}

std::string to_string(GraphSource source) {
  switch (source) {
    case GraphSource::Predicted: return "predicted";
    case GraphSource::Oracle: return "oracle";
    case GraphSource::Frozen: return "frozen";
    case GraphSource::Zeroed: return "zeroed";
    case GraphSource::OracleStale: return "oracle_stale";
  }
  throw DataError("invalid graph source");
}

GraphSource graph_source_from_string(const std::string& name) {
  if (name == "predicted") return GraphSource::Predicted;
  if (name == "oracle") return GraphSource::Oracle;
  if (name == "frozen") return GraphSource::Frozen;
  if (name == "zeroed") return GraphSource::Zeroed;
  if (name == "oracle_stale") return GraphSource::OracleStale;
  throw UsageError("unknown graph source: " + name);
}

std::string ModelConfig::to_json() const { return config_to_json_obj(*this).dump(); }

ModelConfig ModelConfig::from_json(const std::string& text) {
  return config_from_json_obj(json::parse(text));
}

template <typename T>
WorldModel<T>::WorldModel(Variant variant, ModelConfig config, std::uint64_t seed)
    : variant_(variant), cfg_(config) {
  if (cfg_.obs_h <= 0 || cfg_.obs_w <= 0 || cfg_.action_count <= 0)
    throw DataError("model config missing environment dimensions");
  if (variant_ == Variant::AGWM && cfg_.graph_dim <= 0)
    throw DataError("the graph-conditioned variant needs graph_dim > 0");
  Rng rng(Rng::derive(seed, 0x4d4f44ULL, 0));

  nn::Conv2dDims d1{cfg_.obs_c, cfg_.obs_h, cfg_.obs_w, cfg_.conv_channels[0], cfg_.conv_kernel,
                    cfg_.conv_stride, 1};
  nn::Conv2dDims d2{cfg_.conv_channels[0], d1.out_h(), d1.out_w(), cfg_.conv_channels[1],
                    cfg_.conv_kernel, cfg_.conv_stride, 1};
  nn::Conv2dDims d3{cfg_.conv_channels[1], d2.out_h(), d2.out_w(), cfg_.conv_channels[2],
                    cfg_.conv_kernel, cfg_.conv_stride, 1};
  conv1_ = nn::Conv2d<T>(params_, "enc.conv1", d1, rng);
  conv2_ = nn::Conv2d<T>(params_, "enc.conv2", d2, rng);
  conv3_ = nn::Conv2d<T>(params_, "enc.conv3", d3, rng);
  const int flat = cfg_.conv_channels[2] * d3.out_h() * d3.out_w();
  enc_fc_ = nn::Linear<T>(params_, "enc.fc", flat, cfg_.latent_dim, rng);

  if (has_graph())
    graph_enc_ = nn::Linear<T>(params_, "graph_enc", cfg_.graph_dim, cfg_.graph_embed_dim, rng);

  gru_ = nn::GRUCell<T>(params_, "gru", gru_input_dim(), cfg_.gru_hidden, rng);
  dyn_ = nn::Mlp2<T>(params_, "dyn", cfg_.gru_hidden, cfg_.mlp_hidden, cfg_.latent_dim, rng);

  const int dec_in = cfg_.latent_dim +
                     ((has_graph() && cfg_.graph_to_decoder) ? cfg_.graph_embed_dim : 0);
  dec_ = nn::Mlp2<T>(params_, "dec", dec_in, cfg_.mlp_hidden, cfg_.obs_size(), rng);

  if (has_sc_head())
    sc_head_ = nn::Mlp2<T>(params_, "sc_head", head_input_dim(), cfg_.head_hidden, 1, rng);
  if (has_graph())
    graph_head_ = nn::Mlp2<T>(params_, "graph_head",
                              cfg_.gru_hidden + cfg_.action_count + cfg_.graph_embed_dim,
                              cfg_.head_hidden, cfg_.graph_dim, rng);
}

template <typename T>
int WorldModel<T>::gru_input_dim() const {
  return cfg_.latent_dim + cfg_.action_count +
         ((has_graph() && cfg_.graph_to_gru) ? cfg_.graph_embed_dim : 0);
}

template <typename T>
int WorldModel<T>::head_input_dim() const {
  return cfg_.gru_hidden + cfg_.action_count + (has_graph() ? cfg_.graph_embed_dim : 0);
}

template <typename T>
Var<T> WorldModel<T>::encode(const Var<T>& obs_rows) const {
  auto x = nn::relu(conv1_.forward(obs_rows));
  x = nn::relu(conv2_.forward(x));
  x = nn::relu(conv3_.forward(x));
  return enc_fc_.forward(x);
}

template <typename T>
Var<T> WorldModel<T>::embed_graph(const Var<T>& g_rows) const {
  if (!has_graph()) throw DataError("variant has no graph encoder");
  return graph_enc_.forward(g_rows);
}

template <typename T>
Var<T> WorldModel<T>::core_step(const Var<T>& h, const Var<T>& z, const Var<T>& a,
                                const Var<T>& e) const {
  std::vector<Var<T>> parts = {z, a};
  if (has_graph() && cfg_.graph_to_gru) {
    if (!e.defined()) throw DataError("graph-conditioned core step needs an embedding");
    parts.push_back(e);
  }
  return gru_.forward(nn::concat_cols(parts), h);
}

template <typename T>
Var<T> WorldModel<T>::predict_latent(const Var<T>& h) const {
  return dyn_.forward(h);
}

template <typename T>
Var<T> WorldModel<T>::predict_sc(const Var<T>& h, const Var<T>& a, const Var<T>& e) const {
  if (!has_sc_head()) throw DataError("variant has no SC head");
  std::vector<Var<T>> parts = {h, a};
  if (has_graph()) {
    if (!e.defined()) throw DataError("graph-conditioned SC head needs an embedding");
    parts.push_back(e);
  }
  return nn::sigmoid(sc_head_.forward(nn::concat_cols(parts)));
}

template <typename T>
Var<T> WorldModel<T>::predict_graph(const Var<T>& h, const Var<T>& a, const Var<T>& e) const {
  if (!has_graph()) throw DataError("variant has no graph head");
  if (!e.defined()) throw DataError("graph head needs an embedding");
  return nn::sigmoid(graph_head_.forward(nn::concat_cols<T>({h, a, e})));
}

template <typename T>
Var<T> WorldModel<T>::decode(const Var<T>& z_hat, const Var<T>& e_next) const {
  std::vector<Var<T>> parts = {z_hat};
  if (has_graph() && cfg_.graph_to_decoder) {
    if (!e_next.defined()) throw DataError("graph-conditioned decoder needs an embedding");
    parts.push_back(e_next);
  }
  return dec_.forward(nn::concat_cols(parts));
}

template class WorldModel<float>;
template class WorldModel<double>;

nn::TensorData<float> one_hot(int index, int count) {
  if (index < 0 || index >= count) throw DataError("one_hot index out of range");
  auto t = nn::TensorData<float>::zeros({1, count});
  t.v[static_cast<std::size_t>(index)] = 1.0f;
  return t;
}

void save_checkpoint(const WorldModel<float>& model, const CheckpointManifest& manifest,
                     const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + file.string());
  out.write(kMagic, sizeof(kMagic));
  json j;
  j["variant"] = manifest.variant;
  j["env_name"] = manifest.env_name;
  j["schema_hash"] = manifest.schema_hash;
  j["schema_text"] = manifest.schema_text;
  j["obs_shape"] = manifest.obs_shape;
  j["action_count"] = manifest.action_count;
  j["seed"] = manifest.seed;
  j["config"] = config_to_json_obj(manifest.config);
  const std::string text = j.dump();
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, p] : model.params().entries()) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const auto& shape = p.value().shape;
    write_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.value().v.data()),
              static_cast<std::streamsize>(p.value().v.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + file.string());
}

namespace {

CheckpointManifest read_manifest_stream(std::istream& in, const std::string& file) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a checkpoint file: " + file);
  const std::uint32_t len = read_u32(in);
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (!in) throw DataError("checkpoint file truncated: " + file);
  json j = json::parse(text);
  CheckpointManifest m;
  m.variant = j["variant"];
  m.env_name = j["env_name"];
  m.schema_hash = j["schema_hash"];
  m.schema_text = j["schema_text"];
  m.obs_shape = j["obs_shape"].get<std::vector<int>>();
  m.action_count = j["action_count"];
  m.seed = j["seed"];
  m.config = config_from_json_obj(j["config"]);
  return m;
}

}  // namespace

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + file.string());
  return read_manifest_stream(in, file.string());
}

std::pair<WorldModel<float>, CheckpointManifest> load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + file.string());
  CheckpointManifest manifest = read_manifest_stream(in, file.string());
  WorldModel<float> model(variant_from_string(manifest.variant), manifest.config, manifest.seed);
  for (auto& [name, p] : model.params().entries()) {
    const std::uint32_t name_len = read_u32(in);
    std::string stored(name_len, '\0');
    in.read(stored.data(), name_len);
    if (stored != name)
      throw DataError("checkpoint parameter order mismatch: expected " + name + ", found " + stored);
    const std::uint32_t ndim = read_u32(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_u32(in));
    if (shape != p.value().shape) throw DataError("checkpoint shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value().v.data()),
            static_cast<std::streamsize>(p.value().v.size() * sizeof(float)));
    if (!in) throw DataError("checkpoint file truncated: " + file.string());
  }
  return {std::move(model), std::move(manifest)};
}

EpisodeRollout::EpisodeRollout(const WorldModel<float>& model, const AffordanceSchema& schema,
                               RolloutOptions options)
    : model_(model), schema_(schema), options_(options) {}

namespace {

TensorData<float> obs_row(const Trajectory& ep, int t) {
  const auto& obs = ep.observations[static_cast<std::size_t>(t)];
  return TensorData<float>({1, static_cast<int>(obs.size())}, obs);
}

TensorData<float> graph_row(const GraphState& g) {
  auto bits = g.packed_float();
  return TensorData<float>({1, static_cast<int>(bits.size())}, std::move(bits));
}

}  // namespace

void EpisodeRollout::begin(const Trajectory& episode,
                           const std::vector<std::vector<std::uint8_t>>* stale_graphs) {
  episode_ = &episode;
  stale_graphs_ = stale_graphs;
  state_.h = TensorData<float>::zeros({1, model_.config().gru_hidden});
  state_.z_pred = TensorData<float>::zeros({1, model_.config().latent_dim});
  state_.t = 0;
  last_sc_prob_ = 0.0f;
  last_graph_probs_.clear();
  if (model_.has_graph()) {
    switch (options_.warmup_source) {
      case GraphSource::Zeroed:
        state_.g = GraphState::all_zero(schema_);
        break;
      case GraphSource::OracleStale:
        if (!stale_graphs_) throw DataError("OracleStale rollout needs a stale graph sequence");
        state_.g = GraphState::from_packed(schema_, (*stale_graphs_)[0]);
        break;
      default:
        state_.g = GraphState::from_packed(schema_, episode.graphs[0]);
        break;
    }
  }
}

GraphState EpisodeRollout::advance_graph(GraphSource source, const GraphState& current,
                                         const std::vector<float>& probs, int next_t) const {
  switch (source) {
    case GraphSource::Predicted:
      return options_.monotonicity
                 ? monotone_update(schema_, current, probs, model_.config().threshold)
                 : raw_threshold_update(schema_, probs, model_.config().threshold);
    case GraphSource::Oracle:
      if (next_t >= static_cast<int>(episode_->graphs.size()))
        throw DataError("oracle graph requested past the end of the episode");
      return GraphState::from_packed(schema_, episode_->graphs[static_cast<std::size_t>(next_t)]);
    case GraphSource::Frozen:
      return current;
    case GraphSource::Zeroed:
      return GraphState::all_zero(schema_);
    case GraphSource::OracleStale:
      if (next_t >= static_cast<int>(stale_graphs_->size()))
        throw DataError("stale graph requested past the end of the episode");
      return GraphState::from_packed(schema_, (*stale_graphs_)[static_cast<std::size_t>(next_t)]);
  }
  throw DataError("invalid graph source");
}

nn::Var<float> EpisodeRollout::embed_current_graph() const {
  if (!model_.has_graph()) return {};
  return model_.embed_graph(Var<float>::constant(graph_row(state_.g)));
}

void EpisodeRollout::posterior_step() {
  if (!episode_) throw DataError("rollout not started");
  if (state_.t >= episode_->transitions()) throw DataError("posterior step past episode end");
  nn::NoGradGuard no_grad;
  const int t = state_.t;
  auto z = model_.encode(Var<float>::constant(obs_row(*episode_, t)));
  auto a = Var<float>::constant(one_hot(episode_->actions[static_cast<std::size_t>(t)],
                                        model_.config().action_count));
  auto e = embed_current_graph();
  auto h = model_.core_step(Var<float>::constant(state_.h), z, a, e);
  if (model_.has_sc_head()) last_sc_prob_ = model_.predict_sc(h, a, e).value().v[0];
  if (model_.has_graph()) {
    last_graph_probs_ = model_.predict_graph(h, a, e).value().v;
    state_.g = advance_graph(options_.warmup_source, state_.g, last_graph_probs_, t + 1);
  }
  state_.z_pred = model_.predict_latent(h).value();
  state_.h = h.value();
  state_.t = t + 1;
}

std::vector<float> EpisodeRollout::imagine_predict() {
  nn::NoGradGuard no_grad;
  auto e = embed_current_graph();
  return model_.decode(Var<float>::constant(state_.z_pred), e).value().v;
}

void EpisodeRollout::imagine_advance(int action) {
  nn::NoGradGuard no_grad;
  auto z = Var<float>::constant(state_.z_pred);
  auto a = Var<float>::constant(one_hot(action, model_.config().action_count));
  auto e = embed_current_graph();
  auto h = model_.core_step(Var<float>::constant(state_.h), z, a, e);
  if (model_.has_sc_head()) last_sc_prob_ = model_.predict_sc(h, a, e).value().v[0];
  if (model_.has_graph()) {
    last_graph_probs_ = model_.predict_graph(h, a, e).value().v;
    state_.g = advance_graph(options_.imagine_source, state_.g, last_graph_probs_, state_.t + 1);
  }
  state_.z_pred = model_.predict_latent(h).value();
  state_.h = h.value();
  state_.t += 1;
}

EpisodeRollout::OneStep EpisodeRollout::one_step_prediction(int action) const {
  if (!episode_) throw DataError("rollout not started");
  if (state_.t >= static_cast<int>(episode_->observations.size()))
    throw DataError("one-step prediction past episode end");
  nn::NoGradGuard no_grad;
  auto z = model_.encode(Var<float>::constant(obs_row(*episode_, state_.t)));
  auto a = Var<float>::constant(one_hot(action, model_.config().action_count));
  auto e = embed_current_graph();
  auto h = model_.core_step(Var<float>::constant(state_.h), z, a, e);
  OneStep result;
  if (model_.has_sc_head()) result.sc_prob = model_.predict_sc(h, a, e).value().v[0];
  Var<float> e_next;
  if (model_.has_graph()) {
    const auto probs = model_.predict_graph(h, a, e).value().v;
    const GraphState g_next = advance_graph(options_.warmup_source, state_.g, probs, state_.t + 1);
    e_next = model_.embed_graph(Var<float>::constant(graph_row(g_next)));
  }
  auto z_hat = model_.predict_latent(h);
  result.obs_pred = model_.decode(z_hat, e_next).value().v;
  return result;
}

}  // namespace agwm
