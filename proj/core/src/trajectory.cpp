#include "agwm/trajectory.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "agwm/errors.hpp"

namespace agwm {

namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'A', 'G', 'W', 'M', 'D', 'S', '1', '\n'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw DataError("dataset file truncated");
  return static_cast<std::uint32_t>(buf[0]) | (static_cast<std::uint32_t>(buf[1]) << 8) |
         (static_cast<std::uint32_t>(buf[2]) << 16) | (static_cast<std::uint32_t>(buf[3]) << 24);
}

void write_f32(std::ostream& out, const float* data, std::size_t count) {
  static_assert(sizeof(float) == 4);
  // Little-endian hosts write directly; this project targets x86-64.
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

void read_f32(std::istream& in, float* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
  if (!in) throw DataError("dataset file truncated");
}

}  // namespace

std::string DatasetManifest::to_json() const {
  json j;
  j["env_name"] = env_name;
  j["schema_hash"] = schema_hash;
  j["schema_text"] = schema_text;
  j["n_episodes"] = n_episodes;
  j["obs_shape"] = obs_shape;
  j["action_count"] = action_count;
  j["graph_dim"] = graph_dim;
  j["seed"] = seed;
  j["small_obs"] = small_obs;
  j["split"] = split;
  j["kd_levels"] = kd_levels;
  return j.dump();
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  json j = json::parse(text);
  DatasetManifest m;
  m.env_name = j["env_name"];
  m.schema_hash = j["schema_hash"];
  m.schema_text = j["schema_text"];
  m.n_episodes = j["n_episodes"];
  m.obs_shape = j["obs_shape"].get<std::vector<int>>();
  m.action_count = j["action_count"];
  m.graph_dim = j["graph_dim"];
  m.seed = j["seed"];
  m.small_obs = j["small_obs"];
  m.split = j["split"];
  m.kd_levels = j["kd_levels"].get<std::vector<int>>();
  return m;
}

std::uint64_t episode_seed(std::uint64_t dataset_seed, const std::string& split, int index) {
  const std::uint64_t tag = split == "train" ? 0x7472ULL : 0x6576ULL;
  return Rng::derive(dataset_seed, tag, static_cast<std::uint64_t>(index));
}

Trajectory collect_episode(const EnvSpec& spec, const AffordanceSchema& schema,
                           std::uint64_t seed) {
  Trajectory traj;
  EnvState state = env_reset(spec, seed);
  Rng policy_rng(Rng::derive(seed, 0x504f4cULL, 0));
  traj.observations.push_back(render(spec, state));
  traj.graphs.push_back(graph_from_state(schema, spec, state).packed());
  for (int t = 0; t < spec.max_episode_len; ++t) {
    const int action = scripted_policy(spec, state, policy_rng);
    StepResult result = env_step(spec, schema, state, action);
    traj.actions.push_back(static_cast<std::uint8_t>(action));
    traj.sc_labels.push_back(static_cast<std::uint8_t>(result.sc_event));
    traj.rewards.push_back(result.reward);
    traj.done.push_back(result.done ? 1 : 0);
    traj.observations.push_back(std::move(result.obs));
    traj.graphs.push_back(graph_from_state(schema, spec, result.state).packed());
    state = std::move(result.state);
  }
  return traj;
}

double sc_rate(const std::vector<Trajectory>& episodes) {
  std::size_t events = 0, steps = 0;
  for (const auto& ep : episodes) {
    steps += ep.sc_labels.size();
    for (auto label : ep.sc_labels) events += label;
  }
  return steps == 0 ? 0.0 : static_cast<double>(events) / static_cast<double>(steps);
}

std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& bits) {
  std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return bytes;
}

std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& bytes, int n_bits) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n_bits));
  for (int i = 0; i < n_bits; ++i)
    bits[static_cast<std::size_t>(i)] =
        (bytes[static_cast<std::size_t>(i / 8)] >> (i % 8)) & 1u;
  return bits;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot open dataset file for writing: " + file.string());
  out.write(kMagic, sizeof(kMagic));
  const std::string manifest = dataset.manifest.to_json();
  write_u32(out, static_cast<std::uint32_t>(manifest.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  const auto obs_size = static_cast<std::size_t>(dataset.manifest.obs_shape[0]) *
                        static_cast<std::size_t>(dataset.manifest.obs_shape[1]) *
                        static_cast<std::size_t>(dataset.manifest.obs_shape[2]);
  for (const auto& ep : dataset.episodes) {
    const auto t = static_cast<std::uint32_t>(ep.transitions());
    write_u32(out, t);
    for (const auto& obs : ep.observations) {
      if (obs.size() != obs_size) throw DataError("observation size mismatch while writing");
      write_f32(out, obs.data(), obs.size());
    }
    out.write(reinterpret_cast<const char*>(ep.actions.data()),
              static_cast<std::streamsize>(ep.actions.size()));
    out.write(reinterpret_cast<const char*>(ep.sc_labels.data()),
              static_cast<std::streamsize>(ep.sc_labels.size()));
    write_f32(out, ep.rewards.data(), ep.rewards.size());
    out.write(reinterpret_cast<const char*>(ep.done.data()),
              static_cast<std::streamsize>(ep.done.size()));
    for (const auto& graph : ep.graphs) {
      if (static_cast<int>(graph.size()) != dataset.manifest.graph_dim)
        throw DataError("graph dim mismatch while writing");
      const auto packed = pack_bits(graph);
      out.write(reinterpret_cast<const char*>(packed.data()),
                static_cast<std::streamsize>(packed.size()));
    }
  }
  if (!out) throw DataError("failed writing dataset file: " + file.string());
}

namespace {

DatasetManifest read_manifest_stream(std::istream& in, const std::string& file) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a dataset file: " + file);
  const std::uint32_t len = read_u32(in);
  std::string manifest(len, '\0');
  in.read(manifest.data(), len);
  if (!in) throw DataError("dataset file truncated: " + file);
  return DatasetManifest::from_json(manifest);
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + file.string());
  return read_manifest_stream(in, file.string());
}

Dataset read_dataset(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + file.string());
  Dataset dataset;
  dataset.manifest = read_manifest_stream(in, file.string());
  const auto obs_size = static_cast<std::size_t>(dataset.manifest.obs_shape[0]) *
                        static_cast<std::size_t>(dataset.manifest.obs_shape[1]) *
                        static_cast<std::size_t>(dataset.manifest.obs_shape[2]);
  const int d = dataset.manifest.graph_dim;
  const std::size_t graph_bytes = (static_cast<std::size_t>(d) + 7) / 8;
  dataset.episodes.reserve(static_cast<std::size_t>(dataset.manifest.n_episodes));
  for (int e = 0; e < dataset.manifest.n_episodes; ++e) {
    Trajectory ep;
    const std::uint32_t t = read_u32(in);
    ep.observations.resize(t + 1);
    for (auto& obs : ep.observations) {
      obs.resize(obs_size);
      read_f32(in, obs.data(), obs_size);
    }
    ep.actions.resize(t);
    in.read(reinterpret_cast<char*>(ep.actions.data()), t);
    ep.sc_labels.resize(t);
    in.read(reinterpret_cast<char*>(ep.sc_labels.data()), t);
    ep.rewards.resize(t);
    read_f32(in, ep.rewards.data(), t);
    ep.done.resize(t);
    in.read(reinterpret_cast<char*>(ep.done.data()), t);
    if (!in) throw DataError("dataset file truncated: " + file.string());
    ep.graphs.resize(t + 1);
    std::vector<std::uint8_t> buf(graph_bytes);
    for (auto& graph : ep.graphs) {
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(graph_bytes));
      if (!in) throw DataError("dataset file truncated: " + file.string());
      graph = unpack_bits(buf, d);
    }
    dataset.episodes.push_back(std::move(ep));
  }
  return dataset;
}

CollectSummary collect_dataset(const EnvSpec& spec, int n_train, int n_eval, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  if (n_train < 0 || n_eval < 0) throw UsageError("episode counts must be non-negative");
  const AffordanceSchema schema = build_schema(spec);
  CollectSummary summary;
  summary.n_train = n_train;
  summary.n_eval = n_eval;
  for (const std::string split : {"train", "eval"}) {
    const int count = split == "train" ? n_train : n_eval;
    Dataset dataset;
    dataset.manifest.env_name = to_string(spec.name);
    dataset.manifest.schema_hash = schema.hash();
    dataset.manifest.schema_text = schema.serialize();
    dataset.manifest.n_episodes = count;
    dataset.manifest.obs_shape = {spec.obs_h(), spec.obs_w(), spec.obs_c()};
    dataset.manifest.action_count = spec.action_count;
    dataset.manifest.graph_dim = schema.dim();
    dataset.manifest.seed = seed;
    dataset.manifest.small_obs = spec.cell_px == 4;
    dataset.manifest.split = split;
    dataset.manifest.kd_levels = spec.kd_levels;
    dataset.episodes.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      dataset.episodes.push_back(collect_episode(spec, schema, episode_seed(seed, split, i)));
    const double rate = sc_rate(dataset.episodes);
    if (split == "train")
      summary.train_sc_rate = rate;
    else
      summary.eval_sc_rate = rate;
    write_dataset(dataset, out_dir / (split + ".bin"));
  }
  return summary;
}

}  // namespace agwm
