#include "agwm/config.hpp"

#include <fstream>
#include <sstream>

#include "agwm/errors.hpp"

namespace agwm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw UsageError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& v) {
  std::vector<T> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(item);
    } else {
      out.push_back(static_cast<T>(std::stoull(item)));
    }
  }
  return out;
}

}  // namespace

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  out << "schema_version = " << schema_version << "\n\n";
  out << "[experiment]\n";
  out << "env = " << env << "\n";
  out << "variants = ";
  for (std::size_t i = 0; i < variants.size(); ++i) out << (i ? "," : "") << variants[i];
  out << "\n";
  out << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i];
  out << "\n";
  out << "small_obs = " << (small_obs ? "true" : "false") << "\n\n";
  out << "[data]\n";
  out << "n_train = " << n_train << "\n";
  out << "n_eval = " << n_eval << "\n";
  out << "seed = " << data_seed << "\n";
  out << "data_fraction = " << data_fraction << "\n\n";
  out << "[train]\n";
  out << "epochs = " << train.epochs << "\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "seq_len = " << train.seq_len << "\n";
  out << "lr = " << train.lr << "\n";
  out << "weight_decay = " << train.weight_decay << "\n";
  out << "clip_norm = " << train.clip_norm << "\n";
  out << "lambda_sc = " << train.lambda_sc << "\n";
  out << "lambda_graph = " << train.lambda_graph << "\n";
  out << "pos_weight = " << train.pos_weight << "\n\n";
  out << "[model]\n";
  out << "latent_dim = " << model.latent_dim << "\n";
  out << "graph_embed_dim = " << model.graph_embed_dim << "\n";
  out << "threshold = " << model.threshold << "\n\n";
  out << "[eval]\n";
  out << "graph_source = " << graph_source << "\n";
  out << "monotonicity = " << (monotonicity ? "on" : "off") << "\n";
  out << "warmup = " << warmup << "\n";
  out << "horizon = " << horizon << "\n";
  out << "threads = " << threads << "\n";
  return out.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  bool saw_version = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "experiment" && section != "data" && section != "train" &&
          section != "model" && section != "eval")
        throw UsageError("unknown config section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      if (key == "schema_version") {
        cfg.schema_version = std::stoi(value);
        if (cfg.schema_version != 1)
          throw UsageError("unsupported config schema_version " + value);
        saw_version = true;
        continue;
      }
      throw UsageError("key '" + key + "' appears before any section");
    }
    if (section == "experiment") {
      if (key == "env") cfg.env = value;
      else if (key == "variants") cfg.variants = parse_list<std::string>(value);
      else if (key == "seeds") cfg.seeds = parse_list<std::uint64_t>(value);
      else if (key == "small_obs") cfg.small_obs = parse_bool(value, key);
      else throw UsageError("unknown key '" + key + "' in [experiment]");
    } else if (section == "data") {
      if (key == "n_train") cfg.n_train = std::stoi(value);
      else if (key == "n_eval") cfg.n_eval = std::stoi(value);
      else if (key == "seed") cfg.data_seed = std::stoull(value);
      else if (key == "data_fraction") cfg.data_fraction = std::stod(value);
      else throw UsageError("unknown key '" + key + "' in [data]");
    } else if (section == "train") {
      if (key == "epochs") cfg.train.epochs = std::stoi(value);
      else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
      else if (key == "seq_len") cfg.train.seq_len = std::stoi(value);
      else if (key == "lr") cfg.train.lr = std::stod(value);
      else if (key == "weight_decay") cfg.train.weight_decay = std::stod(value);
      else if (key == "clip_norm") cfg.train.clip_norm = std::stod(value);
      else if (key == "lambda_sc") cfg.train.lambda_sc = std::stof(value);
      else if (key == "lambda_graph") cfg.train.lambda_graph = std::stof(value);
      else if (key == "pos_weight") cfg.train.pos_weight = std::stof(value);
      else throw UsageError("unknown key '" + key + "' in [train]");
    } else if (section == "model") {
      if (key == "latent_dim") cfg.model.latent_dim = std::stoi(value);
      else if (key == "graph_embed_dim") cfg.model.graph_embed_dim = std::stoi(value);
      else if (key == "threshold") cfg.model.threshold = std::stof(value);
      else throw UsageError("unknown key '" + key + "' in [model]");
    } else if (section == "eval") {
      if (key == "graph_source") cfg.graph_source = value;
      else if (key == "monotonicity") cfg.monotonicity = parse_bool(value, key);
      else if (key == "warmup") cfg.warmup = std::stoi(value);
      else if (key == "horizon") cfg.horizon = std::stoi(value);
      else if (key == "threads") cfg.threads = std::stoi(value);
      else throw UsageError("unknown key '" + key + "' in [eval]");
    }
  }
  if (!saw_version) throw UsageError("config is missing schema_version");
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open config file: " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void ExperimentConfig::save(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw DataError("cannot write config file: " + file.string());
  out << serialize();
}

ExperimentConfig ExperimentConfig::desk_profile() {
  ExperimentConfig cfg;
  cfg.small_obs = true;
  cfg.n_train = 150;
  cfg.n_eval = 50;
  cfg.train.epochs = 15;
  cfg.threads = 1;
  return cfg;
}

ExperimentConfig ExperimentConfig::smoke_profile() {
  ExperimentConfig cfg;
  cfg.small_obs = true;
  cfg.n_train = 3;
  cfg.n_eval = 2;
  cfg.seeds = {42};
  cfg.train.epochs = 2;
  cfg.train.batch_size = 2;
  return cfg;
}

}  // namespace agwm
