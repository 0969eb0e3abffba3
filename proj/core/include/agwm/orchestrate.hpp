#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "agwm/config.hpp"
#include "agwm/eval.hpp"

namespace agwm {

struct TrainOverrides {
  double data_fraction = 1.0;
  std::optional<float> lambda_graph;
  std::optional<int> graph_embed_dim;
  std::optional<int> epochs;
};

/// Identifies one cached evaluation.
struct ReportSpec {
  std::string name;  // reports/<name>.json
  std::string run_tag;
  std::string variant;
  std::uint64_t seed = 0;
  std::string data_tag;  // dataset supplying eval.bin (and train.bin for probes)
  std::vector<std::string> metrics = {"mse", "cda", "affacc", "cfgap"};
  GraphSource source = GraphSource::Predicted;
  bool monotonicity = true;
  bool allow_ood = false;
};

/// Results directory layout with idempotent, marker-based cells:
///   datasets/<tag>/{train.bin, eval.bin, .done}
///   runs/<run_tag>/<variant>/s<seed>/{checkpoint.bin, metrics.jsonl, .done}
///   reports/<name>.json
///   tables/*.csv
class Workspace {
 public:
  Workspace(std::filesystem::path root, ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return root_; }

  /// Dataset tags: the five environment names plus "keydungeon_l14" (levels
  /// 1-4 train split), "keydungeon_l4" and "keydungeon_l5" (held-out rule
  /// splits, eval-only).
  EnvSpec spec_for_tag(const std::string& tag) const;
  std::filesystem::path dataset_dir(const std::string& tag) const;
  std::filesystem::path run_dir(const std::string& run_tag, const std::string& variant,
                                std::uint64_t seed) const;
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path tables_dir() const { return root_ / "tables"; }

  void ensure_dataset(const std::string& tag);
  void ensure_trained(const std::string& dataset_tag, const std::string& run_tag,
                      const std::string& variant, std::uint64_t seed,
                      const TrainOverrides& overrides = {});
  EvalReport ensure_report(const ReportSpec& spec);

  /// Cached ablation rows (JSON next to reports).
  std::vector<AblationRow> ensure_ablation(const std::string& name,
                                           const std::function<std::vector<AblationRow>()>& fn);

 private:
  std::filesystem::path root_;
  ExperimentConfig cfg_;
};

struct PaperRunOptions {
  int workers = 1;
  std::vector<std::string> only;  // filters of the form env=<name>
  std::vector<double> fractions = {0.25, 0.5, 0.75, 1.0};
  std::vector<double> lambda_grid = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0};
  std::vector<int> de_grid = {8, 16, 32, 64};
  std::string sweep_env = "relay";
  std::optional<int> sweep_epochs;
  bool include_sweeps = true;
  bool include_fractions = true;
};

/// The full desk-scale reproduction: datasets, all env x variant x seed
/// training runs, every evaluation and ablation protocol, and the result
/// tables. Resumable: finished cells are skipped via completion markers.
void run_paper(Workspace& ws, const PaperRunOptions& opts);

struct SweepOptions {
  std::vector<double> lambda_grid = {0.0, 0.1, 0.5, 1.0, 2.0, 5.0};
  std::vector<int> de_grid = {8, 16, 32, 64};
  std::string env = "relay";
  std::optional<int> epochs;
  int workers = 1;
};

/// Trains the lambda_graph grid (at d_e = 32) and the d_e grid (at
/// lambda_graph = 1) across seeds, evaluates degradation ratio and affordance
/// accuracy per cell, and writes sweep CSVs under tables/.
void run_sweep(Workspace& ws, const SweepOptions& opts);

struct AggregateNote {
  std::string group;
  int seeds_present = 0;
  int seeds_expected = 0;
};

/// `report` command: scans *.json eval reports under reports_dir, aggregates
/// per-seed values into mean +/- std tables plus per-step MSE curves. Groups
/// missing seeds are flagged, not silently averaged.
std::vector<AggregateNote> write_report_tables(const std::filesystem::path& reports_dir,
                                               const std::filesystem::path& out_dir,
                                               int expected_seeds);

struct Stats {
  double mean = 0.0;
  double std_dev = 0.0;
  int n = 0;
};
Stats compute_stats(const std::vector<double>& values);

}  // namespace agwm
