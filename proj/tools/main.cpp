// Command-line front end for the experiment lifecycle: collect, train, sweep,
// eval, ablate, report, run-paper.

#include <Eigen/Core>
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "agwm/config.hpp"
#include "agwm/errors.hpp"
#include "agwm/orchestrate.hpp"
#include "agwm/trajectory.hpp"
#include "agwm/train.hpp"

namespace {

using namespace agwm;

std::filesystem::path default_out_root() {
  if (const char* env = std::getenv("AGWM_OUT_ROOT")) return env;
  return "results";
}

ExperimentConfig load_profile(const std::string& profile, const std::string& config_path) {
  ExperimentConfig cfg;
  if (profile == "desk")
    cfg = ExperimentConfig::desk_profile();
  else if (profile == "smoke")
    cfg = ExperimentConfig::smoke_profile();
  else if (profile == "paper")
    cfg = ExperimentConfig();
  else
    throw UsageError("unknown profile: " + profile);
  if (!config_path.empty()) cfg = ExperimentConfig::load(config_path);
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Affordance-graph world-model experiments"};
  app.require_subcommand(1);
  int eigen_threads = 2;
  app.add_option("--threads", eigen_threads, "Eigen GEMM threads (fixed for reproducibility)");

  // collect
  auto* collect = app.add_subcommand("collect", "Generate a trajectory dataset");
  std::string collect_env;
  int collect_train = 500, collect_eval = 100;
  std::uint64_t collect_seed = 7;
  std::string collect_out;
  bool collect_small = false, collect_force = false;
  collect->add_option("--env", collect_env, "Environment name")->required();
  collect->add_option("--train", collect_train, "Training episodes");
  collect->add_option("--eval", collect_eval, "Evaluation episodes");
  collect->add_option("--seed", collect_seed, "Dataset seed");
  collect->add_option("--out", collect_out, "Output directory")->required();
  collect->add_flag("--small-obs", collect_small, "Render at half resolution");
  collect->add_flag("--force", collect_force, "Overwrite an existing non-empty directory");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  std::string train_env, train_variant, train_config, train_data, train_out;
  std::uint64_t train_seed = 42;
  train_cmd->add_option("--env", train_env, "Environment name (metadata check only)");
  train_cmd->add_option("--variant", train_variant, "vanilla | sc_only | agwm")->required();
  train_cmd->add_option("--seed", train_seed, "Training seed");
  train_cmd->add_option("--config", train_config, "Experiment config file");
  train_cmd->add_option("--data", train_data, "Dataset directory (train.bin)")->required();
  train_cmd->add_option("--out", train_out, "Run output directory")->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Graph-loss and embedding-dim sweep");
  std::string sweep_config, sweep_out_root = default_out_root().string(), sweep_env = "relay";
  int sweep_workers = 1;
  std::string sweep_profile = "desk";
  sweep_cmd->add_option("--config", sweep_config, "Experiment config file");
  sweep_cmd->add_option("--profile", sweep_profile, "desk | paper | smoke");
  sweep_cmd->add_option("--env", sweep_env, "Sweep host environment");
  sweep_cmd->add_option("--out", sweep_out_root, "Results root");
  sweep_cmd->add_option("--workers", sweep_workers, "Parallel training cells");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_checkpoint, eval_data, eval_metrics = "mse,cda,affacc,cfgap";
  std::string eval_source = "predicted", eval_monotonicity = "on", eval_out;
  bool eval_ood = false;
  int eval_threads = 1;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory (eval.bin)")->required();
  eval_cmd->add_option("--metrics", eval_metrics, "Comma list from mse,cda,affacc,cfgap");
  eval_cmd->add_option("--graph-source", eval_source,
                       "predicted | oracle | frozen | zeroed | oracle_stale");
  eval_cmd->add_option("--monotonicity", eval_monotonicity, "on | off");
  eval_cmd->add_flag("--ood", eval_ood, "Allow schema hash mismatch when dimensions agree");
  eval_cmd->add_option("--threads", eval_threads, "Episode-parallel eval threads");
  eval_cmd->add_option("--out", eval_out, "Report JSON path")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation protocol");
  std::string ablate_kind, ablate_checkpoint, ablate_vanilla, ablate_data, ablate_out;
  int ablate_threads = 1;
  ablate_cmd->add_option("--kind", ablate_kind, "graph_source | oracle_control | monotonicity")
      ->required();
  ablate_cmd->add_option("--checkpoint", ablate_checkpoint, "Graph-conditioned checkpoint")
      ->required();
  ablate_cmd->add_option("--vanilla-checkpoint", ablate_vanilla,
                         "Vanilla checkpoint (monotonicity only)");
  ablate_cmd->add_option("--data", ablate_data, "Dataset directory")->required();
  ablate_cmd->add_option("--threads", ablate_threads, "Episode-parallel eval threads");
  ablate_cmd->add_option("--out", ablate_out, "Output CSV")->required();

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate eval reports into tables");
  std::string report_in, report_out;
  int report_seeds = 3;
  report_cmd->add_option("--in", report_in, "Reports directory")->required();
  report_cmd->add_option("--out", report_out, "Output directory")->required();
  report_cmd->add_option("--seeds", report_seeds, "Expected seeds per group");

  // run-paper
  auto* paper_cmd = app.add_subcommand("run-paper", "Full experiment grid + tables");
  std::string paper_config, paper_profile = "desk";
  std::string paper_out_root = default_out_root().string();
  std::vector<std::string> paper_only;
  int paper_workers = 1;
  bool paper_no_sweeps = false, paper_no_fractions = false;
  paper_cmd->add_option("--config", paper_config, "Experiment config file");
  paper_cmd->add_option("--profile", paper_profile, "desk | paper | smoke");
  paper_cmd->add_option("--out", paper_out_root, "Results root");
  paper_cmd->add_option("--only", paper_only, "Grid filters, e.g. env=relay");
  paper_cmd->add_option("--workers", paper_workers, "Parallel cells");
  paper_cmd->add_flag("--no-sweeps", paper_no_sweeps, "Skip the hyperparameter sweeps");
  paper_cmd->add_flag("--no-fractions", paper_no_fractions, "Skip the data-fraction grid");

  CLI11_PARSE(app, argc, argv);
  Eigen::setNbThreads(eigen_threads);

  if (*collect) {
    const EnvSpec spec = [&] {
      EnvSpec s = make_spec(env_from_string(collect_env), collect_small);
      return s;
    }();
    const std::filesystem::path out = collect_out;
    if (!collect_force && std::filesystem::exists(out) && !std::filesystem::is_empty(out))
      throw UsageError("output directory exists and is not empty (use --force): " + out.string());
    const auto summary = collect_dataset(spec, collect_train, collect_eval, collect_seed, out);
    std::printf("collected %s: %d train / %d eval episodes\n", collect_env.c_str(), summary.n_train,
                summary.n_eval);
    std::printf("sc rate: train %.4f, eval %.4f\n", summary.train_sc_rate, summary.eval_sc_rate);
    return 0;
  }

  if (*train_cmd) {
    ExperimentConfig cfg =
        train_config.empty() ? ExperimentConfig::desk_profile() : ExperimentConfig::load(train_config);
    if (!train_env.empty()) {
      const auto manifest = read_manifest(std::filesystem::path(train_data) / "train.bin");
      if (manifest.env_name != train_env)
        throw DataError("dataset holds " + manifest.env_name + ", not " + train_env);
    }
    TrainingJob job;
    job.data_dir = train_data;
    job.out_dir = train_out;
    job.variant = variant_from_string(train_variant);
    job.train = cfg.train;
    job.train.seed = train_seed;
    job.train.data_fraction = cfg.data_fraction;
    job.hyper = cfg.model;
    run_training_job(job);
    std::printf("trained %s -> %s\n", train_variant.c_str(), train_out.c_str());
    return 0;
  }

  if (*sweep_cmd) {
    ExperimentConfig cfg = load_profile(sweep_profile, sweep_config);
    Workspace ws(sweep_out_root, cfg);
    SweepOptions opts;
    opts.env = sweep_env;
    opts.workers = sweep_workers;
    run_sweep(ws, opts);
    std::printf("sweep tables written under %s\n", ws.tables_dir().string().c_str());
    return 0;
  }

  if (*eval_cmd) {
    EvalJob job;
    job.checkpoint = eval_checkpoint;
    job.data_dir = eval_data;
    job.metrics.clear();
    std::istringstream metrics(eval_metrics);
    std::string item;
    while (std::getline(metrics, item, ',')) job.metrics.push_back(item);
    job.graph_source = graph_source_from_string(eval_source);
    if (eval_monotonicity != "on" && eval_monotonicity != "off")
      throw UsageError("--monotonicity expects on|off");
    job.monotonicity = eval_monotonicity == "on";
    job.allow_ood_schema = eval_ood;
    job.threads = eval_threads;
    job.out_file = eval_out;
    const auto report = run_eval_job(job);
    std::printf("eval %s: avg mse %.6g (x1e-3: %.4f), dr %.3f\n", report.variant.c_str(),
                report.mse.avg, report.mse.avg * 1e3, report.mse.degradation_ratio);
    return 0;
  }

  if (*ablate_cmd) {
    std::vector<AblationRow> rows;
    if (ablate_kind == "graph_source")
      rows = ablate_graph_source(ablate_checkpoint, ablate_data, ablate_threads);
    else if (ablate_kind == "oracle_control")
      rows = ablate_oracle_control(ablate_checkpoint, ablate_data, ablate_threads);
    else if (ablate_kind == "monotonicity") {
      if (ablate_vanilla.empty())
        throw UsageError("--vanilla-checkpoint is required for the monotonicity ablation");
      rows = ablate_monotonicity(ablate_vanilla, ablate_checkpoint, ablate_data, ablate_threads);
    } else {
      throw UsageError("unknown ablation kind: " + ablate_kind);
    }
    write_ablation_csv(rows, ablate_out);
    for (const auto& row : rows)
      std::printf("%-24s mse_avg %.6g  dr %.3f\n", row.label.c_str(), row.mse_avg,
                  row.degradation_ratio);
    return 0;
  }

  if (*report_cmd) {
    const auto notes = write_report_tables(report_in, report_out, report_seeds);
    for (const auto& note : notes)
      std::fprintf(stderr, "warning: group %s has %d of %d seeds (partial row tagged)\n",
                   note.group.c_str(), note.seeds_present, note.seeds_expected);
    std::printf("tables written under %s\n", report_out.c_str());
    return 0;
  }

  if (*paper_cmd) {
    ExperimentConfig cfg = load_profile(paper_profile, paper_config);
    Workspace ws(paper_out_root, cfg);
    PaperRunOptions opts;
    opts.workers = paper_workers;
    opts.only = paper_only;
    opts.include_sweeps = !paper_no_sweeps;
    opts.include_fractions = !paper_no_fractions;
    if (paper_profile == "smoke") {
      opts.fractions = {0.5, 1.0};
      opts.lambda_grid = {0.0, 2.0};
      opts.de_grid = {32};
      opts.sweep_epochs = cfg.train.epochs;
    }
    run_paper(ws, opts);
    std::printf("results under %s\n", ws.root().string().c_str());
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
