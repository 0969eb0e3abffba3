#include "agwm/orchestrate.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "agwm/errors.hpp"
#include "agwm/train.hpp"

namespace agwm {

namespace {

using json = nlohmann::json;

std::string fraction_tag(double fraction) {
  return "keydungeon_f" + std::to_string(static_cast<int>(std::lround(fraction * 100)));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Runs independent cells on a small pool. Each cell must be self-contained;
/// outputs go to cell-private paths, so scheduling order cannot affect
/// results. With more than one worker, Eigen's internal threading is disabled
/// for the duration so the pool does not oversubscribe.
void run_cells(std::vector<std::function<void()>> cells, int workers) {
  if (cells.empty()) return;
  workers = std::max(1, workers);
  if (workers == 1) {
    for (auto& cell : cells) cell();
    return;
  }
  const int eigen_threads = Eigen::nbThreads();
  Eigen::setNbThreads(1);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        try {
          cells[i]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  Eigen::setNbThreads(eigen_threads);
  if (error) std::rethrow_exception(error);
}

struct Csv {
  std::ofstream out;
  explicit Csv(const std::filesystem::path& file) {
    std::filesystem::create_directories(file.parent_path());
    out.open(file);
    if (!out) throw DataError("cannot write table: " + file.string());
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  }
};

}  // namespace

Stats compute_stats(const std::vector<double>& values) {
  Stats s;
  s.n = static_cast<int>(values.size());
  if (s.n == 0) return s;
  double total = 0.0;
  for (const double v : values) total += v;
  s.mean = total / s.n;
  if (s.n > 1) {
    double sq = 0.0;
    for (const double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(sq / (s.n - 1));
  }
  return s;
}

Workspace::Workspace(std::filesystem::path root, ExperimentConfig cfg)
    : root_(std::move(root)), cfg_(std::move(cfg)) {
  std::filesystem::create_directories(root_);
}

EnvSpec Workspace::spec_for_tag(const std::string& tag) const {
  if (tag == "keydungeon_l14") {
    EnvSpec spec = make_spec(EnvName::KeyDungeon, cfg_.small_obs);
    spec.kd_levels = {1, 2, 3, 4};
    return spec;
  }
  if (tag == "keydungeon_l4")
    return make_ood_spec(make_spec(EnvName::KeyDungeon, cfg_.small_obs), OodVariant::CrossColor)
        .first;
  if (tag == "keydungeon_l5")
    return make_ood_spec(make_spec(EnvName::KeyDungeon, cfg_.small_obs), OodVariant::Chain4L5)
        .first;
  return make_spec(env_from_string(tag), cfg_.small_obs);
}

std::filesystem::path Workspace::dataset_dir(const std::string& tag) const {
  return root_ / "datasets" / tag;
}

std::filesystem::path Workspace::run_dir(const std::string& run_tag, const std::string& variant,
                                         std::uint64_t seed) const {
  return root_ / "runs" / run_tag / variant / ("s" + std::to_string(seed));
}

void Workspace::ensure_dataset(const std::string& tag) {
  const auto dir = dataset_dir(tag);
  if (std::filesystem::exists(dir / ".done")) return;
  const EnvSpec spec = spec_for_tag(tag);
  const bool eval_only = tag == "keydungeon_l4" || tag == "keydungeon_l5";
  collect_dataset(spec, eval_only ? 0 : cfg_.n_train, cfg_.n_eval, cfg_.data_seed, dir);
  std::ofstream(dir / ".done") << "ok\n";
}

void Workspace::ensure_trained(const std::string& dataset_tag, const std::string& run_tag,
                               const std::string& variant, std::uint64_t seed,
                               const TrainOverrides& overrides) {
  const auto dir = run_dir(run_tag, variant, seed);
  if (std::filesystem::exists(dir / ".done")) return;
  ensure_dataset(dataset_tag);
  TrainingJob job;
  job.data_dir = dataset_dir(dataset_tag);
  job.out_dir = dir;
  job.variant = variant_from_string(variant);
  job.train = cfg_.train;
  job.train.seed = seed;
  job.train.data_fraction = overrides.data_fraction;
  if (overrides.lambda_graph) job.train.lambda_graph = *overrides.lambda_graph;
  if (overrides.epochs) job.train.epochs = *overrides.epochs;
  job.hyper = cfg_.model;
  if (overrides.graph_embed_dim) job.hyper.graph_embed_dim = *overrides.graph_embed_dim;
  run_training_job(job);
  std::ofstream(dir / ".done") << "ok\n";
}

EvalReport Workspace::ensure_report(const ReportSpec& spec) {
  const auto file = reports_dir() / (spec.name + ".json");
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    std::ostringstream buf;
    buf << in.rdbuf();
    return EvalReport::from_json(buf.str());
  }
  EvalJob job;
  job.checkpoint = run_dir(spec.run_tag, spec.variant, spec.seed) / "checkpoint.bin";
  job.data_dir = dataset_dir(spec.data_tag);
  job.metrics = spec.metrics;
  job.graph_source = spec.source;
  job.monotonicity = spec.monotonicity;
  job.allow_ood_schema = spec.allow_ood;
  job.threads = cfg_.threads;
  job.out_file = file;
  return run_eval_job(job);
}

std::vector<AblationRow> Workspace::ensure_ablation(
    const std::string& name, const std::function<std::vector<AblationRow>()>& fn) {
  const auto file = reports_dir() / (name + ".json");
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    json j = json::parse(in);
    std::vector<AblationRow> rows;
    for (const auto& item : j) {
      AblationRow row;
      row.label = item["label"];
      row.mse_avg = item["mse_avg"];
      row.mse_step1 = item["mse_step1"];
      row.mse_step8 = item["mse_step8"];
      row.degradation_ratio = item["degradation_ratio"];
      rows.push_back(row);
    }
    return rows;
  }
  const auto rows = fn();
  json j = json::array();
  for (const auto& row : rows)
    j.push_back({{"label", row.label},
                 {"mse_avg", row.mse_avg},
                 {"mse_step1", row.mse_step1},
                 {"mse_step8", row.mse_step8},
                 {"degradation_ratio", row.degradation_ratio}});
  std::filesystem::create_directories(file.parent_path());
  std::ofstream(file) << j.dump(2) << "\n";
  return rows;
}

namespace {

const std::vector<std::string> kAllEnvs = {"keydungeon", "forage", "harvest", "relay", "cascade"};

std::vector<std::string> filtered_envs(const PaperRunOptions& opts) {
  std::vector<std::string> envs = kAllEnvs;
  for (const auto& filter : opts.only) {
    const auto eq = filter.find('=');
    if (eq == std::string::npos || filter.substr(0, eq) != "env")
      throw UsageError("unsupported --only filter: " + filter + " (expected env=<name>)");
    const std::string env = filter.substr(eq + 1);
    if (std::find(kAllEnvs.begin(), kAllEnvs.end(), env) == kAllEnvs.end())
      throw UsageError("unknown environment in --only filter: " + env);
    envs = {env};
  }
  return envs;
}

std::string seed_name(std::uint64_t seed) { return "s" + std::to_string(seed); }

}  // namespace

void run_sweep(Workspace& ws, const SweepOptions& opts) {
  const auto& cfg = ws.config();
  ws.ensure_dataset(opts.env);
  TrainOverrides base;
  if (opts.epochs) base.epochs = *opts.epochs;

  struct Cell {
    double lambda;
    int de;
    std::string tag;
  };
  std::vector<Cell> cells;
  for (const double lambda : opts.lambda_grid) {
    std::ostringstream tag;
    tag << opts.env << "_sweep_lg" << lambda << "_de32";
    cells.push_back({lambda, 32, tag.str()});
  }
  for (const int de : opts.de_grid) {
    std::ostringstream tag;
    tag << opts.env << "_sweep_lg1_de" << de;
    cells.push_back({1.0, de, tag.str()});
  }

  std::vector<std::function<void()>> jobs;
  for (const auto& cell : cells)
    for (const auto seed : cfg.seeds)
      jobs.push_back([&ws, &opts, cell, seed, base] {
        TrainOverrides ov = base;
        ov.lambda_graph = static_cast<float>(cell.lambda);
        ov.graph_embed_dim = cell.de;
        ws.ensure_trained(opts.env, cell.tag, "agwm", seed, ov);
      });
  run_cells(std::move(jobs), opts.workers);

  auto cell_stats = [&](const Cell& cell) {
    std::vector<double> drs, accs;
    for (const auto seed : cfg.seeds) {
      ReportSpec spec;
      spec.name = cell.tag + "/agwm/" + seed_name(seed) + "/predicted";
      spec.run_tag = cell.tag;
      spec.variant = "agwm";
      spec.seed = seed;
      spec.data_tag = opts.env;
      spec.metrics = {"mse", "affacc"};
      const auto report = ws.ensure_report(spec);
      drs.push_back(report.mse.degradation_ratio);
      accs.push_back(report.aff_acc.value_or(0.0));
    }
    return std::make_pair(compute_stats(drs), compute_stats(accs));
  };

  Csv lambda_csv(ws.tables_dir() / "table_lambda_sweep.csv");
  lambda_csv.row({"lambda_graph", "degradation_ratio_mean", "degradation_ratio_std",
                  "aff_acc_mean", "aff_acc_std"});
  for (std::size_t i = 0; i < opts.lambda_grid.size(); ++i) {
    const auto [dr, acc] = cell_stats(cells[i]);
    lambda_csv.row({format_double(opts.lambda_grid[i]), format_double(dr.mean),
                    format_double(dr.std_dev), format_double(acc.mean), format_double(acc.std_dev)});
  }
  Csv de_csv(ws.tables_dir() / "table_de_sweep.csv");
  de_csv.row({"graph_embed_dim", "degradation_ratio_mean", "degradation_ratio_std", "aff_acc_mean",
              "aff_acc_std"});
  for (std::size_t i = 0; i < opts.de_grid.size(); ++i) {
    const auto [dr, acc] = cell_stats(cells[opts.lambda_grid.size() + i]);
    de_csv.row({std::to_string(opts.de_grid[i]), format_double(dr.mean), format_double(dr.std_dev),
                format_double(acc.mean), format_double(acc.std_dev)});
  }
}

void run_paper(Workspace& ws, const PaperRunOptions& opts) {
  const auto& cfg = ws.config();
  const auto envs = filtered_envs(opts);
  const bool has_kd = std::find(envs.begin(), envs.end(), std::string("keydungeon")) != envs.end();

  // Phase 1: datasets.
  {
    std::vector<std::function<void()>> cells;
    for (const auto& env : envs)
      cells.push_back([&ws, env] { ws.ensure_dataset(env); });
    if (has_kd)
      for (const std::string tag : {"keydungeon_l14", "keydungeon_l4", "keydungeon_l5"})
        cells.push_back([&ws, tag] { ws.ensure_dataset(tag); });
    run_cells(std::move(cells), opts.workers);
  }

  // Phase 2: training runs.
  {
    std::vector<std::function<void()>> cells;
    for (const auto& env : envs)
      for (const auto& variant : cfg.variants)
        for (const auto seed : cfg.seeds)
          cells.push_back([&ws, env, variant, seed] { ws.ensure_trained(env, env, variant, seed); });
    if (has_kd) {
      if (opts.include_fractions)
        for (const double fraction : opts.fractions) {
          if (fraction >= 1.0) continue;  // reuses the standard runs
          for (const auto& variant : cfg.variants)
            for (const auto seed : cfg.seeds)
              cells.push_back([&ws, fraction, variant, seed] {
                TrainOverrides ov;
                ov.data_fraction = fraction;
                ws.ensure_trained("keydungeon", fraction_tag(fraction), variant, seed, ov);
              });
        }
      for (const auto seed : cfg.seeds)
        cells.push_back(
            [&ws, seed] { ws.ensure_trained("keydungeon_l14", "keydungeon_l14", "agwm", seed); });
    }
    run_cells(std::move(cells), opts.workers);
  }

  // Phase 3: sweeps (their own training cells).
  if (opts.include_sweeps) {
    SweepOptions sweep;
    sweep.lambda_grid = opts.lambda_grid;
    sweep.de_grid = opts.de_grid;
    sweep.env = opts.sweep_env;
    sweep.epochs = opts.sweep_epochs;
    sweep.workers = opts.workers;
    run_sweep(ws, sweep);
  }

  // Phase 4: evaluations. Reports are cached by name.
  std::map<std::string, std::map<std::string, std::vector<EvalReport>>> standard;  // env -> variant
  for (const auto& env : envs)
    for (const auto& variant : cfg.variants)
      for (const auto seed : cfg.seeds) {
        ReportSpec spec;
        spec.name = env + "/" + variant + "/" + seed_name(seed) + "/predicted";
        spec.run_tag = env;
        spec.variant = variant;
        spec.seed = seed;
        spec.data_tag = env;
        standard[env][variant].push_back(ws.ensure_report(spec));
      }

  std::map<double, std::map<std::string, std::vector<EvalReport>>> fraction_reports;
  if (has_kd && opts.include_fractions) {
    for (const double fraction : opts.fractions)
      for (const auto& variant : cfg.variants)
        for (const auto seed : cfg.seeds) {
          if (fraction >= 1.0) {
            fraction_reports[fraction][variant] = standard["keydungeon"][variant];
            continue;
          }
          ReportSpec spec;
          const std::string tag = fraction_tag(fraction);
          spec.name = tag + "/" + variant + "/" + seed_name(seed) + "/predicted";
          spec.run_tag = tag;
          spec.variant = variant;
          spec.seed = seed;
          spec.data_tag = "keydungeon";
          spec.metrics = {"mse", "affacc"};
          fraction_reports[fraction][variant].push_back(ws.ensure_report(spec));
        }
  }

  std::map<std::string, std::vector<double>> graph_source_mse;  // per source across seeds
  std::map<std::string, std::vector<double>> oracle_control_dr;
  std::map<std::string, std::vector<double>> monotonicity_dr;
  std::vector<double> ood_l4_cda, ood_l5_cda;
  if (has_kd) {
    for (const auto seed : cfg.seeds) {
      const auto rows = ws.ensure_ablation(
          "ablations/graph_source_" + seed_name(seed), [&ws, seed] {
            return ablate_graph_source(ws.run_dir("keydungeon", "agwm", seed) / "checkpoint.bin",
                                       ws.dataset_dir("keydungeon"), ws.config().threads);
          });
      for (const auto& row : rows) graph_source_mse[row.label].push_back(row.mse_avg);
      const auto control = ws.ensure_ablation(
          "ablations/oracle_control_" + seed_name(seed), [&ws, seed] {
            return ablate_oracle_control(
                ws.run_dir("keydungeon_l14", "agwm", seed) / "checkpoint.bin",
                ws.dataset_dir("keydungeon_l5"), ws.config().threads);
          });
      for (const auto& row : control) oracle_control_dr[row.label].push_back(row.degradation_ratio);

      {
        ReportSpec spec;
        spec.name = "ood/keydungeon_l4/" + seed_name(seed);
        spec.run_tag = "keydungeon";
        spec.variant = "agwm";
        spec.seed = seed;
        spec.data_tag = "keydungeon_l4";
        spec.metrics = {"mse", "cda"};
        ood_l4_cda.push_back(ws.ensure_report(spec).cda->cda);
      }
      {
        ReportSpec spec;
        spec.name = "ood/keydungeon_l5/" + seed_name(seed);
        spec.run_tag = "keydungeon_l14";
        spec.variant = "agwm";
        spec.seed = seed;
        spec.data_tag = "keydungeon_l5";
        spec.metrics = {"mse", "cda"};
        spec.allow_ood = true;
        ood_l5_cda.push_back(ws.ensure_report(spec).cda->cda);
      }
    }
  }
  const bool has_cascade = std::find(envs.begin(), envs.end(), std::string("cascade")) != envs.end();
  if (has_cascade) {
    for (const auto seed : cfg.seeds) {
      const auto rows = ws.ensure_ablation(
          "ablations/monotonicity_" + seed_name(seed), [&ws, seed] {
            return ablate_monotonicity(ws.run_dir("cascade", "vanilla", seed) / "checkpoint.bin",
                                       ws.run_dir("cascade", "agwm", seed) / "checkpoint.bin",
                                       ws.dataset_dir("cascade"), ws.config().threads);
          });
      for (const auto& row : rows) monotonicity_dr[row.label].push_back(row.degradation_ratio);
    }
  }

  // Phase 5: tables.
  const double scale = 1e3;
  {
    Csv csv(ws.tables_dir() / "table1_mse.csv");
    csv.row({"env", "variant", "avg_mean", "avg_std", "step1_mean", "step1_std", "step8_mean",
             "step8_std"});
    for (const auto& env : envs)
      for (const auto& variant : cfg.variants) {
        std::vector<double> avg, s1, s8;
        for (const auto& r : standard[env][variant]) {
          avg.push_back(r.mse.avg * scale);
          s1.push_back(r.mse.per_step.front() * scale);
          s8.push_back(r.mse.per_step.back() * scale);
        }
        const auto a = compute_stats(avg), b = compute_stats(s1), c = compute_stats(s8);
        csv.row({env, variant, format_double(a.mean), format_double(a.std_dev),
                 format_double(b.mean), format_double(b.std_dev), format_double(c.mean),
                 format_double(c.std_dev)});
      }
  }
  {
    Csv csv(ws.tables_dir() / "table2_detection.csv");
    csv.row({"env", "variant", "cda_mean", "cda_std", "cda_mode", "aff_acc_mean", "aff_acc_std",
             "aff_acc_mode", "cf_gap_mean", "cf_gap_std"});
    for (const auto& env : envs)
      for (const auto& variant : cfg.variants) {
        std::vector<double> cda, acc, gap;
        std::string cda_mode, acc_mode;
        for (const auto& r : standard[env][variant]) {
          if (r.cda) {
            cda.push_back(r.cda->cda);
            cda_mode = r.cda_mode;
          }
          if (r.aff_acc) {
            acc.push_back(*r.aff_acc);
            acc_mode = r.aff_acc_mode;
          }
          if (r.cf_gap) gap.push_back(r.cf_gap->gap);
        }
        const auto a = compute_stats(cda), b = compute_stats(acc), c = compute_stats(gap);
        csv.row({env, variant, format_double(a.mean), format_double(a.std_dev), cda_mode,
                 format_double(b.mean), format_double(b.std_dev), acc_mode, format_double(c.mean),
                 format_double(c.std_dev)});
      }
  }
  if (has_kd) {
    {
      Csv csv(ws.tables_dir() / "table3_ood.csv");
      csv.row({"split", "cda_mean", "cda_std"});
      const auto l4 = compute_stats(ood_l4_cda);
      const auto l5 = compute_stats(ood_l5_cda);
      csv.row({"keydungeon_l4_cross_color", format_double(l4.mean), format_double(l4.std_dev)});
      csv.row({"keydungeon_l5_chain4", format_double(l5.mean), format_double(l5.std_dev)});
    }
    {
      Csv csv(ws.tables_dir() / "table4_graph_source.csv");
      csv.row({"graph_source", "mse_mean", "mse_std"});
      std::vector<double> vanilla_mse;
      for (const auto& r : standard["keydungeon"]["vanilla"]) vanilla_mse.push_back(r.mse.avg * scale);
      const auto v = compute_stats(vanilla_mse);
      csv.row({"none_vanilla", format_double(v.mean), format_double(v.std_dev)});
      for (const std::string source : {"zeroed", "frozen", "predicted", "oracle"}) {
        std::vector<double> scaled;
        for (const double m : graph_source_mse[source]) scaled.push_back(m * scale);
        const auto s = compute_stats(scaled);
        csv.row({source, format_double(s.mean), format_double(s.std_dev)});
      }
    }
    {
      Csv csv(ws.tables_dir() / "table5_oracle_control.csv");
      csv.row({"condition", "degradation_ratio_mean", "degradation_ratio_std"});
      for (const std::string cond : {"oracle_current", "oracle_stale", "oracle_zero", "self_evolved"}) {
        const auto s = compute_stats(oracle_control_dr[cond]);
        csv.row({cond, format_double(s.mean), format_double(s.std_dev)});
      }
    }
    if (opts.include_fractions) {
      Csv csv(ws.tables_dir() / "table6_sample_efficiency.csv");
      csv.row({"fraction", "variant", "mse_mean", "mse_std", "aff_acc_mean", "aff_acc_std"});
      for (const double fraction : opts.fractions)
        for (const auto& variant : cfg.variants) {
          std::vector<double> mse, acc;
          for (const auto& r : fraction_reports[fraction][variant]) {
            mse.push_back(r.mse.avg * scale);
            if (variant == "agwm" && r.aff_acc) acc.push_back(*r.aff_acc);
          }
          const auto m = compute_stats(mse), a = compute_stats(acc);
          csv.row({format_double(fraction), variant, format_double(m.mean), format_double(m.std_dev),
                   variant == "agwm" ? format_double(a.mean) : "",
                   variant == "agwm" ? format_double(a.std_dev) : ""});
        }
    }
  }
  if (has_cascade) {
    Csv csv(ws.tables_dir() / "table_monotonicity.csv");
    csv.row({"condition", "degradation_ratio_mean", "degradation_ratio_std"});
    for (const std::string cond :
         {"vanilla", "oracle_no_constraint", "predicted_no_constraint", "constrained"}) {
      const auto s = compute_stats(monotonicity_dr[cond]);
      csv.row({cond, format_double(s.mean), format_double(s.std_dev)});
    }
  }
  {
    Csv csv(ws.tables_dir() / "curves_mse.csv");
    csv.row({"env", "variant", "step", "mse_mean", "mse_std"});
    for (const auto& env : envs)
      for (const auto& variant : cfg.variants) {
        const auto& reports = standard[env][variant];
        if (reports.empty()) continue;
        const std::size_t steps = reports.front().mse.per_step.size();
        for (std::size_t k = 0; k < steps; ++k) {
          std::vector<double> values;
          for (const auto& r : reports) values.push_back(r.mse.per_step[k] * scale);
          const auto s = compute_stats(values);
          csv.row({env, variant, std::to_string(k + 1), format_double(s.mean),
                   format_double(s.std_dev)});
        }
      }
  }
}

std::vector<AggregateNote> write_report_tables(const std::filesystem::path& reports_dir,
                                               const std::filesystem::path& out_dir,
                                               int expected_seeds) {
  if (!std::filesystem::exists(reports_dir))
    throw UsageError("reports directory does not exist: " + reports_dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(reports_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json" &&
        entry.path().string().find("ablations") == std::string::npos)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw UsageError("no eval reports found under " + reports_dir.string());

  struct Group {
    std::vector<EvalReport> reports;
  };
  std::map<std::string, Group> groups;
  for (const auto& file : files) {
    std::ifstream in(file);
    std::ostringstream buf;
    buf << in.rdbuf();
    EvalReport r = EvalReport::from_json(buf.str());
    const std::string key = r.env_name + "/" + r.variant + "/" + r.graph_source +
                            (r.monotonicity ? "" : "/no_monotonicity");
    groups[key].reports.push_back(std::move(r));
  }

  std::vector<AggregateNote> notes;
  const double scale = 1e3;
  Csv agg(out_dir / "aggregate.csv");
  agg.row({"group", "seeds", "partial", "mse_avg_mean", "mse_avg_std", "dr_mean", "dr_std",
           "cda_mean", "cda_std", "aff_acc_mean", "aff_acc_std", "cf_gap_mean", "cf_gap_std"});
  Csv curves(out_dir / "curves.csv");
  curves.row({"group", "step", "mse_mean", "mse_std"});
  for (const auto& [key, group] : groups) {
    std::vector<double> mse, dr, cda, acc, gap;
    for (const auto& r : group.reports) {
      mse.push_back(r.mse.avg * scale);
      dr.push_back(r.mse.degradation_ratio);
      if (r.cda) cda.push_back(r.cda->cda);
      if (r.aff_acc) acc.push_back(*r.aff_acc);
      if (r.cf_gap) gap.push_back(r.cf_gap->gap);
    }
    const int n = static_cast<int>(group.reports.size());
    const bool partial = n < expected_seeds;
    if (partial) notes.push_back({key, n, expected_seeds});
    const auto m = compute_stats(mse), d = compute_stats(dr), c = compute_stats(cda),
               a = compute_stats(acc), g = compute_stats(gap);
    agg.row({key, std::to_string(n), partial ? "yes" : "no", format_double(m.mean),
             format_double(m.std_dev), format_double(d.mean), format_double(d.std_dev),
             format_double(c.mean), format_double(c.std_dev), format_double(a.mean),
             format_double(a.std_dev), format_double(g.mean), format_double(g.std_dev)});
    const std::size_t steps = group.reports.front().mse.per_step.size();
    for (std::size_t k = 0; k < steps; ++k) {
      std::vector<double> values;
      for (const auto& r : group.reports) values.push_back(r.mse.per_step[k] * scale);
      const auto s = compute_stats(values);
      curves.row({key, std::to_string(k + 1), format_double(s.mean), format_double(s.std_dev)});
    }
  }
  return notes;
}

}  // namespace agwm
