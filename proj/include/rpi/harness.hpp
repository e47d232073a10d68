#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rpi/config.hpp"
#include "rpi/evalbench.hpp"
#include "rpi/svg_plot.hpp"

namespace rpi {

inline constexpr const char* kVersion = "0.1.0";

namespace fs2 = std::filesystem;

struct RunPaths {
  fs2::path dir;
  explicit RunPaths(fs2::path d) : dir(std::move(d)) {}
  fs2::path record_csv() const { return dir / "record.csv"; }
  fs2::path metrics() const { return dir / "metrics.txt"; }
  fs2::path events_csv() const { return dir / "events.csv"; }
  fs2::path config_txt() const { return dir / "config.txt"; }
  fs2::path critic_ckpt() const { return dir / "critic.bin"; }
  fs2::path critic2_ckpt() const { return dir / "critic2.bin"; }
  fs2::path actor_ckpt() const { return dir / "actor.bin"; }
  fs2::path done_marker() const { return dir / "DONE"; }
};

/// Filesystem-safe cell label: algorithm plus critic architecture.
inline std::string cell_label(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << to_string(cfg.agent.algorithm) << "_h" << cfg.agent.critic_hidden1 << "-"
      << cfg.agent.critic_hidden2;
  return out.str();
}

inline std::string env_label(const EnvSpec& env) {
  return env.kind == EnvKind::CartpoleDiscrete ? "cartpole_discrete"
                                               : "cartpole_continuous";
}

/// One full training run: interaction loop, periodic greedy evaluation,
/// per-episode event log, checkpoints, and the persisted RunRecord. Fully
/// deterministic in (config, seed); every random stream is derived from the
/// config fingerprint and the seed, so results do not depend on scheduling.
/// With `resume` set, a completed run (DONE marker and matching fingerprint)
/// is loaded from disk instead of retrained.
inline RunRecord run_training(const ExperimentConfig& cfg, std::uint64_t seed,
                              const fs2::path& run_dir, bool resume = false) {
  cfg.validate();
  RunPaths paths(run_dir);
  const std::string fingerprint = cfg.fingerprint();

  if (resume && fs2::exists(paths.done_marker()) && fs2::exists(paths.record_csv()) &&
      fs2::exists(paths.metrics())) {
    RunRecord prior = load_record(paths.record_csv().string(), paths.metrics().string());
    if (prior.config_fingerprint == fingerprint && prior.seed == seed) return prior;
  }

  std::error_code ec;
  fs2::create_directories(run_dir, ec);
  if (ec) throw std::runtime_error("run_training: cannot create " + run_dir.string());
  {
    std::ofstream cfg_out(paths.config_txt());
    if (!cfg_out) throw std::runtime_error("run_training: cannot open " + paths.config_txt().string());
    cfg_out << cfg.full_canonical();
  }
  fs2::remove(paths.done_marker(), ec);

  const std::uint64_t root = derive_seed(seed, {fnv1a64(fingerprint)});
  Rng env_rng(derive_seed(root, {1}));
  Rng explore_rng(derive_seed(root, {2}));
  Agent agent(cfg.agent, cfg.env, derive_seed(root, {3}));

  RunRecord rec;
  rec.config_fingerprint = fingerprint;
  rec.seed = seed;
  rec.total_steps = cfg.agent.total_steps;
  rec.solve_threshold = cfg.resolved_solve_threshold();
  rec.eval_rollouts = cfg.eval.rollouts;

  std::ofstream events(paths.events_csv());
  if (!events) throw std::runtime_error("run_training: cannot open " + paths.events_csv().string());
  events << "step,episode_return,loss,exploration,target_syncs\n";

  auto eval_at = [&](std::int64_t at_step) {
    Rng eval_rng(derive_seed(root, {4, static_cast<std::uint64_t>(at_step)}));
    EvalPoint pt = evaluate(agent, cfg.env, cfg.eval.rollouts, cfg.agent.discount, eval_rng);
    pt.training_step = at_step;
    rec.points.push_back(pt);
  };
  eval_at(0);

  EnvState s = reset(cfg.env, env_rng);
  double episode_return = 0.0;
  for (std::int64_t t = 1; t <= cfg.agent.total_steps; ++t) {
    double a = agent.act(obs_of(s), true, explore_rng);
    Transition tr = agent.discrete() ? step(cfg.env, s, static_cast<int>(a))
                                     : step(cfg.env, s, a);
    agent.train_step(tr);
    episode_return += tr.reward;
    if (tr.terminated || tr.truncated) {
      events << t << ',' << detail::fmt17(episode_return) << ','
             << detail::fmt17(agent.last_loss()) << ','
             << detail::fmt17(agent.exploration_level()) << ','
             << agent.target_sync_count() << '\n';
      episode_return = 0.0;
      s = reset(cfg.env, env_rng);
    } else {
      s = tr.next_state;
    }
    if (agent.grad_steps() > 0 && !std::isfinite(agent.last_loss())) {
      rec.status = "aborted_nonfinite_loss";
      break;
    }
    if (t % cfg.eval.every == 0) eval_at(t);
  }

  save_params(agent.critic(), paths.critic_ckpt().string());
  if (agent.critic2()) save_params(*agent.critic2(), paths.critic2_ckpt().string());
  if (agent.actor()) save_params(*agent.actor(), paths.actor_ckpt().string());
  save_record_csv(rec, paths.record_csv().string());
  save_metrics(rec, paths.metrics().string());
  std::ofstream(paths.done_marker()) << rec.status << '\n';
  return rec;
}

// --- Sweeps --------------------------------------------------------------------

struct SweepCell {
  std::string label;
  ExperimentConfig cfg;
};

inline std::vector<SweepCell> arch_sweep_cells(const ExperimentConfig& cfg) {
  if (cfg.sweep.architectures.empty())
    throw std::invalid_argument("sweep-arch: config has no [sweep] architectures list");
  std::vector<SweepCell> cells;
  for (auto [h1, h2] : cfg.sweep.architectures) {
    ExperimentConfig c = cfg.with_architecture(h1, h2);
    cells.push_back({cell_label(c), std::move(c)});
  }
  return cells;
}

inline std::vector<SweepCell> env_sweep_cells(const ExperimentConfig& cfg) {
  if (cfg.sweep.perturbations.empty())
    throw std::invalid_argument("sweep-env: config has no [sweep] perturbations list");
  std::vector<SweepCell> cells;
  for (auto [param, factor] : cfg.sweep.perturbations) {
    ExperimentConfig c = cfg.with_perturbation(param, factor);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", factor);
    cells.push_back({cell_label(c) + "_" + to_string(param) + "x" + buf, std::move(c)});
  }
  return cells;
}

struct CellOutcome {
  std::string label;
  ExperimentConfig cfg;
  std::vector<RunRecord> records;       // successful seeds only
  std::vector<std::string> errors;      // one entry per failed seed
};

struct SweepResult {
  std::string provenance_hash;
  fs2::path root;
  double wall_seconds = 0.0;
  std::vector<CellOutcome> cells;
};

/// Runs every (cell x seed) as an independent task on a small worker pool.
/// Tasks share nothing but the output tree; the manifest is the only shared
/// file and every append is mutex-guarded (line order therefore follows the
/// schedule, the set of lines does not).
inline SweepResult run_sweep(const ExperimentConfig& base, std::vector<SweepCell> cells,
                             const fs2::path& out_root, int jobs, bool resume,
                             const char* sweep_kind) {
  auto t0 = std::chrono::steady_clock::now();
  fs2::create_directories(out_root);
  std::ofstream manifest(out_root / "manifest.txt", std::ios::app);
  std::mutex manifest_mutex;

  struct Task {
    int cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int c = 0; c < static_cast<int>(cells.size()); ++c)
    for (std::uint64_t seed : cells[static_cast<std::size_t>(c)].cfg.seeds)
      tasks.push_back({c, seed});

  std::vector<std::vector<RunRecord>> records(cells.size());
  std::vector<std::vector<std::string>> errors(cells.size());
  std::mutex results_mutex;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) break;
      const Task& task = tasks[i];
      const SweepCell& cell = cells[static_cast<std::size_t>(task.cell)];
      fs2::path dir = out_root / cell.label / ("seed" + std::to_string(task.seed));
      std::string line;
      try {
        RunRecord rec = run_training(cell.cfg, task.seed, dir, resume);
        line = "status=" + rec.status + " cell=" + cell.label +
               " seed=" + std::to_string(task.seed) +
               " fingerprint=" + rec.config_fingerprint;
        std::lock_guard<std::mutex> lock(results_mutex);
        records[static_cast<std::size_t>(task.cell)].push_back(std::move(rec));
      } catch (const std::exception& e) {
        line = std::string("status=failed cell=") + cell.label +
               " seed=" + std::to_string(task.seed) + " error=" + e.what();
        std::lock_guard<std::mutex> lock(results_mutex);
        errors[static_cast<std::size_t>(task.cell)].push_back(e.what());
      }
      std::lock_guard<std::mutex> lock(manifest_mutex);
      manifest << line << '\n';
      manifest.flush();
    }
  };

  int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepResult result;
  result.root = out_root;
  result.provenance_hash = base.provenance_hash();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    // Seeds arrive in scheduling order; sort for stable downstream output.
    std::sort(records[c].begin(), records[c].end(),
              [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    result.cells.push_back({cells[c].label, cells[c].cfg, std::move(records[c]),
                            std::move(errors[c])});
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::ofstream prov(out_root / "provenance.txt");
  prov << "sweep=" << sweep_kind << "\nconfig_hash=" << result.provenance_hash
       << "\ncode_version=" << kVersion << "\nwall_seconds=" << result.wall_seconds
       << "\ncells=" << cells.size() << "\n";
  return result;
}

// --- Aggregation from disk -------------------------------------------------------
//
// Everything in the table and the curve exports is recomputed from the
// per-seed record.csv/metrics.txt pairs; the sweep itself holds no private
// state that the files do not carry.

struct DiskCell {
  std::string label;
  std::vector<RunRecord> records;
};

inline std::vector<DiskCell> scan_cells(const fs2::path& out_root) {
  std::vector<DiskCell> cells;
  if (!fs2::exists(out_root)) return cells;
  for (const auto& entry : fs2::directory_iterator(out_root)) {
    if (!entry.is_directory()) continue;
    DiskCell cell;
    cell.label = entry.path().filename().string();
    for (const auto& run : fs2::directory_iterator(entry.path())) {
      if (!run.is_directory()) continue;
      fs2::path csv = run.path() / "record.csv";
      fs2::path met = run.path() / "metrics.txt";
      if (fs2::exists(csv) && fs2::exists(met))
        cell.records.push_back(load_record(csv.string(), met.string()));
    }
    if (cell.records.empty()) continue;
    std::sort(cell.records.begin(), cell.records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
    cells.push_back(std::move(cell));
  }
  std::sort(cells.begin(), cells.end(),
            [](const DiskCell& a, const DiskCell& b) { return a.label < b.label; });
  return cells;
}

/// Table CSV, one row per (cell, metric): mean +- population std across
/// seeds, with solve statistics over the solving seeds only.
inline void write_table_csv(const std::vector<DiskCell>& cells, const std::string& env_name,
                            const fs2::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_table_csv: cannot open " + path.string());
  out << "environment,cell,metric,mean,std,n,solve_rate\n";
  for (const DiskCell& cell : cells) {
    AggregateSummary s = aggregate(cell.records);
    out << env_name << ',' << cell.label << ",final_performance,"
        << detail::fmt17(s.final_mean) << ',' << detail::fmt17(s.final_std) << ','
        << s.num_runs << ',' << detail::fmt17(s.solve_rate) << '\n';
    out << env_name << ',' << cell.label << ",auc_millions,"
        << detail::fmt17(s.auc_mean) << ',' << detail::fmt17(s.auc_std) << ','
        << s.num_runs << ',' << detail::fmt17(s.solve_rate) << '\n';
    out << env_name << ',' << cell.label << ",steps_to_solve,"
        << (s.num_solved ? detail::fmt17(s.solve_steps_mean) : "none") << ','
        << (s.num_solved ? detail::fmt17(s.solve_steps_std) : "none") << ','
        << s.num_solved << ',' << detail::fmt17(s.solve_rate) << '\n';
  }
}

/// Per-cell mean/std curves across seeds (records must share the cadence).
inline void write_curve_csv(const DiskCell& cell, const fs2::path& path) {
  const auto& recs = cell.records;
  std::size_t n_points = recs.front().points.size();
  for (const RunRecord& r : recs)
    if (r.points.size() != n_points)
      throw std::runtime_error("write_curve_csv: inconsistent cadence in cell " + cell.label);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_curve_csv: cannot open " + path.string());
  out << "step,return_mean,return_std,critic_mean,critic_std,n\n";
  for (std::size_t i = 0; i < n_points; ++i) {
    std::vector<double> rets, crits;
    for (const RunRecord& r : recs) {
      rets.push_back(r.points[i].mc_return_discounted);
      crits.push_back(r.points[i].critic_estimate);
    }
    double rm, rs, cm, cs;
    detail::mean_std(rets, rm, rs);
    detail::mean_std(crits, cm, cs);
    out << recs.front().points[i].training_step << ',' << detail::fmt17(rm) << ','
        << detail::fmt17(rs) << ',' << detail::fmt17(cm) << ',' << detail::fmt17(cs)
        << ',' << recs.size() << '\n';
  }
}

/// Rebuilds table.csv and every cell's curve.csv from the per-seed files.
inline std::vector<DiskCell> aggregate_from_disk(const fs2::path& out_root,
                                                 const std::string& env_name) {
  std::vector<DiskCell> cells = scan_cells(out_root);
  if (!cells.empty()) write_table_csv(cells, env_name, out_root / "table.csv");
  for (const DiskCell& cell : cells)
    write_curve_csv(cell, out_root / cell.label / "curve.csv");
  return cells;
}

/// Reference trajectory for golden-file checks: ten constant-push steps of
/// the default discrete rig from the origin state.
inline void write_physics_check_csv(std::ostream& out) {
  EnvSpec spec = cartpole_discrete_spec();
  out << "step,x,x_dot,theta,theta_dot,reward,terminated,truncated\n";
  EnvState s;
  for (int t = 1; t <= 10; ++t) {
    Transition tr = step(spec, s, 1);
    out << t << ',' << detail::fmt17(tr.next_state.x) << ','
        << detail::fmt17(tr.next_state.x_dot) << ','
        << detail::fmt17(tr.next_state.theta) << ','
        << detail::fmt17(tr.next_state.theta_dot) << ','
        << detail::fmt17(tr.reward) << ',' << (tr.terminated ? 1 : 0) << ','
        << (tr.truncated ? 1 : 0) << '\n';
    if (tr.terminated || tr.truncated) break;
    s = tr.next_state;
  }
}

/// One SVG per cell, straight from the per-seed records. Cells whose records
/// are missing get a placeholder panel; emission never stops early.
inline int emit_plots(const fs2::path& out_root) {
  int emitted = 0;
  if (!fs2::exists(out_root)) return 0;
  for (const auto& entry : fs2::directory_iterator(out_root)) {
    if (!entry.is_directory()) continue;
    std::string label = entry.path().filename().string();
    DiskCell cell;
    cell.label = label;
    for (const auto& run : fs2::directory_iterator(entry.path())) {
      if (!run.is_directory()) continue;
      fs2::path csv = run.path() / "record.csv";
      fs2::path met = run.path() / "metrics.txt";
      if (fs2::exists(csv) && fs2::exists(met))
        cell.records.push_back(load_record(csv.string(), met.string()));
    }
    PlotSeries returns, critic;
    if (!cell.records.empty()) {
      std::sort(cell.records.begin(), cell.records.end(),
                [](const RunRecord& a, const RunRecord& b) { return a.seed < b.seed; });
      std::size_t n_points = cell.records.front().points.size();
      bool consistent = true;
      for (const RunRecord& r : cell.records) consistent &= r.points.size() == n_points;
      if (consistent) {
        for (std::size_t i = 0; i < n_points; ++i) {
          std::vector<double> rets, crits;
          for (const RunRecord& r : cell.records) {
            rets.push_back(r.points[i].mc_return_discounted);
            crits.push_back(r.points[i].critic_estimate);
          }
          double rm, rs, cm, cs;
          detail::mean_std(rets, rm, rs);
          detail::mean_std(crits, cm, cs);
          double x = static_cast<double>(cell.records.front().points[i].training_step);
          returns.x.push_back(x);
          returns.mean.push_back(rm);
          returns.std_dev.push_back(rs);
          critic.x.push_back(x);
          critic.mean.push_back(cm);
          critic.std_dev.push_back(cs);
        }
      }
    }
    write_learning_curve_svg((entry.path() / "plot.svg").string(), label, returns, critic);
    ++emitted;
  }
  return emitted;
}

}  // namespace rpi
