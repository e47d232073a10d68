// Command-line front end: training runs, the two sweep protocols, exact
// constrained policy iteration on MDP fixtures, aggregation, and plot export.

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "rpi/config.hpp"
#include "rpi/harness.hpp"
#include "rpi/rpi_exact.hpp"

namespace fs = std::filesystem;
using namespace rpi;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string seeds;
  std::string out_dir;
  int jobs = static_cast<int>(std::thread::hardware_concurrency());
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")->required();
  cmd->add_option("--seeds", opts.seeds, "seed list, e.g. 0-9 or 0,2,5");
  cmd->add_option("--jobs", opts.jobs, "max parallel runs");
  cmd->add_flag("--resume", opts.resume, "skip runs already completed on disk");
  cmd->add_option("--out", opts.out_dir, "output directory");
}

/// Output root precedence: --out, then the config's output_dir, then
/// $RPIBENCH_OUT, then ./runs.
fs::path resolve_out(const CommonOpts& opts, const ExperimentConfig& cfg) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* env = std::getenv("RPIBENCH_OUT")) return env;
  return "runs";
}

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts.config_path);
  if (!opts.seeds.empty()) cfg.seeds = parse_seed_list(opts.seeds);
  return cfg;
}

void print_summary(const std::vector<DiskCell>& cells) {
  for (const DiskCell& cell : cells) {
    AggregateSummary s = aggregate(cell.records);
    std::printf("%-28s final %7.2f +- %-6.2f  auc(x1e6) %5.2f +- %-5.2f  solve_rate %.2f",
                cell.label.c_str(), s.final_mean, s.final_std, s.auc_mean, s.auc_std,
                s.solve_rate);
    if (s.num_solved)
      std::printf("  steps_to_solve %.0f +- %.0f", s.solve_steps_mean, s.solve_steps_std);
    std::printf("\n");
  }
}

std::string env_label_from_disk(const fs::path& root) {
  if (!fs::exists(root)) return "unknown";
  for (const auto& cell : fs::directory_iterator(root)) {
    if (!cell.is_directory()) continue;
    for (const auto& run : fs::directory_iterator(cell.path())) {
      fs::path cfg = run.path() / "config.txt";
      if (!fs::exists(cfg)) continue;
      std::ifstream in(cfg);
      std::string line;
      while (std::getline(in, line))
        if (line.rfind("env.kind=", 0) == 0) return line.substr(9);
    }
  }
  return "unknown";
}

int cmd_train(const CommonOpts& opts) {
  ExperimentConfig cfg = load_with_overrides(opts);
  fs::path out = resolve_out(opts, cfg);
  std::vector<SweepCell> cell = {{cell_label(cfg), cfg}};
  SweepResult res = run_sweep(cfg, cell, out, opts.jobs, opts.resume, "train");
  auto cells = aggregate_from_disk(out, env_label(cfg.env));
  print_summary(cells);
  std::printf("wrote %s (%.1fs)\n", out.string().c_str(), res.wall_seconds);
  for (const CellOutcome& c : res.cells)
    for (const std::string& err : c.errors) {
      std::fprintf(stderr, "run failed: %s\n", err.c_str());
      return 1;
    }
  return 0;
}

int cmd_sweep(const CommonOpts& opts, bool arch) {
  ExperimentConfig cfg = load_with_overrides(opts);
  fs::path out = resolve_out(opts, cfg);
  auto cells = arch ? arch_sweep_cells(cfg) : env_sweep_cells(cfg);
  SweepResult res = run_sweep(cfg, cells, out, opts.jobs, opts.resume,
                              arch ? "arch" : "env");
  auto disk = aggregate_from_disk(out, env_label(cfg.env));
  print_summary(disk);
  int failures = 0;
  for (const CellOutcome& c : res.cells) failures += static_cast<int>(c.errors.size());
  std::printf("sweep %s: %zu cells, %d failed runs, %.1fs, hash %s\n",
              arch ? "arch" : "env", res.cells.size(), failures, res.wall_seconds,
              res.provenance_hash.c_str());
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& config_path, const std::string& run_dir, int rollouts,
             std::uint64_t eval_seed) {
  ExperimentConfig cfg = load_config(config_path);
  Agent agent(cfg.agent, cfg.env, 0);
  RunPaths paths((fs::path(run_dir)));
  agent.load_critic(load_params(paths.critic_ckpt().string()));
  if (is_ddpg_family(cfg.agent.algorithm))
    agent.load_actor(load_params(paths.actor_ckpt().string()));
  int n = rollouts > 0 ? rollouts : cfg.eval.rollouts;
  Rng rng(derive_seed(eval_seed, {0x6576616C}));
  EvalPoint pt = evaluate(agent, cfg.env, n, cfg.agent.discount, rng);
  std::printf("rollouts=%d\nreturn_disc=%.6f\nreturn_undisc=%.6f\n"
              "critic_est=%.6f\nreturn_std=%.6f\n",
              pt.num_rollouts, pt.mc_return_discounted, pt.mc_return_undiscounted,
              pt.critic_estimate, pt.return_std);
  return 0;
}

int cmd_rpi_exact(const std::string& mdp_path, int max_iters, const std::string& norm,
                  const std::string& out_path) {
  TabularMDP mdp = load_mdp(mdp_path);
  FeatureMap features = FeatureMap::tabular(mdp.num_states, mdp.num_actions);
  RpiOptions opts;
  opts.max_iters = max_iters;
  if (norm == "l1") opts.norm = RpiNorm::L1;
  else if (norm == "linf") opts.norm = RpiNorm::LInf;
  else throw std::invalid_argument("--norm must be l1 or linf");

  auto iterates = rpi_iterate(mdp, features, default_initial_estimate(mdp),
                              std::nullopt, opts);
  auto report = check_theorem_properties(iterates, mdp);

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("rpi-exact: cannot open " + out_path);
    out = &file;
  }
  write_rpi_exact_csv(mdp, iterates, *out);
  std::fprintf(stderr,
               "iterations=%zu max_monotonicity_violation=%g max_lower_bound_violation=%g\n",
               iterates.size() - 1, report.max_monotonicity_violation,
               report.max_lower_bound_violation);
  return report.passes(1e-7) ? 0 : 2;
}

int cmd_physics_check(const std::string& out_path) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("physics-check: cannot open " + out_path);
    out = &file;
  }
  write_physics_check_csv(*out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reinforcement-learning benchmark harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CommonOpts train_opts, arch_opts, env_opts;
  auto* train = app.add_subcommand("train", "train one configuration across seeds");
  add_common(train, train_opts);

  auto* sweep_arch = app.add_subcommand("sweep-arch", "architecture sweep");
  add_common(sweep_arch, arch_opts);
  auto* sweep_env = app.add_subcommand("sweep-env", "physics-perturbation sweep");
  add_common(sweep_env, env_opts);

  std::string eval_config, eval_run_dir;
  int eval_rollouts = 0;
  std::uint64_t eval_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpointed run");
  eval_cmd->add_option("--config", eval_config, "experiment config file")->required();
  eval_cmd->add_option("--run-dir", eval_run_dir, "run directory with checkpoints")->required();
  eval_cmd->add_option("--rollouts", eval_rollouts, "rollouts (default: config value)");
  eval_cmd->add_option("--eval-seed", eval_seed, "evaluation seed");

  std::string mdp_path, norm = "l1", rpi_out;
  int max_iters = 100;
  auto* rpi_exact_cmd = app.add_subcommand("rpi-exact",
                                           "constrained policy iteration on an MDP fixture");
  rpi_exact_cmd->add_option("--mdp", mdp_path, "MDP fixture file (rpi-mdp v1)")->required();
  rpi_exact_cmd->add_option("--max-iters", max_iters, "iteration cap");
  rpi_exact_cmd->add_option("--norm", norm, "evaluation norm: l1 or linf");
  rpi_exact_cmd->add_option("--out", rpi_out, "CSV output path (default stdout)");

  std::string agg_dir, plot_dir, physics_out;
  auto* agg_cmd = app.add_subcommand("aggregate", "rebuild table.csv and curves from disk");
  agg_cmd->add_option("--out", agg_dir, "output directory to scan")->required();
  auto* plot_cmd = app.add_subcommand("plot", "emit one SVG panel per cell");
  plot_cmd->add_option("--out", plot_dir, "output directory to scan")->required();
  auto* physics_cmd = app.add_subcommand("physics-check", "golden 10-step trajectory dump");
  physics_cmd->add_option("--out", physics_out, "CSV output path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(train_opts);
    if (sweep_arch->parsed()) return cmd_sweep(arch_opts, true);
    if (sweep_env->parsed()) return cmd_sweep(env_opts, false);
    if (eval_cmd->parsed()) return cmd_eval(eval_config, eval_run_dir, eval_rollouts, eval_seed);
    if (rpi_exact_cmd->parsed()) return cmd_rpi_exact(mdp_path, max_iters, norm, rpi_out);
    if (agg_cmd->parsed()) {
      auto cells = aggregate_from_disk(agg_dir, env_label_from_disk(agg_dir));
      print_summary(cells);
      return 0;
    }
    if (plot_cmd->parsed()) {
      int n = emit_plots(plot_dir);
      std::printf("emitted %d plot(s)\n", n);
      return 0;
    }
    if (physics_cmd->parsed()) return cmd_physics_check(physics_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
