// SPDX-License-Identifier: Apache-2.0
//
// echo-rl: command-line front end for the tree-rollout training engine.
//
//   run        train the toy policy and write run artifacts
//   gradcheck  compare the analytic gradient against finite differences
//   diagnose   one rollout tree, dumped as JSONL plus collapse stats
//   compare    hybrid vs entropy-only branch schedules over paired rollouts
//   vote-sim   Monte-Carlo sanity check of the majority-vote semantics
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "echo/config.hpp"
#include "echo/diagnostics.hpp"
#include "echo/engine.hpp"
#include "echo/errors.hpp"
#include "echo/format.hpp"
#include "echo/rewards.hpp"
#include "echo/rng.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string schedule_mode;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "Configuration file (key=value lines)");
  cmd->add_option("--override", opts.overrides,
                  "Single key=value override; repeatable")
      ->take_all();
  cmd->add_option("--seed", opts.seed, "Override the run seed");
  cmd->add_option("--schedule-mode", opts.schedule_mode,
                  "Branch schedule: hybrid, entropy_only, or chain");
}

echo::EchoConfig build_config(const CommonOpts& opts) {
  echo::EchoConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = echo::load_config_file(opts.config_path);
  }
  for (const std::string& assignment : opts.overrides) {
    echo::apply_override(cfg, assignment);
  }
  if (opts.seed) {
    echo::apply_override(cfg, "seed=" + std::to_string(*opts.seed));
  }
  if (!opts.schedule_mode.empty()) {
    echo::apply_override(cfg, "schedule_mode=" + opts.schedule_mode);
  }
  echo::validate(cfg);
  return cfg;
}

std::vector<int> parse_prompt(const std::string& text) {
  std::vector<int> prompt;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      prompt.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw echo::ConfigError("--prompt expects comma-separated token ids");
    }
  }
  if (prompt.empty()) throw echo::ConfigError("--prompt is empty");
  return prompt;
}

echo::policy::TablePolicy load_or_make_policy(const std::string& path,
                                              std::uint64_t seed) {
  if (path.empty()) {
    return echo::policy::make_random_policy(16, 1, seed, 3.0);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw echo::IoError("cannot open policy file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return echo::policy::policy_from_json_string(text.str());
}

std::string resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("ECHO_OUT_DIR"); env && *env) return env;
  throw echo::ConfigError("no output directory: pass --out or set ECHO_OUT_DIR");
}

std::vector<echo::engine::ToyTask> make_tasks(const std::string& prompt_flag) {
  if (prompt_flag.empty()) return echo::engine::default_tasks();
  echo::engine::ToyTask task;
  task.name = "custom0";
  task.prompt = parse_prompt(prompt_flag);
  task.rule.mode = echo::rewards::AnswerRule::Mode::last_token;
  return {task};
}

int cmd_run(const CommonOpts& common, const std::string& out_flag, int steps,
            bool force, const std::string& prompt_flag) {
  const echo::EchoConfig cfg = build_config(common);
  const std::string out_dir = resolve_out_dir(out_flag);
  const auto tasks = make_tasks(prompt_flag);
  const echo::engine::RunResult result =
      echo::engine::run_experiment(cfg, tasks, out_dir, steps, force);
  int updates = 0;
  for (const auto& m : result.metrics) updates += m.updated ? 1 : 0;
  std::cout << "run complete: " << result.metrics.size() << " step rows, "
            << updates << " updates, artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_gradcheck(const CommonOpts& common, int coords, double tolerance,
                  std::uint64_t check_seed) {
  const echo::EchoConfig cfg = build_config(common);
  const echo::engine::GradcheckReport report =
      echo::engine::gradcheck(cfg, coords, check_seed);
  std::cout << "gradcheck: max_rel_err=" << echo::format_double(report.max_rel_err)
            << " coords_tested=" << report.coords_tested
            << " coords_excluded=" << report.coords_excluded
            << " seconds=" << echo::format_double(report.seconds) << "\n";
  if (report.max_rel_err > tolerance) {
    std::cerr << "gradcheck failed tolerance " << echo::format_double(tolerance)
              << "\n";
    return 2;
  }
  return 0;
}

int cmd_diagnose(const CommonOpts& common, const std::string& policy_path,
                 const std::string& prompt_flag, const std::string& out_path,
                 std::uint64_t rollout_id) {
  const echo::EchoConfig cfg = build_config(common);
  auto tasks = make_tasks(prompt_flag);
  echo::engine::EngineState state = echo::engine::init_state(
      cfg, load_or_make_policy(policy_path, cfg.seed));
  echo::engine::calibrate(state, tasks);
  const echo::rollout::RolloutTree tree = echo::rollout::rollout(
      state.policy, tasks.front().prompt, state.cfg, rollout_id);
  if (!out_path.empty()) echo::diag::write_tree_jsonl(out_path, tree);
  const echo::diag::CollapseStats stats = echo::diag::collapse_stats(
      tree, state.cfg.scheduler.entropy_high);
  std::cout << "nodes=" << tree.nodes.size()
            << " completions=" << tree.completed.size()
            << " budget=" << tree.token_budget_used
            << " refills=" << tree.refill_attempts
            << " top3_budget_share=" << echo::format_double(stats.top3_budget_share)
            << " continuity=" << echo::format_double(stats.continuity) << "\n";
  return 0;
}

int cmd_compare(const CommonOpts& common, const std::string& policy_path,
                const std::string& prompt_flag, const std::string& out_path,
                int rollouts) {
  if (rollouts < 1) throw echo::ConfigError("--rollouts must be >= 1");
  const echo::EchoConfig base = build_config(common);
  auto tasks = make_tasks(prompt_flag);
  echo::engine::EngineState state = echo::engine::init_state(
      base, load_or_make_policy(policy_path, base.seed));
  echo::engine::calibrate(state, tasks);

  std::vector<std::pair<std::string, echo::diag::CollapseSummary>> rows;
  for (const auto mode : {echo::rollout::ScheduleMode::hybrid,
                          echo::rollout::ScheduleMode::entropy_only}) {
    echo::EchoConfig cfg = state.cfg;
    cfg.mode = mode;
    std::vector<echo::diag::CollapseStats> stats;
    stats.reserve(static_cast<std::size_t>(rollouts));
    // Same rollout ids across modes, so draws are paired.
    for (int r = 0; r < rollouts; ++r) {
      const auto tree = echo::rollout::rollout(
          state.policy, tasks.front().prompt, cfg,
          static_cast<std::uint64_t>(r));
      stats.push_back(
          echo::diag::collapse_stats(tree, cfg.scheduler.entropy_high));
    }
    const auto summary = echo::diag::summarize_collapse(stats);
    rows.emplace_back(echo::rollout::to_string(mode), summary);
    std::cout << echo::rollout::to_string(mode)
              << ": top3_budget_share=" << echo::format_double(summary.top3_budget_share)
              << " effective_branches=" << echo::format_double(summary.effective_branch_count)
              << " continuity=" << echo::format_double(summary.continuity)
              << " budget=" << echo::format_double(summary.total_budget) << "\n";
  }
  if (!out_path.empty()) echo::diag::write_collapse_csv(out_path, rows);
  return 0;
}

int cmd_vote_sim(int groups, int group_size, int alphabet,
                 std::uint64_t seed) {
  if (groups < 1 || group_size < 1 || alphabet < 1) {
    throw echo::ConfigError("vote-sim sizes must be >= 1");
  }
  echo::rng::Stream stream = echo::rng::named_stream(seed, "vote-sim");
  double label_share = 0.0;
  double reward_mean = 0.0;
  int contested = 0;  // groups whose label did not take a strict majority
  for (int g = 0; g < groups; ++g) {
    std::vector<echo::rewards::Answer> answers;
    answers.reserve(static_cast<std::size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
      answers.emplace_back(std::vector<int>{static_cast<int>(
          stream.uniform_int(static_cast<std::uint64_t>(alphabet)))});
    }
    const auto vote = echo::rewards::majority_vote(answers);
    const int winner = vote.counts.at(vote.label);
    label_share += static_cast<double>(winner) / group_size;
    for (double r : vote.rewards) reward_mean += r;
    if (2 * winner <= group_size) ++contested;
  }
  label_share /= groups;
  reward_mean /= static_cast<double>(groups) * group_size;
  std::cout << "groups=" << groups << " group_size=" << group_size
            << " alphabet=" << alphabet
            << " mean_label_share=" << echo::format_double(label_share)
            << " mean_reward=" << echo::format_double(reward_mean)
            << " contested=" << contested << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy/confidence-guided tree-rollout RL on a toy policy"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  std::string run_out;
  std::string run_prompt;
  int run_steps = 10;
  bool run_force = false;
  CLI::App* run = app.add_subcommand("run", "Train and write run artifacts");
  add_common(run, run_opts);
  run->add_option("--out", run_out, "Output directory (or ECHO_OUT_DIR)");
  run->add_option("--steps", run_steps, "Optimizer steps")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--prompt", run_prompt, "Custom prompt, comma-separated ids");
  run->add_flag("--force", run_force, "Write into a non-empty directory");

  CommonOpts grad_opts;
  int grad_coords = 300;
  double grad_tolerance = 1e-4;
  std::uint64_t grad_seed = 7;
  CLI::App* grad = app.add_subcommand(
      "gradcheck", "Finite-difference check of the analytic gradient");
  add_common(grad, grad_opts);
  grad->add_option("--coords", grad_coords, "Max coordinates to test")
      ->check(CLI::PositiveNumber);
  grad->add_option("--tolerance", grad_tolerance, "Max relative error");
  grad->add_option("--check-seed", grad_seed, "Fixture seed");

  CommonOpts diag_opts;
  std::string diag_policy;
  std::string diag_prompt;
  std::string diag_out;
  std::uint64_t diag_rollout_id = 0;
  CLI::App* diag = app.add_subcommand(
      "diagnose", "Dump one rollout tree with collapse statistics");
  add_common(diag, diag_opts);
  diag->add_option("--policy", diag_policy, "Start policy JSON");
  diag->add_option("--prompt", diag_prompt, "Prompt, comma-separated ids");
  diag->add_option("--out", diag_out, "Tree JSONL path");
  diag->add_option("--rollout-id", diag_rollout_id, "Rollout stream id");

  CommonOpts cmp_opts;
  std::string cmp_policy;
  std::string cmp_prompt;
  std::string cmp_out;
  int cmp_rollouts = 20;
  CLI::App* cmp = app.add_subcommand(
      "compare", "Hybrid vs entropy-only schedule over paired rollouts");
  add_common(cmp, cmp_opts);
  cmp->add_option("--policy", cmp_policy, "Start policy JSON");
  cmp->add_option("--prompt", cmp_prompt, "Prompt, comma-separated ids");
  cmp->add_option("--out", cmp_out, "Summary CSV path");
  cmp->add_option("--rollouts", cmp_rollouts, "Rollouts per schedule")
      ->check(CLI::PositiveNumber);

  int sim_groups = 1000;
  int sim_group_size = 64;
  int sim_alphabet = 8;
  std::uint64_t sim_seed = 0;
  CLI::App* sim = app.add_subcommand(
      "vote-sim", "Monte-Carlo check of majority-vote behavior");
  sim->add_option("--groups", sim_groups, "Simulated groups")
      ->check(CLI::PositiveNumber);
  sim->add_option("--group-size", sim_group_size, "Answers per group")
      ->check(CLI::PositiveNumber);
  sim->add_option("--alphabet", sim_alphabet, "Distinct possible answers")
      ->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "Simulation seed");

  try {
    app.parse(argc, argv);
    if (run->parsed()) {
      return cmd_run(run_opts, run_out, run_steps, run_force, run_prompt);
    }
    if (grad->parsed()) {
      return cmd_gradcheck(grad_opts, grad_coords, grad_tolerance, grad_seed);
    }
    if (diag->parsed()) {
      return cmd_diagnose(diag_opts, diag_policy, diag_prompt, diag_out,
                          diag_rollout_id);
    }
    if (cmp->parsed()) {
      return cmd_compare(cmp_opts, cmp_policy, cmp_prompt, cmp_out,
                         cmp_rollouts);
    }
    if (sim->parsed()) {
      return cmd_vote_sim(sim_groups, sim_group_size, sim_alphabet, sim_seed);
    }
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const echo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const echo::ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
