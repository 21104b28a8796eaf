// SPDX-License-Identifier: Apache-2.0
#include "echo/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "echo/diagnostics.hpp"
#include "echo/errors.hpp"
#include "echo/format.hpp"
#include "echo/rng.hpp"

namespace echo::engine {

namespace {

std::string answer_string(const std::vector<int>& tokens) {
  std::ostringstream out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out << '+';
    out << tokens[i];
  }
  return out.str();
}

std::string counts_string(const std::map<std::vector<int>, int>& counts) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [answer, count] : counts) {
    if (!first) out << '|';
    first = false;
    out << answer_string(answer) << ':' << count;
  }
  return out.str();
}

std::string rewards_string(const std::vector<double>& rewards) {
  std::ostringstream out;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (i > 0) out << '|';
    out << static_cast<int>(std::llround(rewards[i]));
  }
  return out.str();
}

constexpr const char* kMetricsHeader =
    "step,task,completions,shortfall,budget,refills,vote_label,vote_counts,"
    "rewards,loss,mean_kl,mean_eps,gate_fraction,mean_abs_adv,updated\n";

void write_metrics_row(std::ostream& out, const StepMetrics& m) {
  out << m.step << ',' << m.task << ',' << m.completions << ','
      << m.shortfall << ',' << m.budget << ',' << m.refills << ','
      << m.vote_label << ',' << m.vote_counts << ',' << m.rewards << ','
      << format_double(m.loss) << ',' << format_double(m.mean_kl) << ','
      << format_double(m.mean_eps) << ',' << format_double(m.gate_fraction)
      << ',' << format_double(m.mean_abs_adv) << ',' << (m.updated ? 1 : 0)
      << '\n';
}

}  // namespace

std::vector<ToyTask> default_tasks() {
  ToyTask task;
  task.name = "toy0";
  task.prompt = {0};
  task.rule.mode = rewards::AnswerRule::Mode::last_token;
  return {task};
}

EngineState init_state(const EchoConfig& cfg) {
  return init_state(cfg,
                    policy::make_random_policy(16, 1, cfg.seed, 3.0));
}

EngineState init_state(const EchoConfig& cfg, policy::TablePolicy policy) {
  echo::validate(cfg);
  policy::validate(policy);
  EngineState state;
  state.reference = policy::snapshot_reference(policy);
  state.policy = std::move(policy);
  state.cfg = cfg;
  return state;
}

std::pair<double, double> calibrate(EngineState& state,
                                    const std::vector<ToyTask>& tasks) {
  if (state.cfg.warmup_steps < 1) {
    return {state.cfg.scheduler.entropy_low, state.cfg.scheduler.entropy_high};
  }
  if (tasks.empty()) throw ValidationError("calibrate: no tasks");
  std::vector<std::vector<int>> prompts;
  prompts.reserve(tasks.size());
  for (const ToyTask& task : tasks) prompts.push_back(task.prompt);
  const auto bounds = rollout::warmup_entropy_bounds(
      state.policy, prompts, state.cfg.warmup_steps, state.cfg.seed);
  state.cfg.scheduler.entropy_low = bounds.first;
  state.cfg.scheduler.entropy_high = bounds.second;
  return bounds;
}

StepResult run_step(EngineState& state, const ToyTask& task, int step_index) {
  const EchoConfig& cfg = state.cfg;
  const std::uint64_t rollout_id = state.rollout_counter++;

  StepResult result;
  result.tree = rollout::rollout(state.policy, task.prompt, cfg, rollout_id);

  StepMetrics& m = result.metrics;
  m.step = step_index;
  m.task = task.name;
  m.completions = static_cast<int>(result.tree.completed.size());
  m.shortfall = result.tree.shortfall;
  m.budget = result.tree.token_budget_used;
  m.refills = result.tree.refill_attempts;
  m.vote_label = "none";

  std::vector<rewards::Answer> answers;
  answers.reserve(result.tree.completed.size());
  for (const policy::Trajectory& traj : result.tree.completed) {
    answers.push_back(
        rewards::extract_answer(traj, task.rule, state.policy.eos_token));
  }

  std::optional<rewards::VoteResult> vote;
  try {
    vote = rewards::majority_vote(answers);
  } catch (const VoteFailure& err) {
    std::cerr << "[echo] step " << step_index << " task " << task.name << ": "
              << err.what() << "; update skipped\n";
  }
  if (vote) {
    m.vote_label = answer_string(vote->label);
    m.vote_counts = counts_string(vote->counts);
    m.rewards = rewards_string(vote->rewards);
  }

  if (!vote || m.completions < 2) {
    if (vote && m.completions < 2) {
      std::cerr << "[echo] step " << step_index << " task " << task.name
                << ": " << m.completions
                << " completion(s), no group to train on; update skipped\n";
    }
    return result;
  }

  rng::Stream stream = rng::named_stream(cfg.seed, "downsample", rollout_id);
  const std::vector<std::size_t> picked = rewards::downsample_for_training(
      result.tree.completed.size(), static_cast<std::size_t>(cfg.train_size),
      stream);
  std::vector<policy::Trajectory> subset;
  std::vector<double> subset_rewards;
  subset.reserve(picked.size());
  subset_rewards.reserve(picked.size());
  for (std::size_t i : picked) {
    subset.push_back(result.tree.completed[i]);
    subset_rewards.push_back(vote->rewards[i]);
  }

  optim::AdvantageBatch batch = optim::build_advantage_batch(
      std::move(subset), subset_rewards, state.policy, state.reference,
      cfg.clip, cfg.shaping);
  result.kl = optim::kl_terms(batch.trajectories, state.policy,
                              state.reference);
  m.loss = optim::echo_loss(batch, result.kl, cfg.optimizer);
  const policy::GradientTable gradient = optim::echo_gradient(
      batch, state.policy, state.reference, cfg.optimizer);
  optim::apply_update(state.policy, gradient, cfg.optimizer.learning_rate);
  m.updated = true;

  std::size_t tokens = 0;
  std::size_t open_gates = 0;
  double kl_sum = 0.0;
  double adv_sum = 0.0;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    m.mean_eps += batch.clip_radius[i];
    for (std::size_t t = 0; t < batch.trajectories[i].length(); ++t) {
      if (!batch.valid[i][t]) continue;
      ++tokens;
      kl_sum += result.kl[i][t];
      adv_sum += std::abs(batch.shaped_adv[i][t]);
      open_gates += optim::clip_gate(batch.shaped_adv[i][t],
                                     batch.ratio[i][t], batch.clip_radius[i]);
    }
  }
  m.mean_eps /= static_cast<double>(batch.trajectories.size());
  if (tokens > 0) {
    m.mean_kl = kl_sum / static_cast<double>(tokens);
    m.mean_abs_adv = adv_sum / static_cast<double>(tokens);
    m.gate_fraction =
        static_cast<double>(open_gates) / static_cast<double>(tokens);
  }
  result.batch = std::move(batch);
  return result;
}

RunResult run_experiment(const EchoConfig& cfg,
                         const std::vector<ToyTask>& tasks,
                         const std::string& out_dir, int steps, bool force) {
  echo::validate(cfg);
  if (steps < 0) throw ValidationError("run_experiment: negative step count");
  if (tasks.empty()) throw ValidationError("run_experiment: no tasks");

  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw IoError("run_experiment: output directory '" + out_dir +
                  "' is not empty; pass force to overwrite");
  }
  fs::create_directories(root / "trees");

  const auto write_text = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("run_experiment: cannot open " + path.string());
    out << text;
    if (!out) throw IoError("run_experiment: write failed " + path.string());
  };

  write_text(root / "config.cfg", echo::serialize_config(cfg));

  EngineState state = init_state(cfg);
  write_text(root / "policy_initial.json",
             policy::to_json_string(state.policy));

  if (cfg.warmup_steps > 0) {
    const auto bounds = calibrate(state, tasks);
    std::ostringstream warmup;
    warmup << "{\"warmup_steps\":" << cfg.warmup_steps << ",\"entropy_low\":"
           << format_double(bounds.first) << ",\"entropy_high\":"
           << format_double(bounds.second) << "}\n";
    write_text(root / "warmup.json", warmup.str());
  }

  std::ofstream metrics(root / "metrics.csv", std::ios::binary);
  if (!metrics) throw IoError("run_experiment: cannot open metrics.csv");
  metrics << kMetricsHeader;

  RunResult result;
  for (int step = 1; step <= steps; ++step) {
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      StepResult r = run_step(state, tasks[ti], step);
      write_metrics_row(metrics, r.metrics);
      char name[64];
      std::snprintf(name, sizeof(name), "step%04d_task%02zu.jsonl", step, ti);
      diag::write_tree_jsonl((root / "trees" / name).string(), r.tree);
      result.metrics.push_back(std::move(r.metrics));
    }
  }
  metrics.flush();
  if (!metrics) throw IoError("run_experiment: write failed metrics.csv");

  write_text(root / "policy_final.json", policy::to_json_string(state.policy));
  result.state = std::move(state);
  return result;
}

GradcheckReport gradcheck(const EchoConfig& cfg, int max_coords,
                          std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  echo::validate(cfg);
  if (max_coords < 1) throw ValidationError("gradcheck: max_coords < 1");

  policy::TablePolicy pol = policy::make_random_policy(16, 1, seed, 3.0);
  const policy::TablePolicy ref = policy::snapshot_reference(pol);
  // Shift the live policy away from the reference so the ratios leave 1 and
  // some tokens actually saturate their clip range.
  rng::Stream perturb = rng::named_stream(seed, "gradcheck-perturb");
  for (auto& [ctx, row] : pol.logits) {
    for (double& v : row) v += 0.5 * perturb.normal();
  }

  const ToyTask task = default_tasks().front();
  const rollout::RolloutTree tree =
      rollout::rollout(pol, task.prompt, cfg, /*rollout_id=*/0);
  std::vector<rewards::Answer> answers;
  for (const policy::Trajectory& traj : tree.completed) {
    answers.push_back(rewards::extract_answer(traj, task.rule, pol.eos_token));
  }
  const rewards::VoteResult vote = rewards::majority_vote(answers);

  rng::Stream pick = rng::named_stream(seed, "downsample", 0);
  const std::vector<std::size_t> picked = rewards::downsample_for_training(
      tree.completed.size(), static_cast<std::size_t>(cfg.train_size), pick);
  std::vector<policy::Trajectory> subset;
  std::vector<double> subset_rewards;
  for (std::size_t i : picked) {
    subset.push_back(tree.completed[i]);
    subset_rewards.push_back(vote.rewards[i]);
  }
  const optim::AdvantageBatch batch = optim::build_advantage_batch(
      std::move(subset), subset_rewards, pol, ref, cfg.clip, cfg.shaping);
  const policy::GradientTable grad =
      optim::echo_gradient(batch, pol, ref, cfg.optimizer);

  // Loss as a function of the parameters, with advantages and clip radii
  // frozen in the batch. Also reports the gate pattern so kink crossings can
  // be detected.
  const auto evaluate = [&](const policy::TablePolicy& p,
                            std::vector<int>& gates) -> double {
    optim::AdvantageBatch b = batch;
    optim::refresh_ratios(b, p, ref);
    gates.clear();
    for (std::size_t i = 0; i < b.trajectories.size(); ++i) {
      for (std::size_t t = 0; t < b.trajectories[i].length(); ++t) {
        if (!b.valid[i][t]) continue;
        gates.push_back(optim::clip_gate(b.shaped_adv[i][t], b.ratio[i][t],
                                         b.clip_radius[i]));
      }
    }
    const auto kl = optim::kl_terms(b.trajectories, p, ref);
    return optim::echo_loss(b, kl, cfg.optimizer);
  };

  std::vector<std::pair<policy::Context, int>> coords;
  for (const auto& [ctx, row] : pol.logits) {
    for (int j = 0; j < static_cast<int>(row.size()); ++j) {
      coords.emplace_back(ctx, j);
    }
  }
  if (static_cast<std::size_t>(max_coords) < coords.size()) {
    rng::Stream chooser = rng::named_stream(seed, "gradcheck-coords");
    const auto keep = rng::sample_without_replacement(
        coords.size(), static_cast<std::size_t>(max_coords), chooser);
    std::vector<std::pair<policy::Context, int>> chosen;
    chosen.reserve(keep.size());
    for (std::size_t k : keep) chosen.push_back(coords[k]);
    coords = std::move(chosen);
  }

  std::vector<int> gates_center;
  evaluate(pol, gates_center);

  constexpr double kStep = 1e-5;
  GradcheckReport report;
  std::vector<int> gates_plus;
  std::vector<int> gates_minus;
  for (const auto& [ctx, j] : coords) {
    policy::TablePolicy plus = pol;
    policy::TablePolicy minus = pol;
    plus.logits[ctx][j] += kStep;
    minus.logits[ctx][j] -= kStep;
    const double loss_plus = evaluate(plus, gates_plus);
    const double loss_minus = evaluate(minus, gates_minus);
    if (gates_plus != gates_center || gates_minus != gates_center) {
      ++report.coords_excluded;
      continue;
    }
    const double fd = (loss_plus - loss_minus) / (2.0 * kStep);
    double analytic = 0.0;
    if (const auto it = grad.find(ctx); it != grad.end()) {
      analytic = it->second[static_cast<std::size_t>(j)];
    }
    const double rel = std::abs(analytic - fd) /
                       std::max({std::abs(analytic), std::abs(fd), 1e-6});
    report.max_rel_err = std::max(report.max_rel_err, rel);
    ++report.coords_tested;
  }
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return report;
}

}  // namespace echo::engine
