// SPDX-License-Identifier: Apache-2.0
//
// Full training loop on the toy table policy, plus the finite-difference
// gradient check used to validate the analytic update path.
//
// One step = one tree rollout per task, a majority vote over the completed
// group (no labels anywhere), a uniform downsample to the training subset,
// one batch build, and one gradient-ascent update. A failed vote (no valid
// answers in the whole group) skips the update for that task and records the
// step with updated=0; it never aborts the run.
//
// run_experiment writes into an output directory:
//   config.cfg            exact snapshot of the input configuration
//   warmup.json           calibrated entropy bounds (when warm-up ran)
//   policy_initial.json   parameters before any update
//   policy_final.json     parameters after the last step
//   metrics.csv           one row per (step, task)
//   trees/stepNNNN_taskNN.jsonl   every rollout tree, one node per line
//
// All numeric output goes through format_double, so two runs with the same
// seed produce byte-identical files.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "echo/config.hpp"
#include "echo/optimizer.hpp"
#include "echo/policy.hpp"
#include "echo/rewards.hpp"
#include "echo/rollout.hpp"

namespace echo::engine {

/// A prompt with an answer-extraction rule. Nothing here encodes a correct
/// answer; rewards come from agreement within the group.
struct ToyTask {
  std::string name;
  std::vector<int> prompt;
  rewards::AnswerRule rule;
};

/// The built-in task set: one prompt per task, answers read as the final
/// non-EOS token.
std::vector<ToyTask> default_tasks();

/// Mutable run state. `cfg.scheduler` carries the calibrated entropy bounds
/// after calibrate(); `rollout_counter` namespaces per-rollout randomness.
struct EngineState {
  policy::TablePolicy policy;
  policy::TablePolicy reference;
  EchoConfig cfg;
  std::uint64_t rollout_counter = 0;
};

/// Fresh state with a randomly initialized toy policy (16 tokens, order-1
/// contexts, EOS = 15) seeded from cfg.seed, and the reference frozen to it.
EngineState init_state(const EchoConfig& cfg);

/// Same, but starting from a caller-supplied policy.
EngineState init_state(const EchoConfig& cfg, policy::TablePolicy policy);

/// Warm-up calibration: chain-sample over the task prompts, set the width
/// schedule's entropy bounds to the pooled 10th/90th percentiles, and return
/// them. warmup_steps == 0 leaves the configured bounds untouched.
std::pair<double, double> calibrate(EngineState& state,
                                    const std::vector<ToyTask>& tasks);

/// Flat per-step record; mirrors one metrics.csv row.
struct StepMetrics {
  int step = 0;
  std::string task;
  int completions = 0;
  int shortfall = 0;
  std::uint64_t budget = 0;
  std::uint64_t refills = 0;
  std::string vote_label;   ///< winning answer, tokens joined by '+'.
  std::string vote_counts;  ///< "answer:count" pairs joined by '|'.
  std::string rewards;      ///< full-group 0/1 rewards joined by '|'.
  double loss = 0.0;
  double mean_kl = 0.0;
  double mean_eps = 0.0;
  double gate_fraction = 0.0;  ///< fraction of scored tokens left unclipped.
  double mean_abs_adv = 0.0;
  bool updated = false;
};

/// Everything one step produced; the batch and KL terms are exposed so tests
/// can re-derive the loss independently.
struct StepResult {
  StepMetrics metrics;
  rollout::RolloutTree tree;
  std::optional<optim::AdvantageBatch> batch;  ///< set iff an update ran.
  std::vector<std::vector<double>> kl;         ///< aligned with the batch.
};

/// One rollout / vote / update cycle on one task. Throws RolloutFailure only
/// if the rollout itself produces zero completions.
StepResult run_step(EngineState& state, const ToyTask& task, int step_index);

/// A finished run: final state plus every step record, in execution order.
struct RunResult {
  EngineState state;
  std::vector<StepMetrics> metrics;
};

/// Run `steps` full cycles over `tasks`, writing the artifacts listed in the
/// file comment into out_dir. Refuses a non-empty out_dir unless force.
/// steps == 0 still writes the config and policy snapshots.
RunResult run_experiment(const EchoConfig& cfg,
                         const std::vector<ToyTask>& tasks,
                         const std::string& out_dir, int steps, bool force);

/// Finite-difference check of the analytic gradient.
struct GradcheckReport {
  double max_rel_err = 0.0;
  int coords_tested = 0;   ///< coordinates compared against central FD.
  int coords_excluded = 0; ///< skipped: a clip boundary moved under +-h.
  double seconds = 0.0;
};

/// Builds a perturbed-policy batch (so ratios differ from 1 and some tokens
/// clip), then compares echo_gradient against a central finite difference of
/// echo_loss at step h = 1e-5 for up to max_coords logit coordinates.
/// Coordinates whose clip-gate pattern changes inside [-h, +h] are excluded:
/// the objective has a kink there and FD is meaningless across it.
GradcheckReport gradcheck(const EchoConfig& cfg, int max_coords,
                          std::uint64_t seed);

}  // namespace echo::engine
