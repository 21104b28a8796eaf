// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file rollout.hpp
 * @brief Entropy/confidence-scheduled tree rollouts with online pruning.
 *
 * A rollout grows a prefix-sharing tree from one prompt. At each step every
 * active branch looks at its next-token distribution, appends the entropy
 * and confidence observations to its trace, and receives a branch width:
 *
 *   width = clip(round(B_min + a * (H - H_low) / (H_high - H_low + eps)
 *                            - b * (C_G - s)   / (|s| + eps)), B_min, B_max)
 *
 * (round is half-away-from-zero). A width above 1 forks the branch into that
 * many children taking the most probable tokens; otherwise the branch
 * samples a single token from its own named random stream. After expansion
 * the pruning rules run in fixed precedence: low confidence (running minimum
 * of grouped confidence under a floor), tail decline (enough consecutive
 * tail-confidence drops while under the tail floor), entropy spike (enough
 * consecutive mean-entropy jumps above a threshold). Surviving branches
 * complete on the EOS token or at the length cap.
 *
 * Collection stops at `group_size` completions. If the tree finishes short,
 * chain-style rollouts (width pinned to 1) are launched from the root until
 * the target or the hard token budget (4 * group_size * max_length) is
 * reached. A rollout with zero completions throws RolloutFailure.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "echo/policy.hpp"
#include "echo/signals.hpp"

namespace echo {
struct EchoConfig;  // defined in echo/config.hpp
}

namespace echo::rollout {

/// How branch widths are scheduled.
enum class ScheduleMode {
  hybrid,        ///< entropy and confidence terms, as in the width formula.
  entropy_only,  ///< confidence term dropped (its gain treated as zero).
  chain,         ///< width pinned to 1; no forking at all.
};

const char* to_string(ScheduleMode mode);

/// Branch-width schedule parameters.
struct BranchSchedulerConfig {
  int min_width = 1;             ///< B_min.
  int max_width = 4;             ///< B_max.
  double entropy_gain = 3.0;     ///< alpha_B, weight of the entropy term.
  double confidence_gain = 1.0;  ///< beta_B, weight of the confidence term.
  double entropy_low = 1.0;      ///< H_low.
  double entropy_high = 3.5;     ///< H_high.
  double confidence_ref = 1.2;   ///< s_branch.
  double eps_stab = 1e-6;        ///< denominator guard.
};

/// Online pruning thresholds.
struct PruneConfig {
  double conf_floor = 0.4;       ///< tau_prune, on min grouped confidence.
  int decline_patience = 3;      ///< S_tail, consecutive tail declines.
  double tail_floor = 1.0;       ///< tau_tail, tail confidence ceiling.
  double spike_threshold = 0.5;  ///< delta_upper, on the entropy increment.
  int spike_patience = 3;        ///< S_delta, consecutive spikes.
};

/// Real-valued width before rounding and clipping. Monotone non-decreasing
/// in entropy and non-increasing in grouped confidence when both gains are
/// non-negative.
double branch_width_raw(double entropy, double grouped_conf,
                        const BranchSchedulerConfig& cfg);

/// Integer branch width: round half away from zero, then clip to
/// [min_width, max_width]. A result of 1 means a chain step (no fork).
int branch_width(double entropy, double grouped_conf,
                 const BranchSchedulerConfig& cfg);

/// Width under a schedule mode: hybrid uses the formula above, entropy_only
/// zeroes the confidence gain, chain returns 1.
int scheduled_width(double entropy, double grouped_conf,
                    const BranchSchedulerConfig& cfg, ScheduleMode mode);

/// The `width` most probable token ids, probability descending, ties toward
/// the lower token id. Tokens with zero probability are never selected, so
/// the result may be shorter than `width`.
std::vector<int> select_branch_tokens(const signals::TokenDistribution& dist,
                                      int width);

/// First pruning rule that fires on the current trace state, in precedence
/// order low_confidence, tail_decline, entropy_spike; nullopt if none.
std::optional<policy::PruneReason> apply_pruning(
    const signals::SignalTrace& trace, const PruneConfig& cfg);

/// Node status in the rollout tree.
enum class NodeStatus {
  root,       ///< the prompt anchor; carries no token.
  internal,   ///< expanded at least once, or still growing at shutdown.
  completed,  ///< leaf of a collected trajectory.
  pruned,     ///< removed by a pruning rule.
  dropped,    ///< abandoned when the budget or collection target cut in.
};

const char* to_string(NodeStatus status);

/// One token of the tree. Signal fields are the branch-trace values at the
/// step that created the node; children of one fork share them.
struct TreeNode {
  int id = 0;
  int parent = -1;  ///< -1 for the root.
  int token = -1;   ///< -1 for the root.
  int step = 0;     ///< 1-indexed depth; 0 for the root.
  double entropy = 0.0;
  double confidence = 0.0;
  double grouped_conf = 0.0;
  double tail_conf = 0.0;
  double token_logprob = 0.0;  ///< ln p of this token at its parent prefix.
  NodeStatus status = NodeStatus::internal;
  std::optional<policy::PruneReason> prune_reason;
  int trajectory = -1;  ///< index into `completed` for completed leaves.
};

/// A finished rollout. `completed` holds at most `group_size` trajectories
/// in completion order; `active` is empty once rollout() returns.
struct RolloutTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root.
  std::vector<int> active;      ///< live leaf ids during construction.
  std::vector<policy::Trajectory> completed;
  std::uint64_t token_budget_used = 0;  ///< equals nodes.size() - 1.
  std::uint64_t budget_cap = 0;
  std::uint64_t refill_attempts = 0;
  int shortfall = 0;  ///< max(0, group_size - completions).
  std::map<std::string, std::uint64_t> pruned_by_reason;
};

/// Grow one tree from `prompt`. `rollout_id` namespaces the per-branch
/// random streams so distinct rollouts of one run never share draws.
/// Throws RolloutFailure when no trajectory completes.
RolloutTree rollout(const policy::TablePolicy& policy,
                    std::span<const int> prompt, const EchoConfig& cfg,
                    std::uint64_t rollout_id);

/// 10th/90th percentiles (linear interpolation) of entropy observations;
/// falls back to `fallback` when the spread is degenerate (p90 <= p10).
/// Throws ConfigError on an empty sample.
std::pair<double, double> entropy_percentile_bounds(
    std::vector<double> observations,
    std::pair<double, double> fallback = {1.0, 3.5});

/// Chain-sample up to `warmup_steps` tokens per prompt (no parameter
/// updates, no forking), pooling the per-step entropies across all prompts,
/// and return percentile bounds for the width schedule.
std::pair<double, double> warmup_entropy_bounds(
    const policy::TablePolicy& policy,
    const std::vector<std::vector<int>>& prompts, int warmup_steps,
    std::uint64_t seed);

}  // namespace echo::rollout
