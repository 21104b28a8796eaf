// SPDX-License-Identifier: Apache-2.0
#include "echo/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "echo/config.hpp"
#include "echo/errors.hpp"

namespace echo::rollout {

const char* to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::hybrid: return "hybrid";
    case ScheduleMode::entropy_only: return "entropy_only";
    case ScheduleMode::chain: return "chain";
  }
  return "unknown";
}

const char* to_string(NodeStatus status) {
  switch (status) {
    case NodeStatus::root: return "root";
    case NodeStatus::internal: return "internal";
    case NodeStatus::completed: return "completed";
    case NodeStatus::pruned: return "pruned";
    case NodeStatus::dropped: return "dropped";
  }
  return "unknown";
}

double branch_width_raw(double entropy, double grouped_conf,
                        const BranchSchedulerConfig& cfg) {
  if (!std::isfinite(entropy) || !std::isfinite(grouped_conf)) {
    throw ValidationError("branch_width: non-finite inputs");
  }
  if (cfg.min_width < 1 || cfg.max_width < cfg.min_width ||
      cfg.eps_stab <= 0.0) {
    throw ValidationError("branch_width: malformed scheduler config");
  }
  const double entropy_term =
      cfg.entropy_gain * (entropy - cfg.entropy_low) /
      (cfg.entropy_high - cfg.entropy_low + cfg.eps_stab);
  const double confidence_term =
      cfg.confidence_gain * (grouped_conf - cfg.confidence_ref) /
      (std::abs(cfg.confidence_ref) + cfg.eps_stab);
  return static_cast<double>(cfg.min_width) + entropy_term - confidence_term;
}

int branch_width(double entropy, double grouped_conf,
                 const BranchSchedulerConfig& cfg) {
  const double raw = branch_width_raw(entropy, grouped_conf, cfg);
  if (!std::isfinite(raw)) {
    throw ValidationError("branch_width: non-finite raw width");
  }
  const long long rounded = std::llround(raw);  // half away from zero
  const long long clipped =
      std::clamp<long long>(rounded, cfg.min_width, cfg.max_width);
  return static_cast<int>(clipped);
}

int scheduled_width(double entropy, double grouped_conf,
                    const BranchSchedulerConfig& cfg, ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::hybrid:
      return branch_width(entropy, grouped_conf, cfg);
    case ScheduleMode::entropy_only: {
      BranchSchedulerConfig ablated = cfg;
      ablated.confidence_gain = 0.0;
      return branch_width(entropy, grouped_conf, ablated);
    }
    case ScheduleMode::chain:
      return 1;
  }
  throw ValidationError("scheduled_width: unknown mode");
}

std::vector<int> select_branch_tokens(const signals::TokenDistribution& dist,
                                      int width) {
  signals::validate(dist);
  if (width < 1 || static_cast<std::size_t>(width) > dist.probs.size()) {
    throw ValidationError("select_branch_tokens: width outside [1, vocab]");
  }
  std::vector<int> order(dist.probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dist.probs[a] > dist.probs[b];
  });
  std::vector<int> chosen;
  for (int idx : order) {
    if (static_cast<int>(chosen.size()) == width) break;
    if (dist.probs[idx] <= 0.0) break;  // never select zero-mass tokens
    chosen.push_back(idx);
  }
  return chosen;
}

std::optional<policy::PruneReason> apply_pruning(
    const signals::SignalTrace& trace, const PruneConfig& cfg) {
  if (trace.size() == 0) {
    throw ValidationError("apply_pruning: empty trace");
  }
  if (trace.running_min < cfg.conf_floor) {
    return policy::PruneReason::low_confidence;
  }
  if (trace.decline_count >= cfg.decline_patience &&
      trace.tail_conf.back() <= cfg.tail_floor) {
    return policy::PruneReason::tail_decline;
  }
  if (trace.spike_count >= cfg.spike_patience) {
    return policy::PruneReason::entropy_spike;
  }
  return std::nullopt;
}

namespace {

struct BranchState {
  int id;
  int leaf;  ///< node id of the branch tip.
  std::vector<int> tokens;
  std::vector<double> logprobs;
  signals::SignalTrace trace;
  rng::Stream stream;
};

enum class Outcome { live, pruned, completed, dropped };

}  // namespace

RolloutTree rollout(const policy::TablePolicy& policy,
                    std::span<const int> prompt, const EchoConfig& cfg,
                    std::uint64_t rollout_id) {
  policy::validate(policy);
  validate(cfg);
  for (int tok : prompt) {
    if (tok < 0 || tok >= policy.vocab_size) {
      throw ValidationError("rollout: prompt token outside vocabulary");
    }
  }

  RolloutTree tree;
  tree.budget_cap = 4ull * static_cast<std::uint64_t>(cfg.group_size) *
                    static_cast<std::uint64_t>(cfg.max_length);
  TreeNode root;
  root.id = 0;
  root.status = NodeStatus::root;
  tree.nodes.push_back(root);

  int next_branch_id = 0;
  const auto make_branch = [&](int leaf) {
    BranchState branch{next_branch_id,
                       leaf,
                       {},
                       {},
                       {},
                       rng::named_stream(cfg.seed, "branch", rollout_id,
                                         static_cast<std::uint64_t>(
                                             next_branch_id))};
    ++next_branch_id;
    return branch;
  };

  const auto budget_left = [&] {
    return tree.token_budget_used < tree.budget_cap;
  };
  const auto group_full = [&] {
    return static_cast<int>(tree.completed.size()) >= cfg.group_size;
  };

  const auto add_node = [&](int parent, int token, double logprob,
                            const signals::SignalTrace& trace) {
    TreeNode node;
    node.id = static_cast<int>(tree.nodes.size());
    node.parent = parent;
    node.token = token;
    node.step = static_cast<int>(trace.size());
    node.entropy = trace.entropy.back();
    node.confidence = trace.confidence.back();
    node.grouped_conf = trace.grouped_conf.back();
    node.tail_conf = trace.tail_conf.back();
    node.token_logprob = logprob;
    node.status = NodeStatus::internal;
    tree.nodes.push_back(node);
    tree.token_budget_used += 1;
    return node.id;
  };

  // Pruning first, then completion: a branch that trips a rule on the same
  // step it would finish is recorded as pruned.
  const auto evaluate = [&](BranchState& branch) {
    TreeNode& node = tree.nodes[branch.leaf];
    if (const auto reason = apply_pruning(branch.trace, cfg.prune)) {
      node.status = NodeStatus::pruned;
      node.prune_reason = reason;
      tree.pruned_by_reason[policy::to_string(*reason)] += 1;
      return Outcome::pruned;
    }
    const bool at_eos = branch.tokens.back() == policy.eos_token;
    const bool at_cap =
        static_cast<int>(branch.tokens.size()) >= cfg.max_length;
    if (at_eos || at_cap) {
      if (group_full()) {
        node.status = NodeStatus::dropped;
        return Outcome::dropped;
      }
      node.status = NodeStatus::completed;
      node.trajectory = static_cast<int>(tree.completed.size());
      policy::Trajectory traj;
      traj.prompt.assign(prompt.begin(), prompt.end());
      traj.tokens = branch.tokens;
      traj.policy_logprobs = branch.logprobs;
      traj.trace = branch.trace;
      traj.complete = true;
      tree.completed.push_back(std::move(traj));
      return Outcome::completed;
    }
    return Outcome::live;
  };

  // One decoding step for one branch. Forking replaces the branch by child
  // branches with fresh streams; a chain step keeps id and stream.
  const auto process_step = [&](BranchState branch, bool force_chain,
                                std::vector<BranchState>& out) {
    if (!budget_left() || group_full()) {
      if (branch.leaf != 0) {
        tree.nodes[branch.leaf].status = NodeStatus::dropped;
      }
      return;
    }
    std::vector<int> prefix(prompt.begin(), prompt.end());
    prefix.insert(prefix.end(), branch.tokens.begin(), branch.tokens.end());
    const signals::TokenDistribution dist =
        policy::next_distribution(policy, prefix);
    const double entropy = signals::token_entropy(dist);
    const double confidence =
        signals::topk_confidence(dist, cfg.signal.top_k);

    signals::SignalTrace trace = branch.trace;
    signals::advance(trace, entropy, confidence, cfg.signal,
                     cfg.prune.spike_threshold);
    const int width =
        force_chain ? 1
                    : scheduled_width(entropy, trace.grouped_conf.back(),
                                      cfg.scheduler, cfg.mode);

    if (width > 1) {
      const std::vector<int> forks = select_branch_tokens(dist, width);
      for (int token : forks) {
        if (!budget_left()) break;
        BranchState child = make_branch(branch.leaf);
        child.tokens = branch.tokens;
        child.tokens.push_back(token);
        child.logprobs = branch.logprobs;
        child.logprobs.push_back(std::log(dist.probs[token]));
        child.trace = trace;
        child.leaf = add_node(branch.leaf, token, child.logprobs.back(),
                              child.trace);
        if (evaluate(child) == Outcome::live) out.push_back(std::move(child));
      }
      return;
    }

    const int token = policy::sample_token(dist, branch.stream);
    const int parent = branch.leaf;
    branch.tokens.push_back(token);
    branch.logprobs.push_back(std::log(dist.probs[token]));
    branch.trace = std::move(trace);
    branch.leaf = add_node(parent, token, branch.logprobs.back(),
                           branch.trace);
    if (evaluate(branch) == Outcome::live) out.push_back(std::move(branch));
  };

  // Tree phase: breadth-synchronized steps over the active set, committed
  // in branch-id order.
  std::vector<BranchState> active;
  active.push_back(make_branch(0));
  while (!active.empty()) {
    tree.active.clear();
    for (const BranchState& branch : active) tree.active.push_back(branch.leaf);
    std::vector<BranchState> next;
    for (BranchState& branch : active) {
      process_step(std::move(branch), false, next);
    }
    active = std::move(next);
  }
  tree.active.clear();

  // Refill phase: plain chains from the root until the group is full or the
  // budget runs out.
  while (!group_full() && budget_left()) {
    tree.refill_attempts += 1;
    std::vector<BranchState> live;
    live.push_back(make_branch(0));
    while (!live.empty()) {
      std::vector<BranchState> out;
      process_step(std::move(live.front()), true, out);
      live = std::move(out);
    }
  }

  tree.shortfall = cfg.group_size - static_cast<int>(tree.completed.size());
  if (tree.shortfall < 0) tree.shortfall = 0;

  if (tree.completed.empty()) {
    throw RolloutFailure(
        "rollout: no trajectory completed (budget " +
            std::to_string(tree.token_budget_used) + "/" +
            std::to_string(tree.budget_cap) + ", refills " +
            std::to_string(tree.refill_attempts) + ")",
        tree.token_budget_used, tree.refill_attempts, tree.pruned_by_reason);
  }
  return tree;
}

std::pair<double, double> entropy_percentile_bounds(
    std::vector<double> observations, std::pair<double, double> fallback) {
  if (observations.empty()) {
    throw ConfigError("warm-up produced no entropy observations");
  }
  std::sort(observations.begin(), observations.end());
  const auto quantile = [&](double q) {
    const double rank = q * static_cast<double>(observations.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= observations.size()) return observations.back();
    return observations[lo] + frac * (observations[lo + 1] - observations[lo]);
  };
  const double low = quantile(0.10);
  const double high = quantile(0.90);
  if (high <= low) return fallback;  // degenerate spread
  return {low, high};
}

std::pair<double, double> warmup_entropy_bounds(
    const policy::TablePolicy& policy,
    const std::vector<std::vector<int>>& prompts, int warmup_steps,
    std::uint64_t seed) {
  if (warmup_steps < 1) {
    throw ConfigError("warm-up requires warmup_steps >= 1");
  }
  if (prompts.empty()) {
    throw ConfigError("warm-up requires at least one prompt");
  }
  policy::validate(policy);
  std::vector<double> observations;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    rng::Stream stream = rng::named_stream(seed, "warmup", i);
    std::vector<int> prefix = prompts[i];
    for (int step = 0; step < warmup_steps; ++step) {
      const signals::TokenDistribution dist =
          policy::next_distribution(policy, prefix);
      observations.push_back(signals::token_entropy(dist));
      const int token = policy::sample_token(dist, stream);
      if (token == policy.eos_token) break;
      prefix.push_back(token);
    }
  }
  return entropy_percentile_bounds(std::move(observations));
}

}  // namespace echo::rollout
