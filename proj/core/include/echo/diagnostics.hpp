// SPDX-License-Identifier: Apache-2.0
//
// Post-hoc analysis of rollout trees.
//
// The rollout engine spends a global token budget across a tree of branches.
// The helpers here answer two questions about a finished tree:
//
//   1. Where did the budget go?  Every sampled token is attributed to exactly
//      one surviving trajectory.  Tokens spent inside dead subtrees (pruned or
//      dropped, with no surviving descendant) are charged to the nearest
//      ancestor that still has survivors, then split evenly among them.  The
//      per-trajectory figures therefore sum to the tree's token_budget_used
//      exactly, which makes concentration measures (for example the share of
//      budget absorbed by the top three trajectories) meaningful.
//
//   2. Did sampling stay stuck in high-entropy regions?  The continuity
//      measure reports the fraction of steps that sit inside sustained
//      high-entropy runs, which is the signature of a branch schedule that
//      keeps re-expanding an uncertain corridor instead of finishing.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "echo/rollout.hpp"

namespace echo::diag {

// Flat, serialization-friendly view of one tree node.
struct NodeRecord {
  int id = 0;
  int parent = -1;  // -1 for the root
  int token = -1;
  int step = 0;
  std::string status;
  std::string prune_reason;  // empty unless status == "pruned"
  double entropy = 0.0;
  double confidence = 0.0;
  double grouped_conf = 0.0;
  double tail_conf = 0.0;
  double token_logprob = 0.0;
};

std::vector<NodeRecord> tree_records(const rollout::RolloutTree& tree);

// One JSON object per line; stable key order, shortest round-trip doubles.
void write_tree_jsonl(const std::string& path,
                      const rollout::RolloutTree& tree);
std::vector<NodeRecord> read_tree_jsonl(const std::string& path);

// Budget attributed to one completed trajectory, keyed by its leaf node.
struct TrajectoryBudget {
  int node_id = 0;
  double budget = 0.0;
};

// Splits token_budget_used over the completed trajectories as described in
// the file comment.  Entries follow the tree's completion order.  The sum of
// all budgets equals tree.token_budget_used up to accumulated rounding.
std::vector<TrajectoryBudget> budget_allocation(
    const rollout::RolloutTree& tree);

// Fraction of steps inside maximal runs of length >= min_run whose entropy
// is >= threshold.  Empty input yields 0.
double high_entropy_continuity(std::span<const double> entropies,
                               double threshold, int min_run);

// Summary of one finished tree, used to compare branch schedules.
struct CollapseStats {
  double top3_budget_share = 0.0;     // budget share of the 3 largest eaters
  int effective_branch_count = 0;     // completed trajectories
  double continuity = 0.0;            // mean high-entropy continuity
  double total_budget = 0.0;          // tokens spent in the whole tree
};

CollapseStats collapse_stats(const rollout::RolloutTree& tree,
                             double entropy_threshold, int min_run = 3);

// Element-wise mean over per-rollout stats (effective_branch_count becomes a
// mean as well, hence doubles throughout).
struct CollapseSummary {
  double top3_budget_share = 0.0;
  double effective_branch_count = 0.0;
  double continuity = 0.0;
  double total_budget = 0.0;
  int rollouts = 0;
};

CollapseSummary summarize_collapse(std::span<const CollapseStats> stats);

// CSV with one row per (label, summary); used by the compare tool.
void write_collapse_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, CollapseSummary>>& rows);

}  // namespace echo::diag
