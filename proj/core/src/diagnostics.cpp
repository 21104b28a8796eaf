// SPDX-License-Identifier: Apache-2.0
#include "echo/diagnostics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "echo/errors.hpp"
#include "echo/format.hpp"

namespace echo::diag {

namespace {

// Compensated accumulator; the budget split produces many small quotients and
// the per-tree totals are checked against an exact integer.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

std::vector<NodeRecord> tree_records(const rollout::RolloutTree& tree) {
  std::vector<NodeRecord> records;
  records.reserve(tree.nodes.size());
  for (const rollout::TreeNode& node : tree.nodes) {
    NodeRecord rec;
    rec.id = node.id;
    rec.parent = node.parent;
    rec.token = node.token;
    rec.step = node.step;
    rec.status = rollout::to_string(node.status);
    if (node.prune_reason) rec.prune_reason = policy::to_string(*node.prune_reason);
    rec.entropy = node.entropy;
    rec.confidence = node.confidence;
    rec.grouped_conf = node.grouped_conf;
    rec.tail_conf = node.tail_conf;
    rec.token_logprob = node.token_logprob;
    records.push_back(std::move(rec));
  }
  return records;
}

void write_tree_jsonl(const std::string& path,
                      const rollout::RolloutTree& tree) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_tree_jsonl: cannot open " + path);
  // Lines are assembled by hand so every double goes through format_double;
  // status strings come from fixed enums and need no escaping.
  for (const NodeRecord& rec : tree_records(tree)) {
    out << "{\"id\":" << rec.id << ",\"parent\":" << rec.parent
        << ",\"token\":" << rec.token << ",\"step\":" << rec.step
        << ",\"status\":\"" << rec.status << "\",\"prune_reason\":\""
        << rec.prune_reason << "\",\"entropy\":" << format_double(rec.entropy)
        << ",\"confidence\":" << format_double(rec.confidence)
        << ",\"grouped_conf\":" << format_double(rec.grouped_conf)
        << ",\"tail_conf\":" << format_double(rec.tail_conf)
        << ",\"token_logprob\":" << format_double(rec.token_logprob) << "}\n";
  }
  if (!out) throw IoError("write_tree_jsonl: write failed for " + path);
}

std::vector<NodeRecord> read_tree_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tree_jsonl: cannot open " + path);
  std::vector<NodeRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json node = nlohmann::json::parse(line, nullptr, false);
    if (node.is_discarded()) {
      throw IoError("read_tree_jsonl: malformed line in " + path);
    }
    NodeRecord rec;
    rec.id = node.at("id").get<int>();
    rec.parent = node.at("parent").get<int>();
    rec.token = node.at("token").get<int>();
    rec.step = node.at("step").get<int>();
    rec.status = node.at("status").get<std::string>();
    rec.prune_reason = node.at("prune_reason").get<std::string>();
    rec.entropy = node.at("entropy").get<double>();
    rec.confidence = node.at("confidence").get<double>();
    rec.grouped_conf = node.at("grouped_conf").get<double>();
    rec.tail_conf = node.at("tail_conf").get<double>();
    rec.token_logprob = node.at("token_logprob").get<double>();
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<TrajectoryBudget> budget_allocation(
    const rollout::RolloutTree& tree) {
  const std::size_t n = tree.nodes.size();
  if (n == 0) return {};

  // Children are always created after their parent, so a single descending
  // pass pushes completed-descendant counts toward the root.
  std::vector<std::int64_t> completed_desc(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (tree.nodes[i].status == rollout::NodeStatus::completed) {
      completed_desc[i] = 1;
    }
  }
  for (std::size_t i = n; i-- > 1;) {
    completed_desc[tree.nodes[i].parent] += completed_desc[i];
  }

  // Dead nodes (no surviving descendant) charge their own token to the
  // nearest alive ancestor; the root spent no token itself.
  std::vector<double> charge(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    if (completed_desc[i] > 0) continue;
    int a = tree.nodes[i].parent;
    while (completed_desc[a] == 0) a = tree.nodes[a].parent;
    charge[a] += 1.0;
  }

  // Each alive node splits (own token + dead charge) evenly across its
  // completed descendants; a trajectory collects the shares along its path.
  std::vector<TrajectoryBudget> out;
  for (std::size_t i = 0; i < n; ++i) {
    const rollout::TreeNode& leaf = tree.nodes[i];
    if (leaf.status != rollout::NodeStatus::completed) continue;
    std::vector<int> path;
    for (int cur = leaf.id; cur != -1; cur = tree.nodes[cur].parent) {
      path.push_back(cur);
    }
    KahanSum total;
    for (int cur : path) {
      const double own = cur == 0 ? 0.0 : 1.0;
      total.add((own + charge[cur]) / static_cast<double>(completed_desc[cur]));
    }
    out.push_back(TrajectoryBudget{leaf.id, total.sum});
  }
  // Completion order, not node-id order.
  std::sort(out.begin(), out.end(),
            [&](const TrajectoryBudget& a, const TrajectoryBudget& b) {
              return tree.nodes[a.node_id].trajectory <
                     tree.nodes[b.node_id].trajectory;
            });
  return out;
}

double high_entropy_continuity(std::span<const double> entropies,
                               double threshold, int min_run) {
  if (min_run < 1) throw ValidationError("high_entropy_continuity: min_run < 1");
  if (entropies.empty()) return 0.0;
  std::size_t covered = 0;
  std::size_t run = 0;
  const auto flush = [&] {
    if (run >= static_cast<std::size_t>(min_run)) covered += run;
    run = 0;
  };
  for (double h : entropies) {
    if (h >= threshold) {
      ++run;
    } else {
      flush();
    }
  }
  flush();
  return static_cast<double>(covered) / static_cast<double>(entropies.size());
}

CollapseStats collapse_stats(const rollout::RolloutTree& tree,
                             double entropy_threshold, int min_run) {
  CollapseStats stats;
  stats.total_budget = static_cast<double>(tree.token_budget_used);
  stats.effective_branch_count = static_cast<int>(tree.completed.size());

  std::vector<TrajectoryBudget> budgets = budget_allocation(tree);
  std::vector<double> amounts;
  amounts.reserve(budgets.size());
  for (const TrajectoryBudget& b : budgets) amounts.push_back(b.budget);
  std::sort(amounts.begin(), amounts.end(), std::greater<>());
  double top3 = 0.0;
  for (std::size_t i = 0; i < amounts.size() && i < 3; ++i) top3 += amounts[i];
  stats.top3_budget_share =
      stats.total_budget > 0.0 ? top3 / stats.total_budget : 0.0;

  double continuity = 0.0;
  for (const policy::Trajectory& traj : tree.completed) {
    continuity += high_entropy_continuity(traj.trace.entropy,
                                          entropy_threshold, min_run);
  }
  if (!tree.completed.empty()) {
    continuity /= static_cast<double>(tree.completed.size());
  }
  stats.continuity = continuity;
  return stats;
}

CollapseSummary summarize_collapse(std::span<const CollapseStats> stats) {
  CollapseSummary summary;
  summary.rollouts = static_cast<int>(stats.size());
  if (stats.empty()) return summary;
  for (const CollapseStats& s : stats) {
    summary.top3_budget_share += s.top3_budget_share;
    summary.effective_branch_count += s.effective_branch_count;
    summary.continuity += s.continuity;
    summary.total_budget += s.total_budget;
  }
  const double n = static_cast<double>(stats.size());
  summary.top3_budget_share /= n;
  summary.effective_branch_count /= n;
  summary.continuity /= n;
  summary.total_budget /= n;
  return summary;
}

void write_collapse_csv(
    const std::string& path,
    const std::vector<std::pair<std::string, CollapseSummary>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_collapse_csv: cannot open " + path);
  out << "schedule,rollouts,top3_budget_share,effective_branch_count,"
         "continuity,total_budget\n";
  for (const auto& [label, s] : rows) {
    out << label << ',' << s.rollouts << ','
        << format_double(s.top3_budget_share) << ','
        << format_double(s.effective_branch_count) << ','
        << format_double(s.continuity) << ','
        << format_double(s.total_budget) << '\n';
  }
  if (!out) throw IoError("write_collapse_csv: write failed for " + path);
}

}  // namespace echo::diag
