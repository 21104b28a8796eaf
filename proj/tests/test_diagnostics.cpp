// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "echo/config.hpp"
#include "echo/diagnostics.hpp"
#include "echo/errors.hpp"
#include "echo/policy.hpp"
#include "echo/rollout.hpp"
#include "echo/signals.hpp"

using namespace echo;
using rollout::NodeStatus;
using rollout::RolloutTree;
using rollout::TreeNode;

namespace {

TreeNode node(int id, int parent, NodeStatus status, int trajectory = -1) {
  TreeNode n;
  n.id = id;
  n.parent = parent;
  n.token = id;  // arbitrary but stable
  n.step = parent == -1 ? 0 : 1;
  n.status = status;
  n.trajectory = trajectory;
  return n;
}

policy::Trajectory traj_with_entropy(const std::vector<double>& entropies) {
  policy::Trajectory traj;
  const signals::SignalConfig sig;
  for (double h : entropies) {
    signals::advance(traj.trace, h, 0.9, sig, 0.5);
    traj.tokens.push_back(0);
    traj.policy_logprobs.push_back(-1.0);
  }
  traj.complete = true;
  return traj;
}

RolloutTree real_tree() {
  EchoConfig cfg;
  cfg.group_size = 8;
  cfg.train_size = 4;
  cfg.max_length = 8;
  cfg.seed = 3;
  const auto pol = policy::make_random_policy(16, 1, 3, 3.0);
  const std::vector<int> prompt{0};
  return rollout::rollout(pol, prompt, cfg, 0);
}

}  // namespace

TEST_CASE("budget attribution: chain, fork, dead-subtree charge") {
  SUBCASE("a bare chain charges every token to its single survivor") {
    RolloutTree tree;
    tree.nodes = {node(0, -1, NodeStatus::root),
                  node(1, 0, NodeStatus::internal),
                  node(2, 1, NodeStatus::internal),
                  node(3, 2, NodeStatus::completed, 0)};
    tree.token_budget_used = 3;
    const auto budgets = diag::budget_allocation(tree);
    REQUIRE(budgets.size() == 1);
    CHECK(budgets[0].node_id == 3);
    CHECK(budgets[0].budget == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("a balanced fork splits the shared prefix evenly") {
    RolloutTree tree;
    tree.nodes = {node(0, -1, NodeStatus::root),
                  node(1, 0, NodeStatus::internal),
                  node(2, 0, NodeStatus::internal),
                  node(3, 1, NodeStatus::completed, 0),
                  node(4, 2, NodeStatus::completed, 1)};
    tree.token_budget_used = 4;
    const auto budgets = diag::budget_allocation(tree);
    REQUIRE(budgets.size() == 2);
    CHECK(budgets[0].budget == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(budgets[1].budget == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("dead branches bill the nearest surviving ancestor") {
    // root -> 1 -> {2 completed, 3 pruned}; root -> 4 pruned.
    RolloutTree tree;
    tree.nodes = {node(0, -1, NodeStatus::root),
                  node(1, 0, NodeStatus::internal),
                  node(2, 1, NodeStatus::completed, 0),
                  node(3, 1, NodeStatus::pruned),
                  node(4, 0, NodeStatus::pruned)};
    tree.token_budget_used = 4;
    const auto budgets = diag::budget_allocation(tree);
    REQUIRE(budgets.size() == 1);
    // own 1 + (parent 1 + its dead child) 2 + root's dead child 1 = 4.
    CHECK(budgets[0].budget == doctest::Approx(4.0).epsilon(1e-12));
  }

  SUBCASE("uneven split with a dropped sibling, in completion order") {
    // root -> 1 -> {2 (trajectory 1), 3 -> 4 (trajectory 0), 5 dropped}.
    RolloutTree tree;
    tree.nodes = {node(0, -1, NodeStatus::root),
                  node(1, 0, NodeStatus::internal),
                  node(2, 1, NodeStatus::completed, 1),
                  node(3, 1, NodeStatus::internal),
                  node(4, 3, NodeStatus::completed, 0),
                  node(5, 1, NodeStatus::dropped)};
    tree.token_budget_used = 5;
    const auto budgets = diag::budget_allocation(tree);
    REQUIRE(budgets.size() == 2);
    // Output follows trajectory completion order, not node ids.
    CHECK(budgets[0].node_id == 4);
    CHECK(budgets[0].budget == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(budgets[1].node_id == 2);
    CHECK(budgets[1].budget == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("empty tree yields no allocations") {
    CHECK(diag::budget_allocation(RolloutTree{}).empty());
  }
}

TEST_CASE("budget attribution conserves the real token budget") {
  const auto tree = real_tree();
  const auto budgets = diag::budget_allocation(tree);
  REQUIRE(budgets.size() == tree.completed.size());
  double total = 0.0;
  for (const auto& b : budgets) {
    CHECK(b.budget > 0.0);
    total += b.budget;
  }
  CHECK(total == doctest::Approx(static_cast<double>(tree.token_budget_used))
                     .epsilon(1e-9));
}

TEST_CASE("high-entropy continuity counts sustained runs only") {
  const std::vector<double> mixed{2.0, 2.0, 2.0, 0.5, 2.0};
  CHECK(diag::high_entropy_continuity(mixed, 1.0, 3) ==
        doctest::Approx(0.6).epsilon(1e-12));
  const std::vector<double> tail_run{0.5, 2.0, 2.0, 2.0};
  CHECK(diag::high_entropy_continuity(tail_run, 1.0, 3) ==
        doctest::Approx(0.75).epsilon(1e-12));
  const std::vector<double> all_high{2.0, 2.0, 2.0};
  CHECK(diag::high_entropy_continuity(all_high, 1.0, 3) == 1.0);
  const std::vector<double> singles{2.0, 0.5, 2.0};
  CHECK(diag::high_entropy_continuity(singles, 1.0, 3) == 0.0);
  CHECK(diag::high_entropy_continuity(singles, 1.0, 1) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  // Threshold comparison is >=.
  const std::vector<double> at_threshold{1.0, 1.0, 1.0};
  CHECK(diag::high_entropy_continuity(at_threshold, 1.0, 3) == 1.0);
  CHECK(diag::high_entropy_continuity({}, 1.0, 3) == 0.0);
  CHECK_THROWS_AS(diag::high_entropy_continuity(mixed, 1.0, 0),
                  ValidationError);
}

TEST_CASE("collapse stats aggregate budget share and continuity") {
  // Reuse the uneven-split tree: budgets 3 and 2, total 5.
  RolloutTree tree;
  tree.nodes = {node(0, -1, NodeStatus::root),
                node(1, 0, NodeStatus::internal),
                node(2, 1, NodeStatus::completed, 1),
                node(3, 1, NodeStatus::internal),
                node(4, 3, NodeStatus::completed, 0),
                node(5, 1, NodeStatus::dropped)};
  tree.token_budget_used = 5;
  tree.completed.push_back(traj_with_entropy({2.0, 2.0, 2.0}));
  tree.completed.push_back(traj_with_entropy({0.5, 0.5, 0.5}));

  const auto stats = diag::collapse_stats(tree, 1.0, 3);
  CHECK(stats.total_budget == doctest::Approx(5.0));
  CHECK(stats.effective_branch_count == 2);
  CHECK(stats.top3_budget_share == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats.continuity == doctest::Approx(0.5).epsilon(1e-12));

  // With more than three survivors the top-3 share drops below one.
  const auto real = real_tree();
  REQUIRE(real.completed.size() > 3);
  const auto real_stats = diag::collapse_stats(real, 1.0);
  CHECK(real_stats.top3_budget_share > 0.0);
  CHECK(real_stats.top3_budget_share < 1.0);
  CHECK(real_stats.effective_branch_count ==
        static_cast<int>(real.completed.size()));
  CHECK(real_stats.total_budget ==
        doctest::Approx(static_cast<double>(real.token_budget_used)));
}

TEST_CASE("tree JSONL round trip preserves every field exactly") {
  const auto tree = real_tree();
  const std::string path = "test_tree_roundtrip.jsonl";
  diag::write_tree_jsonl(path, tree);

  const auto records = diag::read_tree_jsonl(path);
  const auto original = diag::tree_records(tree);
  REQUIRE(records.size() == original.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].id == original[i].id);
    CHECK(records[i].parent == original[i].parent);
    CHECK(records[i].token == original[i].token);
    CHECK(records[i].step == original[i].step);
    CHECK(records[i].status == original[i].status);
    CHECK(records[i].prune_reason == original[i].prune_reason);
    // format_double is shortest-round-trip, so equality is exact.
    CHECK(records[i].entropy == original[i].entropy);
    CHECK(records[i].confidence == original[i].confidence);
    CHECK(records[i].grouped_conf == original[i].grouped_conf);
    CHECK(records[i].tail_conf == original[i].tail_conf);
    CHECK(records[i].token_logprob == original[i].token_logprob);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(diag::read_tree_jsonl("missing_tree.jsonl"), IoError);
  {
    std::ofstream out("test_tree_bad.jsonl");
    out << "this is not json\n";
  }
  CHECK_THROWS_AS(diag::read_tree_jsonl("test_tree_bad.jsonl"), IoError);
  std::remove("test_tree_bad.jsonl");
}

TEST_CASE("collapse summaries are element-wise means") {
  std::vector<diag::CollapseStats> stats(2);
  stats[0] = {0.4, 4, 0.2, 50.0};
  stats[1] = {0.6, 8, 0.4, 150.0};
  const auto summary = diag::summarize_collapse(stats);
  CHECK(summary.rollouts == 2);
  CHECK(summary.top3_budget_share == doctest::Approx(0.5));
  CHECK(summary.effective_branch_count == doctest::Approx(6.0));
  CHECK(summary.continuity == doctest::Approx(0.3));
  CHECK(summary.total_budget == doctest::Approx(100.0));

  const auto empty = diag::summarize_collapse({});
  CHECK(empty.rollouts == 0);
  CHECK(empty.top3_budget_share == 0.0);
}

TEST_CASE("collapse CSV has the fixed header and formatted rows") {
  diag::CollapseSummary a{0.5, 6.5, 0.25, 100.0, 20};
  diag::CollapseSummary b{0.75, 2.0, 0.125, 64.0, 20};
  const std::string path = "test_collapse.csv";
  diag::write_collapse_csv(path, {{"hybrid", a}, {"entropy_only", b}});

  std::ifstream in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  CHECK(content ==
        "schedule,rollouts,top3_budget_share,effective_branch_count,"
        "continuity,total_budget\n"
        "hybrid,20,0.5,6.5,0.25,100\n"
        "entropy_only,20,0.75,2,0.125,64\n");
  std::remove(path.c_str());
}
