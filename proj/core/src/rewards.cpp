// SPDX-License-Identifier: Apache-2.0
#include "echo/rewards.hpp"

#include <algorithm>
#include <iostream>

#include "echo/errors.hpp"

namespace echo::rewards {

Answer extract_answer(const policy::Trajectory& trajectory,
                      const AnswerRule& rule, int eos_token) {
  if (!trajectory.complete) {
    throw ValidationError("extract_answer: trajectory is not complete");
  }
  const std::vector<int>& tokens = trajectory.tokens;

  if (rule.mode == AnswerRule::Mode::last_token) {
    for (auto it = tokens.rbegin(); it != tokens.rend(); ++it) {
      if (*it != eos_token) return std::vector<int>{*it};
    }
    return std::nullopt;
  }

  // after_separator: the subsequence after the last separator, EOS stripped.
  const auto sep = std::find(tokens.rbegin(), tokens.rend(), rule.separator);
  if (sep == tokens.rend()) return std::nullopt;
  std::vector<int> answer;
  for (auto it = sep.base(); it != tokens.end(); ++it) {
    if (*it != eos_token) answer.push_back(*it);
  }
  if (answer.empty()) return std::nullopt;
  return answer;
}

VoteResult majority_vote(const std::vector<Answer>& answers) {
  VoteResult result;
  std::map<std::vector<int>, std::size_t> first_seen;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (!answers[i].has_value()) continue;
    const std::vector<int>& value = *answers[i];
    auto [it, inserted] = result.counts.emplace(value, 0);
    it->second += 1;
    if (inserted) first_seen.emplace(value, i);
  }
  if (result.counts.empty()) {
    throw VoteFailure("majority_vote: no valid answers in group");
  }

  int best_count = -1;
  std::size_t best_first = 0;
  for (const auto& [value, count] : result.counts) {
    const std::size_t seen = first_seen.at(value);
    if (count > best_count || (count == best_count && seen < best_first)) {
      best_count = count;
      best_first = seen;
      result.label = value;
    }
  }

  result.rewards.resize(answers.size(), 0.0);
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i].has_value() && *answers[i] == result.label) {
      result.rewards[i] = 1.0;
    }
  }
  return result;
}

std::vector<std::size_t> downsample_for_training(std::size_t group_size,
                                                 std::size_t count,
                                                 rng::Stream& stream) {
  if (count >= group_size) {
    if (count > group_size) {
      std::cerr << "[echo] warning: training sample " << count
                << " exceeds group size " << group_size << "; using all\n";
    }
    std::vector<std::size_t> all(group_size);
    for (std::size_t i = 0; i < group_size; ++i) all[i] = i;
    return all;
  }
  return rng::sample_without_replacement(group_size, count, stream);
}

}  // namespace echo::rewards
