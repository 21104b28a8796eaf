// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <optional>
#include <vector>

#include "echo/errors.hpp"
#include "echo/rewards.hpp"
#include "echo/rng.hpp"
#include "echo/signals.hpp"

using namespace echo;
using rewards::Answer;
using rewards::AnswerRule;

namespace {

constexpr int kEos = 15;

policy::Trajectory completed_with(std::vector<int> tokens) {
  policy::Trajectory traj;
  traj.tokens = std::move(tokens);
  traj.policy_logprobs.assign(traj.tokens.size(), -1.0);
  signals::SignalConfig cfg;
  for (std::size_t i = 0; i < traj.tokens.size(); ++i) {
    signals::advance(traj.trace, 1.0, 0.5, cfg, 0.5);
  }
  traj.complete = true;
  return traj;
}

}  // namespace

TEST_CASE("last_token extraction skips EOS and handles the empty case") {
  AnswerRule rule;  // last_token
  CHECK(rewards::extract_answer(completed_with({3, 7, kEos}), rule, kEos) ==
        Answer{{7}});
  CHECK(rewards::extract_answer(completed_with({3, 7}), rule, kEos) ==
        Answer{{7}});  // truncated at the length cap, still complete
  CHECK(rewards::extract_answer(completed_with({kEos}), rule, kEos) ==
        std::nullopt);

  policy::Trajectory incomplete = completed_with({3, 7});
  incomplete.complete = false;
  CHECK_THROWS_AS(rewards::extract_answer(incomplete, rule, kEos),
                  ValidationError);
}

TEST_CASE("after_separator extraction takes the suffix of the last separator") {
  AnswerRule rule;
  rule.mode = AnswerRule::Mode::after_separator;
  rule.separator = 9;
  CHECK(rewards::extract_answer(completed_with({1, 9, 4, 2, kEos}), rule,
                                kEos) == Answer{{4, 2}});
  CHECK(rewards::extract_answer(completed_with({9, 1, 9, 5, kEos}), rule,
                                kEos) == Answer{{5}});
  CHECK(rewards::extract_answer(completed_with({1, 9, kEos}), rule, kEos) ==
        std::nullopt);  // nothing between separator and EOS
  CHECK(rewards::extract_answer(completed_with({1, 2, 3}), rule, kEos) ==
        std::nullopt);  // no separator at all
}

TEST_CASE("majority vote counts, labels, and rewards") {
  const std::vector<Answer> answers{
      std::vector<int>{4}, std::nullopt,       std::vector<int>{5},
      std::vector<int>{4}, std::vector<int>{5}, std::vector<int>{4}};
  const auto vote = rewards::majority_vote(answers);
  CHECK(vote.label == std::vector<int>{4});
  CHECK(vote.counts.at({4}) == 3);
  CHECK(vote.counts.at({5}) == 2);
  CHECK(vote.counts.size() == 2);  // the sentinel is not a candidate
  CHECK(vote.rewards == std::vector<double>{1, 0, 0, 1, 0, 1});
}

TEST_CASE("vote ties break toward the earliest first occurrence") {
  const std::vector<Answer> answers{std::vector<int>{2}, std::vector<int>{1},
                                    std::vector<int>{1}, std::vector<int>{2}};
  const auto vote = rewards::majority_vote(answers);
  CHECK(vote.label == std::vector<int>{2});
  CHECK(vote.rewards == std::vector<double>{1, 0, 0, 1});
}

TEST_CASE("multi-token answers are distinct candidates") {
  const std::vector<Answer> answers{std::vector<int>{1, 2},
                                    std::vector<int>{1},
                                    std::vector<int>{1, 2}};
  const auto vote = rewards::majority_vote(answers);
  CHECK(vote.label == std::vector<int>{1, 2});
  CHECK(vote.rewards == std::vector<double>{1, 0, 1});
}

TEST_CASE("a group with no valid answers fails the vote") {
  CHECK_THROWS_AS(rewards::majority_vote({std::nullopt, std::nullopt}),
                  VoteFailure);
  CHECK_THROWS_AS(rewards::majority_vote({}), VoteFailure);
}

TEST_CASE("vote matches an exhaustive tally on random groups") {
  rng::Stream stream = rng::named_stream(17, "vote-property");
  for (int trial = 0; trial < 1000; ++trial) {
    const int size = 2 + static_cast<int>(stream.uniform_int(63));
    std::vector<Answer> answers;
    answers.reserve(size);
    for (int i = 0; i < size; ++i) {
      if (stream.uniform() < 0.1) {
        answers.emplace_back(std::nullopt);
      } else {
        answers.emplace_back(
            std::vector<int>{static_cast<int>(stream.uniform_int(5))});
      }
    }

    // Independent oracle: tally, then scan for max count with the earliest
    // first occurrence winning ties.
    std::map<std::vector<int>, int> tally;
    std::map<std::vector<int>, std::size_t> first;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      if (!answers[i]) continue;
      if (tally.emplace(*answers[i], 0).second) first[*answers[i]] = i;
      tally[*answers[i]] += 1;
    }
    if (tally.empty()) {
      CHECK_THROWS_AS(rewards::majority_vote(answers), VoteFailure);
      continue;
    }
    std::vector<int> best;
    int best_count = -1;
    std::size_t best_first = answers.size();
    for (const auto& [value, count] : tally) {
      if (count > best_count ||
          (count == best_count && first[value] < best_first)) {
        best = value;
        best_count = count;
        best_first = first[value];
      }
    }

    const auto vote = rewards::majority_vote(answers);
    CHECK(vote.label == best);
    CHECK(vote.counts == tally);
    double reward_sum = 0.0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
      const double expected =
          answers[i] && *answers[i] == best ? 1.0 : 0.0;
      CHECK(vote.rewards[i] == expected);
      reward_sum += vote.rewards[i];
    }
    CHECK(reward_sum == static_cast<double>(best_count));
  }
}

TEST_CASE("training downsample is an ascending subset or everything") {
  rng::Stream stream = rng::named_stream(2, "downsample");
  const auto subset = rewards::downsample_for_training(10, 4, stream);
  REQUIRE(subset.size() == 4);
  CHECK(std::is_sorted(subset.begin(), subset.end()));
  for (std::size_t v : subset) CHECK(v < 10);

  const auto everything = rewards::downsample_for_training(4, 4, stream);
  CHECK(everything == std::vector<std::size_t>{0, 1, 2, 3});
  const auto clamped = rewards::downsample_for_training(3, 9, stream);
  CHECK(clamped == std::vector<std::size_t>{0, 1, 2});
}
