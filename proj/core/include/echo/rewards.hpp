// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file rewards.hpp
 * @brief Label-free pseudo-rewards from majority voting.
 *
 * No ground truth enters this module. Each completed trajectory yields an
 * answer (a token subsequence, or a no-answer sentinel when extraction
 * fails); the most frequent valid answer becomes the vote label and every
 * trajectory is rewarded 1 if it matches the label, else 0. Ties break
 * toward the answer that appeared earliest in sampling order, so a vote
 * over a fixed multiset is deterministic.
 */

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "echo/policy.hpp"
#include "echo/rng.hpp"

namespace echo::rewards {

/// An extracted answer; std::nullopt is the no-answer sentinel, which never
/// matches anything (including another sentinel).
using Answer = std::optional<std::vector<int>>;

/// How to read an answer out of a completed trajectory.
struct AnswerRule {
  enum class Mode {
    last_token,       ///< final non-EOS token.
    after_separator,  ///< tokens after the last separator, EOS stripped.
  };
  Mode mode = Mode::last_token;
  int separator = -1;  ///< required for after_separator.
};

/// Extract per the rule. Incomplete trajectories are a ValidationError.
/// Extractions that produce no tokens (no non-EOS token, missing separator,
/// or nothing between separator and EOS) return the sentinel.
Answer extract_answer(const policy::Trajectory& trajectory,
                      const AnswerRule& rule, int eos_token);

/// Vote outcome over one group of answers.
/// Invariants: counts cover exactly the valid answers; rewards has one entry
/// per input answer, each 0 or 1; the label's count is maximal; rewards sum
/// to the label's count.
struct VoteResult {
  std::vector<int> label;                  ///< winning answer tokens.
  std::map<std::vector<int>, int> counts;  ///< valid answers only.
  std::vector<double> rewards;             ///< aligned with the input order.
};

/// Majority vote with earliest-first-occurrence tie-breaking. Sentinels
/// count toward group size but never toward any candidate; a group with no
/// valid answer throws VoteFailure.
VoteResult majority_vote(const std::vector<Answer>& answers);

/// Uniform sample without replacement of `count` trajectory indices,
/// returned ascending. count >= size means every index (with a warning to
/// stderr, since the caller asked for more than exists).
std::vector<std::size_t> downsample_for_training(std::size_t group_size,
                                                 std::size_t count,
                                                 rng::Stream& stream);

}  // namespace echo::rewards
