// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file policy.hpp
 * @brief Differentiable table policy over a small token vocabulary.
 *
 * The policy is an n-gram context table: each context (the trailing
 * min(n, prefix length) tokens) owns a row of logits, and the next-token
 * distribution is the softmax of that row. Contexts absent from the table
 * fall back to the uniform distribution, which keeps rollouts total while
 * contributing zero gradient (the fallback does not depend on any stored
 * parameter). Every parameter is exact and every operation is closed-form,
 * so analytic gradients can be checked against finite differences to
 * floating-point accuracy.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echo/rng.hpp"
#include "echo/signals.hpp"

namespace echo::policy {

/// A context key: the trailing tokens conditioning the next-token row.
using Context = std::vector<int>;

/// Dense per-row gradients keyed by context; rows absent from the table are
/// implicitly zero.
using GradientTable = std::map<Context, std::vector<double>>;

/// Why a branch was removed from the active set.
enum class PruneReason {
  low_confidence,  ///< running min of grouped confidence fell below threshold.
  tail_decline,    ///< sustained tail-confidence decline below threshold.
  entropy_spike,   ///< sustained mean-entropy increases above threshold.
};

/// Stable names used in dumps and CSVs.
const char* to_string(PruneReason reason);

/// The policy: logit rows keyed by context.
/// Invariants: every row has exactly vocab_size entries, all finite;
/// 0 <= context key length <= context_order; eos_token in [0, vocab_size).
struct TablePolicy {
  int context_order = 1;
  int vocab_size = 16;
  int eos_token = 15;
  std::map<Context, std::vector<double>> logits;
};

/// Throws ValidationError unless the invariants above hold.
void validate(const TablePolicy& policy);

/// The context key the policy would consult for this prefix.
Context active_context(const TablePolicy& policy, std::span<const int> prefix);

/// Softmax of the active context row; uniform when the context is unseen.
/// Numerically stable under large logit magnitudes (max-shifted).
signals::TokenDistribution next_distribution(const TablePolicy& policy,
                                             std::span<const int> prefix);

/// ln p(token | prefix) under the policy.
double log_prob(const TablePolicy& policy, std::span<const int> prefix,
                int token);

/// Gradient of ln p(token | prefix) with respect to the logit table:
/// the active context row receives 1{j == token} - p_j, every other row is
/// zero (and is omitted from the sparse result). Unseen contexts have no
/// parameters, so their gradient is empty.
GradientTable grad_log_prob(const TablePolicy& policy,
                            std::span<const int> prefix, int token);

/// Inverse-CDF sample in token-index order: the first index whose cumulative
/// probability strictly exceeds the uniform draw.
int sample_token(const signals::TokenDistribution& dist, rng::Stream& stream);

/// Deep copy used as the frozen reference policy for a run.
TablePolicy snapshot_reference(const TablePolicy& policy);

/// Random policy with iid normal(0, scale) logits for every context of
/// length <= context_order reachable over the vocabulary, including the
/// empty (start-of-sequence) context. Deterministic in the seed.
TablePolicy make_random_policy(int vocab_size, int context_order,
                               std::uint64_t seed, double scale);

/// JSON round-trip. The document stores context_order, vocab_size,
/// eos_token, and a "logits" object keyed by comma-joined token ids
/// (empty string for the start-of-sequence context).
std::string to_json_string(const TablePolicy& policy);
TablePolicy policy_from_json_string(const std::string& text);

/// One generated sequence plus everything the optimizer needs to score it.
/// tokens, policy_logprobs, and the trace share one length; ref_logprobs is
/// either empty or that same length. complete and prune_reason are mutually
/// exclusive.
struct Trajectory {
  std::vector<int> prompt;             ///< conditioning tokens, not scored.
  std::vector<int> tokens;             ///< generated tokens, EOS included.
  std::vector<double> policy_logprobs; ///< ln p under the sampling policy.
  std::vector<double> ref_logprobs;    ///< ln p under the reference policy.
  signals::SignalTrace trace;
  bool complete = false;
  std::optional<PruneReason> prune_reason;

  std::size_t length() const { return tokens.size(); }
};

/// Throws ValidationError unless the trajectory invariants hold.
void validate(const Trajectory& trajectory);

}  // namespace echo::policy
