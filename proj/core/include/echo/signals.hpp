// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file signals.hpp
 * @brief Per-token uncertainty signals and their windowed smoothing.
 *
 * Each decoding step exposes a next-token distribution. From it we derive two
 * instantaneous signals:
 *
 *   - token entropy      H_t = -sum_j p_j * ln(p_j)        (nats, 0*ln(0)=0)
 *   - top-k confidence   C_t = (1/k) * sum of the k largest p_j
 *
 * and three trailing-window statistics along a branch:
 *
 *   - grouped confidence   mean of C over the last min(W_G, t) steps
 *   - tail confidence      mean of C over the last min(W_T, t) steps
 *   - mean entropy         mean of H over the last min(W_H, u) steps ending
 *                          at u, whose step-to-step increase is the entropy
 *                          increment dH_t (defined as 0 at t = 1)
 *
 * Windows shrink at the start of a sequence rather than padding, so early
 * steps average exactly the observations that exist. Steps are 1-indexed in
 * every public signature; a SignalTrace stores the running sequences plus the
 * three counters the pruning rules consume (running minimum of grouped
 * confidence, consecutive tail-confidence declines, consecutive entropy
 * spikes).
 */

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace echo::signals {

/// A categorical distribution over the token vocabulary.
/// Invariants: every entry in [0, 1]; entries sum to 1 within 1e-9.
struct TokenDistribution {
  std::vector<double> probs;
};

/// Throws ValidationError unless `dist` satisfies the invariants above.
void validate(const TokenDistribution& dist);

/// Smoothing parameters for the windowed statistics.
struct SignalConfig {
  int top_k = 1;           ///< k in top-k confidence.
  int group_window = 4;    ///< W_G, grouped-confidence window.
  int tail_window = 8;     ///< W_T, tail-confidence window.
  int entropy_window = 4;  ///< W_H, mean-entropy window.
};

/// Shannon entropy in nats. Zero-probability entries contribute zero.
double token_entropy(const TokenDistribution& dist);

/// Mean probability mass of the k most likely tokens. Ties at the k-th
/// position resolve to the lowest token index, which a plain descending
/// sort on probability already guarantees is value-equivalent.
double topk_confidence(const TokenDistribution& dist, int k);

/// Running sequences for one branch, appended to once per decoding step.
/// All sequences share the same length (the number of steps so far).
struct SignalTrace {
  std::vector<double> entropy;       ///< H_t per step.
  std::vector<double> confidence;    ///< C_t per step.
  std::vector<double> grouped_conf;  ///< trailing mean of confidence, W_G.
  std::vector<double> tail_conf;     ///< trailing mean of confidence, W_T.
  std::vector<double> mean_entropy;  ///< trailing mean of entropy, W_H.
  std::vector<double> increment;     ///< dH_t; 0 at the first step.

  double running_min = 0.0;  ///< min over grouped_conf so far.
  int decline_count = 0;     ///< consecutive strict declines of tail_conf.
  int spike_count = 0;       ///< consecutive steps with increment > threshold.

  std::size_t size() const { return entropy.size(); }
};

/// Mean of the last min(window, t) entries of `values` ending at 1-indexed
/// step t. Throws ValidationError on window < 1, out-of-range t.
double trailing_mean(std::span<const double> values, int t, int window);

/// Grouped confidence at step t: trailing mean of the raw confidence
/// sequence with the W_G window.
double grouped_confidence(const SignalTrace& trace, int t,
                          const SignalConfig& cfg);

/// Tail confidence at step t: trailing mean with the W_T window.
double tail_confidence(const SignalTrace& trace, int t,
                       const SignalConfig& cfg);

/// Mean entropy over the window ending at step t-1 (the value the entropy
/// increment at step t is measured against). Requires t >= 2.
double mean_entropy(const SignalTrace& trace, int t, const SignalConfig& cfg);

/// Entropy increment dH_t = mean_entropy(t) - mean_entropy(t-1), both means
/// taken over windows ending at t and t-1 respectively. Defined as 0 at t=1.
double entropy_increment(const SignalTrace& trace, int t,
                         const SignalConfig& cfg);

/// Append one step's (entropy, confidence) observation and refresh every
/// derived sequence and counter. `spike_threshold` is the increment level
/// above which the spike counter advances; at or below it the counter
/// resets to zero. The decline counter advances on strict decreases of
/// tail confidence and resets otherwise.
void advance(SignalTrace& trace, double entropy_value, double confidence_value,
             const SignalConfig& cfg, double spike_threshold);

}  // namespace echo::signals
