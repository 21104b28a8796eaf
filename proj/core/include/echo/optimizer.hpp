// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file optimizer.hpp
 * @brief Confidence-adaptive clipped policy updates with hybrid advantages.
 *
 * From a training group of trajectories with 0/1 vote rewards:
 *
 *   - group advantage    A_i = (R_i - mean R) / (std R + eps), population std
 *   - shaping signal     S_t = alpha * whiten(H_t) + beta * whiten(1 - C_t),
 *                        whitened per batch over valid tokens
 *   - hybrid advantage   A_{i,t} = A_i * (1 + a * S_t)
 *   - clip radius        eps_i = eps_min + (eps_max - eps_min)
 *                                * sigmoid(kappa * (1 - C_tail(o_i)))
 *                        where C_tail(o_i) averages the trajectory's tail
 *                        confidence over its final tokens
 *   - objective          mean_i mean_t [ min(r A, clip(r, 1 - eps_i, 1 + eps_i) A)
 *                                        - kl_coef * KL_t ]
 *
 * with r the per-token probability ratio against a frozen reference policy
 * and KL_t the exact per-prefix KL divergence over the vocabulary. The
 * gradient treats advantages and clip radii as constants: each unclipped
 * token contributes A * r * grad log p, each clipped token contributes
 * nothing, and the KL penalty differentiates exactly through the expectation
 * over the vocabulary. Updates are plain gradient ascent on the logit table.
 */

#include <cstdint>
#include <span>
#include <vector>

#include "echo/policy.hpp"

namespace echo::optim {

/// Confidence-adaptive clipping parameters.
struct ClipConfig {
  double eps_min = 0.1;
  double eps_max = 0.3;
  double kappa = 4.0;    ///< sigmoid sharpness.
  int tail_window = 16;  ///< trajectory tail-confidence window (tokens).
};

/// Advantage shaping parameters.
struct ShapingConfig {
  double entropy_weight = 0.5;     ///< alpha_shape.
  double confidence_weight = 0.5;  ///< beta_shape.
  double scale = 0.1;              ///< a_scale; 0 disables shaping exactly.
  double eps_stab = 1e-6;          ///< std guard for whitening/advantages.
};

/// Update hyperparameters.
struct OptimizerConfig {
  double kl_coef = 0.001;
  double learning_rate = 0.05;  ///< toy-table scale.
  int train_batch = 5;
  int mini_batch = 1;
  int micro_batch = 1;
};

/// (R_i - mean) / (std + eps) with population std. A zero-variance group
/// yields all zeros (the eps guard, not a special case).
std::vector<double> group_advantage(const std::vector<double>& rewards,
                                    double eps_stab);

/// (v - mean) / (std + eps) over valid positions; masked positions are 0 in
/// the output. Fewer than two valid positions: all zeros plus a warning,
/// since whitening is then meaningless.
std::vector<double> masked_whiten(std::span<const double> values,
                                  std::span<const std::uint8_t> valid,
                                  double eps_stab);

/// Mean tail confidence over the final min(window, length) steps.
double trajectory_tail_confidence(const policy::Trajectory& trajectory,
                                  int window);

/// eps_min + (eps_max - eps_min) * sigmoid(kappa * (1 - tail_conf)).
/// tail_conf must lie in [0, 1] (tiny float overshoot is clamped).
double adaptive_epsilon(double tail_conf, const ClipConfig& cfg);

/// Per-token probability ratios p_policy / p_reference, recomputed from the
/// given parameter tables along the trajectory's prefixes.
std::vector<double> importance_ratio(const policy::Trajectory& trajectory,
                                     const policy::TablePolicy& policy,
                                     const policy::TablePolicy& reference);

/// 0 when the clipped surrogate is saturated at this token, else 1:
/// saturated means (A > 0 and r > 1 + eps) or (A < 0 and r < 1 - eps).
int clip_gate(double advantage, double ratio, double eps);

/// One training batch, fully materialized. Per-trajectory vectors align with
/// `trajectories`; per-token vectors are ragged with matching lengths.
struct AdvantageBatch {
  std::vector<policy::Trajectory> trajectories;
  std::vector<double> group_adv;    ///< A_i per trajectory.
  std::vector<double> clip_radius;  ///< eps_i per trajectory.
  std::vector<std::vector<double>> shaped_adv;  ///< A_{i,t} per token.
  std::vector<std::vector<double>> ratio;       ///< r at build-time params.
  std::vector<std::vector<std::uint8_t>> valid; ///< token mask (1 = scored).
};

/// Assemble a batch: group advantages from rewards, clip radii from tail
/// confidences, shaping from batch-whitened entropy and inverse confidence,
/// ratios against the reference. rewards aligns with trajectories.
AdvantageBatch build_advantage_batch(std::vector<policy::Trajectory> trajectories,
                                     const std::vector<double>& rewards,
                                     const policy::TablePolicy& policy,
                                     const policy::TablePolicy& reference,
                                     const ClipConfig& clip,
                                     const ShapingConfig& shaping);

/// Recompute `ratio` against the given parameters, leaving advantages and
/// clip radii frozen. This is what makes the loss a function of the policy
/// for finite-difference checks.
void refresh_ratios(AdvantageBatch& batch, const policy::TablePolicy& policy,
                    const policy::TablePolicy& reference);

/// Exact KL(policy(.|prefix) || reference(.|prefix)) over the vocabulary.
double exact_kl(const policy::TablePolicy& policy,
                const policy::TablePolicy& reference,
                std::span<const int> prefix);

/// Per-token exact KL values for each trajectory in the batch.
std::vector<std::vector<double>> kl_terms(
    const std::vector<policy::Trajectory>& trajectories,
    const policy::TablePolicy& policy,
    const policy::TablePolicy& reference);

/// The clipped-surrogate objective minus the KL penalty: trajectories are
/// token-averaged first, then averaged across the group. Maximized.
double echo_loss(const AdvantageBatch& batch,
                 const std::vector<std::vector<double>>& kl,
                 const OptimizerConfig& cfg);

/// Analytic gradient of echo_loss with respect to the logit table, with
/// advantages and clip radii as constants. Deterministic accumulation in
/// trajectory order.
policy::GradientTable echo_gradient(const AdvantageBatch& batch,
                                    const policy::TablePolicy& policy,
                                    const policy::TablePolicy& reference,
                                    const OptimizerConfig& cfg);

/// Ascent step: logits += learning_rate * gradient. Rejects non-finite
/// gradients and unknown contexts without mutating the policy.
void apply_update(policy::TablePolicy& policy,
                  const policy::GradientTable& gradient,
                  double learning_rate);

}  // namespace echo::optim
