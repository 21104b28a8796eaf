// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file config.hpp
 * @brief Run configuration: one flat key=value surface over every module.
 *
 * The text format is one `key=value` per line; blank lines and lines
 * starting with '#' are ignored. Keys are closed-world: anything outside
 * the documented set is an error, and every offending key is reported at
 * once. `eps_stab` is a single key feeding both the width schedule and the
 * whitening guards.
 */

#include <cstdint>
#include <string>
#include <vector>

#include "echo/optimizer.hpp"
#include "echo/rollout.hpp"
#include "echo/signals.hpp"

namespace echo {

/// Everything a run needs. Defaults are the published operating point; see
/// the key table in the README for the name-to-field mapping.
struct EchoConfig {
  signals::SignalConfig signal;            ///< k, W_G, W_T, W_H.
  rollout::BranchSchedulerConfig scheduler;///< B_*, alpha_B, beta_B, H_*, s_branch, eps_stab.
  rollout::PruneConfig prune;              ///< tau_*, S_*, delta_upper.
  optim::ClipConfig clip;                  ///< eps_min, eps_max, kappa, W_tail_traj.
  optim::ShapingConfig shaping;            ///< alpha_shape, beta_shape, a_scale.
  optim::OptimizerConfig optimizer;        ///< kl_coef, learning_rate, batching.
  int group_size = 64;                     ///< G, rollouts per vote.
  int train_size = 32;                     ///< M, rollouts used for training.
  int max_length = 32;                     ///< L, generated tokens per branch.
  std::uint64_t seed = 0;
  int warmup_steps = 8;                    ///< 0 skips calibration entirely.
  rollout::ScheduleMode mode = rollout::ScheduleMode::hybrid;
};

/// Throws ConfigError when any field is out of its documented range.
void validate(const EchoConfig& cfg);

/// Parse a whole config document over the defaults.
EchoConfig parse_config(const std::string& text);

/// Parse the file at `path` over the defaults.
EchoConfig load_config_file(const std::string& path);

/// Apply one `key=value` override in place.
void apply_override(EchoConfig& cfg, const std::string& assignment);

/// Canonical serialization: every key, fixed order, round-trips exactly.
std::string serialize_config(const EchoConfig& cfg);

/// The full key set in canonical order (the serialization order).
const std::vector<std::string>& config_keys();

}  // namespace echo
