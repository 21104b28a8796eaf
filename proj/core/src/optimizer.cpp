// SPDX-License-Identifier: Apache-2.0
#include "echo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "echo/errors.hpp"

namespace echo::optim {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void validate_clip_config(const ClipConfig& cfg) {
  if (cfg.eps_min <= 0.0 || cfg.eps_max < cfg.eps_min || cfg.eps_max >= 1.0 ||
      cfg.kappa < 0.0 || cfg.tail_window < 1) {
    throw ValidationError("ClipConfig: values outside documented ranges");
  }
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  for (double v : values) out.mean += v;
  out.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

}  // namespace

std::vector<double> group_advantage(const std::vector<double>& rewards,
                                    double eps_stab) {
  if (rewards.size() < 2) {
    throw ValidationError("group_advantage: group must have >= 2 rewards");
  }
  if (eps_stab <= 0.0) {
    throw ValidationError("group_advantage: eps_stab must be > 0");
  }
  const MeanStd stats = mean_std(rewards);
  std::vector<double> advantage(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    advantage[i] = (rewards[i] - stats.mean) / (stats.std + eps_stab);
  }
  return advantage;
}

std::vector<double> masked_whiten(std::span<const double> values,
                                  std::span<const std::uint8_t> valid,
                                  double eps_stab) {
  if (values.size() != valid.size()) {
    throw ValidationError("masked_whiten: mask length mismatch");
  }
  if (eps_stab <= 0.0) {
    throw ValidationError("masked_whiten: eps_stab must be > 0");
  }
  std::vector<double> selected;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (valid[i]) selected.push_back(values[i]);
  }
  std::vector<double> out(values.size(), 0.0);
  if (selected.size() < 2) {
    std::cerr << "[echo] warning: masked_whiten with fewer than two valid "
                 "positions; returning zeros\n";
    return out;
  }
  const MeanStd stats = mean_std(selected);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (valid[i]) out[i] = (values[i] - stats.mean) / (stats.std + eps_stab);
  }
  return out;
}

double trajectory_tail_confidence(const policy::Trajectory& trajectory,
                                  int window) {
  policy::validate(trajectory);
  if (trajectory.length() == 0) {
    throw ValidationError("trajectory_tail_confidence: empty trajectory");
  }
  return signals::trailing_mean(trajectory.trace.tail_conf,
                                static_cast<int>(trajectory.length()), window);
}

double adaptive_epsilon(double tail_conf, const ClipConfig& cfg) {
  validate_clip_config(cfg);
  if (!std::isfinite(tail_conf) || tail_conf < 0.0 ||
      tail_conf > 1.0 + 1e-9) {
    throw ValidationError("adaptive_epsilon: tail confidence outside [0, 1]");
  }
  tail_conf = std::min(tail_conf, 1.0);
  return cfg.eps_min +
         (cfg.eps_max - cfg.eps_min) * sigmoid(cfg.kappa * (1.0 - tail_conf));
}

std::vector<double> importance_ratio(const policy::Trajectory& trajectory,
                                     const policy::TablePolicy& policy,
                                     const policy::TablePolicy& reference) {
  policy::validate(trajectory);
  std::vector<double> ratio(trajectory.length());
  std::vector<int> prefix = trajectory.prompt;
  for (std::size_t t = 0; t < trajectory.length(); ++t) {
    const int token = trajectory.tokens[t];
    const double lp = policy::log_prob(policy, prefix, token);
    const double lq = policy::log_prob(reference, prefix, token);
    ratio[t] = std::exp(lp - lq);
    prefix.push_back(token);
  }
  return ratio;
}

int clip_gate(double advantage, double ratio, double eps) {
  if (!std::isfinite(advantage) || !std::isfinite(ratio) ||
      !std::isfinite(eps) || eps <= 0.0) {
    throw ValidationError("clip_gate: non-finite inputs or eps <= 0");
  }
  const bool saturated = (advantage > 0.0 && ratio > 1.0 + eps) ||
                         (advantage < 0.0 && ratio < 1.0 - eps);
  return saturated ? 0 : 1;
}

AdvantageBatch build_advantage_batch(
    std::vector<policy::Trajectory> trajectories,
    const std::vector<double>& rewards, const policy::TablePolicy& policy,
    const policy::TablePolicy& reference, const ClipConfig& clip,
    const ShapingConfig& shaping) {
  if (trajectories.size() != rewards.size()) {
    throw ValidationError("build_advantage_batch: rewards misaligned");
  }
  for (const policy::Trajectory& traj : trajectories) {
    policy::validate(traj);
    if (!traj.complete || traj.length() == 0) {
      throw ValidationError(
          "build_advantage_batch: training on incomplete trajectory");
    }
  }

  AdvantageBatch batch;
  batch.trajectories = std::move(trajectories);
  batch.group_adv = group_advantage(rewards, shaping.eps_stab);

  batch.clip_radius.reserve(batch.trajectories.size());
  for (const policy::Trajectory& traj : batch.trajectories) {
    batch.clip_radius.push_back(adaptive_epsilon(
        trajectory_tail_confidence(traj, clip.tail_window), clip));
  }

  // Batch-scope whitening of the shaping inputs over all valid tokens.
  std::vector<double> entropy_flat;
  std::vector<double> inv_conf_flat;
  std::vector<std::uint8_t> valid_flat;
  for (const policy::Trajectory& traj : batch.trajectories) {
    for (std::size_t t = 0; t < traj.length(); ++t) {
      entropy_flat.push_back(traj.trace.entropy[t]);
      inv_conf_flat.push_back(1.0 - traj.trace.confidence[t]);
      valid_flat.push_back(1);
    }
  }
  const std::vector<double> entropy_w =
      masked_whiten(entropy_flat, valid_flat, shaping.eps_stab);
  const std::vector<double> inv_conf_w =
      masked_whiten(inv_conf_flat, valid_flat, shaping.eps_stab);

  std::size_t cursor = 0;
  for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
    const std::size_t len = batch.trajectories[i].length();
    std::vector<double> shaped(len);
    std::vector<std::uint8_t> mask(len, 1);
    for (std::size_t t = 0; t < len; ++t, ++cursor) {
      const double signal = shaping.entropy_weight * entropy_w[cursor] +
                            shaping.confidence_weight * inv_conf_w[cursor];
      shaped[t] = batch.group_adv[i] * (1.0 + shaping.scale * signal);
    }
    batch.shaped_adv.push_back(std::move(shaped));
    batch.valid.push_back(std::move(mask));
  }

  refresh_ratios(batch, policy, reference);
  return batch;
}

void refresh_ratios(AdvantageBatch& batch, const policy::TablePolicy& policy,
                    const policy::TablePolicy& reference) {
  batch.ratio.clear();
  batch.ratio.reserve(batch.trajectories.size());
  for (const policy::Trajectory& traj : batch.trajectories) {
    batch.ratio.push_back(importance_ratio(traj, policy, reference));
  }
}

double exact_kl(const policy::TablePolicy& policy,
                const policy::TablePolicy& reference,
                std::span<const int> prefix) {
  const signals::TokenDistribution p =
      policy::next_distribution(policy, prefix);
  const signals::TokenDistribution q =
      policy::next_distribution(reference, prefix);
  double kl = 0.0;
  for (std::size_t v = 0; v < p.probs.size(); ++v) {
    if (p.probs[v] <= 0.0) continue;
    if (q.probs[v] <= 0.0) {
      throw ValidationError("exact_kl: reference assigns zero mass");
    }
    kl += p.probs[v] * (std::log(p.probs[v]) - std::log(q.probs[v]));
  }
  return kl;
}

std::vector<std::vector<double>> kl_terms(
    const std::vector<policy::Trajectory>& trajectories,
    const policy::TablePolicy& policy,
    const policy::TablePolicy& reference) {
  std::vector<std::vector<double>> out;
  out.reserve(trajectories.size());
  for (const policy::Trajectory& traj : trajectories) {
    std::vector<double> terms(traj.length());
    std::vector<int> prefix = traj.prompt;
    for (std::size_t t = 0; t < traj.length(); ++t) {
      terms[t] = exact_kl(policy, reference, prefix);
      prefix.push_back(traj.tokens[t]);
    }
    out.push_back(std::move(terms));
  }
  return out;
}

double echo_loss(const AdvantageBatch& batch,
                 const std::vector<std::vector<double>>& kl,
                 const OptimizerConfig& cfg) {
  const std::size_t group = batch.trajectories.size();
  if (group == 0) throw ValidationError("echo_loss: empty batch");
  if (kl.size() != group || batch.shaped_adv.size() != group ||
      batch.ratio.size() != group || batch.valid.size() != group ||
      batch.clip_radius.size() != group) {
    throw ValidationError("echo_loss: batch shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < group; ++i) {
    const std::size_t len = batch.trajectories[i].length();
    if (batch.shaped_adv[i].size() != len || batch.ratio[i].size() != len ||
        batch.valid[i].size() != len || kl[i].size() != len) {
      throw ValidationError("echo_loss: token shape mismatch");
    }
    const double eps = batch.clip_radius[i];
    double traj_sum = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      if (!batch.valid[i][t]) continue;
      const double advantage = batch.shaped_adv[i][t];
      const double ratio = batch.ratio[i][t];
      const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
      traj_sum += std::min(ratio * advantage, clipped * advantage) -
                  cfg.kl_coef * kl[i][t];
    }
    total += traj_sum / static_cast<double>(len);
  }
  return total / static_cast<double>(group);
}

policy::GradientTable echo_gradient(const AdvantageBatch& batch,
                                    const policy::TablePolicy& policy,
                                    const policy::TablePolicy& reference,
                                    const OptimizerConfig& cfg) {
  const std::size_t group = batch.trajectories.size();
  if (group == 0) throw ValidationError("echo_gradient: empty batch");

  policy::GradientTable grad;
  const int vocab = policy.vocab_size;
  const auto accumulate = [&](const policy::Context& ctx,
                              std::span<const double> contribution,
                              double scale) {
    std::vector<double>& row = grad[ctx];
    if (row.empty()) row.assign(vocab, 0.0);
    for (int j = 0; j < vocab; ++j) row[j] += scale * contribution[j];
  };

  std::vector<double> surrogate_row(vocab);
  std::vector<double> kl_row(vocab);

  for (std::size_t i = 0; i < group; ++i) {
    const policy::Trajectory& traj = batch.trajectories[i];
    const std::size_t len = traj.length();
    const double weight = 1.0 / (static_cast<double>(group) *
                                 static_cast<double>(len));
    const double eps = batch.clip_radius[i];
    std::vector<int> prefix = traj.prompt;
    for (std::size_t t = 0; t < len; ++t) {
      const int token = traj.tokens[t];
      if (!batch.valid[i][t]) {
        prefix.push_back(token);
        continue;
      }
      const policy::Context ctx = policy::active_context(policy, prefix);
      const bool seen = policy.logits.find(ctx) != policy.logits.end();
      if (seen) {
        const signals::TokenDistribution p =
            policy::next_distribution(policy, prefix);

        const double advantage = batch.shaped_adv[i][t];
        const double lp = policy::log_prob(policy, prefix, token);
        const double lq = policy::log_prob(reference, prefix, token);
        const double ratio = std::exp(lp - lq);
        const int gate = clip_gate(advantage, ratio, eps);
        if (gate == 1 && advantage != 0.0) {
          for (int j = 0; j < vocab; ++j) {
            surrogate_row[j] = (j == token ? 1.0 : 0.0) - p.probs[j];
          }
          accumulate(ctx, surrogate_row, weight * advantage * ratio);
        }

        if (cfg.kl_coef > 0.0) {
          const signals::TokenDistribution q =
              policy::next_distribution(reference, prefix);
          // Exact expectation over the vocabulary:
          //   sum_v p_v (ln(p_v/q_v) + 1) * (1{j==v} - p_j).
          std::fill(kl_row.begin(), kl_row.end(), 0.0);
          for (int v = 0; v < vocab; ++v) {
            if (p.probs[v] <= 0.0) continue;
            const double coef =
                p.probs[v] *
                (std::log(p.probs[v] / q.probs[v]) + 1.0);
            for (int j = 0; j < vocab; ++j) {
              kl_row[j] += coef * ((j == v ? 1.0 : 0.0) - p.probs[j]);
            }
          }
          accumulate(ctx, kl_row, -weight * cfg.kl_coef);
        }
      }
      prefix.push_back(token);
    }
  }
  return grad;
}

void apply_update(policy::TablePolicy& policy,
                  const policy::GradientTable& gradient,
                  double learning_rate) {
  if (!std::isfinite(learning_rate)) {
    throw ValidationError("apply_update: non-finite learning rate");
  }
  // Validate everything before touching the table.
  for (const auto& [ctx, row] : gradient) {
    const auto it = policy.logits.find(ctx);
    if (it == policy.logits.end()) {
      throw ValidationError("apply_update: gradient for unknown context");
    }
    if (row.size() != it->second.size()) {
      throw ValidationError("apply_update: gradient row width mismatch");
    }
    for (double g : row) {
      if (!std::isfinite(g)) {
        throw ValidationError("apply_update: non-finite gradient entry");
      }
    }
  }
  for (const auto& [ctx, row] : gradient) {
    std::vector<double>& target = policy.logits[ctx];
    for (std::size_t j = 0; j < row.size(); ++j) {
      target[j] += learning_rate * row[j];
    }
  }
}

}  // namespace echo::optim
