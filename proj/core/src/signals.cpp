// SPDX-License-Identifier: Apache-2.0
#include "echo/signals.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "echo/errors.hpp"

namespace echo::signals {

namespace {

constexpr double kSumTolerance = 1e-9;

}  // namespace

void validate(const TokenDistribution& dist) {
  if (dist.probs.empty()) {
    throw ValidationError("TokenDistribution: empty probability vector");
  }
  double sum = 0.0;
  for (double p : dist.probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw ValidationError("TokenDistribution: entry outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw ValidationError("TokenDistribution: probabilities sum to " +
                          std::to_string(sum));
  }
}

double token_entropy(const TokenDistribution& dist) {
  validate(dist);
  double h = 0.0;
  for (double p : dist.probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double topk_confidence(const TokenDistribution& dist, int k) {
  validate(dist);
  if (k < 1 || static_cast<std::size_t>(k) > dist.probs.size()) {
    throw ValidationError("topk_confidence: k outside [1, vocab]");
  }
  std::vector<double> sorted(dist.probs);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  double mass = 0.0;
  for (int i = 0; i < k; ++i) mass += sorted[i];
  return mass / static_cast<double>(k);
}

double trailing_mean(std::span<const double> values, int t, int window) {
  if (window < 1) throw ValidationError("trailing_mean: window < 1");
  if (t < 1 || static_cast<std::size_t>(t) > values.size()) {
    throw ValidationError("trailing_mean: step out of range");
  }
  const int effective = std::min(window, t);
  double sum = 0.0;
  for (int s = t - effective; s < t; ++s) sum += values[s];
  return sum / static_cast<double>(effective);
}

double grouped_confidence(const SignalTrace& trace, int t,
                          const SignalConfig& cfg) {
  return trailing_mean(trace.confidence, t, cfg.group_window);
}

double tail_confidence(const SignalTrace& trace, int t,
                       const SignalConfig& cfg) {
  return trailing_mean(trace.confidence, t, cfg.tail_window);
}

double mean_entropy(const SignalTrace& trace, int t, const SignalConfig& cfg) {
  if (t < 2) {
    throw ValidationError("mean_entropy: needs a step before t");
  }
  return trailing_mean(trace.entropy, t - 1, cfg.entropy_window);
}

double entropy_increment(const SignalTrace& trace, int t,
                         const SignalConfig& cfg) {
  if (t == 1) return 0.0;
  const double current = trailing_mean(trace.entropy, t, cfg.entropy_window);
  return current - mean_entropy(trace, t, cfg);
}

void advance(SignalTrace& trace, double entropy_value, double confidence_value,
             const SignalConfig& cfg, double spike_threshold) {
  if (!std::isfinite(entropy_value) || !std::isfinite(confidence_value)) {
    throw ValidationError("advance: non-finite signal value");
  }
  trace.entropy.push_back(entropy_value);
  trace.confidence.push_back(confidence_value);

  const int t = static_cast<int>(trace.size());
  const double grouped = grouped_confidence(trace, t, cfg);
  const double tail = tail_confidence(trace, t, cfg);
  const double smoothed = trailing_mean(trace.entropy, t, cfg.entropy_window);
  const double delta = entropy_increment(trace, t, cfg);

  trace.grouped_conf.push_back(grouped);
  trace.tail_conf.push_back(tail);
  trace.mean_entropy.push_back(smoothed);
  trace.increment.push_back(delta);

  trace.running_min = (t == 1) ? grouped : std::min(trace.running_min, grouped);

  if (t >= 2 && tail < trace.tail_conf[t - 2]) {
    trace.decline_count += 1;
  } else {
    trace.decline_count = 0;
  }

  if (delta > spike_threshold) {
    trace.spike_count += 1;
  } else {
    trace.spike_count = 0;
  }
}

}  // namespace echo::signals
