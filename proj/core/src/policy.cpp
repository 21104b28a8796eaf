// SPDX-License-Identifier: Apache-2.0
#include "echo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "echo/errors.hpp"

namespace echo::policy {

namespace {

using nlohmann::json;

std::string context_key(const Context& ctx) {
  std::string key;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    if (i > 0) key += ',';
    key += std::to_string(ctx[i]);
  }
  return key;
}

Context context_from_key(const std::string& key) {
  Context ctx;
  if (key.empty()) return ctx;
  std::stringstream stream(key);
  std::string part;
  while (std::getline(stream, part, ',')) {
    ctx.push_back(std::stoi(part));
  }
  return ctx;
}

}  // namespace

const char* to_string(PruneReason reason) {
  switch (reason) {
    case PruneReason::low_confidence: return "low_confidence";
    case PruneReason::tail_decline: return "tail_decline";
    case PruneReason::entropy_spike: return "entropy_spike";
  }
  return "unknown";
}

void validate(const TablePolicy& policy) {
  if (policy.vocab_size < 2) {
    throw ValidationError("TablePolicy: vocab_size must be at least 2");
  }
  if (policy.context_order < 0) {
    throw ValidationError("TablePolicy: negative context_order");
  }
  if (policy.eos_token < 0 || policy.eos_token >= policy.vocab_size) {
    throw ValidationError("TablePolicy: eos_token outside vocabulary");
  }
  for (const auto& [ctx, row] : policy.logits) {
    if (static_cast<int>(ctx.size()) > policy.context_order) {
      throw ValidationError("TablePolicy: context key longer than order");
    }
    for (int tok : ctx) {
      if (tok < 0 || tok >= policy.vocab_size) {
        throw ValidationError("TablePolicy: context token outside vocabulary");
      }
    }
    if (static_cast<int>(row.size()) != policy.vocab_size) {
      throw ValidationError("TablePolicy: row width differs from vocab_size");
    }
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw ValidationError("TablePolicy: non-finite logit");
      }
    }
  }
}

Context active_context(const TablePolicy& policy,
                       std::span<const int> prefix) {
  const std::size_t order = static_cast<std::size_t>(policy.context_order);
  const std::size_t take = std::min(order, prefix.size());
  return Context(prefix.end() - take, prefix.end());
}

signals::TokenDistribution next_distribution(const TablePolicy& policy,
                                             std::span<const int> prefix) {
  const auto it = policy.logits.find(active_context(policy, prefix));
  signals::TokenDistribution dist;
  dist.probs.resize(policy.vocab_size);
  if (it == policy.logits.end()) {
    const double uniform = 1.0 / static_cast<double>(policy.vocab_size);
    std::fill(dist.probs.begin(), dist.probs.end(), uniform);
    return dist;
  }
  const std::vector<double>& row = it->second;
  const double peak = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (int j = 0; j < policy.vocab_size; ++j) {
    dist.probs[j] = std::exp(row[j] - peak);
    total += dist.probs[j];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

double log_prob(const TablePolicy& policy, std::span<const int> prefix,
                int token) {
  if (token < 0 || token >= policy.vocab_size) {
    throw ValidationError("log_prob: token outside vocabulary");
  }
  const auto it = policy.logits.find(active_context(policy, prefix));
  if (it == policy.logits.end()) {
    return -std::log(static_cast<double>(policy.vocab_size));
  }
  // log softmax directly from logits: row[token] - peak - ln(sum exp).
  const std::vector<double>& row = it->second;
  const double peak = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (double v : row) total += std::exp(v - peak);
  return row[token] - peak - std::log(total);
}

GradientTable grad_log_prob(const TablePolicy& policy,
                            std::span<const int> prefix, int token) {
  if (token < 0 || token >= policy.vocab_size) {
    throw ValidationError("grad_log_prob: token outside vocabulary");
  }
  GradientTable grad;
  const Context ctx = active_context(policy, prefix);
  if (policy.logits.find(ctx) == policy.logits.end()) {
    return grad;  // uniform fallback has no parameters
  }
  const signals::TokenDistribution dist = next_distribution(policy, prefix);
  std::vector<double> row(policy.vocab_size);
  for (int j = 0; j < policy.vocab_size; ++j) {
    row[j] = (j == token ? 1.0 : 0.0) - dist.probs[j];
  }
  grad.emplace(ctx, std::move(row));
  return grad;
}

int sample_token(const signals::TokenDistribution& dist, rng::Stream& stream) {
  signals::validate(dist);
  const double u = stream.uniform();
  double cumulative = 0.0;
  int last_positive = -1;
  for (std::size_t j = 0; j < dist.probs.size(); ++j) {
    if (dist.probs[j] > 0.0) last_positive = static_cast<int>(j);
    cumulative += dist.probs[j];
    if (u < cumulative) return static_cast<int>(j);
  }
  // Rounding left the cumulative sum fractionally below u; the draw belongs
  // to the last token with positive mass.
  return last_positive;
}

TablePolicy snapshot_reference(const TablePolicy& policy) {
  return policy;
}

TablePolicy make_random_policy(int vocab_size, int context_order,
                               std::uint64_t seed, double scale) {
  if (vocab_size < 2 || context_order < 0) {
    throw ValidationError("make_random_policy: invalid shape");
  }
  TablePolicy policy;
  policy.vocab_size = vocab_size;
  policy.context_order = context_order;
  policy.eos_token = vocab_size - 1;
  rng::Stream stream = rng::named_stream(seed, "policy-init");

  // Enumerate contexts of every length 0..order in lexicographic order so
  // the draw sequence, and therefore the policy, is reproducible.
  std::vector<Context> contexts;
  contexts.push_back({});
  std::size_t level_begin = 0;
  for (int depth = 1; depth <= context_order; ++depth) {
    const std::size_t level_end = contexts.size();
    for (std::size_t i = level_begin; i < level_end; ++i) {
      for (int tok = 0; tok < vocab_size; ++tok) {
        Context extended = contexts[i];
        extended.push_back(tok);
        contexts.push_back(std::move(extended));
      }
    }
    level_begin = level_end;
  }
  for (const Context& ctx : contexts) {
    std::vector<double> row(vocab_size);
    for (double& v : row) v = scale * stream.normal();
    policy.logits.emplace(ctx, std::move(row));
  }
  return policy;
}

std::string to_json_string(const TablePolicy& policy) {
  validate(policy);
  json doc;
  doc["context_order"] = policy.context_order;
  doc["vocab_size"] = policy.vocab_size;
  doc["eos_token"] = policy.eos_token;
  json rows = json::object();
  for (const auto& [ctx, row] : policy.logits) {
    rows[context_key(ctx)] = row;
  }
  doc["logits"] = rows;
  return doc.dump(2);
}

TablePolicy policy_from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw IoError(std::string("policy JSON parse error: ") + err.what());
  }
  TablePolicy policy;
  try {
    policy.context_order = doc.at("context_order").get<int>();
    policy.vocab_size = doc.at("vocab_size").get<int>();
    policy.eos_token = doc.at("eos_token").get<int>();
    for (const auto& [key, value] : doc.at("logits").items()) {
      policy.logits.emplace(context_from_key(key),
                            value.get<std::vector<double>>());
    }
  } catch (const json::exception& err) {
    throw IoError(std::string("policy JSON schema error: ") + err.what());
  }
  validate(policy);
  return policy;
}

void validate(const Trajectory& trajectory) {
  const std::size_t n = trajectory.tokens.size();
  if (trajectory.policy_logprobs.size() != n ||
      trajectory.trace.size() != n) {
    throw ValidationError("Trajectory: tokens, logprobs, trace disagree");
  }
  if (!trajectory.ref_logprobs.empty() &&
      trajectory.ref_logprobs.size() != n) {
    throw ValidationError("Trajectory: ref_logprobs length mismatch");
  }
  if (trajectory.complete && trajectory.prune_reason.has_value()) {
    throw ValidationError("Trajectory: complete and pruned are exclusive");
  }
}

}  // namespace echo::policy
