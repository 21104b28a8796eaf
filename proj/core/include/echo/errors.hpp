// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace echo {

// Invalid argument to a library operation (bad distribution, bad window, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent configuration (unknown key, out-of-range value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem-level failure (missing file, refuse-to-overwrite, parse error).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rollout ended with zero completed trajectories. Carries enough of the
// final tree state to explain where the token budget went.
class RolloutFailure : public std::runtime_error {
 public:
  RolloutFailure(std::string message, std::uint64_t budget_used,
                 std::uint64_t refill_attempts,
                 std::map<std::string, std::uint64_t> pruned_by_reason)
      : std::runtime_error(std::move(message)),
        budget_used(budget_used),
        refill_attempts(refill_attempts),
        pruned_by_reason(std::move(pruned_by_reason)) {}

  std::uint64_t budget_used = 0;
  std::uint64_t refill_attempts = 0;
  std::map<std::string, std::uint64_t> pruned_by_reason;
};

// Majority vote over a group in which no trajectory produced a valid answer.
class VoteFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace echo
