// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file rng.hpp
 * @brief Named, reproducible random streams.
 *
 * Every stochastic decision in the engine draws from a stream derived from
 * (run seed, stream name, up to two integer qualifiers). Streams with
 * different keys are statistically independent, and the same key always
 * yields the same sequence on every platform: the generator is mt19937_64
 * (bit-exact by standard) and uniform doubles are produced by an explicit
 * 53-bit mantissa mapping instead of std::uniform_real_distribution, whose
 * output is implementation-defined.
 */

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace echo::rng {

/// SplitMix64 finalizer; the standard way to turn correlated integer keys
/// into well-spread 64-bit seeds.
std::uint64_t mix(std::uint64_t x);

/// Combine two keys into one (order-sensitive).
std::uint64_t combine(std::uint64_t a, std::uint64_t b);

/// FNV-1a hash of a stream name.
std::uint64_t hash_name(std::string_view name);

/// A single reproducible random stream.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : gen_(seed) {}

  /// Next raw 64-bit draw.
  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random mantissa bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection-free modulo is fine at our scales;
  /// bias is < n / 2^64 and determinism is what the contracts pin down.
  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller (deterministic given the stream state).
  double normal();

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Derive the stream identified by (seed, name, a, b).
Stream named_stream(std::uint64_t seed, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0);

/// Uniform sample of m distinct indices from [0, n), in ascending order.
/// m > n is an error at the call site; callers clamp first.
std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                    std::size_t m,
                                                    Stream& stream);

}  // namespace echo::rng
