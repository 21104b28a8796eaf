// SPDX-License-Identifier: Apache-2.0
#include "echo/rng.hpp"

#include <algorithm>
#include <cmath>

#include "echo/errors.hpp"

namespace echo::rng {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix(a ^ mix(b));
}

std::uint64_t hash_name(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double Stream::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // Box-Muller on two fresh uniforms; guard the log against u == 0.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
  spare_ = radius * std::sin(angle);
  have_spare_ = true;
  return radius * std::cos(angle);
}

Stream named_stream(std::uint64_t seed, std::string_view name, std::uint64_t a,
                    std::uint64_t b) {
  std::uint64_t key = combine(seed, hash_name(name));
  key = combine(key, a);
  key = combine(key, b);
  return Stream(key);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                    std::size_t m,
                                                    Stream& stream) {
  if (m > n) {
    throw ValidationError("sample_without_replacement: m exceeds n");
  }
  // Partial Fisher-Yates over an index vector, then sort the chosen prefix
  // so downstream consumers see a stable, order-independent subset.
  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(
                                  stream.uniform_int(n - i));
    std::swap(indices[i], indices[j]);
  }
  std::vector<std::size_t> chosen(indices.begin(), indices.begin() + m);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace echo::rng
