// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "echo/errors.hpp"
#include "echo/rng.hpp"

using namespace echo;

TEST_CASE("mix matches the published splitmix64 output sequence") {
  // First outputs of splitmix64 seeded with 0 and 1; widely used reference
  // vectors for this finalizer.
  CHECK(rng::mix(0) == 0xE220A8397B1DCDAFULL);
  CHECK(rng::mix(1) == 0x910A2DEC89025CC1ULL);
}

TEST_CASE("hash_name matches the published FNV-1a vectors") {
  CHECK(rng::hash_name("") == 0xCBF29CE484222325ULL);
  CHECK(rng::hash_name("a") == 0xAF63DC4C8601EC8CULL);
}

TEST_CASE("named streams are reproducible and key-sensitive") {
  rng::Stream a1 = rng::named_stream(7, "branch", 1, 2);
  rng::Stream a2 = rng::named_stream(7, "branch", 1, 2);
  rng::Stream b = rng::named_stream(7, "branch", 1, 3);
  rng::Stream c = rng::named_stream(7, "warmup", 1, 2);
  rng::Stream d = rng::named_stream(8, "branch", 1, 2);

  std::vector<std::uint64_t> s1, s2, sb, sc, sd;
  for (int i = 0; i < 16; ++i) {
    s1.push_back(a1.next_u64());
    s2.push_back(a2.next_u64());
    sb.push_back(b.next_u64());
    sc.push_back(c.next_u64());
    sd.push_back(d.next_u64());
  }
  CHECK(s1 == s2);
  CHECK(s1 != sb);
  CHECK(s1 != sc);
  CHECK(s1 != sd);
  CHECK(sb != sc);
}

TEST_CASE("uniform draws land in [0, 1) and use the 53-bit mapping") {
  rng::Stream probe = rng::named_stream(3, "uniform-probe");
  rng::Stream twin = rng::named_stream(3, "uniform-probe");
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t bits = twin.next_u64();
    const double u = probe.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == static_cast<double>(bits >> 11) * 0x1.0p-53);
  }
}

TEST_CASE("uniform_int stays in range and covers the range") {
  rng::Stream stream = rng::named_stream(11, "uniform-int");
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = stream.uniform_int(7);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("normal draws have roughly standard moments") {
  rng::Stream stream = rng::named_stream(5, "normal-probe");
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = stream.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("sample_without_replacement returns sorted distinct indices") {
  rng::Stream stream = rng::named_stream(1, "swor");
  for (int trial = 0; trial < 200; ++trial) {
    const auto picked = rng::sample_without_replacement(20, 7, stream);
    REQUIRE(picked.size() == 7);
    CHECK(std::is_sorted(picked.begin(), picked.end()));
    for (std::size_t v : picked) CHECK(v < 20);
    const std::set<std::size_t> unique(picked.begin(), picked.end());
    CHECK(unique.size() == 7);
  }
}

TEST_CASE("sample_without_replacement edge cases") {
  rng::Stream stream = rng::named_stream(1, "swor-edge");
  const auto all = rng::sample_without_replacement(5, 5, stream);
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});
  const auto none = rng::sample_without_replacement(5, 0, stream);
  CHECK(none.empty());
  CHECK_THROWS_AS(rng::sample_without_replacement(3, 4, stream),
                  ValidationError);
}

TEST_CASE("sample_without_replacement is close to uniform") {
  rng::Stream stream = rng::named_stream(9, "swor-uniform");
  std::vector<int> hits(10, 0);
  const int trials = 5000;
  for (int trial = 0; trial < trials; ++trial) {
    for (std::size_t v : rng::sample_without_replacement(10, 3, stream)) {
      hits[v] += 1;
    }
  }
  // Each index should appear in about trials * 3/10 of the samples.
  const double expected = trials * 0.3;
  for (int count : hits) {
    CHECK(std::abs(count - expected) < 0.1 * expected);
  }
}
