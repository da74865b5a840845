// Copyright 2026 The Syfer Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "syfer/errors.hpp"

namespace syfer {

namespace detail {

// Deterministic natural log: pure arithmetic plus IEEE sqrt-free range
// reduction, so sample streams are identical across libm implementations.
inline double det_log(double x) {
  // x = m * 2^e with m in [1, 2)
  int e = 0;
  double m = std::frexp(x, &e);  // m in [0.5, 1)
  m *= 2.0;
  e -= 1;
  const double y = (m - 1.0) / (m + 1.0);  // |y| <= 1/3
  const double y2 = y * y;
  double term = y;
  double sum = 0.0;
  for (int k = 1; k <= 27; k += 2) {
    sum += term / static_cast<double>(k);
    term *= y2;
  }
  constexpr double kLn2 = 0.6931471805599453094172321214581766;
  return 2.0 * sum + static_cast<double>(e) * kLn2;
}

}  // namespace detail

// Counter-style generator (splitmix64 core). Every stochastic operation in
// the workbench takes an explicit Rng so runs replay bit-exactly; `split`
// derives independent streams for parallel work without shared state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed), seed_of_record_(seed) {}

  uint64_t seed() const { return seed_of_record_; }
  uint64_t state() const { return state_; }
  void restore(uint64_t state) { state_ = state; }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Derive a stream decorrelated from this one; advances this stream once.
  Rng split(uint64_t salt = 0) {
    uint64_t s = next_u64();
    Rng r(s ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
    r.seed_of_record_ = s;
    return r;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  uint64_t next_below(uint64_t n) {
    check(n > 0, ErrorKind::Parameter, "next_below: n must be positive");
    const uint64_t rem = (~uint64_t{0} - n + 1) % n;  // 2^64 mod n
    const uint64_t bound = ~uint64_t{0} - rem;
    uint64_t x = next_u64();
    while (x > bound) x = next_u64();
    return x % n;
  }

  // Standard normal via the polar method; only det_log and IEEE sqrt, so the
  // stream is platform independent.
  double next_gaussian() {
    for (;;) {
      const double u = 2.0 * next_uniform() - 1.0;
      const double v = 2.0 * next_uniform() - 1.0;
      const double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) {
        return u * std::sqrt(-2.0 * detail::det_log(s) / s);
      }
    }
  }

  // Laplace(0, b) via inverse CDF: x = -b * sign(u) * ln(1 - 2|u|).
  double next_laplace(double b) {
    check(b >= 0.0, ErrorKind::Parameter, "laplace: scale b must be >= 0");
    if (b == 0.0) return 0.0;
    double u = next_uniform() - 0.5;
    while (u == -0.5) u = next_uniform() - 0.5;  // keep |u| < 0.5
    const double sign = u < 0.0 ? -1.0 : 1.0;
    return -b * sign * detail::det_log(1.0 - 2.0 * std::fabs(u));
  }

  // Uniform random permutation of {0, ..., n-1} (Fisher-Yates).
  std::vector<uint32_t> next_permutation(uint32_t n) {
    std::vector<uint32_t> p(n);
    for (uint32_t i = 0; i < n; ++i) p[i] = i;
    for (uint32_t i = n; i > 1; --i) {
      const uint32_t j = static_cast<uint32_t>(next_below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  uint64_t state_;
  uint64_t seed_of_record_ = 0;
};

}  // namespace syfer
