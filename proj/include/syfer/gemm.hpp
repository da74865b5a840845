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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace syfer {

// Worker cap: min(hardware, OBF_NUM_THREADS). Read once.
inline int num_threads() {
  static const int n = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("OBF_NUM_THREADS")) {
      const int cap = std::atoi(env);
      if (cap > 0 && cap < hw) hw = cap;
    }
    return hw;
  }();
  return n;
}

// Deterministic row partition: each index is processed by exactly one worker
// in a fixed order, so results do not depend on the thread count.
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body,
                         int64_t grain = 256) {
  const int workers = num_threads();
  if (workers <= 1 || n < 2 * grain) {
    body(0, n);
    return;
  }
  const int64_t chunks = std::min<int64_t>(workers, (n + grain - 1) / grain);
  const int64_t per = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(chunks) - 1);
  for (int64_t c = 1; c < chunks; ++c) {
    const int64_t lo = c * per;
    const int64_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(0, std::min(n, per));
  for (auto& t : pool) t.join();
}

// C[M,N] += A[M,K] * B[K,N]; row cache-resident ikj kernel, vectorizes on the
// N loop. All GEMM variants accumulate into C. std::fma opts these kernels
// into fused multiply-add (the project builds with fp-contract off).
template <typename R>
void gemm_nn(int64_t M, int64_t N, int64_t K, const R* A, const R* B, R* C) {
  parallel_for(M, [=](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const R* a = A + i * K;
      R* c = C + i * N;
      for (int64_t k = 0; k < K; ++k) {
        const R av = a[k];
        const R* b = B + k * N;
        for (int64_t j = 0; j < N; ++j) c[j] = std::fma(av, b[j], c[j]);
      }
    }
  });
}

// C[M,N] += A[M,K] * B[N,K]^T. B is transposed up front (it is the small
// operand) so the hot loop runs the stream-friendly nn kernel instead of a
// latency-bound dot-product chain.
template <typename R>
void gemm_nt(int64_t M, int64_t N, int64_t K, const R* A, const R* B, R* C) {
  std::vector<R> bt(static_cast<size_t>(K * N));
  for (int64_t j = 0; j < N; ++j) {
    for (int64_t k = 0; k < K; ++k) bt[k * N + j] = B[j * K + k];
  }
  gemm_nn(M, N, K, A, bt.data(), C);
}

// C[M,N] += A[K,M]^T * B[K,N]; parallelized over K is unsafe (shared C), so
// we split on M and walk K outer.
template <typename R>
void gemm_tn(int64_t M, int64_t N, int64_t K, const R* A, const R* B, R* C) {
  parallel_for(
      M,
      [=](int64_t lo, int64_t hi) {
        for (int64_t k = 0; k < K; ++k) {
          const R* a = A + k * M;
          const R* b = B + k * N;
          for (int64_t i = lo; i < hi; ++i) {
            const R av = a[i];
            R* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] = std::fma(av, b[j], c[j]);
          }
        }
      },
      64);
}

}  // namespace syfer
