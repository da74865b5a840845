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

#include "syfer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace syfer {

namespace {

long long gcd_ll(long long a, long long b) {
  while (b != 0) {
    const long long t = a % b;
    a = b;
    b = t;
  }
  return a < 0 ? -a : a;
}

long long narrow(__int128 v) {
  check(v <= __int128(9223372036854775807LL) &&
            v >= -__int128(9223372036854775807LL) - 1,
        ErrorKind::Internal, "rational overflow");
  return static_cast<long long>(v);
}

}  // namespace

Rational::Rational(long long n, long long d) : num(n), den(d) {
  check(den != 0, ErrorKind::Domain, "rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const long long g = gcd_ll(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
}

Rational Rational::operator+(const Rational& o) const {
  const __int128 n = __int128(num) * o.den + __int128(o.num) * den;
  const __int128 d = __int128(den) * o.den;
  const long long nn = narrow(n), dd = narrow(d);
  return Rational(nn, dd);
}

Rational Rational::operator*(const Rational& o) const {
  const long long g1 = gcd_ll(num, o.den);
  const long long g2 = gcd_ll(o.num, den);
  const __int128 n = __int128(num / g1) * (o.num / g2);
  const __int128 d = __int128(den / g2) * (o.den / g1);
  return Rational(narrow(n), narrow(d));
}

PairScoreMatrix PairScoreMatrix::uniform(int64_t rows, int64_t cols) {
  PairScoreMatrix s;
  s.rows = rows;
  s.cols = cols;
  s.scores.assign(static_cast<size_t>(rows * cols),
                  1.0 / static_cast<double>(rows * cols));
  for (int64_t j = 0; j < std::min(rows, cols); ++j) {
    s.matches.emplace_back(static_cast<int32_t>(j), static_cast<int32_t>(j));
  }
  return s;
}

void PairScoreMatrix::validate() const {
  check(rows >= 1 && cols >= 1, ErrorKind::Dimension, "score matrix: empty");
  check(static_cast<int64_t>(scores.size()) == rows * cols,
        ErrorKind::Dimension, "score matrix: size mismatch");
  double sum = 0.0;
  for (double v : scores) {
    check(v >= 0.0, ErrorKind::Numeric, "score matrix: negative entry");
    sum += v;
  }
  check(std::fabs(sum - 1.0) <= 1e-6, ErrorKind::Numeric,
        "score matrix: entries must sum to 1");
  check(!matches.empty(), ErrorKind::Domain, "score matrix: empty match set");
  std::vector<uint8_t> row_used(static_cast<size_t>(rows), 0);
  std::vector<uint8_t> col_used(static_cast<size_t>(cols), 0);
  for (auto [i, j] : matches) {
    check(i >= 0 && i < rows && j >= 0 && j < cols, ErrorKind::Domain,
          "score matrix: match index out of range");
    check(!row_used[i] && !col_used[j], ErrorKind::Domain,
          "score matrix: duplicated row/col in match set");
    row_used[i] = col_used[j] = 1;
  }
}

namespace {

struct Bucket {
  int64_t size = 0;
  int64_t matched = 0;
};

// Descending sort, then chain-group entries whose gap is within the relative
// tolerance. Returns buckets in rank order.
std::vector<Bucket> tie_buckets(const PairScoreMatrix& s, double rel_tol) {
  check(!s.matches.empty(), ErrorKind::Domain, "guesswork: empty match set");
  const int64_t total = s.rows * s.cols;
  std::vector<int64_t> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return s.scores[a] > s.scores[b];
  });
  std::vector<uint8_t> is_match(static_cast<size_t>(total), 0);
  for (auto [i, j] : s.matches) is_match[i * s.cols + j] = 1;

  std::vector<Bucket> buckets;
  double prev = 0.0;
  for (int64_t r = 0; r < total; ++r) {
    const double v = s.scores[order[r]];
    const bool new_bucket =
        buckets.empty() || (prev - v) > rel_tol * std::max(prev, 0.0);
    if (new_bucket) {
      buckets.push_back({});
    }
    buckets.back().size++;
    buckets.back().matched += is_match[order[r]];
    prev = v;
  }
  return buckets;
}

}  // namespace

GuessworkResult guesswork(const PairScoreMatrix& s, double tie_rel_tol) {
  const auto buckets = tie_buckets(s, tie_rel_tol);
  long long ahead = 0;
  for (const auto& b : buckets) {
    if (b.matched > 0) {
      // urn expectation for the first success within the bucket
      const Rational g =
          Rational(ahead) + Rational(1 + b.size, 1 + b.matched);
      return {g, g.value()};
    }
    ahead += b.size;
  }
  fail(ErrorKind::Internal, "guesswork: match set not found in buckets");
}

double brute_force_guesswork(const PairScoreMatrix& s, double tie_rel_tol) {
  check(s.rows * s.cols <= 12, ErrorKind::Size,
        "brute_force_guesswork: instance too large (rows*cols must be <= 12)");
  const auto buckets = tie_buckets(s, tie_rel_tol);
  int64_t ahead = 0;
  for (const auto& b : buckets) {
    if (b.matched == 0) {
      ahead += b.size;
      continue;
    }
    // Average the rank of the first match over every arrangement of the
    // bucket's entries; only the positions of the matched entries matter, and
    // each distinct position set arises from equally many permutations.
    std::vector<uint8_t> arrangement(static_cast<size_t>(b.size), 0);
    for (int64_t i = 0; i < b.matched; ++i) arrangement[i] = 1;
    std::sort(arrangement.begin(), arrangement.end());
    double sum = 0.0;
    int64_t count = 0;
    do {
      for (int64_t pos = 0; pos < b.size; ++pos) {
        if (arrangement[pos]) {
          sum += static_cast<double>(pos + 1);
          break;
        }
      }
      ++count;
    } while (std::next_permutation(arrangement.begin(), arrangement.end()));
    return static_cast<double>(ahead) + sum / static_cast<double>(count);
  }
  fail(ErrorKind::Internal, "brute_force_guesswork: no matched bucket");
}

double rank_auc(const std::vector<double>& scores,
                const std::vector<uint8_t>& positive) {
  const int64_t total = static_cast<int64_t>(scores.size());
  check(scores.size() == positive.size(), ErrorKind::Dimension,
        "rank_auc: size mismatch");
  int64_t n1 = 0;
  for (uint8_t p : positive) n1 += p ? 1 : 0;
  const int64_t n0 = total - n1;
  check(n1 >= 1 && n0 >= 1, ErrorKind::Domain,
        "rank_auc: need both classes present");

  std::vector<int64_t> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return scores[a] < scores[b];
  });

  // midranks over exactly-tied groups
  double rank_sum_pos = 0.0;
  int64_t r = 0;
  while (r < total) {
    int64_t r2 = r;
    while (r2 + 1 < total && scores[order[r2 + 1]] == scores[order[r]]) ++r2;
    const double midrank =
        (static_cast<double>(r + 1) + static_cast<double>(r2 + 1)) / 2.0;
    for (int64_t k = r; k <= r2; ++k) {
      if (positive[order[k]]) rank_sum_pos += midrank;
    }
    r = r2 + 1;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

double reid_auc(const PairScoreMatrix& s) {
  const int64_t total = s.rows * s.cols;
  std::vector<uint8_t> is_match(static_cast<size_t>(total), 0);
  for (auto [i, j] : s.matches) is_match[i * s.cols + j] = 1;
  return rank_auc(s.scores, is_match);
}

double percentile(std::vector<double> values, double p) {
  check(!values.empty(), ErrorKind::Domain, "percentile: empty input");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

PrivacyReport aggregate_trials(const std::vector<PairScoreMatrix>& trials) {
  check(trials.size() >= 2, ErrorKind::Domain,
        "aggregate: need at least 2 trials");
  PrivacyReport rep;
  for (const auto& t : trials) {
    rep.guesswork_per_trial.push_back(guesswork(t).value);
    rep.auc_per_trial.push_back(reid_auc(t));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  rep.guesswork_mean = mean(rep.guesswork_per_trial);
  rep.auc_mean = mean(rep.auc_per_trial);
  rep.guesswork_ci_low = percentile(rep.guesswork_per_trial, 2.5);
  rep.guesswork_ci_high = percentile(rep.guesswork_per_trial, 97.5);
  rep.auc_ci_low = percentile(rep.auc_per_trial, 2.5);
  rep.auc_ci_high = percentile(rep.auc_per_trial, 97.5);
  rep.n_eval = trials.front().cols;
  return rep;
}

}  // namespace syfer
