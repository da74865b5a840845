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

#include <cstdint>
#include <string>
#include <vector>

#include "syfer/errors.hpp"

namespace syfer {

// Exact fraction on int64 with __int128 intermediates; guesswork values and
// their expectations are small rationals so this never strains.
struct Rational {
  long long num = 0;
  long long den = 1;

  Rational() = default;
  Rational(long long n, long long d = 1);
  Rational operator+(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  bool operator==(const Rational& o) const {
    return num == o.num && den == o.den;
  }
  double value() const { return static_cast<double>(num) / den; }
  std::string str() const {
    return std::to_string(num) + "/" + std::to_string(den);
  }
};

// Attacker scores for one evaluation trial. Rows index raw candidates,
// columns index encoded samples; `matches` is the ground-truth set M_T.
// Scores are jointly normalized (sum to 1 over all rows*cols entries).
struct PairScoreMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<double> scores;  // row-major [rows, cols]
  std::vector<std::pair<int32_t, int32_t>> matches;

  double at(int64_t i, int64_t j) const { return scores[i * cols + j]; }
  static PairScoreMatrix uniform(int64_t rows, int64_t cols);
  // Checks entry range, normalization, and the at-most-one-match-per-row/col
  // invariant.
  void validate() const;
};

struct GuessworkResult {
  Rational exact;
  double value = 0.0;
};

// Guesswork of one score matrix: descending-sorted guesses are grouped into
// equal-score buckets; the count of all strictly-better buckets plus the
// urn-problem expectation (1+|S_q|)/(1+|S_q ∩ M|) inside the first bucket
// containing a match. Tie grouping uses a relative tolerance.
GuessworkResult guesswork(const PairScoreMatrix& s, double tie_rel_tol = 1e-12);

// Independent oracle: expected rank of the first correct guess, averaged by
// explicit enumeration of the orderings consistent with descending scores.
// Guarded to rows*cols <= 12.
double brute_force_guesswork(const PairScoreMatrix& s,
                             double tie_rel_tol = 1e-12);

// Mann-Whitney AUC with midranks for ties; `positive` marks the class whose
// scores should rank higher.
double rank_auc(const std::vector<double>& scores,
                const std::vector<uint8_t>& positive);

// Rank-based (Mann-Whitney) ROC AUC of matched-vs-unmatched scores; tied
// scores contribute 1/2.
double reid_auc(const PairScoreMatrix& s);

// Percentile with linear interpolation on sorted values, p in [0, 100].
double percentile(std::vector<double> values, double p);

struct PrivacyReport {
  std::string scheme;
  int64_t n_eval = 0;
  std::vector<double> guesswork_per_trial;
  std::vector<double> auc_per_trial;
  double guesswork_mean = 0.0;
  double guesswork_ci_low = 0.0;
  double guesswork_ci_high = 0.0;
  double auc_mean = 0.0;
  double auc_ci_low = 0.0;
  double auc_ci_high = 0.0;
  struct TrialMeta {
    uint64_t seed = 0;
    int64_t n = 0;
    uint64_t key_id = 0;
  };
  std::vector<TrialMeta> trial_meta;
};

// Mean and 2.5/97.5 percentile bounds over >= 2 trials.
PrivacyReport aggregate_trials(const std::vector<PairScoreMatrix>& trials);

}  // namespace syfer
