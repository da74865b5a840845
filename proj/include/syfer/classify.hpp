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
//
// Model-builder side: train a classifier on encoded tokens with encoded
// labels, select by dev AUC, decode predictions through the inverse label
// permutation, and score against raw labels.

#pragma once

#include "syfer/sau.hpp"
#include "syfer/scheme.hpp"

namespace syfer {

struct ClassifierConfig {
  int64_t hidden = 64;
  int heads = 4;
  int depth = 2;
  double dropout = 0.1;
  double weight_decay = 0.0;
  int epochs = 30;
  int64_t batch = 64;
  double lr = 1e-3;
};

struct EncodedDataset {
  Tensor tokens;                 // [n, t, d]
  std::vector<uint32_t> labels;  // 1-based (encoded or raw depending on side)
};

class ClassifierModel {
 public:
  static ClassifierModel init(const ClassifierConfig& cfg, int64_t in_tokens,
                              int64_t in_dim, int64_t classes, uint64_t seed);

  int logits_node(Graph& g, const Tensor& tokens, bool training,
                  bool trainable, Rng& rng);
  Tensor predict_probs(const Tensor& tokens);  // eval softmax [n, k]

  ParamRegistry registry();
  int64_t classes() const { return classes_; }

  // Deep copy / restore of weights and batch-norm state (dev selection).
  std::vector<Tensor> snapshot();
  void restore(const std::vector<Tensor>& snap);

 private:
  ClassifierConfig cfg_;
  int64_t classes_ = 0;
  Parameter proj_W_, proj_b_, head_W_, head_b_;
  SauStack stack_;
};

struct ClassifierTrainResult {
  std::vector<double> dev_auc_per_epoch;
  double best_dev_auc = 0.0;
  int best_epoch = -1;
};

// Minimizes cross-entropy on encoded labels; keeps the epoch checkpoint with
// the highest dev AUC. Rejects single-class training sets.
ClassifierTrainResult train_classifier(ClassifierModel& model,
                                       const EncodedDataset& train,
                                       const EncodedDataset& dev,
                                       const ClassifierConfig& cfg, Rng& rng);

// AUC of the positive class (id 2) from per-class probability rows.
double binary_auc_from_probs(const Tensor& probs,
                             const std::vector<uint32_t>& labels);

struct UtilityReport {
  std::string scheme;
  std::string task;
  double fraction = 1.0;
  uint64_t seed = 0;
  double test_auc = 0.0;
  double dev_auc = 0.0;
};

// Full Bob-side run for one scheme and one sampled key: encode the splits,
// train on (Z, T_Y(y)), decode test predictions, score against raw labels.
UtilityReport run_utility(const Scheme& scheme, const Dataset& data,
                          const std::vector<int64_t>& train_idx,
                          const std::vector<int64_t>& dev_idx,
                          const std::vector<int64_t>& test_idx,
                          const ClassifierConfig& cfg, const std::string& task,
                          double fraction, Rng& rng);

// Nested-subset learning curve: one classifier per fraction; smaller subsets
// are prefixes of larger ones.
std::vector<UtilityReport> learning_curve(const Scheme& scheme,
                                          const Dataset& data,
                                          const std::vector<int64_t>& train_idx,
                                          const std::vector<int64_t>& dev_idx,
                                          const std::vector<int64_t>& test_idx,
                                          const std::vector<double>& fractions,
                                          const ClassifierConfig& cfg,
                                          const std::string& task, Rng& rng);

}  // namespace syfer
