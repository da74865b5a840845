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
// Contrastive re-identification estimator: per-sample instance encoders
// (separate networks for raw and encoded data), a set encoder attending over
// the whole candidate set, cosine pair scores normalized jointly over all
// pairs, and the negative log-likelihood of the true matching. The attacker
// only ever sees (data, labels) and the scheme's key sampler; it never reads
// a key's contents.

#pragma once

#include "syfer/metrics.hpp"
#include "syfer/sau.hpp"
#include "syfer/scheme.hpp"

namespace syfer {

enum class LabelMode { None, Raw, Encoded };

LabelMode label_mode_from_string(const std::string& s);
std::string label_mode_to_string(LabelMode m);

struct AttackerConfig {
  int64_t hidden = 64;  // instance/set hidden dim
  int heads = 4;
  int depth_ins = 3;
  int depth_set = 1;
  LabelMode label_mode = LabelMode::None;
};

class AttackerModel {
 public:
  AttackerModel() = default;
  // Input geometry comes from the scheme: raw side is patchified pixels,
  // encoded side is the scheme's token grid.
  static AttackerModel init(const AttackerConfig& cfg, const Scheme& scheme,
                            uint64_t seed);

  const AttackerConfig& config() const { return cfg_; }

  // Pooled instance representations [b, hidden]; labels are 1-based ids and
  // required iff the label mode uses them (pass nullptr in null-label mode).
  int instance_encode(Graph& g, const Tensor& tokens,
                      const std::vector<uint32_t>* labels, bool raw_side,
                      BnMode mode, bool trainable);
  // Same, but consuming an existing graph node so gradients can flow from
  // the attacker into whatever produced the tokens (obfuscator training).
  int instance_encode_node(Graph& g, int tokens_node,
                           const std::vector<uint32_t>* labels, bool raw_side,
                           BnMode mode, bool trainable);
  // Set-contextualized representations: attention over instances as tokens.
  int set_encode(Graph& g, int instance_reps, BnMode mode, bool trainable);

  ParamRegistry registry();
  void save(const std::string& path) const;
  static AttackerModel load(const std::string& path);
  void save_into(TensorStore& ts) const;  // names under "attacker/"
  static AttackerModel load_from(const TensorStore& ts);

  int64_t raw_token_dim() const { return raw_dim_; }
  int64_t enc_token_dim() const { return enc_dim_; }

 private:
  AttackerConfig cfg_;
  int64_t raw_tokens_ = 0, raw_dim_ = 0, enc_tokens_ = 0, enc_dim_ = 0;
  int64_t classes_ = 0;
  Parameter proj_raw_W_, proj_raw_b_, proj_enc_W_, proj_enc_b_;
  Parameter label_embed_raw_, label_embed_enc_;
  SauStack ins_raw_, ins_enc_, set_;
};

// Cosine similarity matrix between row-normalized representations, plus the
// re-identification loss -sum_{(x,z) in M} log p_hat(x,z) with p_hat the
// joint softmax over all pairs.
struct ReidNodes {
  int sims = -1;  // [n, m] cosine similarities
  int loss = -1;  // scalar
};
ReidNodes reid_loss_nodes(Graph& g, int r_raw, int r_enc,
                          const std::vector<std::pair<int32_t, int32_t>>& matches);

// Joint-softmax score matrix (computed in double) from a similarity matrix.
PairScoreMatrix scores_from_sims(const Tensor& sims,
                                 std::vector<std::pair<int32_t, int32_t>> matches);

struct AttackerTrainConfig {
  int epochs = 200;
  int64_t batch = 64;
  double lr = 1e-3;
};

// One optimization step per batch: fresh key, encode, score, minimize the
// re-identification loss. Returns mean loss per epoch.
std::vector<double> train_attacker(AttackerModel& model, const Scheme& scheme,
                                   const Dataset& data,
                                   const AttackerTrainConfig& cfg, Rng& rng);

struct EvalProtocol {
  int64_t n_eval = 64;
  int data_samples = 3;  // r random data subsets ...
  int keys = 3;          // ... each attacked under s fresh keys
};

struct EvalResult {
  std::vector<PairScoreMatrix> trials;
  std::vector<PrivacyReport::TrialMeta> meta;
};

// data_samples x keys trials; each trial encodes a fresh subset under a fresh
// key and scores the full subset in one pass.
EvalResult evaluate_attacker(AttackerModel& model, const Scheme& scheme,
                             const Dataset& data, const EvalProtocol& protocol,
                             Rng& rng);

}  // namespace syfer
