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
// Alternating optimization of the obfuscator against the contrastive
// attacker and an ensemble of fixed-key decoders. Estimator steps update the
// attacker (re-identification loss) and decoders (reconstruction loss);
// obfuscator steps update the scheme weights to minimize
// lambda_rec * L_rec - lambda_reid * L_reid. Decoder keys are sampled once
// and never change; the attacker faces a fresh key every step.

#pragma once

#include "syfer/attacker.hpp"
#include "syfer/syfer.hpp"

namespace syfer {

// Token decoder: depth-3 stack plus a projection back to patch pixel space,
// bound to one fixed private key.
struct Decoder {
  SauStack stack;
  Parameter out_W, out_b;
  EncoderKey fixed_key;
  std::string prefix;

  void init(const std::string& name_prefix, const SchemeConfig& cfg,
            EncoderKey key, Rng& rng, int depth = 3);
  void register_into(ParamRegistry& reg);
  // z tokens [n,t,d] -> predicted patchified pixels [n,t,P*P]
  int forward(Graph& g, int z, bool training, bool trainable);
};

struct SyferTrainConfig {
  int64_t steps = 2000;
  int64_t batch = 128;
  double lr = 1e-3;
  double lambda_rec = 20.0;
  double lambda_reid = 2.0;
  int decoders = 1;
  AttackerConfig attacker;  // label mode must be None (null labeling)
  // When > 0, a resumable training state (parameters, optimizer moments,
  // rng state) is written to checkpoint_path every N steps.
  int64_t checkpoint_every = 0;
  std::string checkpoint_path;
};

struct TrainLogEntry {
  int64_t step = 0;
  double l_reid = 0.0;
  double l_rec = 0.0;
  double l_syfer = 0.0;
  bool updated_estimators = false;
  uint64_t batch_key_id = 0;  // seed of the step's fresh key
};

struct SyferTrainResult {
  std::vector<TrainLogEntry> log;
  // in-training estimators, returned for inspection
  std::shared_ptr<AttackerModel> attacker;
  std::vector<Decoder> decoders;
};

// Alternating training in place on `scheme`; the first step updates the
// estimators. Aborts with a diagnostic checkpoint on non-finite loss when
// `diag_dir` is non-empty.
SyferTrainResult train_syfer(SyferScheme& scheme, const Dataset& public_data,
                             const SyferTrainConfig& cfg, Rng& rng,
                             const std::string& diag_dir = "");

// Continue a run from a training-state file written via checkpoint_every.
// The resumed trajectory is bit-identical to the uninterrupted one.
SyferTrainResult resume_train_syfer(SyferScheme& scheme,
                                    const std::string& state_path,
                                    const Dataset& public_data,
                                    const SyferTrainConfig& cfg,
                                    const std::string& diag_dir = "");

// Alice-side diagnostic: fit a decoder for one specific key from parallel
// (raw, encoded) data. Returns per-epoch MSE.
std::vector<double> train_private_decoder(Decoder& decoder,
                                          const SyferScheme& scheme,
                                          const Dataset& data, int epochs,
                                          int64_t batch, double lr, Rng& rng);

// Mean reconstruction MSE of a decoder on a dataset (eval mode).
double decoder_mse(Decoder& decoder, const SyferScheme& scheme,
                   const Dataset& data);

}  // namespace syfer
