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
// The keyed neural obfuscation scheme: images are patchified, projected to
// the hidden dim, then run through B blocks of trained SAU layers each
// followed by a keyed per-patch random layer (linear -> SELU -> layer norm).
// Labels are encoded with a sampled permutation. The random weights and the
// permutation are Alice's private key; the obfuscator weights are public.

#pragma once

#include "syfer/sau.hpp"
#include "syfer/scheme.hpp"

namespace syfer {

// Public half of the scheme: the trained (or randomly initialized) weights.
struct ObfuscatorParams {
  SchemeConfig cfg;
  Parameter proj_W, proj_b;       // patch projection, part of the first block
  std::vector<SauStack> blocks;

  void init(const SchemeConfig& c, Rng& rng);
  void register_into(ParamRegistry& reg);
  void save_into(TensorStore& ts) const;   // names under "scheme/"
  static ObfuscatorParams load_from(const TensorStore& ts);
};

class SyferScheme final : public Scheme {
 public:
  SyferScheme(ObfuscatorParams params, std::string name);

  static SyferScheme random_init(const SchemeConfig& cfg, uint64_t seed,
                                 const std::string& name = "syfer-random");

  std::string name() const override { return name_; }
  const SchemeConfig& config() const override { return params_.cfg; }
  EncoderKey sample_key(Rng& rng) const override;
  Tensor encode_images(const Tensor& images, const EncoderKey& key,
                       Rng& rng) const override;
  int64_t out_tokens() const override { return params_.cfg.tokens(); }
  int64_t out_token_dim() const override { return params_.cfg.hidden; }

  // A key is fully determined by its seed.
  static EncoderKey key_from_seed(const SchemeConfig& cfg, uint64_t seed);

  // Forward with gradient flow for the training loop. `trainable` marks the
  // obfuscator parameters; key weights are always constants.
  int encode_graph(Graph& g, const Tensor& images, const EncoderKey& key,
                   bool training, bool trainable);

  ObfuscatorParams& params() { return params_; }
  const ObfuscatorParams& params() const { return params_; }
  ParamRegistry registry();

  void save(const std::string& path) const;
  static SyferScheme load(const std::string& path, const std::string& name);

 private:
  ObfuscatorParams params_;
  std::string name_;
};

std::unique_ptr<Scheme> make_syfer_random(const SchemeConfig& cfg,
                                          uint64_t seed);

}  // namespace syfer
