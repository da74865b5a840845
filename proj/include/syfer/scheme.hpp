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

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "syfer/dataio.hpp"
#include "syfer/rng.hpp"
#include "syfer/tensor.hpp"

namespace syfer {

struct SchemeConfig {
  int64_t height = 32;
  int64_t width = 32;
  int64_t patch = 8;
  int64_t blocks = 3;       // obfuscator/random-layer block count B
  int64_t hidden = 64;      // token hidden dim d
  int64_t classes = 2;      // k
  int heads = 4;
  int block_depth = 1;      // SAU layers per obfuscator block

  void validate() const;
  int64_t tokens() const { return (height / patch) * (width / patch); }
  int64_t patch_dim() const { return patch * patch; }
};

// Label half of a transformation: a bijection pi over {1..k}.
struct LabelPermutation {
  std::vector<uint32_t> fwd;  // fwd[c-1] = pi(c), 1-based class values

  static LabelPermutation identity(int64_t k);
  static LabelPermutation sample(int64_t k, Rng& rng);
  bool is_identity() const;
  int64_t classes() const { return static_cast<int64_t>(fwd.size()); }

  uint32_t encode(uint32_t label) const;
  uint32_t decode(uint32_t label) const;
  std::vector<uint32_t> encode_all(const std::vector<uint32_t>& labels) const;
  std::vector<uint32_t> decode_all(const std::vector<uint32_t>& labels) const;
  // Reorder per-class probability vectors [n, k] back to raw class order.
  Tensor decode_predictions(const Tensor& probs) const;
};

// Alice's private randomness: seed, per-scheme weight tensors, and the label
// permutation. Keyless schemes carry an identity permutation and no tensors.
struct EncoderKey {
  uint64_t seed = 0;
  LabelPermutation label_perm;
  std::map<std::string, Tensor> tensors;

  TensorStore to_store() const;               // names under "key/"
  static EncoderKey from_store(const TensorStore& ts);
};

// Patch decomposition: [n,H,W] -> [n,t,P*P] in row-major patch order.
Tensor patchify(const Tensor& images, int64_t patch);
Tensor unpatchify(const Tensor& tokens, int64_t height, int64_t width);

// Encoding scheme interface shared by Syfer and every baseline, so the
// attacker and utility harnesses are scheme-agnostic. Encoded data is always
// a token grid [n, out_tokens, out_token_dim].
class Scheme {
 public:
  virtual ~Scheme() = default;
  virtual std::string name() const = 0;
  virtual const SchemeConfig& config() const = 0;
  virtual EncoderKey sample_key(Rng& rng) const = 0;
  // rng supplies per-sample randomness for keyless schemes; keyed schemes do
  // not consume it.
  virtual Tensor encode_images(const Tensor& images, const EncoderKey& key,
                               Rng& rng) const = 0;
  virtual int64_t out_tokens() const = 0;
  virtual int64_t out_token_dim() const = 0;

  std::vector<uint32_t> encode_labels(const std::vector<uint32_t>& labels,
                                      const EncoderKey& key) const;
  std::vector<uint32_t> decode_labels(const std::vector<uint32_t>& labels,
                                      const EncoderKey& key) const;
  Tensor decode_predictions(const Tensor& probs, const EncoderKey& key) const;
};

// Non-private reference scheme: patchified raw pixels, identity labels.
std::unique_ptr<Scheme> make_identity_scheme(const SchemeConfig& cfg);

}  // namespace syfer
