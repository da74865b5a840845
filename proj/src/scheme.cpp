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

#include "syfer/scheme.hpp"

#include <algorithm>
#include <cmath>

namespace syfer {

void SchemeConfig::validate() const {
  check(height >= 1 && width >= 1 && patch >= 1, ErrorKind::Config,
        "scheme config: non-positive dims");
  check(height % patch == 0 && width % patch == 0, ErrorKind::Config,
        "scheme config: patch size must divide image dims");
  check(blocks >= 1, ErrorKind::Config, "scheme config: blocks must be >= 1");
  check(hidden >= 1 && hidden % heads == 0, ErrorKind::Config,
        "scheme config: hidden dim must be a positive multiple of heads");
  check(classes >= 2, ErrorKind::Config, "scheme config: need >= 2 classes");
  check(block_depth >= 1, ErrorKind::Config,
        "scheme config: block depth must be >= 1");
}

// --- LabelPermutation --------------------------------------------------------

LabelPermutation LabelPermutation::identity(int64_t k) {
  LabelPermutation p;
  p.fwd.resize(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) p.fwd[i] = static_cast<uint32_t>(i + 1);
  return p;
}

LabelPermutation LabelPermutation::sample(int64_t k, Rng& rng) {
  LabelPermutation p;
  const auto perm = rng.next_permutation(static_cast<uint32_t>(k));
  p.fwd.resize(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) p.fwd[i] = perm[i] + 1;
  return p;
}

bool LabelPermutation::is_identity() const {
  for (size_t i = 0; i < fwd.size(); ++i) {
    if (fwd[i] != i + 1) return false;
  }
  return true;
}

uint32_t LabelPermutation::encode(uint32_t label) const {
  check(label >= 1 && label <= fwd.size(), ErrorKind::Domain,
        "label out of range: " + std::to_string(label));
  return fwd[label - 1];
}

uint32_t LabelPermutation::decode(uint32_t label) const {
  check(label >= 1 && label <= fwd.size(), ErrorKind::Domain,
        "label out of range: " + std::to_string(label));
  for (size_t i = 0; i < fwd.size(); ++i) {
    if (fwd[i] == label) return static_cast<uint32_t>(i + 1);
  }
  fail(ErrorKind::Domain, "label permutation is not a bijection");
}

std::vector<uint32_t> LabelPermutation::encode_all(
    const std::vector<uint32_t>& labels) const {
  std::vector<uint32_t> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) out[i] = encode(labels[i]);
  return out;
}

std::vector<uint32_t> LabelPermutation::decode_all(
    const std::vector<uint32_t>& labels) const {
  std::vector<uint32_t> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) out[i] = decode(labels[i]);
  return out;
}

Tensor LabelPermutation::decode_predictions(const Tensor& probs) const {
  const int64_t k = classes();
  check(probs.rank() == 2 && probs.dim(1) == k, ErrorKind::Dimension,
        "decode_predictions: probs must be [n,k]");
  Tensor out = Tensor::zeros(probs.shape);
  const int64_t n = probs.dim(0);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t c = 0; c < k; ++c) {
      // raw class c+1 was reported under encoded class fwd[c]
      out[i * k + c] = probs[i * k + (fwd[c] - 1)];
    }
  }
  return out;
}

// --- EncoderKey --------------------------------------------------------------

TensorStore EncoderKey::to_store() const {
  TensorStore ts;
  ts.put_u32("key/seed",
             {static_cast<uint32_t>(seed & 0xffffffffu),
              static_cast<uint32_t>(seed >> 32)},
             {2});
  ts.put_u32("key/perm", label_perm.fwd,
             {static_cast<int64_t>(label_perm.fwd.size())});
  for (const auto& [name, t] : tensors) ts.put_f32("key/" + name, t);
  return ts;
}

EncoderKey EncoderKey::from_store(const TensorStore& ts) {
  EncoderKey key;
  const auto& seed_words = ts.get_u32("key/seed");
  check(seed_words.size() == 2, ErrorKind::Format, "key: malformed seed");
  key.seed = static_cast<uint64_t>(seed_words[0]) |
             (static_cast<uint64_t>(seed_words[1]) << 32);
  key.label_perm.fwd = ts.get_u32("key/perm");
  for (const auto& name : ts.names()) {
    if (name == "key/seed" || name == "key/perm") continue;
    check(name.rfind("key/", 0) == 0, ErrorKind::Format,
          "key container holds a non-key entry: " + name);
    key.tensors.emplace(name.substr(4), ts.get_f32(name));
  }
  return key;
}

// --- patchify ----------------------------------------------------------------

Tensor patchify(const Tensor& images, int64_t patch) {
  check(images.rank() == 3, ErrorKind::Dimension, "patchify: need [n,H,W]");
  const int64_t n = images.dim(0), H = images.dim(1), W = images.dim(2);
  check(patch >= 1 && H % patch == 0 && W % patch == 0, ErrorKind::Config,
        "patchify: patch size must divide image dims");
  const int64_t gh = H / patch, gw = W / patch, t = gh * gw, pd = patch * patch;
  Tensor out = Tensor::zeros({n, t, pd});
  for (int64_t i = 0; i < n; ++i) {
    const float* img = images.data.data() + i * H * W;
    for (int64_t py = 0; py < gh; ++py) {
      for (int64_t px = 0; px < gw; ++px) {
        float* dst = out.data.data() + (i * t + py * gw + px) * pd;
        for (int64_t y = 0; y < patch; ++y) {
          const float* src = img + (py * patch + y) * W + px * patch;
          std::copy_n(src, patch, dst + y * patch);
        }
      }
    }
  }
  return out;
}

Tensor unpatchify(const Tensor& tokens, int64_t height, int64_t width) {
  check(tokens.rank() == 3, ErrorKind::Dimension, "unpatchify: need [n,t,p2]");
  const int64_t n = tokens.dim(0), t = tokens.dim(1), pd = tokens.dim(2);
  const int64_t patch = static_cast<int64_t>(std::sqrt(static_cast<double>(pd)));
  check(patch * patch == pd, ErrorKind::Dimension,
        "unpatchify: token dim is not a square");
  const int64_t gh = height / patch, gw = width / patch;
  check(gh * gw == t && height % patch == 0 && width % patch == 0,
        ErrorKind::Dimension, "unpatchify: token count does not match dims");
  Tensor out = Tensor::zeros({n, height, width});
  for (int64_t i = 0; i < n; ++i) {
    float* img = out.data.data() + i * height * width;
    for (int64_t py = 0; py < gh; ++py) {
      for (int64_t px = 0; px < gw; ++px) {
        const float* src = tokens.data.data() + (i * t + py * gw + px) * pd;
        for (int64_t y = 0; y < patch; ++y) {
          std::copy_n(src + y * patch, patch,
                      img + (py * patch + y) * width + px * patch);
        }
      }
    }
  }
  return out;
}

// --- Scheme label helpers ------------------------------------------------------

std::vector<uint32_t> Scheme::encode_labels(const std::vector<uint32_t>& labels,
                                            const EncoderKey& key) const {
  return key.label_perm.encode_all(labels);
}

std::vector<uint32_t> Scheme::decode_labels(const std::vector<uint32_t>& labels,
                                            const EncoderKey& key) const {
  return key.label_perm.decode_all(labels);
}

Tensor Scheme::decode_predictions(const Tensor& probs,
                                  const EncoderKey& key) const {
  return key.label_perm.decode_predictions(probs);
}

// --- identity scheme -----------------------------------------------------------

namespace {

class IdentityScheme final : public Scheme {
 public:
  explicit IdentityScheme(const SchemeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
  }
  std::string name() const override { return "identity"; }
  const SchemeConfig& config() const override { return cfg_; }
  EncoderKey sample_key(Rng&) const override {
    EncoderKey key;
    key.label_perm = LabelPermutation::identity(cfg_.classes);
    return key;
  }
  Tensor encode_images(const Tensor& images, const EncoderKey&,
                       Rng&) const override {
    return patchify(images, cfg_.patch);
  }
  int64_t out_tokens() const override { return cfg_.tokens(); }
  int64_t out_token_dim() const override { return cfg_.patch_dim(); }

 private:
  SchemeConfig cfg_;
};

}  // namespace

std::unique_ptr<Scheme> make_identity_scheme(const SchemeConfig& cfg) {
  return std::make_unique<IdentityScheme>(cfg);
}

}  // namespace syfer
