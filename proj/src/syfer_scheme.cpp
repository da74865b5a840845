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

#include "syfer/syfer.hpp"

#include <algorithm>

namespace syfer {

void ObfuscatorParams::init(const SchemeConfig& c, Rng& rng) {
  c.validate();
  cfg = c;
  const int64_t pd = cfg.patch_dim(), d = cfg.hidden;
  const double sd = 1.0 / std::sqrt(static_cast<double>(pd));
  proj_W = {"scheme/proj/W", Tensor::randn({pd, d}, rng, sd)};
  proj_b = {"scheme/proj/b", Tensor::zeros({d})};
  blocks.resize(static_cast<size_t>(cfg.blocks));
  for (int64_t b = 0; b < cfg.blocks; ++b) {
    blocks[b].init("scheme/block" + std::to_string(b), cfg.block_depth,
                   cfg.tokens(), d, cfg.heads, rng);
  }
}

void ObfuscatorParams::register_into(ParamRegistry& reg) {
  reg.add(proj_W);
  reg.add(proj_b);
  for (auto& b : blocks) b.register_into(reg);
}

void ObfuscatorParams::save_into(TensorStore& ts) const {
  ts.put_u32("scheme/cfg",
             {static_cast<uint32_t>(cfg.height), static_cast<uint32_t>(cfg.width),
              static_cast<uint32_t>(cfg.patch), static_cast<uint32_t>(cfg.blocks),
              static_cast<uint32_t>(cfg.hidden),
              static_cast<uint32_t>(cfg.classes),
              static_cast<uint32_t>(cfg.heads),
              static_cast<uint32_t>(cfg.block_depth)},
             {8});
  ParamRegistry reg;
  auto* self = const_cast<ObfuscatorParams*>(this);
  self->register_into(reg);
  for (const auto* p : reg.params) ts.put_f32(p->name, p->value);
  for (const auto& [name, bn] : reg.bn_states) {
    ts.put_f32(name + "/mean", bn->run_mean);
    ts.put_f32(name + "/var", bn->run_var);
  }
}

ObfuscatorParams ObfuscatorParams::load_from(const TensorStore& ts) {
  const auto& cw = ts.get_u32("scheme/cfg");
  check(cw.size() == 8, ErrorKind::Format, "scheme checkpoint: malformed cfg");
  SchemeConfig cfg;
  cfg.height = cw[0];
  cfg.width = cw[1];
  cfg.patch = cw[2];
  cfg.blocks = cw[3];
  cfg.hidden = cw[4];
  cfg.classes = cw[5];
  cfg.heads = static_cast<int>(cw[6]);
  cfg.block_depth = static_cast<int>(cw[7]);

  Rng dummy(0);
  ObfuscatorParams out;
  out.init(cfg, dummy);
  ParamRegistry reg;
  out.register_into(reg);
  for (auto* p : reg.params) {
    Tensor t = ts.get_f32(p->name);
    require_shape(t, p->value.shape, p->name.c_str());
    p->value = std::move(t);
    p->zero_grad();
  }
  for (auto& [name, bn] : reg.bn_states) {
    bn->run_mean = ts.get_f32(name + "/mean");
    bn->run_var = ts.get_f32(name + "/var");
  }
  return out;
}

SyferScheme::SyferScheme(ObfuscatorParams params, std::string name)
    : params_(std::move(params)), name_(std::move(name)) {}

SyferScheme SyferScheme::random_init(const SchemeConfig& cfg, uint64_t seed,
                                     const std::string& name) {
  Rng rng(seed);
  ObfuscatorParams p;
  p.init(cfg, rng);
  return SyferScheme(std::move(p), name);
}

EncoderKey SyferScheme::key_from_seed(const SchemeConfig& cfg, uint64_t seed) {
  Rng kr(seed);
  EncoderKey key;
  key.seed = seed;
  const int64_t t = cfg.tokens(), d = cfg.hidden;
  for (int64_t b = 0; b < cfg.blocks; ++b) {
    key.tensors.emplace("block" + std::to_string(b) + "/W",
                        Tensor::randn({t, d, d}, kr));
  }
  key.label_perm = LabelPermutation::sample(cfg.classes, kr);
  return key;
}

EncoderKey SyferScheme::sample_key(Rng& rng) const {
  return key_from_seed(params_.cfg, rng.next_u64());
}

int SyferScheme::encode_graph(Graph& g, const Tensor& images,
                              const EncoderKey& key, bool training,
                              bool trainable) {
  const SchemeConfig& cfg = params_.cfg;
  check(images.rank() == 3 && images.dim(1) == cfg.height &&
            images.dim(2) == cfg.width,
        ErrorKind::Config, "encode: image shape does not match scheme config");
  check(images.all_finite(), ErrorKind::Numeric, "encode: non-finite input");
  for (float v : images.data) {
    check(v >= 0.0f && v <= 1.0f, ErrorKind::Domain,
          "encode: pixel values must lie in [0,1]");
  }
  const int x = g.leaf(patchify(images, cfg.patch));
  const BnMode mode = training ? BnMode::Train : BnMode::Eval;
  int h = linear(g, x, params_.proj_W.bind(g, trainable),
                 params_.proj_b.bind(g, trainable));
  for (int64_t b = 0; b < cfg.blocks; ++b) {
    h = params_.blocks[b].forward(g, h, mode, trainable);
    const auto it = key.tensors.find("block" + std::to_string(b) + "/W");
    check(it != key.tensors.end(), ErrorKind::Data,
          "encode: key is missing block " + std::to_string(b));
    const int kw = g.leaf(it->second);
    h = layer_norm(g, selu(g, token_wise_linear(g, h, kw)));
  }
  return h;
}

Tensor SyferScheme::encode_images(const Tensor& images, const EncoderKey& key,
                                  Rng&) const {
  auto* self = const_cast<SyferScheme*>(this);
  const int64_t n = images.dim(0);
  const int64_t chunk = 256;
  Tensor out = Tensor::zeros({n, out_tokens(), out_token_dim()});
  for (int64_t lo = 0; lo < n; lo += chunk) {
    const int64_t hi = std::min(n, lo + chunk);
    std::vector<int64_t> idx(hi - lo);
    for (int64_t i = lo; i < hi; ++i) idx[i - lo] = i;
    Tensor part = Tensor::zeros({hi - lo, images.dim(1), images.dim(2)});
    std::copy_n(&images.data[lo * images.dim(1) * images.dim(2)],
                part.numel(), part.data.data());
    Graph g;
    const int z = self->encode_graph(g, part, key, /*training=*/false,
                                     /*trainable=*/false);
    std::copy_n(g.val(z).data.data(), g.val(z).numel(),
                &out.data[lo * out_tokens() * out_token_dim()]);
  }
  return out;
}

ParamRegistry SyferScheme::registry() {
  ParamRegistry reg;
  params_.register_into(reg);
  return reg;
}

void SyferScheme::save(const std::string& path) const {
  TensorStore ts;
  params_.save_into(ts);
  ts.save(path);
}

SyferScheme SyferScheme::load(const std::string& path,
                              const std::string& name) {
  TensorStore ts = TensorStore::load(path);
  check(ts.all_names_under({"scheme/"}), ErrorKind::Format,
        "scheme checkpoint contains non-scheme entries");
  return SyferScheme(ObfuscatorParams::load_from(ts), name);
}

std::unique_ptr<Scheme> make_syfer_random(const SchemeConfig& cfg,
                                          uint64_t seed) {
  return std::make_unique<SyferScheme>(SyferScheme::random_init(cfg, seed));
}

}  // namespace syfer
