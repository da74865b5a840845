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
// Simple Attention Unit: each layer gates between a feed-forward path and
// multi-head self-attention,
//
//   x_norm = BatchNorm(x)
//   h_ffn  = SELU(W_in x_norm + b_in)
//   h_attn = MHSA(x_norm)               (output batch-normalized)
//   h      = sigmoid(alpha) h_attn + (1 - sigmoid(alpha)) h_ffn
//   o      = SELU(W_o h + b_o) + x_norm
//
// with the gate alpha initialized at -2 per layer.

#pragma once

#include <string>
#include <vector>

#include "syfer/nn.hpp"

namespace syfer {

// Scaled dot-product multi-head self-attention over the token axis of
// [n, t, d]; QKV and the output projection are bias-free, and the projected
// output is batch-normalized.
template <typename R>
int mhsa(GraphT<R>& g, int x, int heads, int W_qkv, int W_attn, int bn_gamma,
         int bn_beta, BatchNormStateT<R>* bn_state, BnMode mode) {
  const auto& xv = g.val(x);
  check(xv.rank() == 3, ErrorKind::Dimension, "mhsa: input must be [n,t,d]");
  const int64_t n = xv.dim(0), t = xv.dim(1), d = xv.dim(2);
  check(d % heads == 0, ErrorKind::Config,
        "mhsa: hidden dim not divisible by head count");
  const int64_t dk = d / heads;

  const int qkv = linear(g, x, W_qkv);  // [n, t, 3d]
  auto to_heads = [&](int node) {
    const int r = reshape(g, node, {n, t, static_cast<int64_t>(heads), dk});
    return permute(g, r, {0, 2, 1, 3});  // [n, h, t, dk]
  };
  const int q = to_heads(slice_last(g, qkv, 0, d));
  const int k = to_heads(slice_last(g, qkv, d, d));
  const int v = to_heads(slice_last(g, qkv, 2 * d, d));

  const int scores = scale(g, bmm_nt(g, q, k), 1.0 / std::sqrt(double(dk)));
  const int attn = softmax_last(g, scores);   // [n, h, t, t]
  const int ctx = bmm_nn(g, attn, v);         // [n, h, t, dk]
  const int merged = reshape(g, permute(g, ctx, {0, 2, 1, 3}), {n, t, d});
  const int proj = linear(g, merged, W_attn);
  return batch_norm(g, proj, bn_gamma, bn_beta, &bn_state->run_mean,
                    &bn_state->run_var, mode, /*feature_axis=*/-1);
}

template <typename R>
struct SauLayerT {
  ParameterT<R> W_in, b_in, W_qkv, W_attn, W_o, b_o, alpha;
  ParameterT<R> bn_in_gamma, bn_in_beta, bn_attn_gamma, bn_attn_beta;
  BatchNormStateT<R> bn_in, bn_attn;
  std::string prefix;
  int heads = 4;

  void init(const std::string& name_prefix, int64_t d, int n_heads, Rng& rng) {
    prefix = name_prefix;
    heads = n_heads;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    W_in = {prefix + "/W_in", TensorT<R>::randn({d, d}, rng, sd)};
    b_in = {prefix + "/b_in", TensorT<R>::zeros({d})};
    W_qkv = {prefix + "/W_qkv", TensorT<R>::randn({d, 3 * d}, rng, sd)};
    W_attn = {prefix + "/W_attn", TensorT<R>::randn({d, d}, rng, sd)};
    W_o = {prefix + "/W_o", TensorT<R>::randn({d, d}, rng, sd)};
    b_o = {prefix + "/b_o", TensorT<R>::zeros({d})};
    alpha = {prefix + "/alpha", TensorT<R>::full({1}, R(-2))};
    bn_in_gamma = {prefix + "/bn_in/gamma", TensorT<R>::full({d}, R(1))};
    bn_in_beta = {prefix + "/bn_in/beta", TensorT<R>::zeros({d})};
    bn_attn_gamma = {prefix + "/bn_attn/gamma", TensorT<R>::full({d}, R(1))};
    bn_attn_beta = {prefix + "/bn_attn/beta", TensorT<R>::zeros({d})};
    bn_in = BatchNormStateT<R>(d);
    bn_attn = BatchNormStateT<R>(d);
  }

  void register_into(ParamRegistryT<R>& reg) {
    for (ParameterT<R>* p : {&W_in, &b_in, &W_qkv, &W_attn, &W_o, &b_o, &alpha,
                             &bn_in_gamma, &bn_in_beta, &bn_attn_gamma,
                             &bn_attn_beta}) {
      reg.add(*p);
    }
    reg.add_bn(prefix + "/bn_in", bn_in);
    reg.add_bn(prefix + "/bn_attn", bn_attn);
  }

  int forward(GraphT<R>& g, int x, BnMode mode, bool trainable) {
    const int x_norm = batch_norm(
        g, x, bn_in_gamma.bind(g, trainable), bn_in_beta.bind(g, trainable),
        &bn_in.run_mean, &bn_in.run_var, mode, -1);
    const int h_ffn = selu(
        g, linear(g, x_norm, W_in.bind(g, trainable), b_in.bind(g, trainable)));
    const int h_attn =
        mhsa(g, x_norm, heads, W_qkv.bind(g, trainable),
             W_attn.bind(g, trainable), bn_attn_gamma.bind(g, trainable),
             bn_attn_beta.bind(g, trainable), &bn_attn, mode);
    const int gate = sigmoid(g, alpha.bind(g, trainable));
    const int anti_gate = add_const(g, scale(g, gate, -1.0), 1.0);
    const int h = add(g, smul(g, h_attn, gate), smul(g, h_ffn, anti_gate));
    const int pre =
        selu(g, linear(g, h, W_o.bind(g, trainable), b_o.bind(g, trainable)));
    return add(g, pre, x_norm);
  }
};

// A stack of SAU layers with learned positional embeddings added once at the
// input. Set encoders skip positional embeddings (sets are unordered).
template <typename R>
struct SauStackT {
  ParameterT<R> pos;  // [t, d]; empty when use_pos is false
  std::vector<SauLayerT<R>> layers;
  bool use_pos = true;
  std::string prefix;

  void init(const std::string& name_prefix, int depth, int64_t tokens,
            int64_t d, int heads, Rng& rng, bool with_pos = true) {
    check(depth >= 1, ErrorKind::Config, "sau stack: depth must be >= 1");
    prefix = name_prefix;
    use_pos = with_pos;
    if (use_pos) {
      pos = {prefix + "/pos", TensorT<R>::randn({tokens, d}, rng, 0.02)};
    }
    layers.resize(depth);
    for (int i = 0; i < depth; ++i) {
      layers[i].init(prefix + "/layer" + std::to_string(i), d, heads, rng);
    }
  }

  void register_into(ParamRegistryT<R>& reg) {
    if (use_pos) reg.add(pos);
    for (auto& l : layers) l.register_into(reg);
  }

  int forward(GraphT<R>& g, int x, BnMode mode, bool trainable) {
    int h = x;
    if (use_pos) {
      check(g.val(x).dim(1) == pos.value.dim(0), ErrorKind::Config,
            "sau stack: token count does not match positional embeddings");
      h = add_rows_broadcast(g, h, pos.bind(g, trainable));
    }
    for (auto& l : layers) h = l.forward(g, h, mode, trainable);
    return h;
  }
};

using SauLayer = SauLayerT<float>;
using SauStack = SauStackT<float>;

}  // namespace syfer
