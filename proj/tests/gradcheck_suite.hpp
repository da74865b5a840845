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
// Finite-difference oracle for every differentiable primitive, run at f64.
// Each case rebuilds its graph from scratch per evaluation, so training-mode
// batch norm stays pure (fresh running stats each call).

#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "syfer/conv.hpp"
#include "syfer/nn.hpp"
#include "syfer/sau.hpp"

namespace gradcheck {

using syfer::GraphT;
using syfer::ParameterT;
using syfer::Rng;
using syfer::TensorT;
using D = double;
using GraphD = GraphT<double>;
using TensorD = TensorT<double>;
using ParamD = ParameterT<double>;

struct Report {
  int checks = 0;
  int cases = 0;
  double max_rel_err = 0.0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
  std::string summary() const {
    std::ostringstream os;
    os << cases << " cases, " << checks << " coordinate checks, max rel err "
       << max_rel_err;
    if (!failures.empty()) {
      os << "; " << failures.size() << " FAILURES (first: " << failures[0]
         << ")";
    }
    return os.str();
  }
};

// loss = sum(w ⊙ out) for fixed random weights, so every output coordinate
// influences the scalar.
inline int weighted_sum(GraphD& g, int out, const TensorD& w) {
  return syfer::sum_all(g, syfer::mul(g, out, g.leaf(w)));
}

// Check d(loss)/d(probe) for a few coordinates of each probed parameter.
// `loss_fn` must evaluate the loss from the current parameter values;
// `grads_fn` must zero grads, run backward, and leave gradients in place.
inline void probe(Report& rep, const std::string& name,
                  const std::function<double()>& loss_fn,
                  const std::function<void()>& grads_fn,
                  std::vector<ParamD*> probes, Rng& rng, double tol,
                  int coords_per_tensor = 4, double h = 1e-4) {
  rep.cases++;
  grads_fn();
  for (ParamD* p : probes) {
    const int64_t n = p->value.numel();
    for (int c = 0; c < coords_per_tensor; ++c) {
      const int64_t i = static_cast<int64_t>(rng.next_below(n));
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double lp = loss_fn();
      p->value[i] = saved - h;
      const double lm = loss_fn();
      p->value[i] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double analytic = p->gradient[i];
      const double rel = std::fabs(analytic - numeric) /
                         std::max({1e-6, std::fabs(analytic), std::fabs(numeric)});
      rep.checks++;
      rep.max_rel_err = std::max(rep.max_rel_err, rel);
      if (rel > tol) {
        std::ostringstream os;
        os << name << " @" << p->name << "[" << i << "]: analytic " << analytic
           << " vs numeric " << numeric << " (rel " << rel << ")";
        rep.failures.push_back(os.str());
      }
    }
  }
}

// Random tensor bounded away from zero (for kinked nonlinearities).
inline TensorD randn_margin(syfer::Shape s, Rng& rng, double margin) {
  TensorD t = TensorD::randn(std::move(s), rng);
  for (auto& v : t.data) {
    if (std::fabs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
  return t;
}

inline void check_primitives(Report& rep, Rng& rng) {
  const double tol = 1e-4;

  {  // linear
    ParamD x("x", TensorD::randn({3, 4}, rng));
    ParamD W("W", TensorD::randn({4, 5}, rng));
    ParamD b("b", TensorD::randn({5}, rng));
    const TensorD w = TensorD::randn({3, 5}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int y = linear(g, x.bind(g, true), W.bind(g, true), b.bind(g, true));
      const int l = weighted_sum(g, y, w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "linear", [&] { return build(false); },
          [&] { x.zero_grad(); W.zero_grad(); b.zero_grad(); build(true); },
          {&x, &W, &b}, rng, tol);
  }

  {  // selu
    ParamD x("x", randn_margin({11}, rng, 0.05));
    const TensorD w = TensorD::randn({11}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(g, selu(g, x.bind(g, true)), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "selu", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 6);
  }

  {  // leaky_relu
    ParamD x("x", randn_margin({9}, rng, 0.05));
    const TensorD w = TensorD::randn({9}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(g, leaky_relu(g, x.bind(g, true), 0.01), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "leaky_relu", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 5);
  }

  {  // sigmoid (the gate)
    ParamD x("x", TensorD::randn({7}, rng));
    const TensorD w = TensorD::randn({7}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(g, sigmoid(g, x.bind(g, true)), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "sigmoid", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 5);
  }

  {  // layer_norm
    ParamD x("x", TensorD::randn({3, 6}, rng));
    const TensorD w = TensorD::randn({3, 6}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(g, layer_norm(g, x.bind(g, true)), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "layer_norm", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 6);
  }

  {  // batch_norm, training mode (fresh stats per eval keeps it pure)
    ParamD x("x", TensorD::randn({6, 4}, rng));
    ParamD gamma("gamma", TensorD::randn({4}, rng, 0.2));
    ParamD beta("beta", TensorD::randn({4}, rng, 0.2));
    for (auto& v : gamma.value.data) v += 1.0;
    const TensorD w = TensorD::randn({6, 4}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      syfer::BatchNormStateT<double> st(4);
      const int l = weighted_sum(
          g,
          batch_norm(g, x.bind(g, true), gamma.bind(g, true),
                     beta.bind(g, true), &st.run_mean, &st.run_var, syfer::BnMode::Train, -1),
          w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "batch_norm(train)", [&] { return build(false); },
          [&] {
            x.zero_grad();
            gamma.zero_grad();
            beta.zero_grad();
            build(true);
          },
          {&x, &gamma, &beta}, rng, tol, 4);
  }

  {  // batch_norm, eval mode
    ParamD x("x", TensorD::randn({5, 3}, rng));
    ParamD gamma("gamma", TensorD::full({3}, 1.3));
    ParamD beta("beta", TensorD::full({3}, -0.2));
    syfer::BatchNormStateT<double> st(3);
    st.run_mean = TensorD::randn({3}, rng, 0.3);
    st.run_var = TensorD::full({3}, 1.7);
    const TensorD w = TensorD::randn({5, 3}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      auto stc = st;  // eval reads, never writes
      const int l = weighted_sum(
          g,
          batch_norm(g, x.bind(g, true), gamma.bind(g, true),
                     beta.bind(g, true), &stc.run_mean, &stc.run_var, syfer::BnMode::Eval, -1),
          w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "batch_norm(eval)", [&] { return build(false); },
          [&] {
            x.zero_grad();
            gamma.zero_grad();
            beta.zero_grad();
            build(true);
          },
          {&x, &gamma, &beta}, rng, tol, 4);
  }

  {  // softmax
    ParamD x("x", TensorD::randn({3, 5}, rng));
    const TensorD w = TensorD::randn({3, 5}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(g, softmax_last(g, x.bind(g, true)), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "softmax", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 6);
  }

  {  // mhsa on a 2-token, 1-head instance
    const int64_t d = 4;
    ParamD x("x", TensorD::randn({2, 2, d}, rng));
    ParamD Wqkv("Wqkv", TensorD::randn({d, 3 * d}, rng, 0.5));
    ParamD Wattn("Wattn", TensorD::randn({d, d}, rng, 0.5));
    ParamD gamma("gamma", TensorD::full({d}, 1.1));
    ParamD beta("beta", TensorD::full({d}, 0.1));
    const TensorD w = TensorD::randn({2, 2, d}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      syfer::BatchNormStateT<double> st(d);
      const int l = weighted_sum(
          g,
          mhsa(g, x.bind(g, true), 1, Wqkv.bind(g, true), Wattn.bind(g, true),
               gamma.bind(g, true), beta.bind(g, true), &st, syfer::BnMode::Train),
          w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "mhsa", [&] { return build(false); },
          [&] {
            for (auto* p : {&x, &Wqkv, &Wattn, &gamma, &beta}) p->zero_grad();
            build(true);
          },
          {&x, &Wqkv, &Wattn, &gamma, &beta}, rng, tol, 4);
  }

  {  // token_wise_linear (the keyed random layers)
    ParamD x("x", TensorD::randn({2, 3, 4}, rng));
    ParamD W("W", TensorD::randn({3, 4, 5}, rng));
    const TensorD w = TensorD::randn({2, 3, 5}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(
          g, token_wise_linear(g, x.bind(g, true), W.bind(g, true)), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "token_wise_linear", [&] { return build(false); },
          [&] { x.zero_grad(); W.zero_grad(); build(true); }, {&x, &W}, rng,
          tol);
  }

  {  // l2_normalize_rows + matmul_nt (cosine scores)
    ParamD x("x", randn_margin({3, 4}, rng, 0.2));
    ParamD z("z", randn_margin({5, 4}, rng, 0.2));
    const TensorD w = TensorD::randn({3, 5}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int sims = matmul_nt(g, l2_normalize_rows(g, x.bind(g, true)),
                                 l2_normalize_rows(g, z.bind(g, true)));
      const int l = weighted_sum(g, sims, w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "cosine_scores", [&] { return build(false); },
          [&] { x.zero_grad(); z.zero_grad(); build(true); }, {&x, &z}, rng,
          tol);
  }

  {  // reid loss composite: |M| * logsumexp - gathered
    ParamD s("sims", TensorD::randn({3, 3}, rng));
    auto build = [&](bool bw) {
      GraphD g;
      const int sims = s.bind(g, true);
      const int lse = logsumexp_all(g, sims);
      const int got = gather_sum(g, sims, {0, 4, 8});
      const int l = sub(g, scale(g, lse, 3.0), got);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "reid_loss", [&] { return build(false); },
          [&] { s.zero_grad(); build(true); }, {&s}, rng, tol, 6);
  }

  {  // mse
    ParamD x("x", TensorD::randn({2, 6}, rng));
    const TensorD target = TensorD::randn({2, 6}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = mse_loss(g, x.bind(g, true), target);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "mse", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 5);
  }

  {  // cross entropy
    ParamD x("logits", TensorD::randn({4, 3}, rng));
    const std::vector<int32_t> labels = {0, 2, 1, 2};
    auto build = [&](bool bw) {
      GraphD g;
      const int l = cross_entropy(g, x.bind(g, true), labels);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "cross_entropy", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 6);
  }

  {  // embedding + concat_tokens + mean_tokens + positional broadcast
    ParamD x("x", TensorD::randn({2, 3, 4}, rng));
    ParamD table("table", TensorD::randn({3, 4}, rng));
    ParamD pos("pos", TensorD::randn({4, 4}, rng, 0.1));
    const TensorD w = TensorD::randn({2, 4}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int tok =
          reshape(g, embedding(g, table.bind(g, true), {2, 0}), {2, 1, 4});
      int h = concat_tokens(g, x.bind(g, true), tok);
      h = add_rows_broadcast(g, h, pos.bind(g, true));
      const int l = weighted_sum(g, mean_tokens(g, h), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "embed_concat_pool", [&] { return build(false); },
          [&] {
            for (auto* p : {&x, &table, &pos}) p->zero_grad();
            build(true);
          },
          {&x, &table, &pos}, rng, tol);
  }

  {  // conv2d
    ParamD x("x", TensorD::randn({2, 2, 6, 6}, rng));
    ParamD W("W", TensorD::randn({3, 2, 3, 3}, rng, 0.3));
    ParamD b("b", TensorD::randn({3}, rng, 0.1));
    const TensorD w = TensorD::randn({2, 3, 3, 3}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int y =
          conv2d(g, x.bind(g, true), W.bind(g, true), b.bind(g, true), 2, 1);
      const int l = weighted_sum(g, y, w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "conv2d", [&] { return build(false); },
          [&] {
            for (auto* p : {&x, &W, &b}) p->zero_grad();
            build(true);
          },
          {&x, &W, &b}, rng, tol);
  }

  {  // conv_transpose2d
    ParamD x("x", TensorD::randn({2, 3, 3, 3}, rng));
    ParamD W("W", TensorD::randn({3, 2, 3, 3}, rng, 0.3));
    ParamD b("b", TensorD::randn({2}, rng, 0.1));
    const TensorD w = TensorD::randn({2, 2, 6, 6}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int y = conv_transpose2d(g, x.bind(g, true), W.bind(g, true),
                                     b.bind(g, true), 2, 1, 1);
      const int l = weighted_sum(g, y, w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "conv_transpose2d", [&] { return build(false); },
          [&] {
            for (auto* p : {&x, &W, &b}) p->zero_grad();
            build(true);
          },
          {&x, &W, &b}, rng, tol);
  }

  {  // global_avg_pool
    ParamD x("x", TensorD::randn({2, 3, 4, 4}, rng));
    const TensorD w = TensorD::randn({2, 3}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      const int l = weighted_sum(g, global_avg_pool(g, x.bind(g, true)), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "global_avg_pool", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol);
  }

  {  // dropout with a fixed mask stream
    ParamD x("x", TensorD::randn({4, 5}, rng));
    const TensorD w = TensorD::randn({4, 5}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      Rng dr(42);
      const int l =
          weighted_sum(g, dropout(g, x.bind(g, true), 0.3, dr, true), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    probe(rep, "dropout", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, tol, 5);
  }
}

// Full SAU layer and a depth-2 stack (composite tolerance 1e-3).
inline void check_sau(Report& rep, Rng& rng) {
  {
    syfer::SauLayerT<double> layer;
    layer.init("sau", 4, 2, rng);
    ParamD x("x", TensorD::randn({3, 2, 4}, rng));
    const TensorD w = TensorD::randn({3, 2, 4}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      auto st_in = layer.bn_in;  // keep state pure across evals
      auto st_attn = layer.bn_attn;
      layer.bn_in = syfer::BatchNormStateT<double>(4);
      layer.bn_attn = syfer::BatchNormStateT<double>(4);
      const int l =
          weighted_sum(g, layer.forward(g, x.bind(g, true), syfer::BnMode::Train, true), w);
      if (bw) g.backward(l);
      layer.bn_in = st_in;
      layer.bn_attn = st_attn;
      return g.val(l)[0];
    };
    std::vector<ParamD*> probes = {&x,          &layer.W_in,  &layer.b_in,
                                   &layer.W_qkv, &layer.W_attn, &layer.W_o,
                                   &layer.b_o,  &layer.alpha};
    probe(rep, "sau_layer", [&] { return build(false); },
          [&] {
            x.zero_grad();
            syfer::ParamRegistryT<double> reg;
            layer.register_into(reg);
            reg.zero_grad();
            build(true);
          },
          probes, rng, 1e-3, 3);
  }

  {
    syfer::SauStackT<double> stack;
    stack.init("stack", 2, 2, 6, 2, rng);
    ParamD x("x", TensorD::randn({2, 2, 6}, rng));
    const TensorD w = TensorD::randn({2, 2, 6}, rng);
    auto build = [&](bool bw) {
      GraphD g;
      syfer::SauStackT<double> fresh = stack;  // pure state per eval
      const int l =
          weighted_sum(g, fresh.forward(g, x.bind(g, true), syfer::BnMode::Train, false), w);
      if (bw) g.backward(l);
      return g.val(l)[0];
    };
    // x-gradient only: parameters live inside the copied stack
    probe(rep, "sau_stack_depth2", [&] { return build(false); },
          [&] { x.zero_grad(); build(true); }, {&x}, rng, 1e-3, 8);
  }
}

// Randomized shapes across the core primitives; >= `target` coordinate
// checks in total.
inline void check_randomized(Report& rep, Rng& rng, int target_cases) {
  for (int c = 0; c < target_cases; ++c) {
    const int64_t rows = 2 + static_cast<int64_t>(rng.next_below(4));
    const int64_t cols = 2 + static_cast<int64_t>(rng.next_below(5));
    const int op = static_cast<int>(rng.next_below(6));
    switch (op) {
      case 0: {
        ParamD x("x", TensorD::randn({rows, cols}, rng));
        ParamD W("W", TensorD::randn({cols, rows + 1}, rng));
        const TensorD w = TensorD::randn({rows, rows + 1}, rng);
        auto build = [&](bool bw) {
          GraphD g;
          const int l = weighted_sum(g, linear(g, x.bind(g, true), W.bind(g, true)), w);
          if (bw) g.backward(l);
          return g.val(l)[0];
        };
        probe(rep, "rand/linear", [&] { return build(false); },
              [&] { x.zero_grad(); W.zero_grad(); build(true); }, {&x, &W},
              rng, 1e-4, 2);
        break;
      }
      case 1: {
        ParamD x("x", randn_margin({rows * cols}, rng, 0.05));
        const TensorD w = TensorD::randn({rows * cols}, rng);
        auto build = [&](bool bw) {
          GraphD g;
          const int l = weighted_sum(g, selu(g, x.bind(g, true)), w);
          if (bw) g.backward(l);
          return g.val(l)[0];
        };
        probe(rep, "rand/selu", [&] { return build(false); },
              [&] { x.zero_grad(); build(true); }, {&x}, rng, 1e-4, 2);
        break;
      }
      case 2: {
        ParamD x("x", TensorD::randn({rows, cols}, rng));
        const TensorD w = TensorD::randn({rows, cols}, rng);
        auto build = [&](bool bw) {
          GraphD g;
          const int l = weighted_sum(g, softmax_last(g, x.bind(g, true)), w);
          if (bw) g.backward(l);
          return g.val(l)[0];
        };
        probe(rep, "rand/softmax", [&] { return build(false); },
              [&] { x.zero_grad(); build(true); }, {&x}, rng, 1e-4, 2);
        break;
      }
      case 3: {
        ParamD x("x", TensorD::randn({rows, cols}, rng));
        const TensorD w = TensorD::randn({rows, cols}, rng);
        auto build = [&](bool bw) {
          GraphD g;
          const int l = weighted_sum(g, layer_norm(g, x.bind(g, true)), w);
          if (bw) g.backward(l);
          return g.val(l)[0];
        };
        probe(rep, "rand/layer_norm", [&] { return build(false); },
              [&] { x.zero_grad(); build(true); }, {&x}, rng, 1e-4, 2);
        break;
      }
      case 4: {
        ParamD x("x", randn_margin({rows, cols}, rng, 0.2));
        ParamD z("z", randn_margin({rows + 1, cols}, rng, 0.2));
        const TensorD w = TensorD::randn({rows, rows + 1}, rng);
        auto build = [&](bool bw) {
          GraphD g;
          const int sims = matmul_nt(g, l2_normalize_rows(g, x.bind(g, true)),
                                     l2_normalize_rows(g, z.bind(g, true)));
          const int l = weighted_sum(g, sims, w);
          if (bw) g.backward(l);
          return g.val(l)[0];
        };
        probe(rep, "rand/cosine", [&] { return build(false); },
              [&] { x.zero_grad(); z.zero_grad(); build(true); }, {&x, &z},
              rng, 1e-4, 2);
        break;
      }
      default: {
        ParamD x("x", TensorD::randn({2, rows, cols}, rng));
        ParamD W("W", TensorD::randn({rows, cols, cols}, rng));
        const TensorD w = TensorD::randn({2, rows, cols}, rng);
        auto build = [&](bool bw) {
          GraphD g;
          const int l = weighted_sum(
              g, token_wise_linear(g, x.bind(g, true), W.bind(g, true)), w);
          if (bw) g.backward(l);
          return g.val(l)[0];
        };
        probe(rep, "rand/token_wise", [&] { return build(false); },
              [&] { x.zero_grad(); W.zero_grad(); build(true); }, {&x, &W},
              rng, 1e-4, 2);
        break;
      }
    }
  }
}

inline Report run_gradient_suite(uint64_t seed = 20260808,
                                 int randomized_cases = 110) {
  Report rep;
  Rng rng(seed);
  check_primitives(rep, rng);
  check_sau(rep, rng);
  check_randomized(rep, rng, randomized_cases);
  return rep;
}

}  // namespace gradcheck
