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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "syfer/sau.hpp"

using namespace syfer;

TEST_CASE("gate: fresh layers start at alpha = -2, weight ~ 0.1192") {
  Rng rng(1);
  SauLayer layer;
  layer.init("l", 8, 2, rng);
  CHECK(layer.alpha.value[0] == doctest::Approx(-2.0));
  Graph g;
  const int gate = sigmoid(g, layer.alpha.bind(g, false));
  CHECK(g.val(gate)[0] == doctest::Approx(0.11920292202211755));
}

TEST_CASE("gate limit: alpha -> -inf collapses to the FFN path") {
  Rng rng(2);
  SauLayer a, b;
  a.init("a", 8, 2, rng);
  b = a;
  b.alpha.value[0] = -50.0f;  // sigmoid ~ 2e-22

  // manual FFN-only path with the same parameters
  auto x = Tensor::randn({3, 4, 8}, rng);
  Graph g;
  const int out = b.forward(g, g.leaf(x), syfer::BnMode::Train, false);

  Graph g2;
  auto st = a.bn_in;
  const int xn = batch_norm(g2, g2.leaf(x), a.bn_in_gamma.bind(g2, false),
                            a.bn_in_beta.bind(g2, false), &st.run_mean,
                            &st.run_var, syfer::BnMode::Train, -1);
  const int ffn = selu(g2, linear(g2, xn, a.W_in.bind(g2, false),
                                  a.b_in.bind(g2, false)));
  const int pre = selu(g2, linear(g2, ffn, a.W_o.bind(g2, false),
                                  a.b_o.bind(g2, false)));
  const int ref = add(g2, pre, xn);
  for (int64_t i = 0; i < g.val(out).numel(); ++i) {
    CHECK(g.val(out)[i] == doctest::Approx(g2.val(ref)[i]).epsilon(1e-4));
  }
}

TEST_CASE("residual: with W_o = 0, b_o = 0 the layer reduces to x_norm") {
  Rng rng(3);
  SauLayer layer;
  layer.init("l", 8, 2, rng);
  for (auto& v : layer.W_o.value.data) v = 0.0f;
  for (auto& v : layer.b_o.value.data) v = 0.0f;

  auto x = Tensor::randn({4, 3, 8}, rng);
  Graph g;
  const int out = layer.forward(g, g.leaf(x), syfer::BnMode::Train, false);

  Graph g2;
  auto st = SauLayer();
  st.init("ref", 8, 2, rng);  // unused weights; only bn matters
  BatchNormState bn(8);
  const int ref = batch_norm(g2, g2.leaf(x), st.bn_in_gamma.bind(g2, false),
                             st.bn_in_beta.bind(g2, false), &bn.run_mean,
                             &bn.run_var, syfer::BnMode::Train, -1);
  for (int64_t i = 0; i < g.val(out).numel(); ++i) {
    CHECK(g.val(out)[i] == doctest::Approx(g2.val(ref)[i]).epsilon(1e-4));
  }
}

TEST_CASE("stack: depth 1 equals a single layer applied to x + pos") {
  Rng rng(4);
  SauStack stack;
  stack.init("s", 1, 4, 8, 2, rng);
  auto x = Tensor::randn({2, 4, 8}, rng);

  Graph g;
  SauStack s1 = stack;
  const int out = s1.forward(g, g.leaf(x), syfer::BnMode::Train, false);

  Graph g2;
  SauStack s2 = stack;
  Tensor xp = x;
  for (int64_t n = 0; n < 2; ++n) {
    for (int64_t i = 0; i < 4 * 8; ++i) {
      xp.data[n * 32 + i] += stack.pos.value[i];
    }
  }
  const int ref = s2.layers[0].forward(g2, g2.leaf(xp), syfer::BnMode::Train, false);
  for (int64_t i = 0; i < g.val(out).numel(); ++i) {
    CHECK(g.val(out)[i] == doctest::Approx(g2.val(ref)[i]).epsilon(1e-4));
  }
}

TEST_CASE("stack: token-count mismatch rejected") {
  Rng rng(5);
  SauStack stack;
  stack.init("s", 1, 4, 8, 2, rng);
  Graph g;
  const int x = g.leaf(Tensor::zeros({2, 5, 8}));
  CHECK_THROWS_AS(stack.forward(g, x, syfer::BnMode::Train, false), Error);
}

TEST_CASE("stack without positional embeddings is token-permutation equivariant") {
  Rng rng(6);
  SauStack stack;
  stack.init("s", 2, 0, 8, 2, rng, /*with_pos=*/false);
  auto x = Tensor::randn({1, 5, 8}, rng);
  const int perm[5] = {3, 1, 4, 0, 2};
  Tensor xp = Tensor::zeros({1, 5, 8});
  for (int64_t t = 0; t < 5; ++t) {
    for (int64_t c = 0; c < 8; ++c) xp.data[t * 8 + c] = x.data[perm[t] * 8 + c];
  }
  Graph g, g2;
  SauStack s1 = stack, s2 = stack;
  const int a = s1.forward(g, g.leaf(x), syfer::BnMode::Train, false);
  const int b = s2.forward(g2, g2.leaf(xp), syfer::BnMode::Train, false);
  for (int64_t t = 0; t < 5; ++t) {
    for (int64_t c = 0; c < 8; ++c) {
      CHECK(g2.val(b)[t * 8 + c] ==
            doctest::Approx(g.val(a)[perm[t] * 8 + c]).epsilon(2e-3));
    }
  }
}

TEST_CASE("identical stacks and inputs give identical outputs") {
  Rng rng_a(7), rng_b(7);
  SauStack a, b;
  a.init("s", 2, 4, 8, 2, rng_a);
  b.init("s", 2, 4, 8, 2, rng_b);
  Rng xr(8);
  auto x = Tensor::randn({3, 4, 8}, xr);
  Graph g, g2;
  const int ya = a.forward(g, g.leaf(x), syfer::BnMode::Train, false);
  const int yb = b.forward(g2, g2.leaf(x), syfer::BnMode::Train, false);
  CHECK(g.val(ya).data == g2.val(yb).data);
}
