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
// Direct 2-D convolutions for the autoencoder baseline. Sizes here are tiny
// (<= 64x64, <= 256 channels), so plain loops are adequate.

#pragma once

#include "syfer/graph.hpp"

namespace syfer {

// x[n,ci,h,w] * W[co,ci,kh,kw] + b[co], stride s, zero padding p.
template <typename R>
int conv2d(GraphT<R>& g, int x, int W, int b, int64_t stride, int64_t pad) {
  const auto& xv = g.val(x);
  const auto& Wv = g.val(W);
  check(xv.rank() == 4 && Wv.rank() == 4, ErrorKind::Dimension, "conv2d: rank");
  const int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t co = Wv.dim(0), kh = Wv.dim(2), kw = Wv.dim(3);
  check(Wv.dim(1) == ci, ErrorKind::Dimension, "conv2d: channel mismatch");
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (w + 2 * pad - kw) / stride + 1;
  check(oh >= 1 && ow >= 1, ErrorKind::Dimension, "conv2d: empty output");

  TensorT<R> out = TensorT<R>::zeros({n, co, oh, ow});
  const auto& bv = g.val(b);
  require_shape(bv, {co}, "conv2d bias");
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    for (int64_t in = lo; in < hi; ++in) {
      for (int64_t oc = 0; oc < co; ++oc) {
        R* op_ = out.data.data() + ((in * co + oc) * oh) * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          for (int64_t ox = 0; ox < ow; ++ox) {
            R acc = bv[oc];
            for (int64_t ic = 0; ic < ci; ++ic) {
              const R* xp = xv.data.data() + ((in * ci + ic) * h) * w;
              const R* wp = Wv.data.data() + ((oc * ci + ic) * kh) * kw;
              for (int64_t u = 0; u < kh; ++u) {
                const int64_t iy = oy * stride - pad + u;
                if (iy < 0 || iy >= h) continue;
                for (int64_t v = 0; v < kw; ++v) {
                  const int64_t ix = ox * stride - pad + v;
                  if (ix < 0 || ix >= w) continue;
                  acc += xp[iy * w + ix] * wp[u * kw + v];
                }
              }
            }
            op_[oy * ow + ox] = acc;
          }
        }
      }
    }
  }, 1);

  return g.op(std::move(out), {x, W, b},
              [x, W, b, n, ci, h, w, co, kh, kw, oh, ow, stride,
               pad](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                const auto& xv = g.val(x);
                const auto& Wv = g.val(W);
                const bool nx = g.needs_grad(x);
                const bool nW = g.needs_grad(W);
                const bool nb = g.needs_grad(b);
                auto* dx = nx ? &g.grad(x) : nullptr;
                auto* dW = nW ? &g.grad(W) : nullptr;
                auto* db = nb ? &g.grad(b) : nullptr;
                for (int64_t in = 0; in < n; ++in) {
                  for (int64_t oc = 0; oc < co; ++oc) {
                    const R* dp = d.data.data() + ((in * co + oc) * oh) * ow;
                    for (int64_t oy = 0; oy < oh; ++oy) {
                      for (int64_t ox = 0; ox < ow; ++ox) {
                        const R dv = dp[oy * ow + ox];
                        if (dv == R(0)) continue;
                        if (nb) (*db)[oc] += dv;
                        for (int64_t ic = 0; ic < ci; ++ic) {
                          const int64_t xoff = ((in * ci + ic) * h) * w;
                          const int64_t woff = ((oc * ci + ic) * kh) * kw;
                          for (int64_t u = 0; u < kh; ++u) {
                            const int64_t iy = oy * stride - pad + u;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                              const int64_t ix = ox * stride - pad + v;
                              if (ix < 0 || ix >= w) continue;
                              if (nW) {
                                (*dW)[woff + u * kw + v] +=
                                    dv * xv[xoff + iy * w + ix];
                              }
                              if (nx) {
                                (*dx)[xoff + iy * w + ix] +=
                                    dv * Wv[woff + u * kw + v];
                              }
                            }
                          }
                        }
                      }
                    }
                  }
                }
              });
}

// Adjoint of conv2d: x[n,ci,h,w] * W[ci,co,kh,kw] + b[co]; output size
// (h-1)*stride - 2*pad + kh + out_pad.
template <typename R>
int conv_transpose2d(GraphT<R>& g, int x, int W, int b, int64_t stride,
                     int64_t pad, int64_t out_pad) {
  const auto& xv = g.val(x);
  const auto& Wv = g.val(W);
  check(xv.rank() == 4 && Wv.rank() == 4, ErrorKind::Dimension,
        "conv_transpose2d: rank");
  const int64_t n = xv.dim(0), ci = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t co = Wv.dim(1), kh = Wv.dim(2), kw = Wv.dim(3);
  check(Wv.dim(0) == ci, ErrorKind::Dimension,
        "conv_transpose2d: channel mismatch");
  const int64_t oh = (h - 1) * stride - 2 * pad + kh + out_pad;
  const int64_t ow = (w - 1) * stride - 2 * pad + kw + out_pad;
  check(oh >= 1 && ow >= 1, ErrorKind::Dimension,
        "conv_transpose2d: empty output");

  const auto& bv = g.val(b);
  require_shape(bv, {co}, "conv_transpose2d bias");
  TensorT<R> out = TensorT<R>::zeros({n, co, oh, ow});
  for (auto& v : out.data) v = R(0);
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t oc = 0; oc < co; ++oc) {
      R* op_ = out.data.data() + ((in * co + oc) * oh) * ow;
      for (int64_t i = 0; i < oh * ow; ++i) op_[i] = bv[oc];
    }
    for (int64_t ic = 0; ic < ci; ++ic) {
      const R* xp = xv.data.data() + ((in * ci + ic) * h) * w;
      for (int64_t iy = 0; iy < h; ++iy) {
        for (int64_t ix = 0; ix < w; ++ix) {
          const R xval = xp[iy * w + ix];
          if (xval == R(0)) continue;
          for (int64_t oc = 0; oc < co; ++oc) {
            R* op_ = out.data.data() + ((in * co + oc) * oh) * ow;
            const R* wp = Wv.data.data() + ((ic * co + oc) * kh) * kw;
            for (int64_t u = 0; u < kh; ++u) {
              const int64_t oy = iy * stride - pad + u;
              if (oy < 0 || oy >= oh) continue;
              for (int64_t v = 0; v < kw; ++v) {
                const int64_t ox = ix * stride - pad + v;
                if (ox < 0 || ox >= ow) continue;
                op_[oy * ow + ox] += xval * wp[u * kw + v];
              }
            }
          }
        }
      }
    }
  }

  return g.op(std::move(out), {x, W, b},
              [x, W, b, n, ci, h, w, co, kh, kw, oh, ow, stride,
               pad](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                const auto& xv = g.val(x);
                const auto& Wv = g.val(W);
                const bool nx = g.needs_grad(x);
                const bool nW = g.needs_grad(W);
                const bool nb = g.needs_grad(b);
                auto* dx = nx ? &g.grad(x) : nullptr;
                auto* dW = nW ? &g.grad(W) : nullptr;
                auto* db = nb ? &g.grad(b) : nullptr;
                if (nb) {
                  for (int64_t in = 0; in < n; ++in) {
                    for (int64_t oc = 0; oc < co; ++oc) {
                      const R* dp = d.data.data() + ((in * co + oc) * oh) * ow;
                      for (int64_t i = 0; i < oh * ow; ++i) (*db)[oc] += dp[i];
                    }
                  }
                }
                for (int64_t in = 0; in < n; ++in) {
                  for (int64_t ic = 0; ic < ci; ++ic) {
                    const int64_t xoff = ((in * ci + ic) * h) * w;
                    for (int64_t iy = 0; iy < h; ++iy) {
                      for (int64_t ix = 0; ix < w; ++ix) {
                        for (int64_t oc = 0; oc < co; ++oc) {
                          const R* dp =
                              d.data.data() + ((in * co + oc) * oh) * ow;
                          const int64_t woff = ((ic * co + oc) * kh) * kw;
                          R acc_dx = 0;
                          for (int64_t u = 0; u < kh; ++u) {
                            const int64_t oy = iy * stride - pad + u;
                            if (oy < 0 || oy >= oh) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                              const int64_t ox = ix * stride - pad + v;
                              if (ox < 0 || ox >= ow) continue;
                              const R dv = dp[oy * ow + ox];
                              acc_dx += dv * Wv[woff + u * kw + v];
                              if (nW) {
                                (*dW)[woff + u * kw + v] +=
                                    dv * xv[xoff + iy * w + ix];
                              }
                            }
                          }
                          if (nx) (*dx)[xoff + iy * w + ix] += acc_dx;
                        }
                      }
                    }
                  }
                }
              });
}

// [n,c,h,w] -> [n,c] mean over the spatial axes.
template <typename R>
int global_avg_pool(GraphT<R>& g, int x) {
  const auto& xv = g.val(x);
  check(xv.rank() == 4, ErrorKind::Dimension, "global_avg_pool: rank");
  const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  TensorT<R> out = TensorT<R>::zeros({n, c});
  for (int64_t i = 0; i < n * c; ++i) {
    const R* p = xv.data.data() + i * hw;
    R s = 0;
    for (int64_t k = 0; k < hw; ++k) s += p[k];
    out[i] = s / static_cast<R>(hw);
  }
  return g.op(std::move(out), {x}, [x, n, c, hw](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    auto& dx = g.grad(x);
    for (int64_t i = 0; i < n * c; ++i) {
      const R dv = d[i] / static_cast<R>(hw);
      R* p = dx.data.data() + i * hw;
      for (int64_t k = 0; k < hw; ++k) p[k] += dv;
    }
  });
}

}  // namespace syfer
