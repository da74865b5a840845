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
// Reverse-mode tape over dense tensors. One graph per forward pass; ops
// append nodes, backward() walks the tape in reverse. Gradients for nodes
// registered with a sink are accumulated into the caller's tensor (the
// Parameter::gradient of the surrounding module).

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "syfer/gemm.hpp"
#include "syfer/rng.hpp"
#include "syfer/tensor.hpp"

namespace syfer {

template <typename R>
class GraphT {
 public:
  using BackFn = std::function<void(GraphT&, int)>;

  int leaf(TensorT<R> v, bool needs_grad = false) {
    nodes_.push_back(Node{std::move(v), {}, needs_grad, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Leaf whose gradient is flushed into *sink after backward().
  int leaf_with_sink(TensorT<R> v, TensorT<R>* sink, bool trainable = true) {
    const int id = leaf(std::move(v), trainable);
    if (trainable && sink) sinks_.emplace_back(id, sink);
    return id;
  }

  int op(TensorT<R> v, std::vector<int> parents, BackFn back) {
    bool needs = false;
    for (int p : parents) needs = needs || nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(v), {}, needs, needs ? std::move(back) : nullptr});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const TensorT<R>& val(int id) const { return nodes_[id].val; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  TensorT<R>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = TensorT<R>::zeros(n.val.shape);
    return n.grad;
  }
  bool has_grad(int id) const { return !nodes_[id].grad.data.empty(); }

  void backward(int loss) {
    check(nodes_[loss].val.numel() == 1, ErrorKind::Dimension,
          "backward: loss must be scalar");
    grad(loss)[0] = R(1);
    for (int id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.data.empty() || !n.back) continue;
      n.back(*this, id);
    }
    for (auto& [id, sink] : sinks_) {
      if (nodes_[id].grad.data.empty()) continue;
      const auto& g = nodes_[id].grad.data;
      check(sink->data.size() == g.size(), ErrorKind::Dimension,
            "gradient sink shape mismatch");
      for (size_t i = 0; i < g.size(); ++i) sink->data[i] += g[i];
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    TensorT<R> val;
    TensorT<R> grad;
    bool needs_grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, TensorT<R>*>> sinks_;
};

using Graph = GraphT<float>;

// ---------------------------------------------------------------------------
// Elementwise and scalar ops

template <typename R>
int add(GraphT<R>& g, int a, int b) {
  const auto& x = g.val(a);
  const auto& y = g.val(b);
  require_shape(y, x.shape, "add");
  TensorT<R> out = x;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] += y[i];
  return g.op(std::move(out), {a, b}, [a, b](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    if (g.needs_grad(a)) {
      auto& da = g.grad(a);
      for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i];
    }
    if (g.needs_grad(b)) {
      auto& db = g.grad(b);
      for (int64_t i = 0; i < d.numel(); ++i) db[i] += d[i];
    }
  });
}

template <typename R>
int sub(GraphT<R>& g, int a, int b) {
  const auto& x = g.val(a);
  const auto& y = g.val(b);
  require_shape(y, x.shape, "sub");
  TensorT<R> out = x;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] -= y[i];
  return g.op(std::move(out), {a, b}, [a, b](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    if (g.needs_grad(a)) {
      auto& da = g.grad(a);
      for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i];
    }
    if (g.needs_grad(b)) {
      auto& db = g.grad(b);
      for (int64_t i = 0; i < d.numel(); ++i) db[i] -= d[i];
    }
  });
}

template <typename R>
int mul(GraphT<R>& g, int a, int b) {
  const auto& x = g.val(a);
  const auto& y = g.val(b);
  require_shape(y, x.shape, "mul");
  TensorT<R> out = x;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] *= y[i];
  return g.op(std::move(out), {a, b}, [a, b](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& x = g.val(a);
    const auto& y = g.val(b);
    if (g.needs_grad(a)) {
      auto& da = g.grad(a);
      for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i] * y[i];
    }
    if (g.needs_grad(b)) {
      auto& db = g.grad(b);
      for (int64_t i = 0; i < d.numel(); ++i) db[i] += d[i] * x[i];
    }
  });
}

template <typename R>
int scale(GraphT<R>& g, int a, double c) {
  TensorT<R> out = g.val(a);
  for (auto& v : out.data) v *= static_cast<R>(c);
  return g.op(std::move(out), {a}, [a, c](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i] * static_cast<R>(c);
  });
}

template <typename R>
int add_const(GraphT<R>& g, int a, double c) {
  TensorT<R> out = g.val(a);
  for (auto& v : out.data) v += static_cast<R>(c);
  return g.op(std::move(out), {a}, [a](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i];
  });
}

// y = s * x where s is a scalar node (the SAU gate path).
template <typename R>
int smul(GraphT<R>& g, int x, int s) {
  check(g.val(s).numel() == 1, ErrorKind::Dimension, "smul: s must be scalar");
  const R sv = g.val(s)[0];
  TensorT<R> out = g.val(x);
  for (auto& v : out.data) v *= sv;
  return g.op(std::move(out), {x, s}, [x, s](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& xv = g.val(x);
    const R sv = g.val(s)[0];
    if (g.needs_grad(x)) {
      auto& dx = g.grad(x);
      for (int64_t i = 0; i < d.numel(); ++i) dx[i] += d[i] * sv;
    }
    if (g.needs_grad(s)) {
      R acc = 0;
      for (int64_t i = 0; i < d.numel(); ++i) acc += d[i] * xv[i];
      g.grad(s)[0] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

namespace selu_k {
constexpr double lambda = 1.0507009873554804934193349852946;
constexpr double alpha = 1.6732632423543772848170429916717;
}  // namespace selu_k

template <typename R>
int selu(GraphT<R>& g, int a) {
  const R lam = static_cast<R>(selu_k::lambda);
  const R al = static_cast<R>(selu_k::alpha);
  TensorT<R> out = g.val(a);
  for (auto& v : out.data) {
    v = v > R(0) ? lam * v : lam * al * (std::exp(v) - R(1));
  }
  return g.op(std::move(out), {a}, [a, lam, al](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& x = g.val(a);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) {
      const R slope = x[i] > R(0) ? lam : lam * al * std::exp(x[i]);
      da[i] += d[i] * slope;
    }
  });
}

template <typename R>
int leaky_relu(GraphT<R>& g, int a, double slope) {
  const R s = static_cast<R>(slope);
  TensorT<R> out = g.val(a);
  for (auto& v : out.data) v = v > R(0) ? v : s * v;
  return g.op(std::move(out), {a}, [a, s](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& x = g.val(a);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) {
      da[i] += d[i] * (x[i] > R(0) ? R(1) : s);
    }
  });
}

template <typename R>
int sigmoid(GraphT<R>& g, int a) {
  TensorT<R> out = g.val(a);
  for (auto& v : out.data) v = R(1) / (R(1) + std::exp(-v));
  return g.op(std::move(out), {a}, [a](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& y = g.val(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) {
      da[i] += d[i] * y[i] * (R(1) - y[i]);
    }
  });
}

template <typename R>
int clamp01(GraphT<R>& g, int a) {
  TensorT<R> out = g.val(a);
  for (auto& v : out.data) v = v < R(0) ? R(0) : (v > R(1) ? R(1) : v);
  return g.op(std::move(out), {a}, [a](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& x = g.val(a);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) {
      if (x[i] > R(0) && x[i] < R(1)) da[i] += d[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Matrix products

// x[..., K] * W[K, N] (+ b[N]); leading axes flattened to rows.
template <typename R>
int linear(GraphT<R>& g, int x, int W, int b = -1) {
  const auto& xv = g.val(x);
  const auto& Wv = g.val(W);
  check(Wv.rank() == 2, ErrorKind::Dimension, "linear: W must be rank 2");
  const int64_t K = Wv.dim(0), N = Wv.dim(1);
  check(xv.rank() >= 1 && xv.shape.back() == K, ErrorKind::Dimension,
        "linear: inner dims do not conform: x " + shape_str(xv.shape) +
            " vs W " + shape_str(Wv.shape));
  const int64_t M = xv.numel() / K;
  Shape out_shape = xv.shape;
  out_shape.back() = N;
  TensorT<R> out = TensorT<R>::zeros(out_shape);
  gemm_nn(M, N, K, xv.data.data(), Wv.data.data(), out.data.data());
  if (b >= 0) {
    const auto& bv = g.val(b);
    require_shape(bv, {N}, "linear bias");
    for (int64_t i = 0; i < M; ++i) {
      R* row = out.data.data() + i * N;
      for (int64_t j = 0; j < N; ++j) row[j] += bv[j];
    }
  }
  std::vector<int> parents = {x, W};
  if (b >= 0) parents.push_back(b);
  return g.op(std::move(out), std::move(parents),
              [x, W, b, M, N, K](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                if (g.needs_grad(x)) {
                  gemm_nt(M, K, N, d.data.data(), g.val(W).data.data(),
                          g.grad(x).data.data());
                }
                if (g.needs_grad(W)) {
                  gemm_tn(K, N, M, g.val(x).data.data(), d.data.data(),
                          g.grad(W).data.data());
                }
                if (b >= 0 && g.needs_grad(b)) {
                  auto& db = g.grad(b);
                  for (int64_t i = 0; i < M; ++i) {
                    const R* row = d.data.data() + i * N;
                    for (int64_t j = 0; j < N; ++j) db[j] += row[j];
                  }
                }
              });
}

// A[n, k] * B[m, k]^T -> [n, m]
template <typename R>
int matmul_nt(GraphT<R>& g, int a, int b) {
  const auto& A = g.val(a);
  const auto& B = g.val(b);
  check(A.rank() == 2 && B.rank() == 2 && A.dim(1) == B.dim(1),
        ErrorKind::Dimension, "matmul_nt: shapes do not conform");
  const int64_t n = A.dim(0), m = B.dim(0), k = A.dim(1);
  TensorT<R> out = TensorT<R>::zeros({n, m});
  gemm_nt(n, m, k, A.data.data(), B.data.data(), out.data.data());
  return g.op(std::move(out), {a, b}, [a, b, n, m, k](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    if (g.needs_grad(a)) {
      gemm_nn(n, k, m, d.data.data(), g.val(b).data.data(),
              g.grad(a).data.data());
    }
    if (g.needs_grad(b)) {
      gemm_tn(m, k, n, d.data.data(), g.val(a).data.data(),
              g.grad(b).data.data());
    }
  });
}

// Batched matmul over matching leading axes: A[..., t, k] * B[..., k, u].
template <typename R>
int bmm_nn(GraphT<R>& g, int a, int b) {
  const auto& A = g.val(a);
  const auto& B = g.val(b);
  check(A.rank() >= 2 && A.rank() == B.rank(), ErrorKind::Dimension,
        "bmm_nn: rank mismatch");
  const size_t r = A.rank();
  for (size_t i = 0; i + 2 < r; ++i) {
    check(A.shape[i] == B.shape[i], ErrorKind::Dimension, "bmm_nn: batch dims");
  }
  const int64_t t = A.shape[r - 2], k = A.shape[r - 1], u = B.shape[r - 1];
  check(B.shape[r - 2] == k, ErrorKind::Dimension, "bmm_nn: inner dim");
  const int64_t batch = A.numel() / (t * k);
  Shape out_shape(A.shape.begin(), A.shape.end() - 1);
  out_shape.back() = t;
  out_shape.push_back(u);
  TensorT<R> out = TensorT<R>::zeros(out_shape);
  for (int64_t s = 0; s < batch; ++s) {
    gemm_nn(t, u, k, A.data.data() + s * t * k, B.data.data() + s * k * u,
            out.data.data() + s * t * u);
  }
  return g.op(std::move(out), {a, b},
              [a, b, t, k, u, batch](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                if (g.needs_grad(a)) {
                  auto& da = g.grad(a);
                  for (int64_t s = 0; s < batch; ++s) {
                    gemm_nt(t, k, u, d.data.data() + s * t * u,
                            g.val(b).data.data() + s * k * u,
                            da.data.data() + s * t * k);
                  }
                }
                if (g.needs_grad(b)) {
                  auto& db = g.grad(b);
                  for (int64_t s = 0; s < batch; ++s) {
                    gemm_tn(k, u, t, g.val(a).data.data() + s * t * k,
                            d.data.data() + s * t * u,
                            db.data.data() + s * k * u);
                  }
                }
              });
}

// Batched A[..., t, k] * B[..., u, k]^T -> [..., t, u] (attention scores).
template <typename R>
int bmm_nt(GraphT<R>& g, int a, int b) {
  const auto& A = g.val(a);
  const auto& B = g.val(b);
  check(A.rank() >= 2 && A.rank() == B.rank(), ErrorKind::Dimension,
        "bmm_nt: rank mismatch");
  const size_t r = A.rank();
  const int64_t t = A.shape[r - 2], k = A.shape[r - 1], u = B.shape[r - 2];
  check(B.shape[r - 1] == k, ErrorKind::Dimension, "bmm_nt: inner dim");
  const int64_t batch = A.numel() / (t * k);
  Shape out_shape(A.shape.begin(), A.shape.end() - 1);
  out_shape.back() = t;
  out_shape.push_back(u);
  TensorT<R> out = TensorT<R>::zeros(out_shape);
  for (int64_t s = 0; s < batch; ++s) {
    gemm_nt(t, u, k, A.data.data() + s * t * k, B.data.data() + s * u * k,
            out.data.data() + s * t * u);
  }
  return g.op(std::move(out), {a, b},
              [a, b, t, k, u, batch](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                if (g.needs_grad(a)) {
                  auto& da = g.grad(a);
                  for (int64_t s = 0; s < batch; ++s) {
                    gemm_nn(t, k, u, d.data.data() + s * t * u,
                            g.val(b).data.data() + s * u * k,
                            da.data.data() + s * t * k);
                  }
                }
                if (g.needs_grad(b)) {
                  auto& db = g.grad(b);
                  for (int64_t s = 0; s < batch; ++s) {
                    gemm_tn(u, k, t, d.data.data() + s * t * u,
                            g.val(a).data.data() + s * t * k,
                            db.data.data() + s * u * k);
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename R>
int reshape(GraphT<R>& g, int a, Shape s) {
  TensorT<R> out = g.val(a).reshaped(std::move(s));
  return g.op(std::move(out), {a}, [a](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i];
  });
}

namespace detail {
inline std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}
}  // namespace detail

namespace detail {

// Walk the output of a permutation in order, maintaining the source index
// incrementally (odometer carry instead of per-element div/mod).
template <typename R, typename Fn>
void permute_walk(const Shape& out_shape, const std::vector<int64_t>& in_st,
                  const std::vector<int>& axes, int64_t n, Fn&& emit) {
  const size_t r = out_shape.size();
  std::vector<int64_t> counter(r, 0);
  int64_t src = 0;
  for (int64_t idx = 0; idx < n; ++idx) {
    emit(idx, src);
    for (size_t i = r; i-- > 0;) {
      ++counter[i];
      src += in_st[axes[i]];
      if (counter[i] < out_shape[i]) break;
      src -= counter[i] * in_st[axes[i]];
      counter[i] = 0;
    }
  }
}

}  // namespace detail

template <typename R>
int permute(GraphT<R>& g, int a, std::vector<int> axes) {
  const auto& x = g.val(a);
  check(axes.size() == x.rank(), ErrorKind::Dimension, "permute: axis count");
  Shape out_shape(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) out_shape[i] = x.shape[axes[i]];
  TensorT<R> out = TensorT<R>::zeros(out_shape);
  const auto in_st = detail::strides_of(x.shape);
  const int64_t n = x.numel();
  detail::permute_walk<R>(out_shape, in_st, axes, n,
                          [&](int64_t idx, int64_t src) { out[idx] = x[src]; });
  return g.op(std::move(out), {a},
              [a, axes, in_st, out_shape, n](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                auto& da = g.grad(a);
                detail::permute_walk<R>(
                    out_shape, in_st, axes, n,
                    [&](int64_t idx, int64_t src) { da[src] += d[idx]; });
              });
}

// Slice along the last axis: out[..., 0:len] = x[..., off:off+len].
template <typename R>
int slice_last(GraphT<R>& g, int a, int64_t off, int64_t len) {
  const auto& x = g.val(a);
  const int64_t D = x.shape.back();
  check(off >= 0 && off + len <= D, ErrorKind::Dimension, "slice_last: range");
  const int64_t rows = x.numel() / D;
  Shape out_shape = x.shape;
  out_shape.back() = len;
  TensorT<R> out = TensorT<R>::zeros(out_shape);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < len; ++j) out[i * len + j] = x[i * D + off + j];
  }
  return g.op(std::move(out), {a}, [a, off, len, D, rows](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < rows; ++i) {
      for (int64_t j = 0; j < len; ++j) da[i * D + off + j] += d[i * len + j];
    }
  });
}

// Concatenate two token grids along axis 1: [n,t1,d] + [n,t2,d].
template <typename R>
int concat_tokens(GraphT<R>& g, int a, int b) {
  const auto& x = g.val(a);
  const auto& y = g.val(b);
  check(x.rank() == 3 && y.rank() == 3 && x.dim(0) == y.dim(0) &&
            x.dim(2) == y.dim(2),
        ErrorKind::Dimension, "concat_tokens: shapes do not conform");
  const int64_t n = x.dim(0), t1 = x.dim(1), t2 = y.dim(1), d = x.dim(2);
  TensorT<R> out = TensorT<R>::zeros({n, t1 + t2, d});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(&x.data[i * t1 * d], t1 * d, &out.data[i * (t1 + t2) * d]);
    std::copy_n(&y.data[i * t2 * d], t2 * d,
                &out.data[i * (t1 + t2) * d + t1 * d]);
  }
  return g.op(std::move(out), {a, b},
              [a, b, n, t1, t2, d](GraphT<R>& g, int id) {
                const auto& dd = g.grad(id);
                if (g.needs_grad(a)) {
                  auto& da = g.grad(a);
                  for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < t1 * d; ++j) {
                      da[i * t1 * d + j] += dd[i * (t1 + t2) * d + j];
                    }
                  }
                }
                if (g.needs_grad(b)) {
                  auto& db = g.grad(b);
                  for (int64_t i = 0; i < n; ++i) {
                    for (int64_t j = 0; j < t2 * d; ++j) {
                      db[i * t2 * d + j] += dd[i * (t1 + t2) * d + t1 * d + j];
                    }
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Reductions and normalizers

template <typename R>
int sum_all(GraphT<R>& g, int a) {
  R acc = 0;
  for (R v : g.val(a).data) acc += v;
  return g.op(TensorT<R>::scalar(acc), {a}, [a](GraphT<R>& g, int id) {
    const R d = g.grad(id)[0];
    auto& da = g.grad(a);
    for (auto& v : da.data) v += d;
  });
}

template <typename R>
int mean_all(GraphT<R>& g, int a) {
  const int64_t n = g.val(a).numel();
  return scale(g, sum_all(g, a), 1.0 / static_cast<double>(n));
}

// Mean over axis 1 of [n, t, d] -> [n, d] (token pooling).
template <typename R>
int mean_tokens(GraphT<R>& g, int a) {
  const auto& x = g.val(a);
  check(x.rank() == 3, ErrorKind::Dimension, "mean_tokens: need rank 3");
  const int64_t n = x.dim(0), t = x.dim(1), d = x.dim(2);
  TensorT<R> out = TensorT<R>::zeros({n, d});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < t; ++j) {
      for (int64_t c = 0; c < d; ++c) out[i * d + c] += x[(i * t + j) * d + c];
    }
  }
  for (auto& v : out.data) v /= static_cast<R>(t);
  return g.op(std::move(out), {a}, [a, n, t, d](GraphT<R>& g, int id) {
    const auto& dd = g.grad(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < t; ++j) {
        for (int64_t c = 0; c < d; ++c) {
          da[(i * t + j) * d + c] += dd[i * d + c] / static_cast<R>(t);
        }
      }
    }
  });
}

// Broadcast-add a [t, d] table over the batch axis of [n, t, d].
template <typename R>
int add_rows_broadcast(GraphT<R>& g, int x, int table) {
  const auto& xv = g.val(x);
  const auto& tv = g.val(table);
  check(xv.rank() == 3 && tv.rank() == 2 && xv.dim(1) == tv.dim(0) &&
            xv.dim(2) == tv.dim(1),
        ErrorKind::Dimension, "add_rows_broadcast: shapes do not conform");
  const int64_t n = xv.dim(0), td = tv.numel();
  TensorT<R> out = xv;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < td; ++j) out[i * td + j] += tv[j];
  }
  return g.op(std::move(out), {x, table}, [x, table, n, td](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    if (g.needs_grad(x)) {
      auto& dx = g.grad(x);
      for (int64_t i = 0; i < d.numel(); ++i) dx[i] += d[i];
    }
    if (g.needs_grad(table)) {
      auto& dt = g.grad(table);
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < td; ++j) dt[j] += d[i * td + j];
      }
    }
  });
}

template <typename R>
int softmax_last(GraphT<R>& g, int a) {
  const auto& x = g.val(a);
  const int64_t D = x.shape.back();
  check(D >= 1, ErrorKind::Dimension, "softmax: empty axis");
  const int64_t rows = x.numel() / D;
  TensorT<R> out = x;
  for (int64_t i = 0; i < rows; ++i) {
    R* row = out.data.data() + i * D;
    R mx = row[0];
    for (int64_t j = 1; j < D; ++j) mx = std::max(mx, row[j]);
    R s = 0;
    for (int64_t j = 0; j < D; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    for (int64_t j = 0; j < D; ++j) row[j] /= s;
  }
  return g.op(std::move(out), {a}, [a, rows, D](GraphT<R>& g, int id) {
    const auto& d = g.grad(id);
    const auto& y = g.val(id);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < rows; ++i) {
      const R* yr = y.data.data() + i * D;
      const R* dr = d.data.data() + i * D;
      R dot = 0;
      for (int64_t j = 0; j < D; ++j) dot += yr[j] * dr[j];
      for (int64_t j = 0; j < D; ++j) {
        da[i * D + j] += yr[j] * (dr[j] - dot);
      }
    }
  });
}

// Per-row zero mean / unit variance over the last axis; identity affine.
template <typename R>
int layer_norm(GraphT<R>& g, int a, double eps = 1e-5) {
  const auto& x = g.val(a);
  const int64_t D = x.shape.back();
  check(D >= 1, ErrorKind::Dimension, "layer_norm: empty axis");
  const int64_t rows = x.numel() / D;
  TensorT<R> out = TensorT<R>::zeros(x.shape);
  std::vector<R> inv_sd(rows);
  for (int64_t i = 0; i < rows; ++i) {
    const R* row = x.data.data() + i * D;
    R mu = 0;
    for (int64_t j = 0; j < D; ++j) mu += row[j];
    mu /= static_cast<R>(D);
    R var = 0;
    for (int64_t j = 0; j < D; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<R>(D);
    const R isd = R(1) / std::sqrt(var + static_cast<R>(eps));
    inv_sd[i] = isd;
    for (int64_t j = 0; j < D; ++j) out[i * D + j] = (row[j] - mu) * isd;
  }
  return g.op(std::move(out), {a},
              [a, rows, D, inv_sd = std::move(inv_sd)](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                const auto& y = g.val(id);
                auto& da = g.grad(a);
                for (int64_t i = 0; i < rows; ++i) {
                  const R* yr = y.data.data() + i * D;
                  const R* dr = d.data.data() + i * D;
                  R mean_d = 0, mean_dy = 0;
                  for (int64_t j = 0; j < D; ++j) {
                    mean_d += dr[j];
                    mean_dy += dr[j] * yr[j];
                  }
                  mean_d /= static_cast<R>(D);
                  mean_dy /= static_cast<R>(D);
                  for (int64_t j = 0; j < D; ++j) {
                    da[i * D + j] +=
                        inv_sd[i] * (dr[j] - mean_d - yr[j] * mean_dy);
                  }
                }
              });
}

// Normalization mode for batch_norm and everything built on it. `Stats`
// normalizes by the current batch statistics like training mode but leaves
// the running state untouched; the attacker's evaluation path uses it to
// normalize over the candidate set it attacks.
enum class BnMode { Train, Eval, Stats };

// Batch normalization with learned affine. Features along `feature_axis`
// (last axis for token grids, axis 1 for conv maps); statistics are taken
// over every other axis. Train mode updates *run_mean / *run_var with
// momentum; Train and Stats need at least 2 statistics rows.
template <typename R>
int batch_norm(GraphT<R>& g, int x, int gamma, int beta, TensorT<R>* run_mean,
               TensorT<R>* run_var, BnMode mode, int feature_axis,
               double momentum = 0.1, double eps = 1e-5) {
  const bool training = mode != BnMode::Eval;
  const auto& xv = g.val(x);
  const size_t r = xv.rank();
  if (feature_axis < 0) feature_axis += static_cast<int>(r);
  const int64_t C = xv.shape[feature_axis];
  require_shape(g.val(gamma), {C}, "batch_norm gamma");
  require_shape(g.val(beta), {C}, "batch_norm beta");
  require_shape(*run_mean, {C}, "batch_norm running mean");
  require_shape(*run_var, {C}, "batch_norm running var");
  const int64_t B = xv.numel() / C;  // rows of statistics per feature
  check(!training || B >= 2, ErrorKind::Insufficient,
        "batch_norm: degenerate batch (need >= 2 rows in training mode)");

  // inner = product of dims after the feature axis, so the flat index is
  // (outer * C + c) * inner + k.
  int64_t inner = 1;
  for (size_t i = feature_axis + 1; i < r; ++i) inner *= xv.shape[i];
  const int64_t outer = xv.numel() / (C * inner);

  std::vector<R> mu(C, R(0)), var(C, R(0));
  if (training) {
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t c = 0; c < C; ++c) {
        const R* p = xv.data.data() + (o * C + c) * inner;
        R s = 0;
        for (int64_t k = 0; k < inner; ++k) s += p[k];
        mu[c] += s;
      }
    }
    for (int64_t c = 0; c < C; ++c) mu[c] /= static_cast<R>(B);
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t c = 0; c < C; ++c) {
        const R* p = xv.data.data() + (o * C + c) * inner;
        R s = 0;
        for (int64_t k = 0; k < inner; ++k) {
          const R dlt = p[k] - mu[c];
          s += dlt * dlt;
        }
        var[c] += s;
      }
    }
    for (int64_t c = 0; c < C; ++c) var[c] /= static_cast<R>(B);
    if (mode == BnMode::Train) {
      for (int64_t c = 0; c < C; ++c) {
        (*run_mean)[c] = static_cast<R>((1.0 - momentum) * (*run_mean)[c] +
                                        momentum * mu[c]);
        (*run_var)[c] = static_cast<R>((1.0 - momentum) * (*run_var)[c] +
                                       momentum * var[c]);
      }
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mu[c] = (*run_mean)[c];
      var[c] = (*run_var)[c];
    }
  }

  std::vector<R> inv_sd(C);
  for (int64_t c = 0; c < C; ++c) {
    inv_sd[c] = R(1) / std::sqrt(var[c] + static_cast<R>(eps));
  }
  const auto& gv = g.val(gamma);
  const auto& bv = g.val(beta);
  TensorT<R> out = TensorT<R>::zeros(xv.shape);
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t c = 0; c < C; ++c) {
      const R* p = xv.data.data() + (o * C + c) * inner;
      R* q = out.data.data() + (o * C + c) * inner;
      for (int64_t k = 0; k < inner; ++k) {
        q[k] = gv[c] * (p[k] - mu[c]) * inv_sd[c] + bv[c];
      }
    }
  }

  return g.op(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, training, C, B, inner, outer, mu = std::move(mu),
       inv_sd = std::move(inv_sd)](GraphT<R>& g, int id) {
        const auto& d = g.grad(id);
        const auto& xv = g.val(x);
        const auto& gv = g.val(gamma);
        // xhat and the per-feature sums
        std::vector<R> sum_d(C, R(0)), sum_dxh(C, R(0));
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t c = 0; c < C; ++c) {
            const R* pd = d.data.data() + (o * C + c) * inner;
            const R* px = xv.data.data() + (o * C + c) * inner;
            R sd = 0, sdx = 0;
            for (int64_t k = 0; k < inner; ++k) {
              sd += pd[k];
              sdx += pd[k] * (px[k] - mu[c]) * inv_sd[c];
            }
            sum_d[c] += sd;
            sum_dxh[c] += sdx;
          }
        }
        if (g.needs_grad(gamma)) {
          auto& dg = g.grad(gamma);
          for (int64_t c = 0; c < C; ++c) dg[c] += sum_dxh[c];
        }
        if (g.needs_grad(beta)) {
          auto& db = g.grad(beta);
          for (int64_t c = 0; c < C; ++c) db[c] += sum_d[c];
        }
        if (g.needs_grad(x)) {
          auto& dx = g.grad(x);
          for (int64_t o = 0; o < outer; ++o) {
            for (int64_t c = 0; c < C; ++c) {
              const R* pd = d.data.data() + (o * C + c) * inner;
              const R* px = xv.data.data() + (o * C + c) * inner;
              R* pdx = dx.data.data() + (o * C + c) * inner;
              if (training) {
                for (int64_t k = 0; k < inner; ++k) {
                  const R xh = (px[k] - mu[c]) * inv_sd[c];
                  pdx[k] += gv[c] * inv_sd[c] *
                            (pd[k] - sum_d[c] / static_cast<R>(B) -
                             xh * sum_dxh[c] / static_cast<R>(B));
                }
              } else {
                for (int64_t k = 0; k < inner; ++k) {
                  pdx[k] += gv[c] * inv_sd[c] * pd[k];
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses and misc

// Mean squared error against a constant target.
template <typename R>
int mse_loss(GraphT<R>& g, int pred, const TensorT<R>& target) {
  const auto& p = g.val(pred);
  require_shape(target, p.shape, "mse target");
  const int64_t n = p.numel();
  R acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    const R dlt = p[i] - target[i];
    acc += dlt * dlt;
  }
  acc /= static_cast<R>(n);
  return g.op(TensorT<R>::scalar(acc), {pred},
              [pred, target, n](GraphT<R>& g, int id) {
                const R d = g.grad(id)[0];
                const auto& p = g.val(pred);
                auto& dp = g.grad(pred);
                for (int64_t i = 0; i < n; ++i) {
                  dp[i] += d * R(2) * (p[i] - target[i]) / static_cast<R>(n);
                }
              });
}

// Mean softmax cross-entropy for integer class ids (0-based here).
template <typename R>
int cross_entropy(GraphT<R>& g, int logits, std::vector<int32_t> labels) {
  const auto& L = g.val(logits);
  check(L.rank() == 2, ErrorKind::Dimension, "cross_entropy: logits rank");
  const int64_t n = L.dim(0), k = L.dim(1);
  check(static_cast<int64_t>(labels.size()) == n, ErrorKind::Dimension,
        "cross_entropy: label count");
  for (int32_t y : labels) {
    check(y >= 0 && y < k, ErrorKind::Domain, "cross_entropy: label range");
  }
  R loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const R* row = L.data.data() + i * k;
    R mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    R s = 0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    loss += std::log(s) + mx - row[labels[i]];
  }
  loss /= static_cast<R>(n);
  return g.op(TensorT<R>::scalar(loss), {logits},
              [logits, labels = std::move(labels), n, k](GraphT<R>& g, int id) {
                const R d = g.grad(id)[0];
                const auto& L = g.val(logits);
                auto& dl = g.grad(logits);
                for (int64_t i = 0; i < n; ++i) {
                  const R* row = L.data.data() + i * k;
                  R mx = row[0];
                  for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                  R s = 0;
                  for (int64_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
                  for (int64_t j = 0; j < k; ++j) {
                    R p = std::exp(row[j] - mx) / s;
                    if (j == labels[i]) p -= R(1);
                    dl[i * k + j] += d * p / static_cast<R>(n);
                  }
                }
              });
}

// log(sum(exp(x))) over every entry; max-subtracted.
template <typename R>
int logsumexp_all(GraphT<R>& g, int a) {
  const auto& x = g.val(a);
  R mx = x[0];
  for (R v : x.data) mx = std::max(mx, v);
  R s = 0;
  for (R v : x.data) s += std::exp(v - mx);
  const R out = std::log(s) + mx;
  return g.op(TensorT<R>::scalar(out), {a}, [a, mx, s](GraphT<R>& g, int id) {
    const R d = g.grad(id)[0];
    const auto& x = g.val(a);
    auto& da = g.grad(a);
    for (int64_t i = 0; i < x.numel(); ++i) {
      da[i] += d * std::exp(x[i] - mx) / s;
    }
  });
}

// Sum of entries at flat indices (duplicates allowed).
template <typename R>
int gather_sum(GraphT<R>& g, int a, std::vector<int64_t> idx) {
  const auto& x = g.val(a);
  R acc = 0;
  for (int64_t i : idx) {
    check(i >= 0 && i < x.numel(), ErrorKind::Domain, "gather_sum: index");
    acc += x[i];
  }
  return g.op(TensorT<R>::scalar(acc), {a},
              [a, idx = std::move(idx)](GraphT<R>& g, int id) {
                const R d = g.grad(id)[0];
                auto& da = g.grad(a);
                for (int64_t i : idx) da[i] += d;
              });
}

// Row-wise L2 normalization of [n, d]; rejects zero-norm rows.
template <typename R>
int l2_normalize_rows(GraphT<R>& g, int a) {
  const auto& x = g.val(a);
  check(x.rank() == 2, ErrorKind::Dimension, "l2_normalize_rows: rank");
  const int64_t n = x.dim(0), d = x.dim(1);
  TensorT<R> out = TensorT<R>::zeros(x.shape);
  std::vector<R> inv_norm(n);
  for (int64_t i = 0; i < n; ++i) {
    const R* row = x.data.data() + i * d;
    R s = 0;
    for (int64_t j = 0; j < d; ++j) s += row[j] * row[j];
    check(s > R(0), ErrorKind::Numeric, "l2_normalize_rows: zero-norm row");
    inv_norm[i] = R(1) / std::sqrt(s);
    for (int64_t j = 0; j < d; ++j) out[i * d + j] = row[j] * inv_norm[i];
  }
  return g.op(std::move(out), {a},
              [a, n, d, inv_norm = std::move(inv_norm)](GraphT<R>& g, int id) {
                const auto& dd = g.grad(id);
                const auto& y = g.val(id);
                auto& da = g.grad(a);
                for (int64_t i = 0; i < n; ++i) {
                  const R* yr = y.data.data() + i * d;
                  const R* dr = dd.data.data() + i * d;
                  R dot = 0;
                  for (int64_t j = 0; j < d; ++j) dot += yr[j] * dr[j];
                  for (int64_t j = 0; j < d; ++j) {
                    da[i * d + j] += inv_norm[i] * (dr[j] - yr[j] * dot);
                  }
                }
              });
}

// Token-wise linear: x[n,t,din] * W[t,din,dout] -> [n,t,dout], a separate
// matrix per token position (the per-patch keyed random layers).
template <typename R>
int token_wise_linear(GraphT<R>& g, int x, int W) {
  const auto& xv = g.val(x);
  const auto& Wv = g.val(W);
  check(xv.rank() == 3 && Wv.rank() == 3 && xv.dim(1) == Wv.dim(0) &&
            xv.dim(2) == Wv.dim(1),
        ErrorKind::Dimension, "token_wise_linear: shapes do not conform");
  const int64_t n = xv.dim(0), t = xv.dim(1), din = xv.dim(2), dout = Wv.dim(2);
  TensorT<R> out = TensorT<R>::zeros({n, t, dout});
  // gather rows per token so each patch is one GEMM
  std::vector<R> xbuf(static_cast<size_t>(n * din));
  std::vector<R> ybuf(static_cast<size_t>(n * dout));
  for (int64_t p = 0; p < t; ++p) {
    for (int64_t i = 0; i < n; ++i) {
      std::copy_n(&xv.data[(i * t + p) * din], din, &xbuf[i * din]);
    }
    std::fill(ybuf.begin(), ybuf.end(), R(0));
    gemm_nn(n, dout, din, xbuf.data(), Wv.data.data() + p * din * dout,
            ybuf.data());
    for (int64_t i = 0; i < n; ++i) {
      std::copy_n(&ybuf[i * dout], dout, &out.data[(i * t + p) * dout]);
    }
  }
  return g.op(std::move(out), {x, W},
              [x, W, n, t, din, dout](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                const auto& xv = g.val(x);
                const auto& Wv = g.val(W);
                std::vector<R> xbuf(static_cast<size_t>(n * din));
                std::vector<R> dbuf(static_cast<size_t>(n * dout));
                std::vector<R> obuf;
                for (int64_t p = 0; p < t; ++p) {
                  for (int64_t i = 0; i < n; ++i) {
                    std::copy_n(&d.data[(i * t + p) * dout], dout,
                                &dbuf[i * dout]);
                  }
                  if (g.needs_grad(x)) {
                    obuf.assign(static_cast<size_t>(n * din), R(0));
                    gemm_nt(n, din, dout, dbuf.data(),
                            Wv.data.data() + p * din * dout, obuf.data());
                    auto& dx = g.grad(x);
                    for (int64_t i = 0; i < n; ++i) {
                      for (int64_t j = 0; j < din; ++j) {
                        dx[(i * t + p) * din + j] += obuf[i * din + j];
                      }
                    }
                  }
                  if (g.needs_grad(W)) {
                    for (int64_t i = 0; i < n; ++i) {
                      std::copy_n(&xv.data[(i * t + p) * din], din,
                                  &xbuf[i * din]);
                    }
                    gemm_tn(din, dout, n, xbuf.data(), dbuf.data(),
                            g.grad(W).data.data() + p * din * dout);
                  }
                }
              });
}

// Embedding lookup: table[k, d] gathered at 0-based ids -> [b, d].
template <typename R>
int embedding(GraphT<R>& g, int table, std::vector<int32_t> ids) {
  const auto& tv = g.val(table);
  check(tv.rank() == 2, ErrorKind::Dimension, "embedding: table rank");
  const int64_t k = tv.dim(0), d = tv.dim(1);
  const int64_t b = static_cast<int64_t>(ids.size());
  for (int32_t id : ids) {
    check(id >= 0 && id < k, ErrorKind::Domain, "embedding: id out of range");
  }
  TensorT<R> out = TensorT<R>::zeros({b, d});
  for (int64_t i = 0; i < b; ++i) {
    std::copy_n(&tv.data[ids[i] * d], d, &out.data[i * d]);
  }
  return g.op(std::move(out), {table},
              [table, ids = std::move(ids), d](GraphT<R>& g, int id) {
                const auto& dd = g.grad(id);
                auto& dt = g.grad(table);
                for (size_t i = 0; i < ids.size(); ++i) {
                  for (int64_t j = 0; j < d; ++j) {
                    dt[ids[i] * d + j] += dd[static_cast<int64_t>(i) * d + j];
                  }
                }
              });
}

// Inverted-dropout; mask drawn from the caller's rng stream.
template <typename R>
int dropout(GraphT<R>& g, int a, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) {
    return g.op(TensorT<R>(g.val(a)), {a}, [a](GraphT<R>& g, int id) {
      const auto& d = g.grad(id);
      auto& da = g.grad(a);
      for (int64_t i = 0; i < d.numel(); ++i) da[i] += d[i];
    });
  }
  check(p < 1.0, ErrorKind::Parameter, "dropout: p must be < 1");
  const auto& x = g.val(a);
  const R keep_inv = static_cast<R>(1.0 / (1.0 - p));
  std::vector<uint8_t> mask(static_cast<size_t>(x.numel()));
  TensorT<R> out = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    mask[i] = rng.next_uniform() >= p ? 1 : 0;
    out[i] = mask[i] ? out[i] * keep_inv : R(0);
  }
  return g.op(std::move(out), {a},
              [a, keep_inv, mask = std::move(mask)](GraphT<R>& g, int id) {
                const auto& d = g.grad(id);
                auto& da = g.grad(a);
                for (int64_t i = 0; i < d.numel(); ++i) {
                  if (mask[i]) da[i] += d[i] * keep_inv;
                }
              });
}

}  // namespace syfer
