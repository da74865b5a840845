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

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "syfer/errors.hpp"
#include "syfer/rng.hpp"

namespace syfer {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + "]";
}

// Dense row-major tensor. Values are immutable by convention once an op has
// produced them; mutation is confined to optimizer steps.
template <typename R>
struct TensorT {
  Shape shape;
  std::vector<R> data;

  TensorT() = default;
  TensorT(Shape s, std::vector<R> d) : shape(std::move(s)), data(std::move(d)) {
    check(numel_of(shape) == static_cast<int64_t>(data.size()),
          ErrorKind::Dimension, "tensor data length does not match shape");
  }

  static TensorT zeros(Shape s) {
    std::vector<R> d(static_cast<size_t>(numel_of(s)), R(0));
    return TensorT(std::move(s), std::move(d));
  }
  static TensorT full(Shape s, R v) {
    std::vector<R> d(static_cast<size_t>(numel_of(s)), v);
    return TensorT(std::move(s), std::move(d));
  }
  static TensorT scalar(R v) { return TensorT({1}, {v}); }

  static TensorT randn(Shape s, Rng& rng, double stddev = 1.0) {
    std::vector<R> d(static_cast<size_t>(numel_of(s)));
    for (auto& x : d) x = static_cast<R>(stddev * rng.next_gaussian());
    return TensorT(std::move(s), std::move(d));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  R& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const R& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool all_finite() const {
    for (R v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename R2>
  TensorT<R2> cast() const {
    std::vector<R2> d(data.size());
    for (size_t i = 0; i < data.size(); ++i) d[i] = static_cast<R2>(data[i]);
    return TensorT<R2>(shape, std::move(d));
  }

  TensorT reshaped(Shape s) const {
    check(numel_of(s) == numel(), ErrorKind::Dimension,
          "reshape: element count mismatch " + shape_str(shape) + " -> " +
              shape_str(s));
    TensorT out = *this;
    out.shape = std::move(s);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename R>
void require_shape(const TensorT<R>& t, const Shape& s, const char* what) {
  check(t.shape == s, ErrorKind::Dimension,
        std::string(what) + ": expected " + shape_str(s) + ", got " +
            shape_str(t.shape));
}

}  // namespace syfer
