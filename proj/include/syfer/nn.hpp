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
#include <string>
#include <vector>

#include "syfer/graph.hpp"
#include "syfer/tensor.hpp"

namespace syfer {

template <typename R>
struct ParameterT {
  std::string name;
  TensorT<R> value;
  TensorT<R> gradient;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<R> v)
      : name(std::move(n)),
        value(std::move(v)),
        gradient(TensorT<R>::zeros(value.shape)) {}

  void zero_grad() {
    for (auto& g : gradient.data) g = R(0);
  }

  // Bind into a graph; frozen parameters become plain leaves so backward
  // prunes their subtrees.
  int bind(GraphT<R>& g, bool trainable) {
    return g.leaf_with_sink(value, &gradient, trainable);
  }
};

using Parameter = ParameterT<float>;

// Running statistics for one batch_norm site. Not parameters: they are
// updated by training-mode forwards, not by the optimizer, but they are part
// of every checkpoint.
template <typename R>
struct BatchNormStateT {
  TensorT<R> run_mean;
  TensorT<R> run_var;

  BatchNormStateT() = default;
  explicit BatchNormStateT(int64_t features)
      : run_mean(TensorT<R>::zeros({features})),
        run_var(TensorT<R>::full({features}, R(1))) {}
};

using BatchNormState = BatchNormStateT<float>;

// Flat registry of the parameters and batch-norm states of one module, used
// by optimizers, checkpoint serialization, and the update-exclusivity tests.
template <typename R>
struct ParamRegistryT {
  std::vector<ParameterT<R>*> params;
  std::vector<std::pair<std::string, BatchNormStateT<R>*>> bn_states;

  void add(ParameterT<R>& p) { params.push_back(&p); }
  void add_bn(const std::string& name, BatchNormStateT<R>& s) {
    bn_states.emplace_back(name, &s);
  }
  void merge(const ParamRegistryT& other) {
    params.insert(params.end(), other.params.begin(), other.params.end());
    bn_states.insert(bn_states.end(), other.bn_states.begin(),
                     other.bn_states.end());
  }
  int64_t count() const {
    int64_t n = 0;
    for (auto* p : params) n += p->value.numel();
    return n;
  }
  void zero_grad() {
    for (auto* p : params) p->zero_grad();
  }
};

using ParamRegistry = ParamRegistryT<float>;

// Adam with bias correction; zeroes gradients after applying them. One state
// per parameter group.
template <typename R>
class AdamT {
 public:
  explicit AdamT(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8, double weight_decay = 0.0)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

  void attach(const ParamRegistryT<R>& reg) {
    params_ = reg.params;
    m_.clear();
    v_.clear();
    for (auto* p : params_) {
      m_.push_back(TensorT<R>::zeros(p->value.shape));
      v_.push_back(TensorT<R>::zeros(p->value.shape));
    }
    step_ = 0;
  }

  int64_t step_count() const { return step_; }

  // Moment access for checkpoint/resume; ordering follows the attached
  // registry.
  const std::vector<TensorT<R>>& first_moments() const { return m_; }
  const std::vector<TensorT<R>>& second_moments() const { return v_; }
  void restore(int64_t step, std::vector<TensorT<R>> m, std::vector<TensorT<R>> v) {
    check(m.size() == params_.size() && v.size() == params_.size(),
          ErrorKind::Dimension, "adam restore: moment count mismatch");
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(step_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      ParameterT<R>& p = *params_[pi];
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        double grad = static_cast<double>(p.gradient[i]);
        if (wd_ != 0.0) grad += wd_ * static_cast<double>(p.value[i]);
        const double mi = b1_ * m[i] + (1.0 - b1_) * grad;
        const double vi = b2_ * v[i] + (1.0 - b2_) * grad * grad;
        m[i] = static_cast<R>(mi);
        v[i] = static_cast<R>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p.value[i] -=
            static_cast<R>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      p.zero_grad();
    }
  }

 private:
  double lr_, b1_, b2_, eps_, wd_;
  int64_t step_ = 0;
  std::vector<ParameterT<R>*> params_;
  std::vector<TensorT<R>> m_, v_;
};

using Adam = AdamT<float>;

}  // namespace syfer
