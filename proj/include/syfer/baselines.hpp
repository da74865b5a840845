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
// Comparison encoders behind the Scheme interface: per-patch random linear
// maps (dauntless-style), MixUp-plus-sign-flips (instahide-style), pixel
// Laplace noise (dp-simple), and autoencoder-latent Laplace noise (dp-image).

#pragma once

#include "syfer/conv.hpp"
#include "syfer/nn.hpp"
#include "syfer/scheme.hpp"

namespace syfer {

std::unique_ptr<Scheme> make_dauntless(const SchemeConfig& cfg);
std::unique_ptr<Scheme> make_instahide(const SchemeConfig& cfg);
std::unique_ptr<Scheme> make_dp_simple(const SchemeConfig& cfg, double b);

// Mixing core, separated out so tests can inject coefficients and signs.
// partners[i] = {j, k}; coeffs [n,3]; signs entries are +-1.
Tensor instahide_mix(const Tensor& images,
                     const std::vector<std::pair<int64_t, int64_t>>& partners,
                     const Tensor& coeffs, const Tensor& signs);

// Conv autoencoder for the dp-image baseline: log2(side) conv layers of
// kernel 3 / stride 2, each followed by leaky ReLU and batch norm, global
// average pooling to a 256-d latent, mirrored transposed-conv decoder.
class DpImageAutoencoder {
 public:
  static constexpr int64_t kLatent = 256;

  DpImageAutoencoder() = default;
  static DpImageAutoencoder init(int64_t side, uint64_t seed);

  int64_t side() const { return side_; }
  int depth() const { return static_cast<int>(enc_.size()); }

  int encode_node(Graph& g, const Tensor& images, bool training,
                  bool trainable);                       // [n, 256]
  int decode_node(Graph& g, int latent, bool training, bool trainable);

  Tensor reconstruct(const Tensor& images);              // eval, no noise
  Tensor encode_latent(const Tensor& images);            // eval, [n, 256]
  Tensor decode_latent(const Tensor& latent);            // eval, clamped

  ParamRegistry registry();
  void save(const std::string& path) const;
  static DpImageAutoencoder load(const std::string& path);

 private:
  struct ConvLayer {
    Parameter W, b, gamma, beta;
    BatchNormState bn;
  };
  static ConvLayer make_layer(const std::string& prefix, int64_t cin,
                              int64_t cout, bool transposed, Rng& rng);

  int64_t side_ = 0;
  std::vector<ConvLayer> enc_;
  std::vector<ConvLayer> dec_;
};

struct DpImageTrainLog {
  std::vector<double> train_mse_per_epoch;
  double init_heldout_mse = 0.0;
  double final_heldout_mse = 0.0;
};

DpImageTrainLog train_dp_image(DpImageAutoencoder& ae, const Dataset& train,
                               const Dataset& heldout, int epochs,
                               int64_t batch, double lr, Rng& rng);

std::unique_ptr<Scheme> make_dp_image(const SchemeConfig& cfg,
                                      std::shared_ptr<DpImageAutoencoder> ae,
                                      double b);

}  // namespace syfer
