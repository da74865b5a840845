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

#include "syfer/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace syfer {

// --- dauntless ---------------------------------------------------------------

namespace {

class DauntlessScheme final : public Scheme {
 public:
  explicit DauntlessScheme(const SchemeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
  }
  std::string name() const override { return "dauntless"; }
  const SchemeConfig& config() const override { return cfg_; }

  EncoderKey sample_key(Rng& rng) const override {
    EncoderKey key;
    key.seed = rng.next_u64();
    Rng kr(key.seed);
    const int64_t t = cfg_.tokens(), pd = cfg_.patch_dim();
    key.tensors.emplace("patch/W", Tensor::randn({t, pd, pd}, kr));
    key.label_perm = LabelPermutation::identity(cfg_.classes);
    return key;
  }

  Tensor encode_images(const Tensor& images, const EncoderKey& key,
                       Rng&) const override {
    const auto it = key.tensors.find("patch/W");
    check(it != key.tensors.end(), ErrorKind::Data,
          "dauntless: key is missing patch weights");
    Graph g;
    const int x = g.leaf(patchify(images, cfg_.patch));
    const int w = g.leaf(it->second);
    const int z = token_wise_linear(g, x, w);
    return g.val(z);
  }

  int64_t out_tokens() const override { return cfg_.tokens(); }
  int64_t out_token_dim() const override { return cfg_.patch_dim(); }

 private:
  SchemeConfig cfg_;
};

}  // namespace

std::unique_ptr<Scheme> make_dauntless(const SchemeConfig& cfg) {
  return std::make_unique<DauntlessScheme>(cfg);
}

// --- instahide ---------------------------------------------------------------

Tensor instahide_mix(const Tensor& images,
                     const std::vector<std::pair<int64_t, int64_t>>& partners,
                     const Tensor& coeffs, const Tensor& signs) {
  const int64_t n = images.dim(0), hw = images.dim(1) * images.dim(2);
  check(static_cast<int64_t>(partners.size()) == n, ErrorKind::Dimension,
        "instahide_mix: partner count");
  require_shape(coeffs, {n, 3}, "instahide coeffs");
  require_shape(signs, images.shape, "instahide signs");
  Tensor out = Tensor::zeros(images.shape);
  for (int64_t i = 0; i < n; ++i) {
    const auto [j, k] = partners[i];
    check(j >= 0 && j < n && k >= 0 && k < n && j != i && k != i && j != k,
          ErrorKind::Domain, "instahide_mix: invalid partners");
    const float c0 = coeffs[i * 3], c1 = coeffs[i * 3 + 1], c2 = coeffs[i * 3 + 2];
    for (int64_t p = 0; p < hw; ++p) {
      const float mixed = c0 * images[i * hw + p] + c1 * images[j * hw + p] +
                          c2 * images[k * hw + p];
      out[i * hw + p] = signs[i * hw + p] * mixed;
    }
  }
  return out;
}

namespace {

class InstaHideScheme final : public Scheme {
 public:
  explicit InstaHideScheme(const SchemeConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
  }
  std::string name() const override { return "instahide"; }
  const SchemeConfig& config() const override { return cfg_; }

  EncoderKey sample_key(Rng&) const override {
    EncoderKey key;  // keyless: randomness is per-encode
    key.label_perm = LabelPermutation::identity(cfg_.classes);
    return key;
  }

  Tensor encode_images(const Tensor& images, const EncoderKey&,
                       Rng& rng) const override {
    const int64_t n = images.dim(0);
    check(n >= 3, ErrorKind::Insufficient,
          "instahide: need at least 3 images to mix");
    std::vector<std::pair<int64_t, int64_t>> partners(n);
    Tensor coeffs = Tensor::zeros({n, 3});
    for (int64_t i = 0; i < n; ++i) {
      int64_t j = static_cast<int64_t>(rng.next_below(n - 1));
      if (j >= i) ++j;
      int64_t k = static_cast<int64_t>(rng.next_below(n - 2));
      for (int64_t skip : {std::min(i, j), std::max(i, j)}) {
        if (k >= skip) ++k;
      }
      partners[i] = {j, k};
      // flat Dirichlet over 3 components via normalized exponentials
      double e[3];
      double sum = 0;
      for (double& x : e) {
        double u = rng.next_uniform();
        while (u == 0.0) u = rng.next_uniform();
        x = -detail::det_log(u);
        sum += x;
      }
      for (int c = 0; c < 3; ++c) {
        coeffs[i * 3 + c] = static_cast<float>(e[c] / sum);
      }
    }
    Tensor signs = Tensor::zeros(images.shape);
    for (auto& s : signs.data) s = rng.next_u64() & 1 ? 1.0f : -1.0f;
    return patchify(instahide_mix(images, partners, coeffs, signs), cfg_.patch);
  }

  int64_t out_tokens() const override { return cfg_.tokens(); }
  int64_t out_token_dim() const override { return cfg_.patch_dim(); }

 private:
  SchemeConfig cfg_;
};

// --- dp-simple ---------------------------------------------------------------

class DpSimpleScheme final : public Scheme {
 public:
  DpSimpleScheme(const SchemeConfig& cfg, double b) : cfg_(cfg), b_(b) {
    cfg_.validate();
    check(b >= 0.0, ErrorKind::Parameter, "dp-simple: scale b must be >= 0");
  }
  std::string name() const override { return "dp-simple"; }
  const SchemeConfig& config() const override { return cfg_; }

  EncoderKey sample_key(Rng&) const override {
    EncoderKey key;
    key.label_perm = LabelPermutation::identity(cfg_.classes);
    return key;
  }

  Tensor encode_images(const Tensor& images, const EncoderKey&,
                       Rng& rng) const override {
    Tensor noisy = images;
    for (auto& v : noisy.data) {
      v += static_cast<float>(rng.next_laplace(b_));
    }
    return patchify(noisy, cfg_.patch);
  }

  int64_t out_tokens() const override { return cfg_.tokens(); }
  int64_t out_token_dim() const override { return cfg_.patch_dim(); }

 private:
  SchemeConfig cfg_;
  double b_;
};

}  // namespace

std::unique_ptr<Scheme> make_instahide(const SchemeConfig& cfg) {
  return std::make_unique<InstaHideScheme>(cfg);
}

std::unique_ptr<Scheme> make_dp_simple(const SchemeConfig& cfg, double b) {
  return std::make_unique<DpSimpleScheme>(cfg, b);
}

// --- dp-image ----------------------------------------------------------------

DpImageAutoencoder::ConvLayer DpImageAutoencoder::make_layer(
    const std::string& prefix, int64_t cin, int64_t cout, bool transposed,
    Rng& rng) {
  ConvLayer l;
  const int64_t fan_in = cin * 9;
  const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
  const Shape wshape = transposed ? Shape{cin, cout, 3, 3} : Shape{cout, cin, 3, 3};
  l.W = {prefix + "/W", Tensor::randn(wshape, rng, sd)};
  l.b = {prefix + "/b", Tensor::zeros({cout})};
  l.gamma = {prefix + "/bn/gamma", Tensor::full({cout}, 1.0f)};
  l.beta = {prefix + "/bn/beta", Tensor::zeros({cout})};
  l.bn = BatchNormState(cout);
  return l;
}

DpImageAutoencoder DpImageAutoencoder::init(int64_t side, uint64_t seed) {
  check(side >= 32 && (side & (side - 1)) == 0, ErrorKind::Config,
        "dp-image: image side must be a power of two >= 32");
  DpImageAutoencoder ae;
  ae.side_ = side;
  int depth = 0;
  for (int64_t s = side; s > 1; s /= 2) ++depth;  // stride-2 layers to 1x1

  Rng rng(seed);
  // channel ladder ending at the latent width
  std::vector<int64_t> ch(depth + 1);
  ch[0] = 1;
  for (int i = 1; i <= depth; ++i) ch[i] = kLatent >> (depth - i);
  for (int i = 0; i < depth; ++i) {
    ae.enc_.push_back(make_layer("dpimage/enc" + std::to_string(i), ch[i],
                                 ch[i + 1], false, rng));
  }
  for (int i = 0; i < depth; ++i) {
    ae.dec_.push_back(make_layer("dpimage/dec" + std::to_string(i),
                                 ch[depth - i], ch[depth - i - 1], true, rng));
  }
  return ae;
}

int DpImageAutoencoder::encode_node(Graph& g, const Tensor& images,
                                    bool training, bool trainable) {
  check(images.rank() == 3 && images.dim(1) == side_ && images.dim(2) == side_,
        ErrorKind::Config, "dp-image: image shape mismatch");
  const int64_t n = images.dim(0);
  int h = g.leaf(images.reshaped({n, 1, side_, side_}));
  for (auto& l : enc_) {
    h = conv2d(g, h, l.W.bind(g, trainable), l.b.bind(g, trainable), 2, 1);
    h = leaky_relu(g, h, 0.01);
    h = batch_norm(g, h, l.gamma.bind(g, trainable), l.beta.bind(g, trainable),
                   &l.bn.run_mean, &l.bn.run_var,
                   training ? BnMode::Train : BnMode::Eval, 1);
  }
  return global_avg_pool(g, h);  // [n, 256]
}

int DpImageAutoencoder::decode_node(Graph& g, int latent, bool training,
                                    bool trainable) {
  const int64_t n = g.val(latent).dim(0);
  int h = reshape(g, latent, {n, kLatent, 1, 1});
  for (auto& l : dec_) {
    h = conv_transpose2d(g, h, l.W.bind(g, trainable), l.b.bind(g, trainable),
                         2, 1, 1);
    h = leaky_relu(g, h, 0.01);
    h = batch_norm(g, h, l.gamma.bind(g, trainable), l.beta.bind(g, trainable),
                   &l.bn.run_mean, &l.bn.run_var,
                   training ? BnMode::Train : BnMode::Eval, 1);
  }
  return h;  // [n, 1, side, side]
}

Tensor DpImageAutoencoder::reconstruct(const Tensor& images) {
  Graph g;
  const int z = encode_node(g, images, false, false);
  const int out = decode_node(g, z, false, false);
  return g.val(clamp01(g, out))
      .reshaped({images.dim(0), side_, side_});
}

Tensor DpImageAutoencoder::encode_latent(const Tensor& images) {
  Graph g;
  return g.val(encode_node(g, images, false, false));
}

Tensor DpImageAutoencoder::decode_latent(const Tensor& latent) {
  Graph g;
  const int z = g.leaf(latent);
  const int out = decode_node(g, z, false, false);
  const int64_t n = latent.dim(0);
  return g.val(clamp01(g, out)).reshaped({n, side_, side_});
}

ParamRegistry DpImageAutoencoder::registry() {
  ParamRegistry reg;
  for (auto* layers : {&enc_, &dec_}) {
    for (auto& l : *layers) {
      reg.add(l.W);
      reg.add(l.b);
      reg.add(l.gamma);
      reg.add(l.beta);
      reg.add_bn(l.W.name.substr(0, l.W.name.size() - 2) + "/bn", l.bn);
    }
  }
  return reg;
}

void DpImageAutoencoder::save(const std::string& path) const {
  TensorStore ts;
  ts.put_u32("dpimage/cfg", {static_cast<uint32_t>(side_)}, {1});
  auto reg = const_cast<DpImageAutoencoder*>(this)->registry();
  for (const auto* p : reg.params) ts.put_f32(p->name, p->value);
  for (const auto& [name, bn] : reg.bn_states) {
    ts.put_f32(name + "/mean", bn->run_mean);
    ts.put_f32(name + "/var", bn->run_var);
  }
  ts.save(path);
}

DpImageAutoencoder DpImageAutoencoder::load(const std::string& path) {
  TensorStore ts = TensorStore::load(path);
  const auto& cfg = ts.get_u32("dpimage/cfg");
  check(cfg.size() == 1, ErrorKind::Format, "dp-image checkpoint: bad cfg");
  DpImageAutoencoder ae = DpImageAutoencoder::init(cfg[0], 0);
  auto reg = ae.registry();
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
  return ae;
}

namespace {

double dataset_mse(DpImageAutoencoder& ae, const Dataset& ds) {
  const Tensor rec = ae.reconstruct(ds.images);
  double acc = 0;
  for (int64_t i = 0; i < rec.numel(); ++i) {
    const double d = rec[i] - ds.images[i];
    acc += d * d;
  }
  return acc / static_cast<double>(rec.numel());
}

}  // namespace

DpImageTrainLog train_dp_image(DpImageAutoencoder& ae, const Dataset& train,
                               const Dataset& heldout, int epochs,
                               int64_t batch, double lr, Rng& rng) {
  check(train.size() >= 2, ErrorKind::Insufficient,
        "dp-image training: need >= 2 images");
  DpImageTrainLog log;
  log.init_heldout_mse = dataset_mse(ae, heldout);

  Adam opt(lr);
  ParamRegistry reg = ae.registry();
  opt.attach(reg);

  const int64_t n = train.size();
  const int64_t hw = train.images.dim(1) * train.images.dim(2);
  for (int e = 0; e < epochs; ++e) {
    const auto perm = rng.next_permutation(static_cast<uint32_t>(n));
    double epoch_loss = 0;
    int64_t steps = 0;
    for (int64_t lo = 0; lo + 2 <= n; lo += batch) {
      const int64_t hi = std::min(n, lo + batch);
      Tensor xb = Tensor::zeros({hi - lo, train.images.dim(1),
                                 train.images.dim(2)});
      for (int64_t i = lo; i < hi; ++i) {
        std::copy_n(&train.images.data[perm[i] * hw], hw,
                    &xb.data[(i - lo) * hw]);
      }
      Graph g;
      const int z = ae.encode_node(g, xb, true, true);
      const int out = ae.decode_node(g, z, true, true);
      const int loss = mse_loss(
          g, out, xb.reshaped({hi - lo, 1, train.images.dim(1),
                               train.images.dim(2)}));
      g.backward(loss);
      check(std::isfinite(g.val(loss)[0]), ErrorKind::Numeric,
            "dp-image training diverged");
      epoch_loss += g.val(loss)[0];
      ++steps;
      opt.step();
    }
    log.train_mse_per_epoch.push_back(epoch_loss / std::max<int64_t>(1, steps));
  }
  log.final_heldout_mse = dataset_mse(ae, heldout);
  return log;
}

namespace {

class DpImageScheme final : public Scheme {
 public:
  DpImageScheme(const SchemeConfig& cfg, std::shared_ptr<DpImageAutoencoder> ae,
                double b)
      : cfg_(cfg), ae_(std::move(ae)), b_(b) {
    cfg_.validate();
    check(b >= 0.0, ErrorKind::Parameter, "dp-image: scale b must be >= 0");
    check(ae_ && ae_->side() == cfg_.height && cfg_.height == cfg_.width,
          ErrorKind::Config, "dp-image: autoencoder does not match config");
  }
  std::string name() const override { return "dp-image"; }
  const SchemeConfig& config() const override { return cfg_; }

  EncoderKey sample_key(Rng&) const override {
    EncoderKey key;
    key.label_perm = LabelPermutation::identity(cfg_.classes);
    return key;
  }

  Tensor encode_images(const Tensor& images, const EncoderKey&,
                       Rng& rng) const override {
    Tensor z = ae_->encode_latent(images);
    for (auto& v : z.data) v += static_cast<float>(rng.next_laplace(b_));
    return patchify(ae_->decode_latent(z), cfg_.patch);
  }

  int64_t out_tokens() const override { return cfg_.tokens(); }
  int64_t out_token_dim() const override { return cfg_.patch_dim(); }

 private:
  SchemeConfig cfg_;
  std::shared_ptr<DpImageAutoencoder> ae_;
  double b_;
};

}  // namespace

std::unique_ptr<Scheme> make_dp_image(const SchemeConfig& cfg,
                                      std::shared_ptr<DpImageAutoencoder> ae,
                                      double b) {
  return std::make_unique<DpImageScheme>(cfg, std::move(ae), b);
}

}  // namespace syfer
