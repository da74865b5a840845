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

#include "syfer/train.hpp"

#include <algorithm>
#include <cmath>

namespace syfer {

void Decoder::init(const std::string& name_prefix, const SchemeConfig& cfg,
                   EncoderKey key, Rng& rng, int depth) {
  prefix = name_prefix;
  fixed_key = std::move(key);
  stack.init(prefix + "/stack", depth, cfg.tokens(), cfg.hidden, cfg.heads,
             rng);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
  out_W = {prefix + "/out/W",
           Tensor::randn({cfg.hidden, cfg.patch_dim()}, rng, sd)};
  out_b = {prefix + "/out/b", Tensor::zeros({cfg.patch_dim()})};
}

void Decoder::register_into(ParamRegistry& reg) {
  stack.register_into(reg);
  reg.add(out_W);
  reg.add(out_b);
}

int Decoder::forward(Graph& g, int z, bool training, bool trainable) {
  const int h =
      stack.forward(g, z, training ? BnMode::Train : BnMode::Eval, trainable);
  return linear(g, h, out_W.bind(g, trainable), out_b.bind(g, trainable));
}

namespace {

Tensor gather_batch(const Dataset& ds, const uint32_t* idx, int64_t count) {
  const int64_t hw = ds.images.dim(1) * ds.images.dim(2);
  Tensor out = Tensor::zeros({count, ds.images.dim(1), ds.images.dim(2)});
  for (int64_t i = 0; i < count; ++i) {
    std::copy_n(&ds.images.data[idx[i] * hw], hw, &out.data[i * hw]);
  }
  return out;
}

std::vector<std::pair<int32_t, int32_t>> diag(int64_t b) {
  std::vector<std::pair<int32_t, int32_t>> m;
  for (int64_t i = 0; i < b; ++i) {
    m.emplace_back(static_cast<int32_t>(i), static_cast<int32_t>(i));
  }
  return m;
}

void dump_registry(TensorStore& ts, ParamRegistry& reg) {
  for (const auto* p : reg.params) ts.put_f32(p->name, p->value);
  for (const auto& [name, bn] : reg.bn_states) {
    ts.put_f32(name + "/mean", bn->run_mean);
    ts.put_f32(name + "/var", bn->run_var);
  }
}

void load_registry(const TensorStore& ts, ParamRegistry& reg) {
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
}

void dump_adam(TensorStore& ts, const Adam& opt, const ParamRegistry& reg,
               const std::string& group) {
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  for (size_t i = 0; i < reg.params.size(); ++i) {
    ts.put_f32("adam/" + group + "/m/" + reg.params[i]->name, m[i]);
    ts.put_f32("adam/" + group + "/v/" + reg.params[i]->name, v[i]);
  }
  ts.put_u32("adam/" + group + "/step",
             {static_cast<uint32_t>(opt.step_count())}, {1});
}

void load_adam(const TensorStore& ts, Adam& opt, const ParamRegistry& reg,
               const std::string& group) {
  std::vector<Tensor> m, v;
  for (const auto* p : reg.params) {
    m.push_back(ts.get_f32("adam/" + group + "/m/" + p->name));
    v.push_back(ts.get_f32("adam/" + group + "/v/" + p->name));
  }
  const auto& step = ts.get_u32("adam/" + group + "/step");
  check(step.size() == 1, ErrorKind::Format, "train state: bad adam step");
  opt.restore(step[0], std::move(m), std::move(v));
}

void dump_key(TensorStore& ts, const std::string& prefix, const EncoderKey& key) {
  ts.put_u32(prefix + "/seed",
             {static_cast<uint32_t>(key.seed & 0xffffffffu),
              static_cast<uint32_t>(key.seed >> 32)},
             {2});
  ts.put_u32(prefix + "/perm", key.label_perm.fwd,
             {static_cast<int64_t>(key.label_perm.fwd.size())});
  for (const auto& [name, t] : key.tensors) ts.put_f32(prefix + "/" + name, t);
}

EncoderKey load_key(const TensorStore& ts, const std::string& prefix) {
  EncoderKey key;
  const auto& seed = ts.get_u32(prefix + "/seed");
  check(seed.size() == 2, ErrorKind::Format, "train state: bad key seed");
  key.seed = static_cast<uint64_t>(seed[0]) | (static_cast<uint64_t>(seed[1]) << 32);
  key.label_perm.fwd = ts.get_u32(prefix + "/perm");
  for (const auto& name : ts.names()) {
    const std::string kp = prefix + "/";
    if (name.rfind(kp, 0) != 0) continue;
    const std::string rest = name.substr(kp.size());
    if (rest == "seed" || rest == "perm") continue;
    key.tensors.emplace(rest, ts.get_f32(name));
  }
  return key;
}

struct TrainLoopState {
  SyferScheme* scheme = nullptr;
  std::shared_ptr<AttackerModel> attacker;
  std::vector<Decoder> decoders;
  Adam opt_theta, opt_phi;
  std::vector<Adam> opt_betas;
  int64_t next_step = 0;
  bool optimize_estimators = true;
  std::vector<TrainLogEntry> log;
};

void save_train_state(const std::string& path, TrainLoopState& st, Rng& rng) {
  TensorStore ts;
  ts.put_u32("train/meta",
             {static_cast<uint32_t>(st.next_step),
              st.optimize_estimators ? 1u : 0u,
              static_cast<uint32_t>(st.decoders.size())},
             {3});
  const uint64_t rs = rng.state();
  ts.put_u32("train/rng",
             {static_cast<uint32_t>(rs & 0xffffffffu),
              static_cast<uint32_t>(rs >> 32)},
             {2});
  st.scheme->params().save_into(ts);
  st.attacker->save_into(ts);
  ParamRegistry theta = st.scheme->registry();
  ParamRegistry phi = st.attacker->registry();
  dump_adam(ts, st.opt_theta, theta, "theta");
  dump_adam(ts, st.opt_phi, phi, "phi");
  for (size_t i = 0; i < st.decoders.size(); ++i) {
    ParamRegistry reg;
    st.decoders[i].register_into(reg);
    dump_registry(ts, reg);
    dump_adam(ts, st.opt_betas[i], reg, "beta" + std::to_string(i));
    dump_key(ts, st.decoders[i].prefix + "/key", st.decoders[i].fixed_key);
  }
  ts.save(path);
}

void run_training_loop(TrainLoopState& st, const Dataset& public_data,
                       const SyferTrainConfig& cfg, Rng& rng,
                       const std::string& diag_dir) {
  SyferScheme& scheme = *st.scheme;
  const SchemeConfig& sc = scheme.config();
  const int64_t n = public_data.size();
  const int64_t batch = std::min<int64_t>(cfg.batch, n);
  check(batch >= 2, ErrorKind::Insufficient, "train_syfer: batch too small");

  for (int64_t step = st.next_step; step < cfg.steps; ++step) {
    // random batch without replacement
    std::vector<uint32_t> pool(static_cast<size_t>(n));
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<uint32_t>(i);
    for (int64_t i = 0; i < batch; ++i) {
      const uint64_t j = i + rng.next_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    Tensor xb = gather_batch(public_data, pool.data(), batch);

    const bool theta_turn = !st.optimize_estimators;
    Graph g;

    // re-identification loss under a fresh batch key, null labels
    const EncoderKey batch_key = scheme.sample_key(rng);
    const int zb =
        scheme.encode_graph(g, xb, batch_key, /*training=*/true, theta_turn);
    const int hx = st.attacker->instance_encode(
        g, patchify(xb, sc.patch), nullptr, true, BnMode::Train, !theta_turn);
    const int hz = st.attacker->instance_encode_node(
        g, zb, nullptr, false, BnMode::Train, !theta_turn);
    const int rx = st.attacker->set_encode(g, hx, BnMode::Train, !theta_turn);
    const int rz = st.attacker->set_encode(g, hz, BnMode::Train, !theta_turn);
    const auto reid = reid_loss_nodes(g, rx, rz, diag(batch));

    // reconstruction loss over the fixed-key decoders
    const Tensor x_tokens = patchify(xb, sc.patch);
    int l_rec = -1;
    for (size_t i = 0; i < st.decoders.size(); ++i) {
      const int zi = scheme.encode_graph(g, xb, st.decoders[i].fixed_key,
                                         /*training=*/true, theta_turn);
      const int pred = st.decoders[i].forward(g, zi, true, !theta_turn);
      const int li = mse_loss(g, pred, x_tokens);
      l_rec = l_rec < 0 ? li : add(g, l_rec, li);
    }

    const int l_syfer = sub(g, scale(g, l_rec, cfg.lambda_rec),
                            scale(g, reid.loss, cfg.lambda_reid));

    TrainLogEntry entry;
    entry.step = step;
    entry.l_reid = g.val(reid.loss)[0];
    entry.l_rec = g.val(l_rec)[0];
    entry.l_syfer = g.val(l_syfer)[0];
    entry.updated_estimators = st.optimize_estimators;
    entry.batch_key_id = batch_key.seed;
    if (!std::isfinite(entry.l_reid) || !std::isfinite(entry.l_rec)) {
      if (!diag_dir.empty()) {
        scheme.save(diag_dir + "/diverged_scheme.tc");
      }
      fail(ErrorKind::Numeric, "train_syfer: non-finite loss at step " +
                                   std::to_string(step));
    }

    if (st.optimize_estimators) {
      // phi only touches L_reid and the betas only touch L_rec, so one
      // backward from the sum fills both groups correctly.
      const int est_loss = add(g, reid.loss, l_rec);
      g.backward(est_loss);
      st.opt_phi.step();
      for (auto& ob : st.opt_betas) ob.step();
      st.optimize_estimators = false;
    } else {
      g.backward(l_syfer);
      st.opt_theta.step();
      st.optimize_estimators = true;
    }
    st.log.push_back(entry);
    st.next_step = step + 1;

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        st.next_step % cfg.checkpoint_every == 0) {
      save_train_state(cfg.checkpoint_path, st, rng);
    }
  }
}

TrainLoopState init_loop_state(SyferScheme& scheme, const SyferTrainConfig& cfg,
                               Rng& rng) {
  check(cfg.decoders >= 1, ErrorKind::Config, "train_syfer: need >= 1 decoder");
  check(cfg.attacker.label_mode == LabelMode::None, ErrorKind::Config,
        "train_syfer: obfuscator training uses the null labeling function");
  TrainLoopState st;
  st.scheme = &scheme;
  st.attacker = std::make_shared<AttackerModel>(
      AttackerModel::init(cfg.attacker, scheme, rng.next_u64()));
  st.decoders.resize(static_cast<size_t>(cfg.decoders));
  for (int i = 0; i < cfg.decoders; ++i) {
    EncoderKey key = scheme.sample_key(rng);  // fixed throughout training
    st.decoders[i].init("decoder" + std::to_string(i), scheme.config(),
                        std::move(key), rng);
  }
  st.opt_theta = Adam(cfg.lr);
  ParamRegistry theta = scheme.registry();
  st.opt_theta.attach(theta);
  st.opt_phi = Adam(cfg.lr);
  ParamRegistry phi = st.attacker->registry();
  st.opt_phi.attach(phi);
  for (auto& d : st.decoders) {
    ParamRegistry reg;
    d.register_into(reg);
    st.opt_betas.emplace_back(cfg.lr);
    st.opt_betas.back().attach(reg);
  }
  return st;
}

}  // namespace

SyferTrainResult train_syfer(SyferScheme& scheme, const Dataset& public_data,
                             const SyferTrainConfig& cfg, Rng& rng,
                             const std::string& diag_dir) {
  TrainLoopState st = init_loop_state(scheme, cfg, rng);
  run_training_loop(st, public_data, cfg, rng, diag_dir);
  SyferTrainResult result;
  result.log = std::move(st.log);
  result.attacker = std::move(st.attacker);
  result.decoders = std::move(st.decoders);
  return result;
}

SyferTrainResult resume_train_syfer(SyferScheme& scheme,
                                    const std::string& state_path,
                                    const Dataset& public_data,
                                    const SyferTrainConfig& cfg,
                                    const std::string& diag_dir) {
  const TensorStore ts = TensorStore::load(state_path);
  const auto& meta = ts.get_u32("train/meta");
  check(meta.size() == 3, ErrorKind::Format, "train state: bad meta");
  check(static_cast<int>(meta[2]) == cfg.decoders, ErrorKind::Config,
        "train state: decoder count does not match config");

  // model parameters
  scheme.params() = ObfuscatorParams::load_from(ts);

  TrainLoopState st;
  st.scheme = &scheme;
  st.attacker = std::make_shared<AttackerModel>(AttackerModel::load_from(ts));
  st.decoders.resize(static_cast<size_t>(cfg.decoders));
  Rng dummy(0);
  for (int i = 0; i < cfg.decoders; ++i) {
    const std::string prefix = "decoder" + std::to_string(i);
    EncoderKey key = load_key(ts, prefix + "/key");
    st.decoders[i].init(prefix, scheme.config(), std::move(key), dummy);
    ParamRegistry reg;
    st.decoders[i].register_into(reg);
    load_registry(ts, reg);
  }

  // optimizers
  st.opt_theta = Adam(cfg.lr);
  ParamRegistry theta = scheme.registry();
  st.opt_theta.attach(theta);
  load_adam(ts, st.opt_theta, theta, "theta");
  st.opt_phi = Adam(cfg.lr);
  ParamRegistry phi = st.attacker->registry();
  st.opt_phi.attach(phi);
  load_adam(ts, st.opt_phi, phi, "phi");
  for (int i = 0; i < cfg.decoders; ++i) {
    ParamRegistry reg;
    st.decoders[i].register_into(reg);
    st.opt_betas.emplace_back(cfg.lr);
    st.opt_betas.back().attach(reg);
    load_adam(ts, st.opt_betas.back(), reg, "beta" + std::to_string(i));
  }

  st.next_step = meta[0];
  st.optimize_estimators = meta[1] != 0;

  const auto& rs = ts.get_u32("train/rng");
  check(rs.size() == 2, ErrorKind::Format, "train state: bad rng state");
  Rng rng(0);
  rng.restore(static_cast<uint64_t>(rs[0]) | (static_cast<uint64_t>(rs[1]) << 32));

  run_training_loop(st, public_data, cfg, rng, diag_dir);
  SyferTrainResult result;
  result.log = std::move(st.log);
  result.attacker = std::move(st.attacker);
  result.decoders = std::move(st.decoders);
  return result;
}

std::vector<double> train_private_decoder(Decoder& decoder,
                                          const SyferScheme& scheme,
                                          const Dataset& data, int epochs,
                                          int64_t batch, double lr, Rng& rng) {
  auto& mutable_scheme = const_cast<SyferScheme&>(scheme);
  const SchemeConfig& sc = scheme.config();
  const int64_t n = data.size();
  Adam opt(lr);
  ParamRegistry reg;
  decoder.register_into(reg);
  opt.attach(reg);

  std::vector<double> losses;
  for (int e = 0; e < epochs; ++e) {
    const auto perm = rng.next_permutation(static_cast<uint32_t>(n));
    double total = 0;
    int64_t steps = 0;
    for (int64_t lo = 0; lo + 2 <= n; lo += batch) {
      const int64_t hi = std::min(n, lo + batch);
      Tensor xb = gather_batch(data, perm.data() + lo, hi - lo);
      Graph g;
      const int zb = mutable_scheme.encode_graph(g, xb, decoder.fixed_key,
                                                 /*training=*/false,
                                                 /*trainable=*/false);
      const int pred = decoder.forward(g, zb, true, true);
      const int loss = mse_loss(g, pred, patchify(xb, sc.patch));
      g.backward(loss);
      total += g.val(loss)[0];
      ++steps;
      opt.step();
    }
    losses.push_back(total / std::max<int64_t>(1, steps));
  }
  return losses;
}

double decoder_mse(Decoder& decoder, const SyferScheme& scheme,
                   const Dataset& data) {
  auto& mutable_scheme = const_cast<SyferScheme&>(scheme);
  Graph g;
  const int zb = mutable_scheme.encode_graph(g, data.images, decoder.fixed_key,
                                             false, false);
  const int pred = decoder.forward(g, zb, false, false);
  const int loss = mse_loss(g, pred, patchify(data.images, scheme.config().patch));
  return g.val(loss)[0];
}

}  // namespace syfer
