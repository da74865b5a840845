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

#include "syfer/attacker.hpp"

#include <algorithm>
#include <cmath>

namespace syfer {

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "none") return LabelMode::None;
  if (s == "raw") return LabelMode::Raw;
  if (s == "encoded") return LabelMode::Encoded;
  fail(ErrorKind::Config, "unknown label mode '" + s + "'");
}

std::string label_mode_to_string(LabelMode m) {
  switch (m) {
    case LabelMode::None: return "none";
    case LabelMode::Raw: return "raw";
    case LabelMode::Encoded: return "encoded";
  }
  return "none";
}

AttackerModel AttackerModel::init(const AttackerConfig& cfg,
                                  const Scheme& scheme, uint64_t seed) {
  AttackerModel m;
  m.cfg_ = cfg;
  const SchemeConfig& sc = scheme.config();
  m.raw_tokens_ = sc.tokens();
  m.raw_dim_ = sc.patch_dim();
  m.enc_tokens_ = scheme.out_tokens();
  m.enc_dim_ = scheme.out_token_dim();
  m.classes_ = sc.classes;

  Rng rng(seed);
  const int64_t d = cfg.hidden;
  const bool labeled = cfg.label_mode != LabelMode::None;
  const int64_t ins_tokens_raw = m.raw_tokens_ + (labeled ? 1 : 0);
  const int64_t ins_tokens_enc = m.enc_tokens_ + (labeled ? 1 : 0);

  m.proj_raw_W_ = {"attacker/proj_raw/W",
                   Tensor::randn({m.raw_dim_, d}, rng,
                                 1.0 / std::sqrt(double(m.raw_dim_)))};
  m.proj_raw_b_ = {"attacker/proj_raw/b", Tensor::zeros({d})};
  m.proj_enc_W_ = {"attacker/proj_enc/W",
                   Tensor::randn({m.enc_dim_, d}, rng,
                                 1.0 / std::sqrt(double(m.enc_dim_)))};
  m.proj_enc_b_ = {"attacker/proj_enc/b", Tensor::zeros({d})};
  if (labeled) {
    m.label_embed_raw_ = {"attacker/label_embed_raw",
                          Tensor::randn({m.classes_, d}, rng, 0.02)};
    m.label_embed_enc_ = {"attacker/label_embed_enc",
                          Tensor::randn({m.classes_, d}, rng, 0.02)};
  }
  m.ins_raw_.init("attacker/ins_raw", cfg.depth_ins, ins_tokens_raw, d,
                  cfg.heads, rng);
  m.ins_enc_.init("attacker/ins_enc", cfg.depth_ins, ins_tokens_enc, d,
                  cfg.heads, rng);
  // sets are unordered: no positional embeddings, token count is free
  m.set_.init("attacker/set", cfg.depth_set, 0, d, cfg.heads, rng,
              /*with_pos=*/false);
  return m;
}

int AttackerModel::instance_encode(Graph& g, const Tensor& tokens,
                                   const std::vector<uint32_t>* labels,
                                   bool raw_side, BnMode mode,
                                   bool trainable) {
  return instance_encode_node(g, g.leaf(tokens), labels, raw_side, mode,
                              trainable);
}

int AttackerModel::instance_encode_node(Graph& g, int tokens_node,
                                        const std::vector<uint32_t>* labels,
                                        bool raw_side, BnMode mode,
                                        bool trainable) {
  const bool labeled = cfg_.label_mode != LabelMode::None;
  check(g.val(tokens_node).rank() == 3, ErrorKind::Dimension,
        "instance_encode: tokens must be [b,t,d]");
  const int64_t b = g.val(tokens_node).dim(0);
  Parameter& pw = raw_side ? proj_raw_W_ : proj_enc_W_;
  Parameter& pb = raw_side ? proj_raw_b_ : proj_enc_b_;
  int h = linear(g, tokens_node, pw.bind(g, trainable), pb.bind(g, trainable));
  if (labeled) {
    check(labels != nullptr && static_cast<int64_t>(labels->size()) == b,
          ErrorKind::Domain, "instance_encode: labels required in labeled mode");
    std::vector<int32_t> ids(labels->size());
    for (size_t i = 0; i < labels->size(); ++i) {
      const uint32_t y = (*labels)[i];
      check(y >= 1 && y <= static_cast<uint32_t>(classes_), ErrorKind::Domain,
            "instance_encode: label id out of range");
      ids[i] = static_cast<int32_t>(y - 1);
    }
    Parameter& emb = raw_side ? label_embed_raw_ : label_embed_enc_;
    const int tok =
        reshape(g, embedding(g, emb.bind(g, trainable), std::move(ids)),
                {b, 1, cfg_.hidden});
    h = concat_tokens(g, h, tok);
  }
  SauStack& stack = raw_side ? ins_raw_ : ins_enc_;
  h = stack.forward(g, h, mode, trainable);
  return mean_tokens(g, h);  // [b, hidden]
}

int AttackerModel::set_encode(Graph& g, int instance_reps, BnMode mode,
                              bool trainable) {
  const auto& h = g.val(instance_reps);
  check(h.rank() == 2, ErrorKind::Dimension, "set_encode: need [b,d]");
  const int64_t b = h.dim(0), d = h.dim(1);
  int r = reshape(g, instance_reps, {1, b, d});
  r = set_.forward(g, r, mode, trainable);
  return reshape(g, r, {b, d});
}

ParamRegistry AttackerModel::registry() {
  ParamRegistry reg;
  reg.add(proj_raw_W_);
  reg.add(proj_raw_b_);
  reg.add(proj_enc_W_);
  reg.add(proj_enc_b_);
  if (cfg_.label_mode != LabelMode::None) {
    reg.add(label_embed_raw_);
    reg.add(label_embed_enc_);
  }
  ins_raw_.register_into(reg);
  ins_enc_.register_into(reg);
  set_.register_into(reg);
  return reg;
}

void AttackerModel::save(const std::string& path) const {
  TensorStore ts;
  save_into(ts);
  ts.save(path);
}

AttackerModel AttackerModel::load(const std::string& path) {
  TensorStore ts = TensorStore::load(path);
  check(ts.all_names_under({"attacker/"}), ErrorKind::Format,
        "attacker checkpoint contains non-attacker entries");
  return load_from(ts);
}

void AttackerModel::save_into(TensorStore& ts) const {
  ts.put_u32("attacker/cfg",
             {static_cast<uint32_t>(cfg_.hidden),
              static_cast<uint32_t>(cfg_.heads),
              static_cast<uint32_t>(cfg_.depth_ins),
              static_cast<uint32_t>(cfg_.depth_set),
              static_cast<uint32_t>(cfg_.label_mode == LabelMode::None   ? 0
                                    : cfg_.label_mode == LabelMode::Raw ? 1
                                                                        : 2),
              static_cast<uint32_t>(raw_tokens_), static_cast<uint32_t>(raw_dim_),
              static_cast<uint32_t>(enc_tokens_), static_cast<uint32_t>(enc_dim_),
              static_cast<uint32_t>(classes_)},
             {10});
  auto reg = const_cast<AttackerModel*>(this)->registry();
  for (const auto* p : reg.params) ts.put_f32(p->name, p->value);
  for (const auto& [name, bn] : reg.bn_states) {
    ts.put_f32(name + "/mean", bn->run_mean);
    ts.put_f32(name + "/var", bn->run_var);
  }
}

AttackerModel AttackerModel::load_from(const TensorStore& ts) {
  const auto& cw = ts.get_u32("attacker/cfg");
  check(cw.size() == 10, ErrorKind::Format, "attacker checkpoint: bad cfg");
  AttackerModel m;
  m.cfg_.hidden = cw[0];
  m.cfg_.heads = static_cast<int>(cw[1]);
  m.cfg_.depth_ins = static_cast<int>(cw[2]);
  m.cfg_.depth_set = static_cast<int>(cw[3]);
  m.cfg_.label_mode = cw[4] == 0   ? LabelMode::None
                      : cw[4] == 1 ? LabelMode::Raw
                                   : LabelMode::Encoded;
  m.raw_tokens_ = cw[5];
  m.raw_dim_ = cw[6];
  m.enc_tokens_ = cw[7];
  m.enc_dim_ = cw[8];
  m.classes_ = cw[9];

  // rebuild structure, then overwrite values
  Rng rng(0);
  const bool labeled = m.cfg_.label_mode != LabelMode::None;
  const int64_t d = m.cfg_.hidden;
  m.proj_raw_W_ = {"attacker/proj_raw/W", Tensor::zeros({m.raw_dim_, d})};
  m.proj_raw_b_ = {"attacker/proj_raw/b", Tensor::zeros({d})};
  m.proj_enc_W_ = {"attacker/proj_enc/W", Tensor::zeros({m.enc_dim_, d})};
  m.proj_enc_b_ = {"attacker/proj_enc/b", Tensor::zeros({d})};
  if (labeled) {
    m.label_embed_raw_ = {"attacker/label_embed_raw",
                          Tensor::zeros({m.classes_, d})};
    m.label_embed_enc_ = {"attacker/label_embed_enc",
                          Tensor::zeros({m.classes_, d})};
  }
  m.ins_raw_.init("attacker/ins_raw", m.cfg_.depth_ins,
                  m.raw_tokens_ + (labeled ? 1 : 0), d, m.cfg_.heads, rng);
  m.ins_enc_.init("attacker/ins_enc", m.cfg_.depth_ins,
                  m.enc_tokens_ + (labeled ? 1 : 0), d, m.cfg_.heads, rng);
  m.set_.init("attacker/set", m.cfg_.depth_set, 0, d, m.cfg_.heads, rng, false);

  auto reg = m.registry();
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
  return m;
}

ReidNodes reid_loss_nodes(Graph& g, int r_raw, int r_enc,
                          const std::vector<std::pair<int32_t, int32_t>>& matches) {
  check(!matches.empty(), ErrorKind::Domain, "reid loss: empty match set");
  const int xn = l2_normalize_rows(g, r_raw);
  const int zn = l2_normalize_rows(g, r_enc);
  const int sims = matmul_nt(g, xn, zn);
  const int64_t cols = g.val(sims).dim(1);
  std::vector<int64_t> idx;
  idx.reserve(matches.size());
  for (auto [i, j] : matches) idx.push_back(i * cols + j);
  //  L = -sum log p_hat = |M| * logsumexp(sims) - sum_{M} sims
  const int lse = logsumexp_all(g, sims);
  const int matched = gather_sum(g, sims, std::move(idx));
  const int loss = sub(g, scale(g, lse, static_cast<double>(matches.size())),
                       matched);
  return {sims, loss};
}

PairScoreMatrix scores_from_sims(const Tensor& sims,
                                 std::vector<std::pair<int32_t, int32_t>> matches) {
  check(sims.rank() == 2, ErrorKind::Dimension, "scores_from_sims: rank");
  PairScoreMatrix s;
  s.rows = sims.dim(0);
  s.cols = sims.dim(1);
  s.matches = std::move(matches);
  s.scores.resize(static_cast<size_t>(sims.numel()));
  double mx = -1e300;
  for (int64_t i = 0; i < sims.numel(); ++i) {
    mx = std::max(mx, static_cast<double>(sims[i]));
  }
  double sum = 0.0;
  for (int64_t i = 0; i < sims.numel(); ++i) {
    s.scores[i] = std::exp(static_cast<double>(sims[i]) - mx);
    sum += s.scores[i];
  }
  for (auto& v : s.scores) v /= sum;
  s.validate();
  return s;
}

namespace {

Tensor gather_images(const Dataset& ds, const uint32_t* idx, int64_t count) {
  const int64_t hw = ds.images.dim(1) * ds.images.dim(2);
  Tensor out = Tensor::zeros({count, ds.images.dim(1), ds.images.dim(2)});
  for (int64_t i = 0; i < count; ++i) {
    std::copy_n(&ds.images.data[idx[i] * hw], hw, &out.data[i * hw]);
  }
  return out;
}

std::vector<std::pair<int32_t, int32_t>> diagonal_matches(int64_t b) {
  std::vector<std::pair<int32_t, int32_t>> m;
  m.reserve(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    m.emplace_back(static_cast<int32_t>(i), static_cast<int32_t>(i));
  }
  return m;
}

}  // namespace

std::vector<double> train_attacker(AttackerModel& model, const Scheme& scheme,
                                   const Dataset& data,
                                   const AttackerTrainConfig& cfg, Rng& rng) {
  const int64_t n = data.size();
  check(n >= 2, ErrorKind::Insufficient, "train_attacker: need >= 2 samples");
  Adam opt(cfg.lr);
  ParamRegistry reg = model.registry();
  opt.attach(reg);

  const LabelMode mode = model.config().label_mode;
  std::vector<double> epoch_losses;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto perm = rng.next_permutation(static_cast<uint32_t>(n));
    double total = 0;
    int64_t steps = 0;
    for (int64_t lo = 0; lo + 2 <= n; lo += cfg.batch) {
      const int64_t hi = std::min(n, lo + cfg.batch);
      const int64_t b = hi - lo;
      Tensor xb = gather_images(data, perm.data() + lo, b);
      std::vector<uint32_t> yb(b);
      for (int64_t i = 0; i < b; ++i) yb[i] = data.labels[perm[lo + i]];

      const EncoderKey key = scheme.sample_key(rng);
      Rng enc_rng = rng.split();
      const Tensor zb = scheme.encode_images(xb, key, enc_rng);
      std::vector<uint32_t> yz;
      if (mode == LabelMode::Raw) {
        yz = yb;
      } else if (mode == LabelMode::Encoded) {
        yz = scheme.encode_labels(yb, key);
      }

      Graph g;
      const int hx = model.instance_encode(
          g, patchify(xb, scheme.config().patch),
          mode == LabelMode::None ? nullptr : &yb, true, BnMode::Train, true);
      const int hz = model.instance_encode(g, zb,
                                           mode == LabelMode::None ? nullptr : &yz,
                                           false, BnMode::Train, true);
      const int rx = model.set_encode(g, hx, BnMode::Train, true);
      const int rz = model.set_encode(g, hz, BnMode::Train, true);
      const auto nodes = reid_loss_nodes(g, rx, rz, diagonal_matches(b));
      g.backward(nodes.loss);
      const double loss = g.val(nodes.loss)[0];
      check(std::isfinite(loss), ErrorKind::Numeric,
            "attacker training diverged");
      total += loss;
      ++steps;
      opt.step();
    }
    epoch_losses.push_back(total / std::max<int64_t>(1, steps));
  }
  return epoch_losses;
}

EvalResult evaluate_attacker(AttackerModel& model, const Scheme& scheme,
                             const Dataset& data, const EvalProtocol& protocol,
                             Rng& rng) {
  check(protocol.n_eval >= 1 && protocol.n_eval <= data.size(),
        ErrorKind::Insufficient,
        "evaluate_attacker: n_eval exceeds dataset size");
  const LabelMode mode = model.config().label_mode;
  const int total = protocol.data_samples * protocol.keys;

  // Derive all per-trial streams upfront so trials can run in any order.
  struct Trial {
    std::vector<uint32_t> subset;
    uint64_t key_seed_stream;
    uint64_t enc_stream;
    uint64_t meta_seed;
  };
  std::vector<Trial> trials;
  trials.reserve(static_cast<size_t>(total));
  for (int ds_i = 0; ds_i < protocol.data_samples; ++ds_i) {
    // n_eval distinct indices (partial Fisher-Yates)
    std::vector<uint32_t> pool(static_cast<size_t>(data.size()));
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<uint32_t>(i);
    for (int64_t i = 0; i < protocol.n_eval; ++i) {
      const uint64_t j = i + rng.next_below(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<size_t>(protocol.n_eval));
    for (int k = 0; k < protocol.keys; ++k) {
      Trial t;
      t.subset = pool;
      t.key_seed_stream = rng.next_u64();
      t.enc_stream = rng.next_u64();
      t.meta_seed = rng.next_u64();
      trials.push_back(std::move(t));
    }
  }

  EvalResult out;
  out.trials.resize(static_cast<size_t>(total));
  out.meta.resize(static_cast<size_t>(total));
  parallel_for(
      total,
      [&](int64_t lo, int64_t hi) {
        for (int64_t ti = lo; ti < hi; ++ti) {
          const Trial& t = trials[ti];
          const int64_t b = protocol.n_eval;
          Tensor xb = gather_images(data, t.subset.data(), b);
          std::vector<uint32_t> yb(b);
          for (int64_t i = 0; i < b; ++i) yb[i] = data.labels[t.subset[i]];

          Rng key_rng(t.key_seed_stream);
          const EncoderKey key = scheme.sample_key(key_rng);
          Rng enc_rng(t.enc_stream);
          const Tensor zb = scheme.encode_images(xb, key, enc_rng);
          std::vector<uint32_t> yz;
          if (mode == LabelMode::Raw) {
            yz = yb;
          } else if (mode == LabelMode::Encoded) {
            yz = scheme.encode_labels(yb, key);
          }

          // Eve normalizes over the candidate set she attacks; a single
          // sample falls back to running statistics.
          const BnMode eval_mode = b >= 2 ? BnMode::Stats : BnMode::Eval;
          Graph g;
          const int hx = model.instance_encode(
              g, patchify(xb, scheme.config().patch),
              mode == LabelMode::None ? nullptr : &yb, true, eval_mode, false);
          const int hz = model.instance_encode(
              g, zb, mode == LabelMode::None ? nullptr : &yz, false, eval_mode,
              false);
          const int rx = model.set_encode(g, hx, eval_mode, false);
          const int rz = model.set_encode(g, hz, eval_mode, false);
          const int xn = l2_normalize_rows(g, rx);
          const int zn = l2_normalize_rows(g, rz);
          const int sims = matmul_nt(g, xn, zn);
          out.trials[ti] = scores_from_sims(g.val(sims), diagonal_matches(b));
          out.meta[ti] = {t.meta_seed, b, key.seed};
        }
      },
      1);
  return out;
}

}  // namespace syfer
