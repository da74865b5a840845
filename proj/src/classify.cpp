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

#include "syfer/classify.hpp"

#include <algorithm>
#include <cmath>

#include "syfer/metrics.hpp"

namespace syfer {

ClassifierModel ClassifierModel::init(const ClassifierConfig& cfg,
                                      int64_t in_tokens, int64_t in_dim,
                                      int64_t classes, uint64_t seed) {
  ClassifierModel m;
  m.cfg_ = cfg;
  m.classes_ = classes;
  Rng rng(seed);
  const int64_t d = cfg.hidden;
  m.proj_W_ = {"classifier/proj/W",
               Tensor::randn({in_dim, d}, rng, 1.0 / std::sqrt(double(in_dim)))};
  m.proj_b_ = {"classifier/proj/b", Tensor::zeros({d})};
  m.stack_.init("classifier/stack", cfg.depth, in_tokens, d, cfg.heads, rng);
  m.head_W_ = {"classifier/head/W",
               Tensor::randn({d, classes}, rng, 1.0 / std::sqrt(double(d)))};
  m.head_b_ = {"classifier/head/b", Tensor::zeros({classes})};
  return m;
}

int ClassifierModel::logits_node(Graph& g, const Tensor& tokens, bool training,
                                 bool trainable, Rng& rng) {
  const int x = g.leaf(tokens);
  int h = linear(g, x, proj_W_.bind(g, trainable), proj_b_.bind(g, trainable));
  h = stack_.forward(g, h, training ? BnMode::Train : BnMode::Eval, trainable);
  h = mean_tokens(g, h);
  h = dropout(g, h, cfg_.dropout, rng, training);
  return linear(g, h, head_W_.bind(g, trainable), head_b_.bind(g, trainable));
}

Tensor ClassifierModel::predict_probs(const Tensor& tokens) {
  Graph g;
  Rng unused(0);
  const int logits = logits_node(g, tokens, false, false, unused);
  return g.val(softmax_last(g, logits));
}

ParamRegistry ClassifierModel::registry() {
  ParamRegistry reg;
  reg.add(proj_W_);
  reg.add(proj_b_);
  stack_.register_into(reg);
  reg.add(head_W_);
  reg.add(head_b_);
  return reg;
}

std::vector<Tensor> ClassifierModel::snapshot() {
  std::vector<Tensor> snap;
  ParamRegistry reg = registry();
  for (auto* p : reg.params) snap.push_back(p->value);
  for (auto& [name, bn] : reg.bn_states) {
    snap.push_back(bn->run_mean);
    snap.push_back(bn->run_var);
  }
  return snap;
}

void ClassifierModel::restore(const std::vector<Tensor>& snap) {
  ParamRegistry reg = registry();
  size_t i = 0;
  for (auto* p : reg.params) p->value = snap[i++];
  for (auto& [name, bn] : reg.bn_states) {
    bn->run_mean = snap[i++];
    bn->run_var = snap[i++];
  }
}

double binary_auc_from_probs(const Tensor& probs,
                             const std::vector<uint32_t>& labels) {
  check(probs.rank() == 2 && probs.dim(1) >= 2, ErrorKind::Dimension,
        "binary_auc: probs must be [n,k]");
  const int64_t n = probs.dim(0), k = probs.dim(1);
  std::vector<double> scores(static_cast<size_t>(n));
  std::vector<uint8_t> pos(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    scores[i] = probs[i * k + 1];  // class id 2
    pos[i] = labels[i] == 2 ? 1 : 0;
  }
  return rank_auc(scores, pos);
}

ClassifierTrainResult train_classifier(ClassifierModel& model,
                                       const EncodedDataset& train,
                                       const EncodedDataset& dev,
                                       const ClassifierConfig& cfg, Rng& rng) {
  const int64_t n = train.tokens.dim(0);
  check(n >= 2, ErrorKind::Insufficient, "train_classifier: too few samples");
  bool multi_class = false;
  for (uint32_t y : train.labels) {
    if (y != train.labels.front()) multi_class = true;
  }
  check(multi_class, ErrorKind::Domain,
        "train_classifier: training set has a single class");

  Adam opt(cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay);
  ParamRegistry reg = model.registry();
  opt.attach(reg);

  const int64_t td = train.tokens.dim(1) * train.tokens.dim(2);
  ClassifierTrainResult result;
  std::vector<Tensor> best;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto perm = rng.next_permutation(static_cast<uint32_t>(n));
    for (int64_t lo = 0; lo + 2 <= n; lo += cfg.batch) {
      const int64_t hi = std::min(n, lo + cfg.batch);
      const int64_t b = hi - lo;
      Tensor xb = Tensor::zeros({b, train.tokens.dim(1), train.tokens.dim(2)});
      std::vector<int32_t> yb(b);
      for (int64_t i = 0; i < b; ++i) {
        std::copy_n(&train.tokens.data[perm[lo + i] * td], td,
                    &xb.data[i * td]);
        yb[i] = static_cast<int32_t>(train.labels[perm[lo + i]] - 1);
      }
      Graph g;
      const int logits = model.logits_node(g, xb, true, true, rng);
      const int loss = cross_entropy(g, logits, std::move(yb));
      g.backward(loss);
      check(std::isfinite(g.val(loss)[0]), ErrorKind::Numeric,
            "classifier training diverged");
      opt.step();
    }
    const double dev_auc =
        binary_auc_from_probs(model.predict_probs(dev.tokens), dev.labels);
    result.dev_auc_per_epoch.push_back(dev_auc);
    if (result.best_epoch < 0 || dev_auc > result.best_dev_auc) {
      result.best_dev_auc = dev_auc;
      result.best_epoch = e;
      best = model.snapshot();
    }
  }
  if (!best.empty()) model.restore(best);
  return result;
}

UtilityReport run_utility(const Scheme& scheme, const Dataset& data,
                          const std::vector<int64_t>& train_idx,
                          const std::vector<int64_t>& dev_idx,
                          const std::vector<int64_t>& test_idx,
                          const ClassifierConfig& cfg, const std::string& task,
                          double fraction, Rng& rng) {
  // Alice samples one key and releases encodings of every split.
  const EncoderKey key = scheme.sample_key(rng);
  Rng enc_rng = rng.split();

  auto encode_split = [&](const std::vector<int64_t>& idx) {
    const Dataset sub = data.subset(idx);
    EncodedDataset out;
    out.tokens = scheme.encode_images(sub.images, key, enc_rng);
    out.labels = scheme.encode_labels(sub.labels, key);
    return out;
  };
  EncodedDataset train_enc = encode_split(train_idx);
  EncodedDataset dev_enc = encode_split(dev_idx);
  EncodedDataset test_enc = encode_split(test_idx);

  ClassifierModel model =
      ClassifierModel::init(cfg, scheme.out_tokens(), scheme.out_token_dim(),
                            scheme.config().classes, rng.next_u64());
  const auto train_log = train_classifier(model, train_enc, dev_enc, cfg, rng);

  // Alice decodes the predictions and scores against raw labels.
  const Tensor probs_enc = model.predict_probs(test_enc.tokens);
  const Tensor probs_raw = scheme.decode_predictions(probs_enc, key);
  const Dataset test_raw = data.subset(test_idx);
  UtilityReport rep;
  rep.scheme = scheme.name();
  rep.task = task;
  rep.fraction = fraction;
  rep.test_auc = binary_auc_from_probs(probs_raw, test_raw.labels);
  rep.dev_auc = train_log.best_dev_auc;
  return rep;
}

std::vector<UtilityReport> learning_curve(
    const Scheme& scheme, const Dataset& data,
    const std::vector<int64_t>& train_idx, const std::vector<int64_t>& dev_idx,
    const std::vector<int64_t>& test_idx, const std::vector<double>& fractions,
    const ClassifierConfig& cfg, const std::string& task, Rng& rng) {
  for (double f : fractions) {
    check(f > 0.0 && f <= 1.0, ErrorKind::Config,
          "learning_curve: fractions must lie in (0,1]");
  }
  // one shuffle; every fraction takes a prefix, so subsets nest
  std::vector<int64_t> shuffled = train_idx;
  const auto perm = rng.next_permutation(static_cast<uint32_t>(shuffled.size()));
  for (size_t i = 0; i < shuffled.size(); ++i) shuffled[i] = train_idx[perm[i]];

  std::vector<UtilityReport> reports;
  for (double f : fractions) {
    const int64_t count = std::max<int64_t>(
        1, static_cast<int64_t>(f * static_cast<double>(shuffled.size())));
    std::vector<int64_t> sub(shuffled.begin(), shuffled.begin() + count);
    int64_t pos = 0, neg = 0;
    for (int64_t i : sub) (data.labels[i] == 2 ? pos : neg)++;
    check(pos >= 2 && neg >= 2, ErrorKind::Domain,
          "learning_curve: fraction leaves fewer than 2 samples per class");
    Rng run_rng = rng.split(static_cast<uint64_t>(count));
    reports.push_back(run_utility(scheme, data, sub, dev_idx, test_idx, cfg,
                                  task, f, run_rng));
  }
  return reports;
}

}  // namespace syfer
