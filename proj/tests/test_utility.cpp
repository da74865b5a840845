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
#include "syfer/classify.hpp"
#include "syfer/metrics.hpp"
#include "syfer/syfer.hpp"

using namespace syfer;

namespace {

SchemeConfig desk_config() {
  SchemeConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.patch = 8;
  return cfg;
}

Dataset blob_dataset(int64_t n, uint64_t seed) {
  SyntheticSpec spec;
  spec.n = n;
  spec.seed = seed;
  return generate_synthetic(spec);
}

ClassifierConfig quick_classifier(int epochs) {
  ClassifierConfig cc;
  cc.hidden = 32;
  cc.depth = 1;
  cc.epochs = epochs;
  cc.batch = 32;
  cc.dropout = 0.0;
  return cc;
}

}  // namespace

TEST_CASE("raw classifier separates the synthetic task") {
  const Dataset ds = blob_dataset(512, 101);
  Rng split_rng(1);
  const auto splits = split_dataset(ds, {0.6, 0.2, 0.2}, split_rng);
  auto scheme = make_identity_scheme(desk_config());
  Rng rng(2);
  const auto rep =
      run_utility(*scheme, ds, splits.train, splits.dev, splits.test,
                  quick_classifier(12), "bright-blob-presence", 1.0, rng);
  CHECK(rep.test_auc >= 0.95);
}

TEST_CASE("utility run is deterministic given the seed") {
  const Dataset ds = blob_dataset(128, 102);
  Rng split_rng(3);
  const auto splits = split_dataset(ds, {0.6, 0.2, 0.2}, split_rng);
  auto scheme = make_syfer_random(desk_config(), 11);
  auto run = [&] {
    Rng rng(4);
    return run_utility(*scheme, ds, splits.train, splits.dev, splits.test,
                       quick_classifier(3), "bright-blob-presence", 1.0, rng);
  };
  const auto a = run(), b = run();
  CHECK(a.test_auc == b.test_auc);
  CHECK(a.dev_auc == b.dev_auc);
}

TEST_CASE("dev selection keeps the best epoch") {
  const Dataset ds = blob_dataset(128, 103);
  Rng split_rng(5);
  const auto splits = split_dataset(ds, {0.6, 0.2, 0.2}, split_rng);
  auto scheme = make_identity_scheme(desk_config());
  const Dataset train = ds.subset(splits.train);
  const Dataset dev = ds.subset(splits.dev);
  Rng rng(6);
  const auto key = scheme->sample_key(rng);
  Rng enc_rng(7);
  EncodedDataset train_enc{scheme->encode_images(train.images, key, enc_rng),
                           scheme->encode_labels(train.labels, key)};
  EncodedDataset dev_enc{scheme->encode_images(dev.images, key, enc_rng),
                         scheme->encode_labels(dev.labels, key)};
  ClassifierModel model = ClassifierModel::init(
      quick_classifier(8), scheme->out_tokens(), scheme->out_token_dim(), 2, 8);
  const auto result =
      train_classifier(model, train_enc, dev_enc, quick_classifier(8), rng);
  REQUIRE(!result.dev_auc_per_epoch.empty());
  double best = result.dev_auc_per_epoch[0];
  for (double v : result.dev_auc_per_epoch) best = std::max(best, v);
  CHECK(result.best_dev_auc == doctest::Approx(best));
  // restored model reproduces the best-epoch dev AUC
  const double again =
      binary_auc_from_probs(model.predict_probs(dev_enc.tokens), dev_enc.labels);
  CHECK(again == doctest::Approx(result.best_dev_auc).epsilon(1e-6));
}

TEST_CASE("single-class training set is rejected") {
  auto scheme = make_identity_scheme(desk_config());
  const Dataset ds = blob_dataset(32, 104);
  EncodedDataset train;
  Rng rng(8);
  const auto key = scheme->sample_key(rng);
  Rng enc_rng(9);
  train.tokens = scheme->encode_images(ds.images, key, enc_rng);
  train.labels.assign(ds.size(), 1);  // all one class
  EncodedDataset dev = train;
  ClassifierModel model = ClassifierModel::init(
      quick_classifier(2), scheme->out_tokens(), scheme->out_token_dim(), 2, 9);
  CHECK_THROWS_AS(
      train_classifier(model, train, dev, quick_classifier(2), rng), Error);
}

TEST_CASE("prediction decoding: swap permutation reverses ranking exactly") {
  // AUC(decoded scores) = 1 - AUC(encoded-class-2 scores) under a k=2 swap
  LabelPermutation swap;
  swap.fwd = {2, 1};
  Rng rng(10);
  const int64_t n = 400;
  Tensor probs = Tensor::zeros({n, 2});
  std::vector<uint32_t> raw_labels(n);
  for (int64_t i = 0; i < n; ++i) {
    // well-separated scores so rank reversal is exact
    const double p2 = (i + 0.5) / n;
    probs[i * 2] = static_cast<float>(1.0 - p2);
    probs[i * 2 + 1] = static_cast<float>(p2);
    raw_labels[i] = rng.next_uniform() < 0.5 ? 1 : 2;
  }
  // force both classes present
  raw_labels[0] = 1;
  raw_labels[1] = 2;

  const double auc_enc = binary_auc_from_probs(probs, raw_labels);
  const Tensor decoded = swap.decode_predictions(probs);
  const double auc_dec = binary_auc_from_probs(decoded, raw_labels);
  CHECK(std::fabs((1.0 - auc_enc) - auc_dec) <= 1e-9);
}

TEST_CASE("label pipeline equivariance with a frozen classifier") {
  // With fixed weights, the confusion under (Z, pi(y)) decoded through
  // pi^{-1} equals the confusion computed directly in encoded space.
  const auto cfg = desk_config();
  auto scheme = make_syfer_random(cfg, 21);
  const Dataset ds = blob_dataset(64, 105);
  Rng rng(11);
  EncoderKey key = scheme->sample_key(rng);
  // force the swap permutation for a sharp test
  key.label_perm.fwd = {2, 1};
  Rng enc_rng(12);
  const Tensor z = scheme->encode_images(ds.images, key, enc_rng);

  ClassifierModel model = ClassifierModel::init(
      quick_classifier(1), scheme->out_tokens(), scheme->out_token_dim(), 2, 13);
  const Tensor probs_enc = model.predict_probs(z);
  const Tensor probs_raw = scheme->decode_predictions(probs_enc, key);

  const auto enc_labels = scheme->encode_labels(ds.labels, key);
  int64_t conf_raw[2][2] = {{0, 0}, {0, 0}};
  int64_t conf_enc[2][2] = {{0, 0}, {0, 0}};
  for (int64_t i = 0; i < ds.size(); ++i) {
    const uint32_t pred_enc = probs_enc[i * 2] >= probs_enc[i * 2 + 1] ? 1 : 2;
    const uint32_t pred_raw = probs_raw[i * 2] >= probs_raw[i * 2 + 1] ? 1 : 2;
    // decoding the encoded-space prediction must equal the raw-space one
    CHECK(key.label_perm.decode(pred_enc) == pred_raw);
    conf_raw[ds.labels[i] - 1][pred_raw - 1]++;
    conf_enc[enc_labels[i] - 1][pred_enc - 1]++;
  }
  // the decoded confusion matrix is the permutation image of the encoded one
  for (uint32_t a = 1; a <= 2; ++a) {
    for (uint32_t b = 1; b <= 2; ++b) {
      CHECK(conf_raw[a - 1][b - 1] ==
            conf_enc[key.label_perm.encode(a) - 1][key.label_perm.encode(b) - 1]);
    }
  }
}

TEST_CASE("learning curve: fractions validated, trend on raw data") {
  const Dataset ds = blob_dataset(384, 106);
  Rng split_rng(14);
  const auto splits = split_dataset(ds, {0.6, 0.2, 0.2}, split_rng);
  auto scheme = make_identity_scheme(desk_config());

  SUBCASE("bad fraction rejected") {
    Rng rng(15);
    CHECK_THROWS_AS(
        learning_curve(*scheme, ds, splits.train, splits.dev, splits.test,
                       {0.5, 1.5}, quick_classifier(1), "t", rng),
        Error);
  }
  SUBCASE("auc does not degrade with more data (Spearman over seeds >= 0)") {
    const std::vector<double> fractions = {0.25, 0.5, 1.0};
    double rho_sum = 0;
    for (uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(20 + seed);
      const auto reports =
          learning_curve(*scheme, ds, splits.train, splits.dev, splits.test,
                         fractions, quick_classifier(6),
                         "bright-blob-presence", rng);
      REQUIRE(reports.size() == 3);
      // Spearman of (fraction rank, auc rank) for 3 points
      std::vector<double> aucs;
      for (const auto& r : reports) aucs.push_back(r.test_auc);
      double sum_d2 = 0;
      for (int i = 0; i < 3; ++i) {
        int rank = 0;
        for (int j = 0; j < 3; ++j) {
          if (aucs[j] < aucs[i] || (aucs[j] == aucs[i] && j < i)) ++rank;
        }
        const double d = rank - i;
        sum_d2 += d * d;
      }
      rho_sum += 1.0 - 6.0 * sum_d2 / (3.0 * 8.0);
    }
    CHECK(rho_sum / 3.0 >= 0.0);
  }
}
