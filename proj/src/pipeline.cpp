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

#include "syfer/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "syfer/attacker.hpp"
#include "syfer/classify.hpp"
#include "syfer/metrics.hpp"
#include "syfer/sha256.hpp"
#include "syfer/syfer.hpp"
#include "syfer/train.hpp"

namespace syfer {

using nlohmann::json;
namespace fs = std::filesystem;

// --- ConfigView ---------------------------------------------------------------

struct ConfigView::Impl {
  json j;
  json resolved = json::object();
  std::set<std::string> consumed;
  std::string scope;
};

ConfigView::ConfigView(const std::string& json_text, std::string scope)
    : impl_(std::make_unique<Impl>()) {
  impl_->scope = std::move(scope);
  if (json_text.empty()) {
    impl_->j = json::object();
    return;
  }
  try {
    impl_->j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config,
         "config is not valid JSON: " + std::string(e.what()));
  }
  check(impl_->j.is_object(), ErrorKind::Config,
        "config must be a JSON object");
}

ConfigView::~ConfigView() = default;
ConfigView::ConfigView(ConfigView&&) noexcept = default;

namespace {
[[noreturn]] void bad_field(const std::string& scope, const std::string& key,
                            const std::string& why) {
  const std::string where = scope.empty() ? key : scope + "." + key;
  fail(ErrorKind::Config, "config field '" + where + "': " + why);
}
}  // namespace

int64_t ConfigView::get_int(const std::string& key, int64_t def) {
  impl_->consumed.insert(key);
  if (!impl_->j.contains(key)) {
    impl_->resolved[key] = def;
    return def;
  }
  if (!impl_->j[key].is_number_integer()) bad_field(impl_->scope, key, "expected integer");
  const int64_t v = impl_->j[key].get<int64_t>();
  impl_->resolved[key] = v;
  return v;
}

int64_t ConfigView::require_int(const std::string& key) {
  if (!impl_->j.contains(key)) bad_field(impl_->scope, key, "required");
  return get_int(key, 0);
}

double ConfigView::get_double(const std::string& key, double def) {
  impl_->consumed.insert(key);
  if (!impl_->j.contains(key)) {
    impl_->resolved[key] = def;
    return def;
  }
  if (!impl_->j[key].is_number()) bad_field(impl_->scope, key, "expected number");
  const double v = impl_->j[key].get<double>();
  impl_->resolved[key] = v;
  return v;
}

uint64_t ConfigView::get_seed(const std::string& key, uint64_t def) {
  impl_->consumed.insert(key);
  if (!impl_->j.contains(key)) {
    impl_->resolved[key] = def;
    return def;
  }
  if (!impl_->j[key].is_number_unsigned() && !impl_->j[key].is_number_integer()) {
    bad_field(impl_->scope, key, "expected unsigned integer");
  }
  const uint64_t v = impl_->j[key].get<uint64_t>();
  impl_->resolved[key] = v;
  return v;
}

std::string ConfigView::get_string(const std::string& key,
                                   const std::string& def) {
  impl_->consumed.insert(key);
  if (!impl_->j.contains(key)) {
    impl_->resolved[key] = def;
    return def;
  }
  if (!impl_->j[key].is_string()) bad_field(impl_->scope, key, "expected string");
  const std::string v = impl_->j[key].get<std::string>();
  impl_->resolved[key] = v;
  return v;
}

std::string ConfigView::require_string(const std::string& key) {
  if (!impl_->j.contains(key)) bad_field(impl_->scope, key, "required");
  return get_string(key, "");
}

bool ConfigView::has(const std::string& key) const {
  return impl_->j.contains(key);
}

std::vector<double> ConfigView::get_double_list(const std::string& key,
                                                std::vector<double> def) {
  impl_->consumed.insert(key);
  if (!impl_->j.contains(key)) {
    impl_->resolved[key] = def;
    return def;
  }
  if (!impl_->j[key].is_array()) bad_field(impl_->scope, key, "expected array");
  std::vector<double> v;
  for (const auto& x : impl_->j[key]) {
    if (!x.is_number()) bad_field(impl_->scope, key, "expected numbers");
    v.push_back(x.get<double>());
  }
  impl_->resolved[key] = v;
  return v;
}

std::vector<std::string> ConfigView::get_string_list(const std::string& key) {
  impl_->consumed.insert(key);
  std::vector<std::string> v;
  if (!impl_->j.contains(key)) {
    impl_->resolved[key] = v;
    return v;
  }
  if (!impl_->j[key].is_array()) bad_field(impl_->scope, key, "expected array");
  for (const auto& x : impl_->j[key]) {
    if (!x.is_string()) bad_field(impl_->scope, key, "expected strings");
    v.push_back(x.get<std::string>());
  }
  impl_->resolved[key] = v;
  return v;
}

ConfigView ConfigView::sub(const std::string& key) {
  impl_->consumed.insert(key);
  std::string text = "{}";
  if (impl_->j.contains(key)) {
    if (!impl_->j[key].is_object()) bad_field(impl_->scope, key, "expected object");
    text = impl_->j[key].dump();
  }
  return ConfigView(text,
                    impl_->scope.empty() ? key : impl_->scope + "." + key);
}

void ConfigView::finish() {
  for (auto it = impl_->j.begin(); it != impl_->j.end(); ++it) {
    if (!impl_->consumed.count(it.key())) {
      bad_field(impl_->scope, it.key(), "unknown field");
    }
  }
}

std::string ConfigView::resolved_json() const { return impl_->resolved.dump(); }

// --- dataset container ---------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& path) {
  TensorStore ts;
  ts.put_f32("data/images", ds.images);
  ts.put_u32("data/labels", ds.labels,
             {static_cast<int64_t>(ds.labels.size())});
  ts.save(path);
}

Dataset load_dataset(const std::string& path) {
  TensorStore ts = TensorStore::load(path);
  Dataset ds;
  ds.images = ts.get_f32("data/images");
  check(ds.images.rank() == 3, ErrorKind::Data, "dataset: images must be [n,H,W]");
  ds.labels = ts.get_u32("data/labels");
  check(static_cast<int64_t>(ds.labels.size()) == ds.images.dim(0),
        ErrorKind::Data, "dataset: label count mismatch");
  return ds;
}

// --- scheme factory -------------------------------------------------------------

namespace {

SchemeConfig scheme_config_from(ConfigView& cfg, int64_t height, int64_t width) {
  SchemeConfig sc;
  sc.height = height;
  sc.width = width;
  sc.patch = cfg.get_int("patch", 8);
  sc.blocks = cfg.get_int("blocks", 3);
  sc.hidden = cfg.get_int("hidden", 64);
  sc.classes = cfg.get_int("classes", 2);
  sc.heads = static_cast<int>(cfg.get_int("heads", 4));
  sc.block_depth = static_cast<int>(cfg.get_int("block_depth", 1));
  return sc;
}

void require_file(const std::string& path, const std::string& what) {
  check(fs::exists(path), ErrorKind::Data,
        what + " not found: '" + path + "'");
}

}  // namespace

std::unique_ptr<Scheme> make_scheme_from_config(ConfigView& cfg,
                                                int64_t height, int64_t width) {
  const std::string id = cfg.get_string("id", "identity");
  SchemeConfig sc = scheme_config_from(cfg, height, width);
  const double b = cfg.get_double("b", 0.0);
  const uint64_t init_seed = cfg.get_seed("init_seed", 7);
  const std::string checkpoint = cfg.get_string("checkpoint", "");
  cfg.finish();

  if (id == "identity") return make_identity_scheme(sc);
  if (id == "dauntless") return make_dauntless(sc);
  if (id == "instahide") return make_instahide(sc);
  if (id == "dp-simple") return make_dp_simple(sc, b);
  if (id == "dp-image") {
    check(!checkpoint.empty(), ErrorKind::Config,
          "dp-image scheme requires 'checkpoint'");
    require_file(checkpoint, "dp-image checkpoint");
    auto ae = std::make_shared<DpImageAutoencoder>(
        DpImageAutoencoder::load(checkpoint));
    return make_dp_image(sc, std::move(ae), b);
  }
  if (id == "syfer-random") return make_syfer_random(sc, init_seed);
  if (id == "syfer") {
    check(!checkpoint.empty(), ErrorKind::Config,
          "syfer scheme requires 'checkpoint'");
    require_file(checkpoint, "syfer checkpoint");
    return std::make_unique<SyferScheme>(SyferScheme::load(checkpoint, "syfer"));
  }
  fail(ErrorKind::Config, "unknown scheme id '" + id + "'");
}

// --- shared helpers --------------------------------------------------------------

namespace {

void ensure_out_dir(const std::string& out_dir) {
  check(!out_dir.empty(), ErrorKind::Config, "output directory is required");
  fs::create_directories(out_dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorKind::Data, "cannot open '" + path + "' for writing");
  f << text;
  check(f.good(), ErrorKind::Data, "short write to '" + path + "'");
}

void write_resolved_config(const std::string& out_dir, const std::string& name,
                           const std::string& resolved) {
  write_text(out_dir + "/" + name + ".config.json", resolved + "\n");
}

json input_hash(const std::string& path) {
  return json{{"path", path}, {"sha256", sha256_file(path)}};
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

json privacy_report_json(const PrivacyReport& rep, const std::string& scheme,
                         const std::string& label_mode, const json& inputs) {
  json g = {{"mean", rep.guesswork_mean},
            {"ci", {rep.guesswork_ci_low, rep.guesswork_ci_high}},
            {"per_trial", rep.guesswork_per_trial}};
  json a = {{"mean", rep.auc_mean},
            {"ci", {rep.auc_ci_low, rep.auc_ci_high}},
            {"per_trial", rep.auc_per_trial}};
  json meta = json::array();
  for (const auto& m : rep.trial_meta) {
    meta.push_back({{"seed", m.seed}, {"n", m.n}, {"key_id", m.key_id}});
  }
  return json{{"kind", "privacy_report"},
              {"scheme", scheme},
              {"label_mode", label_mode},
              {"n", rep.n_eval},
              {"trials", rep.guesswork_per_trial.size()},
              {"guesswork", g},
              {"reid_auc", a},
              {"trial_meta", meta},
              {"inputs", inputs}};
}

json utility_report_json(const UtilityReport& rep, const json& inputs) {
  return json{{"kind", "utility_report"}, {"scheme", rep.scheme},
              {"task", rep.task},         {"fraction", rep.fraction},
              {"seed", rep.seed},         {"test_auc", rep.test_auc},
              {"dev_auc", rep.dev_auc},   {"inputs", inputs}};
}

}  // namespace

// --- commands --------------------------------------------------------------------

void cmd_gen_data(const std::string& config_json, const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  SyntheticSpec spec;
  spec.seed = cfg.get_seed("seed", 1);
  spec.n = cfg.get_int("n", 256);
  spec.height = cfg.get_int("height", 32);
  spec.width = cfg.get_int("width", 32);
  spec.task_rule = cfg.get_string("task_rule", "bright-blob-presence");
  cfg.finish();

  ensure_out_dir(out_dir);
  const Dataset ds = generate_synthetic(spec);
  save_dataset(ds, out_dir + "/dataset.tc");
  write_resolved_config(out_dir, "gen-data", cfg.resolved_json());
}

void cmd_train_syfer(const std::string& config_json,
                     const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");

  ConfigView scheme_cfg = cfg.sub("scheme");
  ConfigView attacker_cfg = cfg.sub("attacker");
  SyferTrainConfig tc;
  tc.steps = cfg.get_int("steps", 2000);
  tc.batch = cfg.get_int("batch", 128);
  tc.lr = cfg.get_double("lr", 1e-3);
  tc.lambda_rec = cfg.get_double("lambda_rec", 20.0);
  tc.lambda_reid = cfg.get_double("lambda_reid", 2.0);
  tc.decoders = static_cast<int>(cfg.get_int("decoders", 1));
  tc.checkpoint_every = cfg.get_int("checkpoint_every", 0);
  const std::string resume = cfg.get_string("resume", "");
  cfg.finish();

  require_file(dataset_path, "dataset");
  const Dataset ds = load_dataset(dataset_path);
  SchemeConfig sc = scheme_config_from(scheme_cfg, ds.images.dim(1),
                                       ds.images.dim(2));
  scheme_cfg.finish();
  tc.attacker.hidden = attacker_cfg.get_int("hidden", 64);
  tc.attacker.heads = static_cast<int>(attacker_cfg.get_int("heads", 4));
  tc.attacker.depth_ins = static_cast<int>(attacker_cfg.get_int("depth_ins", 3));
  tc.attacker.depth_set = static_cast<int>(attacker_cfg.get_int("depth_set", 1));
  attacker_cfg.finish();

  ensure_out_dir(out_dir);
  if (tc.checkpoint_every > 0) {
    tc.checkpoint_path = out_dir + "/train_state.tc";
  }
  Rng rng(seed);
  SyferScheme scheme = SyferScheme::random_init(sc, rng.next_u64(), "syfer");
  const auto result =
      resume.empty() ? train_syfer(scheme, ds, tc, rng, out_dir)
                     : resume_train_syfer(scheme, resume, ds, tc, out_dir);
  scheme.save(out_dir + "/syfer.tc");

  std::ostringstream log;
  for (const auto& e : result.log) {
    log << json{{"step", e.step},
                {"l_reid", e.l_reid},
                {"l_rec", e.l_rec},
                {"l_syfer", e.l_syfer},
                {"which_updated", e.updated_estimators ? "estimators" : "obfuscator"},
                {"batch_key", e.batch_key_id}}
               .dump()
        << "\n";
  }
  write_text(out_dir + "/train_log.jsonl", log.str());
  write_resolved_config(out_dir, "train-syfer", cfg.resolved_json());
}

void cmd_train_dp_image(const std::string& config_json,
                        const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");
  const int epochs = static_cast<int>(cfg.get_int("epochs", 30));
  const int64_t batch = cfg.get_int("batch", 64);
  const double lr = cfg.get_double("lr", 1e-3);
  const double heldout_fraction = cfg.get_double("heldout_fraction", 0.2);
  cfg.finish();

  require_file(dataset_path, "dataset");
  const Dataset ds = load_dataset(dataset_path);
  check(ds.images.dim(1) == ds.images.dim(2), ErrorKind::Config,
        "dp-image: images must be square");

  Rng rng(seed);
  const int64_t n_held =
      std::max<int64_t>(1, static_cast<int64_t>(heldout_fraction * ds.size()));
  std::vector<int64_t> idx(ds.size());
  for (int64_t i = 0; i < ds.size(); ++i) idx[i] = i;
  const Dataset heldout = ds.subset({idx.begin(), idx.begin() + n_held});
  const Dataset train = ds.subset({idx.begin() + n_held, idx.end()});

  DpImageAutoencoder ae =
      DpImageAutoencoder::init(ds.images.dim(1), rng.next_u64());
  const auto log = train_dp_image(ae, train, heldout, epochs, batch, lr, rng);

  ensure_out_dir(out_dir);
  ae.save(out_dir + "/dp_image.tc");
  json jlog = {{"init_heldout_mse", log.init_heldout_mse},
               {"final_heldout_mse", log.final_heldout_mse},
               {"train_mse_per_epoch", log.train_mse_per_epoch}};
  write_text(out_dir + "/dp_image_log.json", jlog.dump(2) + "\n");
  write_resolved_config(out_dir, "train-dp-image", cfg.resolved_json());
}

void cmd_encode(const std::string& config_json, const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");
  ConfigView scheme_cfg = cfg.sub("scheme");
  cfg.finish();

  require_file(dataset_path, "dataset");
  const Dataset ds = load_dataset(dataset_path);
  auto scheme = make_scheme_from_config(scheme_cfg, ds.images.dim(1),
                                        ds.images.dim(2));

  Rng rng(seed);
  const EncoderKey key = scheme->sample_key(rng);
  Rng enc_rng = rng.split();
  const Tensor tokens = scheme->encode_images(ds.images, key, enc_rng);
  const auto enc_labels = scheme->encode_labels(ds.labels, key);

  ensure_out_dir(out_dir);
  TensorStore enc;
  enc.put_f32("data/tokens", tokens);
  enc.put_u32("data/labels", enc_labels,
              {static_cast<int64_t>(enc_labels.size())});
  enc.save(out_dir + "/encoded.tc");
  key.to_store().save(out_dir + "/key.tc");
  write_resolved_config(out_dir, "encode", cfg.resolved_json());
}

void cmd_train_attacker(const std::string& config_json,
                        const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");
  ConfigView scheme_cfg = cfg.sub("scheme");
  ConfigView att_cfg = cfg.sub("attacker");
  AttackerTrainConfig tc;
  tc.epochs = static_cast<int>(cfg.get_int("epochs", 200));
  tc.batch = cfg.get_int("batch", 64);
  tc.lr = cfg.get_double("lr", 1e-3);
  const std::string label_mode = cfg.get_string("label_mode", "none");
  cfg.finish();

  require_file(dataset_path, "dataset");
  const Dataset ds = load_dataset(dataset_path);
  auto scheme = make_scheme_from_config(scheme_cfg, ds.images.dim(1),
                                        ds.images.dim(2));
  AttackerConfig ac;
  ac.hidden = att_cfg.get_int("hidden", 64);
  ac.heads = static_cast<int>(att_cfg.get_int("heads", 4));
  ac.depth_ins = static_cast<int>(att_cfg.get_int("depth_ins", 3));
  ac.depth_set = static_cast<int>(att_cfg.get_int("depth_set", 1));
  ac.label_mode = label_mode_from_string(label_mode);
  att_cfg.finish();

  Rng rng(seed);
  AttackerModel model = AttackerModel::init(ac, *scheme, rng.next_u64());
  const auto losses = train_attacker(model, *scheme, ds, tc, rng);

  ensure_out_dir(out_dir);
  model.save(out_dir + "/attacker.tc");
  write_text(out_dir + "/attacker_log.json",
             json{{"loss_per_epoch", losses}}.dump(2) + "\n");
  write_resolved_config(out_dir, "train-attacker", cfg.resolved_json());
}

void cmd_attack(const std::string& config_json, const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");
  ConfigView scheme_cfg = cfg.sub("scheme");
  const std::string attacker_path = cfg.get_string("attacker", "");
  EvalProtocol protocol;
  protocol.n_eval = cfg.get_int("n_eval", 64);
  protocol.data_samples = static_cast<int>(cfg.get_int("data_samples", 3));
  protocol.keys = static_cast<int>(cfg.get_int("keys", 3));
  cfg.finish();

  require_file(dataset_path, "dataset");
  const Dataset ds = load_dataset(dataset_path);

  json inputs = json::object();
  inputs["dataset"] = input_hash(dataset_path);

  const std::string scheme_id = scheme_cfg.get_string("id", "identity");
  PrivacyReport rep;
  std::string label_mode = "none";
  if (scheme_id == "uniform-null") {
    scheme_cfg.finish();
    // null attack: scores forced uniform over all pairs
    std::vector<PairScoreMatrix> trials;
    const int total = protocol.data_samples * protocol.keys;
    for (int i = 0; i < total; ++i) {
      trials.push_back(
          PairScoreMatrix::uniform(protocol.n_eval, protocol.n_eval));
    }
    rep = aggregate_trials(trials);
    rep.scheme = "uniform-null";
  } else {
    // re-parse the scheme spec (id was consumed above)
    auto scheme = make_scheme_from_config(scheme_cfg, ds.images.dim(1),
                                          ds.images.dim(2));
    check(!attacker_path.empty(), ErrorKind::Config,
          "attack requires 'attacker' (checkpoint path) for this scheme");
    require_file(attacker_path, "attacker checkpoint");
    inputs["attacker"] = input_hash(attacker_path);
    AttackerModel model = AttackerModel::load(attacker_path);
    label_mode = label_mode_to_string(model.config().label_mode);
    Rng rng(seed);
    auto eval = evaluate_attacker(model, *scheme, ds, protocol, rng);
    rep = aggregate_trials(eval.trials);
    rep.trial_meta = eval.meta;
    rep.scheme = scheme->name();
  }

  ensure_out_dir(out_dir);
  write_text(out_dir + "/privacy_report.json",
             privacy_report_json(rep, rep.scheme, label_mode, inputs).dump(2) +
                 "\n");
  write_resolved_config(out_dir, "attack", cfg.resolved_json());
}

namespace {

struct SplitsAndTask {
  Dataset ds;
  SplitIndices splits;
  std::string task;
};

SplitsAndTask load_splits(const std::string& dataset_path,
                          const std::vector<double>& ratios, uint64_t seed,
                          const std::string& task) {
  SplitsAndTask out;
  out.ds = load_dataset(dataset_path);
  Rng split_rng(seed ^ 0x5eedf00dULL);
  out.splits = split_dataset(out.ds, ratios, split_rng);
  out.task = task;
  return out;
}

ClassifierConfig classifier_config_from(ConfigView& ccfg) {
  ClassifierConfig cc;
  cc.hidden = ccfg.get_int("hidden", 64);
  cc.heads = static_cast<int>(ccfg.get_int("heads", 4));
  cc.depth = static_cast<int>(ccfg.get_int("depth", 2));
  cc.dropout = ccfg.get_double("dropout", 0.1);
  cc.weight_decay = ccfg.get_double("weight_decay", 0.0);
  cc.epochs = static_cast<int>(ccfg.get_int("epochs", 30));
  cc.batch = ccfg.get_int("batch", 64);
  cc.lr = ccfg.get_double("lr", 1e-3);
  ccfg.finish();
  return cc;
}

}  // namespace

void cmd_utility(const std::string& config_json, const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");
  ConfigView scheme_cfg = cfg.sub("scheme");
  ConfigView ccfg = cfg.sub("classifier");
  const double fraction = cfg.get_double("fraction", 1.0);
  const auto ratios = cfg.get_double_list("ratios", {0.6, 0.2, 0.2});
  const std::string task = cfg.get_string("task", "bright-blob-presence");
  cfg.finish();

  check(fraction > 0.0 && fraction <= 1.0, ErrorKind::Config,
        "fraction must lie in (0,1]");
  require_file(dataset_path, "dataset");
  auto st = load_splits(dataset_path, ratios, seed, task);
  auto scheme = make_scheme_from_config(scheme_cfg, st.ds.images.dim(1),
                                        st.ds.images.dim(2));
  const ClassifierConfig cc = classifier_config_from(ccfg);

  Rng rng(seed);
  std::vector<int64_t> train_idx = st.splits.train;
  if (fraction < 1.0) {
    const auto perm =
        rng.next_permutation(static_cast<uint32_t>(train_idx.size()));
    std::vector<int64_t> shuffled(train_idx.size());
    for (size_t i = 0; i < train_idx.size(); ++i) {
      shuffled[i] = train_idx[perm[i]];
    }
    const int64_t count = std::max<int64_t>(
        2, static_cast<int64_t>(fraction * double(shuffled.size())));
    train_idx.assign(shuffled.begin(), shuffled.begin() + count);
  }
  UtilityReport rep = run_utility(*scheme, st.ds, train_idx, st.splits.dev,
                                  st.splits.test, cc, st.task, fraction, rng);
  rep.seed = seed;

  json inputs = json::object();
  inputs["dataset"] = input_hash(dataset_path);
  ensure_out_dir(out_dir);
  write_text(out_dir + "/utility_report.json",
             utility_report_json(rep, inputs).dump(2) + "\n");
  write_resolved_config(out_dir, "utility", cfg.resolved_json());
}

void cmd_learning_curve(const std::string& config_json,
                        const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const uint64_t seed = cfg.get_seed("seed", 1);
  const std::string dataset_path = cfg.require_string("dataset");
  ConfigView scheme_cfg = cfg.sub("scheme");
  ConfigView ccfg = cfg.sub("classifier");
  const auto fractions = cfg.get_double_list(
      "fractions", {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0});
  const auto ratios = cfg.get_double_list("ratios", {0.6, 0.2, 0.2});
  const std::string task = cfg.get_string("task", "bright-blob-presence");
  cfg.finish();

  require_file(dataset_path, "dataset");
  auto st = load_splits(dataset_path, ratios, seed, task);
  auto scheme = make_scheme_from_config(scheme_cfg, st.ds.images.dim(1),
                                        st.ds.images.dim(2));
  const ClassifierConfig cc = classifier_config_from(ccfg);

  Rng rng(seed);
  const auto reports =
      learning_curve(*scheme, st.ds, st.splits.train, st.splits.dev,
                     st.splits.test, fractions, cc, st.task, rng);

  json inputs = json::object();
  inputs["dataset"] = input_hash(dataset_path);
  json arr = json::array();
  for (auto rep : reports) {
    rep.seed = seed;
    arr.push_back(utility_report_json(rep, inputs));
  }
  ensure_out_dir(out_dir);
  write_text(out_dir + "/learning_curve.json",
             json{{"kind", "learning_curve"}, {"reports", arr}}.dump(2) + "\n");
  write_resolved_config(out_dir, "learning-curve", cfg.resolved_json());
}

void cmd_export_images(const std::string& config_json,
                       const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const std::string input = cfg.require_string("input");
  const std::string entry = cfg.get_string("entry", "data/images");
  const int64_t count = cfg.get_int("count", 0);  // 0 = all
  // set both to render a token grid [n,t,p*p] back to pixel space
  const int64_t height = cfg.get_int("height", 0);
  const int64_t width = cfg.get_int("width", 0);
  cfg.finish();

  require_file(input, "input container");
  TensorStore ts = TensorStore::load(input);
  Tensor images = ts.get_f32(entry);
  check(images.rank() == 3, ErrorKind::Data,
        "export-images: entry '" + entry + "' must be [n,H,W] or [n,t,p*p]");
  if (height > 0 && width > 0) {
    images = unpatchify(images, height, width);
  }
  if (count > 0 && count < images.dim(0)) {
    Tensor head = Tensor::zeros({count, images.dim(1), images.dim(2)});
    std::copy_n(images.data.data(), head.numel(), head.data.data());
    images = std::move(head);
  }
  ensure_out_dir(out_dir);
  export_images(images, out_dir + "/images");
  write_resolved_config(out_dir, "export-images", cfg.resolved_json());
}

namespace {

std::string fmt_ci(double mean, double lo, double hi, int prec) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << mean << " (" << lo << ", " << hi << ")";
  return os.str();
}

}  // namespace

std::string cmd_report(const std::string& config_json,
                       const std::string& out_dir) {
  ConfigView cfg(config_json, "");
  const auto privacy_paths = cfg.get_string_list("privacy");
  const auto utility_paths = cfg.get_string_list("utility");
  cfg.finish();

  std::ostringstream out;
  if (!privacy_paths.empty()) {
    out << "privacy (higher guesswork / lower reid-auc = more private)\n";
    out << "---------------------------------------------------------------\n";
    char line[256];
    std::snprintf(line, sizeof(line), "%-18s %-28s %-28s\n", "encoding",
                  "guesswork (95% CI)", "reid-auc (95% CI)");
    out << line;
    for (const auto& p : privacy_paths) {
      require_file(p, "privacy report");
      std::ifstream f(p);
      json j;
      try {
        f >> j;
      } catch (const json::exception& e) {
        fail(ErrorKind::Format, "bad privacy report '" + p + "': " + e.what());
      }
      check(j.value("kind", "") == "privacy_report", ErrorKind::Format,
            "'" + p + "' is not a privacy report");
      std::string name = j["scheme"].get<std::string>();
      if (j.value("label_mode", "none") != "none") {
        name += "+" + j["label_mode"].get<std::string>();
      }
      std::snprintf(
          line, sizeof(line), "%-18s %-28s %-28s\n", name.c_str(),
          fmt_ci(j["guesswork"]["mean"], j["guesswork"]["ci"][0],
                 j["guesswork"]["ci"][1], 2)
              .c_str(),
          fmt_ci(j["reid_auc"]["mean"], j["reid_auc"]["ci"][0],
                 j["reid_auc"]["ci"][1], 3)
              .c_str());
      out << line;
    }
    out << "\n";
  }

  if (!utility_paths.empty()) {
    // rows = schemes, columns = tasks + avg
    std::vector<std::string> tasks;
    std::vector<std::string> schemes;
    std::map<std::pair<std::string, std::string>, double> auc;
    auto ingest = [&](const json& j) {
      const std::string scheme = j["scheme"].get<std::string>();
      const std::string task = j["task"].get<std::string>();
      if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
        tasks.push_back(task);
      }
      if (std::find(schemes.begin(), schemes.end(), scheme) == schemes.end()) {
        schemes.push_back(scheme);
      }
      auc[{scheme, task}] = j["test_auc"].get<double>();
    };
    for (const auto& p : utility_paths) {
      require_file(p, "utility report");
      std::ifstream f(p);
      json j;
      try {
        f >> j;
      } catch (const json::exception& e) {
        fail(ErrorKind::Format, "bad utility report '" + p + "': " + e.what());
      }
      if (j.value("kind", "") == "utility_report") {
        ingest(j);
      } else if (j.value("kind", "") == "learning_curve") {
        for (const auto& r : j["reports"]) ingest(r);
      } else {
        fail(ErrorKind::Format, "'" + p + "' is not a utility report");
      }
    }
    out << "utility (test ROC AUC per task)\n";
    out << "---------------------------------------------------------------\n";
    std::ostringstream hdr;
    hdr << std::left;
    hdr.width(18);
    hdr << "encoding";
    for (const auto& t : tasks) {
      hdr.width(24);
      hdr << t;
    }
    hdr.width(8);
    hdr << "avg";
    out << hdr.str() << "\n";
    for (const auto& s : schemes) {
      std::ostringstream row;
      row << std::left;
      row.width(18);
      row << s;
      double sum = 0;
      int count = 0;
      for (const auto& t : tasks) {
        row.width(24);
        auto it = auc.find({s, t});
        if (it == auc.end()) {
          row << "-";
        } else {
          row << fmt_double(it->second).substr(0, 6);
          sum += it->second;
          ++count;
        }
      }
      row.width(8);
      row << (count ? fmt_double(sum / count).substr(0, 6) : "-");
      out << row.str() << "\n";
    }
  }

  const std::string text = out.str();
  ensure_out_dir(out_dir);
  write_text(out_dir + "/report.txt", text);
  write_resolved_config(out_dir, "report", cfg.resolved_json());
  return text;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::Dimension:
    case ErrorKind::Parameter:
    case ErrorKind::Size:
      return 2;
    case ErrorKind::Data:
    case ErrorKind::Format:
    case ErrorKind::Domain:
    case ErrorKind::Insufficient:
      return 3;
    default:
      return 4;
  }
}

}  // namespace syfer
