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

#include "syfer/capi.h"

#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>

#include "syfer/metrics.hpp"
#include "syfer/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

int run(const std::function<void()>& body) {
  try {
    body();
    g_last_error.clear();
    return SYF_OK;
  } catch (const syfer::Error& e) {
    g_last_error = e.what();
    return syfer::exit_code_for(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SYF_ERR_INTERNAL;
  }
}

const char* cstr_or_empty(const char* s) { return s ? s : ""; }

syfer::PairScoreMatrix matrix_from(const double* scores, int64_t rows,
                                   int64_t cols, const int32_t* match_rows,
                                   const int32_t* match_cols,
                                   int64_t n_matches) {
  syfer::check(scores != nullptr && rows >= 1 && cols >= 1,
               syfer::ErrorKind::Config, "scores: null or empty");
  syfer::check(match_rows != nullptr && match_cols != nullptr && n_matches >= 1,
               syfer::ErrorKind::Domain, "matches: null or empty");
  syfer::PairScoreMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.scores.assign(scores, scores + rows * cols);
  for (int64_t i = 0; i < n_matches; ++i) {
    m.matches.emplace_back(match_rows[i], match_cols[i]);
  }
  return m;
}

}  // namespace

extern "C" {

struct syf_dataset {
  syfer::Dataset ds;
};
struct syf_scheme {
  std::unique_ptr<syfer::Scheme> scheme;
  std::string name;
};
struct syf_key {
  syfer::EncoderKey key;
};
struct syf_store {
  syfer::TensorStore ts;
};

const char* syf_version(void) { return "0.1.0"; }

const char* syf_last_error(void) { return g_last_error.c_str(); }

int syf_cmd_gen_data(const char* c, const char* o) {
  return run([&] { syfer::cmd_gen_data(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_train_syfer(const char* c, const char* o) {
  return run([&] { syfer::cmd_train_syfer(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_train_dp_image(const char* c, const char* o) {
  return run(
      [&] { syfer::cmd_train_dp_image(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_encode(const char* c, const char* o) {
  return run([&] { syfer::cmd_encode(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_train_attacker(const char* c, const char* o) {
  return run(
      [&] { syfer::cmd_train_attacker(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_attack(const char* c, const char* o) {
  return run([&] { syfer::cmd_attack(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_utility(const char* c, const char* o) {
  return run([&] { syfer::cmd_utility(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_learning_curve(const char* c, const char* o) {
  return run(
      [&] { syfer::cmd_learning_curve(cstr_or_empty(c), cstr_or_empty(o)); });
}
int syf_cmd_export_images(const char* c, const char* o) {
  return run(
      [&] { syfer::cmd_export_images(cstr_or_empty(c), cstr_or_empty(o)); });
}

int syf_cmd_report(const char* c, const char* o, char** text_out) {
  return run([&] {
    const std::string text =
        syfer::cmd_report(cstr_or_empty(c), cstr_or_empty(o));
    if (text_out) {
      *text_out = static_cast<char*>(std::malloc(text.size() + 1));
      syfer::check(*text_out != nullptr, syfer::ErrorKind::Internal,
                   "out of memory");
      std::memcpy(*text_out, text.c_str(), text.size() + 1);
    }
  });
}

void syf_string_free(char* s) { std::free(s); }

int syf_guesswork(const double* scores, int64_t rows, int64_t cols,
                  const int32_t* match_rows, const int32_t* match_cols,
                  int64_t n_matches, double* out_guesswork) {
  return run([&] {
    syfer::check(out_guesswork != nullptr, syfer::ErrorKind::Config,
                 "out pointer is null");
    const auto m =
        matrix_from(scores, rows, cols, match_rows, match_cols, n_matches);
    *out_guesswork = syfer::guesswork(m).value;
  });
}

int syf_reid_auc(const double* scores, int64_t rows, int64_t cols,
                 const int32_t* match_rows, const int32_t* match_cols,
                 int64_t n_matches, double* out_auc) {
  return run([&] {
    syfer::check(out_auc != nullptr, syfer::ErrorKind::Config,
                 "out pointer is null");
    const auto m =
        matrix_from(scores, rows, cols, match_rows, match_cols, n_matches);
    *out_auc = syfer::reid_auc(m);
  });
}

int syf_dataset_generate(const char* spec_json, syf_dataset** out) {
  return run([&] {
    syfer::check(out != nullptr, syfer::ErrorKind::Config, "out is null");
    syfer::ConfigView cfg(cstr_or_empty(spec_json), "");
    syfer::SyntheticSpec spec;
    spec.seed = cfg.get_seed("seed", 1);
    spec.n = cfg.get_int("n", 256);
    spec.height = cfg.get_int("height", 32);
    spec.width = cfg.get_int("width", 32);
    spec.task_rule = cfg.get_string("task_rule", "bright-blob-presence");
    cfg.finish();
    *out = new syf_dataset{syfer::generate_synthetic(spec)};
  });
}

int syf_dataset_load(const char* path, syf_dataset** out) {
  return run([&] {
    syfer::check(out != nullptr, syfer::ErrorKind::Config, "out is null");
    *out = new syf_dataset{syfer::load_dataset(cstr_or_empty(path))};
  });
}

int syf_dataset_save(const syf_dataset* ds, const char* path) {
  return run([&] {
    syfer::check(ds != nullptr, syfer::ErrorKind::Config, "dataset is null");
    syfer::save_dataset(ds->ds, cstr_or_empty(path));
  });
}

int64_t syf_dataset_size(const syf_dataset* ds) {
  return ds ? ds->ds.size() : 0;
}

void syf_dataset_free(syf_dataset* ds) { delete ds; }

int syf_scheme_create(const char* scheme_json, int64_t height, int64_t width,
                      syf_scheme** out) {
  return run([&] {
    syfer::check(out != nullptr, syfer::ErrorKind::Config, "out is null");
    syfer::ConfigView cfg(cstr_or_empty(scheme_json), "scheme");
    auto scheme = syfer::make_scheme_from_config(cfg, height, width);
    auto* h = new syf_scheme;
    h->name = scheme->name();
    h->scheme = std::move(scheme);
    *out = h;
  });
}

const char* syf_scheme_name(const syf_scheme* s) {
  return s ? s->name.c_str() : "";
}

int syf_scheme_sample_key(const syf_scheme* s, uint64_t seed, syf_key** out) {
  return run([&] {
    syfer::check(s != nullptr && out != nullptr, syfer::ErrorKind::Config,
                 "null argument");
    syfer::Rng rng(seed);
    *out = new syf_key{s->scheme->sample_key(rng)};
  });
}

int syf_key_save(const syf_key* k, const char* path) {
  return run([&] {
    syfer::check(k != nullptr, syfer::ErrorKind::Config, "key is null");
    k->key.to_store().save(cstr_or_empty(path));
  });
}

void syf_key_free(syf_key* k) { delete k; }

int syf_scheme_encode(const syf_scheme* s, const syf_key* k,
                      const syf_dataset* ds, uint64_t noise_seed,
                      syf_store** out) {
  return run([&] {
    syfer::check(s != nullptr && k != nullptr && ds != nullptr && out != nullptr,
                 syfer::ErrorKind::Config, "null argument");
    syfer::Rng rng(noise_seed);
    syfer::TensorStore ts;
    ts.put_f32("data/tokens", s->scheme->encode_images(ds->ds.images, k->key, rng));
    const auto labels = s->scheme->encode_labels(ds->ds.labels, k->key);
    ts.put_u32("data/labels", labels, {static_cast<int64_t>(labels.size())});
    *out = new syf_store{std::move(ts)};
  });
}

void syf_scheme_free(syf_scheme* s) { delete s; }

int syf_store_load(const char* path, syf_store** out) {
  return run([&] {
    syfer::check(out != nullptr, syfer::ErrorKind::Config, "out is null");
    *out = new syf_store{syfer::TensorStore::load(cstr_or_empty(path))};
  });
}

int syf_store_save(const syf_store* ts, const char* path) {
  return run([&] {
    syfer::check(ts != nullptr, syfer::ErrorKind::Config, "store is null");
    ts->ts.save(cstr_or_empty(path));
  });
}

int64_t syf_store_size(const syf_store* ts) {
  return ts ? static_cast<int64_t>(ts->ts.size()) : 0;
}

void syf_store_free(syf_store* ts) { delete ts; }

}  // extern "C"
