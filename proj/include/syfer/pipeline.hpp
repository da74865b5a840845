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
// Command layer shared by the C API and the CLI. Every command takes a JSON
// config (strictly validated, unknown fields rejected) and an output
// directory, writes its artifacts plus the fully-resolved config, and embeds
// content hashes of its inputs in every report.

#pragma once

#include <memory>
#include <string>

#include "syfer/baselines.hpp"
#include "syfer/dataio.hpp"
#include "syfer/scheme.hpp"

namespace syfer {

// Strict JSON config reader: every field must be consumed exactly once, and
// the resolved (defaults-filled) config is recorded for provenance.
class ConfigView {
 public:
  ConfigView(const std::string& json_text, std::string scope);
  ~ConfigView();
  ConfigView(ConfigView&&) noexcept;
  ConfigView& operator=(ConfigView&&) = delete;

  int64_t get_int(const std::string& key, int64_t def);
  int64_t require_int(const std::string& key);
  double get_double(const std::string& key, double def);
  uint64_t get_seed(const std::string& key, uint64_t def);
  std::string get_string(const std::string& key, const std::string& def);
  std::string require_string(const std::string& key);
  bool has(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> def);
  std::vector<std::string> get_string_list(const std::string& key);
  ConfigView sub(const std::string& key);  // nested object ({} when absent)

  // Rejects unconsumed fields; call once per scope after all reads.
  void finish();
  std::string resolved_json() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Dataset container entries: "data/images" [n,H,W] f32, "data/labels" u32.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Scheme factory from the shared scheme-spec JSON subobject. Image dims come
// from the dataset being encoded.
std::unique_ptr<Scheme> make_scheme_from_config(ConfigView& cfg,
                                                int64_t height, int64_t width);

// Commands. Each throws Error on failure; exit-code mapping happens at the C
// boundary.
void cmd_gen_data(const std::string& config_json, const std::string& out_dir);
void cmd_train_syfer(const std::string& config_json, const std::string& out_dir);
void cmd_train_dp_image(const std::string& config_json,
                        const std::string& out_dir);
void cmd_encode(const std::string& config_json, const std::string& out_dir);
void cmd_train_attacker(const std::string& config_json,
                        const std::string& out_dir);
void cmd_attack(const std::string& config_json, const std::string& out_dir);
void cmd_utility(const std::string& config_json, const std::string& out_dir);
void cmd_learning_curve(const std::string& config_json,
                        const std::string& out_dir);
void cmd_export_images(const std::string& config_json,
                       const std::string& out_dir);
// Returns the rendered table text (also written to <out>/report.txt).
std::string cmd_report(const std::string& config_json,
                       const std::string& out_dir);

int exit_code_for(const Error& e);

}  // namespace syfer
