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
// Single entry point for the experimental pipeline. Subcommands map 1:1 onto
// the shared library's command layer; flags override config-file fields.
// Exit codes: 0 success, 2 config error, 3 data error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "syfer/capi.h"

namespace {

using nlohmann::json;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string seed;      // kept as text so "unset" is distinguishable
  std::string scheme;    // scheme id override
  std::string fraction;  // utility fraction override
};

void add_common(CLI::App* cmd, CommonFlags* flags, bool needs_out = true) {
  cmd->add_option("--config", flags->config_path, "JSON config file");
  auto* out = cmd->add_option("--out", flags->out_dir, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", flags->seed, "seed override");
  cmd->add_option("--scheme", flags->scheme, "scheme id override");
  cmd->add_option("--fraction", flags->fraction, "training-fraction override");
}

// Merge file config with flag overrides into the JSON the library expects.
int build_config(const CommonFlags& flags, std::string* out_json) {
  json j = json::object();
  if (!flags.config_path.empty()) {
    std::ifstream f(flags.config_path);
    if (!f.good()) {
      std::fprintf(stderr, "error: cannot open config '%s'\n",
                   flags.config_path.c_str());
      return SYF_ERR_DATA;
    }
    try {
      f >> j;
    } catch (const json::exception& e) {
      std::fprintf(stderr, "error: config '%s' is not valid JSON: %s\n",
                   flags.config_path.c_str(), e.what());
      return SYF_ERR_CONFIG;
    }
    if (!j.is_object()) {
      std::fprintf(stderr, "error: config root must be a JSON object\n");
      return SYF_ERR_CONFIG;
    }
  }
  if (!flags.seed.empty()) {
    try {
      j["seed"] = std::stoull(flags.seed);
    } catch (...) {
      std::fprintf(stderr, "error: --seed must be an unsigned integer\n");
      return SYF_ERR_CONFIG;
    }
  }
  if (!flags.scheme.empty()) {
    if (!j.contains("scheme") || !j["scheme"].is_object()) {
      j["scheme"] = json::object();
    }
    j["scheme"]["id"] = flags.scheme;
  }
  if (!flags.fraction.empty()) {
    try {
      j["fraction"] = std::stod(flags.fraction);
    } catch (...) {
      std::fprintf(stderr, "error: --fraction must be a number\n");
      return SYF_ERR_CONFIG;
    }
  }
  *out_json = j.dump();
  return SYF_OK;
}

int finish(int rc) {
  if (rc != SYF_OK) {
    std::fprintf(stderr, "error: %s\n", syf_last_error());
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"syfer: keyed neural obfuscation workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(syf_version()));

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const char*, const char*);
  };
  const std::vector<Sub> subs = {
      {"gen-data", "generate a synthetic dataset", syf_cmd_gen_data},
      {"train-syfer", "adversarially train obfuscator layers", syf_cmd_train_syfer},
      {"train-dp-image", "train the dp-image autoencoder", syf_cmd_train_dp_image},
      {"encode", "encode a dataset under a sampled key", syf_cmd_encode},
      {"train-attacker", "train a re-identification attacker", syf_cmd_train_attacker},
      {"attack", "evaluate privacy (guesswork, reid-auc)", syf_cmd_attack},
      {"utility", "train/evaluate a downstream classifier", syf_cmd_utility},
      {"learning-curve", "utility across training fractions", syf_cmd_learning_curve},
      {"export-images", "dump images from a container as PGM", syf_cmd_export_images},
  };

  std::vector<CommonFlags> flags(subs.size() + 1);
  std::vector<CLI::App*> cmds;
  for (size_t i = 0; i < subs.size(); ++i) {
    CLI::App* c = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(c, &flags[i]);
    cmds.push_back(c);
  }
  CLI::App* report_cmd =
      app.add_subcommand("report", "merge reports into text tables");
  add_common(report_cmd, &flags[subs.size()]);

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < subs.size(); ++i) {
    if (cmds[i]->parsed()) {
      std::string config;
      const int rc = build_config(flags[i], &config);
      if (rc != SYF_OK) return rc;
      return finish(subs[i].fn(config.c_str(), flags[i].out_dir.c_str()));
    }
  }
  if (report_cmd->parsed()) {
    std::string config;
    const int rc = build_config(flags[subs.size()], &config);
    if (rc != SYF_OK) return rc;
    char* text = nullptr;
    const int rc2 =
        syf_cmd_report(config.c_str(), flags[subs.size()].out_dir.c_str(), &text);
    if (rc2 == SYF_OK && text) {
      std::fputs(text, stdout);
      syf_string_free(text);
    }
    return finish(rc2);
  }
  return SYF_ERR_CONFIG;
}
