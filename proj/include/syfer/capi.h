/* Copyright 2026 The Syfer Workbench Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C API of the syfer workbench shared library.
 *
 * Two layers:
 *   - command entry points mirroring the CLI subcommands: each takes a JSON
 *     config string and an output directory, writes artifacts plus the
 *     resolved config, and returns a status code;
 *   - opaque handles (datasets, schemes, keys) plus direct metric functions
 *     for embedding the core primitives without file round-trips.
 *
 * All functions return SYF_OK (0) on success. On failure they return the
 * error class (2 = configuration, 3 = data, 4 = internal) and the message is
 * available from syf_last_error() until the next call on the same thread.
 */

#ifndef SYFER_CAPI_H_
#define SYFER_CAPI_H_

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum syf_status {
  SYF_OK = 0,
  SYF_ERR_CONFIG = 2,
  SYF_ERR_DATA = 3,
  SYF_ERR_INTERNAL = 4
} syf_status;

const char* syf_version(void);

/* Message for the most recent failing call on this thread ("" if none). */
const char* syf_last_error(void);

/* ---- command layer ---------------------------------------------------- */

int syf_cmd_gen_data(const char* config_json, const char* out_dir);
int syf_cmd_train_syfer(const char* config_json, const char* out_dir);
int syf_cmd_train_dp_image(const char* config_json, const char* out_dir);
int syf_cmd_encode(const char* config_json, const char* out_dir);
int syf_cmd_train_attacker(const char* config_json, const char* out_dir);
int syf_cmd_attack(const char* config_json, const char* out_dir);
int syf_cmd_utility(const char* config_json, const char* out_dir);
int syf_cmd_learning_curve(const char* config_json, const char* out_dir);
int syf_cmd_export_images(const char* config_json, const char* out_dir);

/* Writes <out_dir>/report.txt; when `text_out` is non-NULL it receives a
 * malloc'd copy of the rendered table (free with syf_string_free). */
int syf_cmd_report(const char* config_json, const char* out_dir,
                   char** text_out);
void syf_string_free(char* s);

/* ---- metrics ------------------------------------------------------------
 * scores: row-major [rows x cols] attacker scores; matches given as arrays
 * of row and column indices of the true pairs. */

int syf_guesswork(const double* scores, int64_t rows, int64_t cols,
                  const int32_t* match_rows, const int32_t* match_cols,
                  int64_t n_matches, double* out_guesswork);

int syf_reid_auc(const double* scores, int64_t rows, int64_t cols,
                 const int32_t* match_rows, const int32_t* match_cols,
                 int64_t n_matches, double* out_auc);

/* ---- opaque handles ----------------------------------------------------- */

typedef struct syf_dataset syf_dataset;
typedef struct syf_scheme syf_scheme;
typedef struct syf_key syf_key;
typedef struct syf_store syf_store;

/* spec_json fields: n, height, width, seed, task_rule. */
int syf_dataset_generate(const char* spec_json, syf_dataset** out);
int syf_dataset_load(const char* path, syf_dataset** out);
int syf_dataset_save(const syf_dataset* ds, const char* path);
int64_t syf_dataset_size(const syf_dataset* ds);
void syf_dataset_free(syf_dataset* ds);

/* scheme_json is the scheme-spec subobject used by the commands (fields id,
 * patch, blocks, hidden, heads, block_depth, classes, b, checkpoint,
 * init_seed). Image dims must match the datasets passed to encode. */
int syf_scheme_create(const char* scheme_json, int64_t height, int64_t width,
                      syf_scheme** out);
const char* syf_scheme_name(const syf_scheme* s);
int syf_scheme_sample_key(const syf_scheme* s, uint64_t seed, syf_key** out);
int syf_key_save(const syf_key* k, const char* path);
void syf_key_free(syf_key* k);

/* Encodes images and labels; the result holds "data/tokens" (f32 [n,t,d])
 * and "data/labels" (u32, permuted). noise_seed feeds per-sample randomness
 * for the keyless schemes. */
int syf_scheme_encode(const syf_scheme* s, const syf_key* k,
                      const syf_dataset* ds, uint64_t noise_seed,
                      syf_store** out);
void syf_scheme_free(syf_scheme* s);

int syf_store_load(const char* path, syf_store** out);
int syf_store_save(const syf_store* ts, const char* path);
int64_t syf_store_size(const syf_store* ts);
void syf_store_free(syf_store* ts);

#ifdef __cplusplus
}
#endif

#endif /* SYFER_CAPI_H_ */
