/* Copyright 2026 The nado Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of the nado shared library.
 *
 * Every fallible call returns a nado_status. On failure the message is
 * available from nado_last_error() on the calling thread until the next call
 * on that thread. Handles are opaque and owned by the caller; destroy
 * functions accept NULL. Token sequences are arrays of int32 token ids.
 */

#ifndef NADO_NADO_H_
#define NADO_NADO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NADO_API __declspec(dllexport)
#else
#define NADO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nado_status {
  NADO_OK = 0,
  NADO_ERROR = 1,            /* any other failure */
  NADO_ERR_CONFIG = 2,
  NADO_ERR_CAPACITY = 3,
  NADO_ERR_INFEASIBLE = 4,   /* no satisfying continuation, dead ends */
  NADO_ERR_ARGUMENT = 5      /* NULL handle or bad buffer size */
} nado_status;

typedef struct nado_request nado_request;
typedef struct nado_model nado_model;
typedef struct nado_oracle nado_oracle;
typedef struct nado_table nado_table;

NADO_API const char* nado_version(void);
NADO_API const char* nado_last_error(void);
/* Library-level error code of the last failure (0 when none). */
NADO_API int nado_last_error_code(void);

/* ---- experiment runs ---- */

/* command: "train-base", "train-nado", "evaluate", "reproduce" or NULL to
 * take it from the config. */
NADO_API nado_status nado_request_create(const char* command, nado_request** out);
NADO_API nado_status nado_request_set_config_json(nado_request* req, const char* json);
/* Reads a JSON config file; relative paths inside resolve against its directory. */
NADO_API nado_status nado_request_load_config(nado_request* req, const char* path);
NADO_API nado_status nado_request_set_demo(nado_request* req, const char* demo);
NADO_API nado_status nado_request_set_seed(nado_request* req, uint64_t seed);
NADO_API nado_status nado_request_set_out(nado_request* req, const char* dir);
/* "dotted.key=value" */
NADO_API nado_status nado_request_add_override(nado_request* req, const char* assignment);
/* Returns the process exit code: 0, 1, 2 (config), 3 (capacity) or
 * 4 (infeasible). Logs go to standard error. */
NADO_API int nado_request_run(const nado_request* req);
NADO_API void nado_request_destroy(nado_request* req);

/* ---- base models ---- */

NADO_API nado_status nado_model_load(const char* path, nado_model** out);
NADO_API nado_status nado_model_from_json(const char* json, nado_model** out);
NADO_API size_t nado_model_vocab_size(const nado_model* model);
NADO_API int nado_model_max_len(const nado_model* model);
NADO_API nado_status nado_model_token_id(const nado_model* model, const char* symbol, int32_t* out);
/* Writes vocab_size log-probabilities of the next token into out. */
NADO_API nado_status nado_model_log_step(const nado_model* model, const int32_t* x, size_t nx,
                                         const int32_t* prefix, size_t np, double* out,
                                         size_t n);
NADO_API void nado_model_destroy(nado_model* model);

/* ---- oracles ---- */

/* Token symbols in the spec resolve against the model's vocabulary. */
NADO_API nado_status nado_oracle_from_json(const nado_model* model, const char* json,
                                           nado_oracle** out);
/* y is a complete sequence; a trailing eos is optional. */
NADO_API nado_status nado_oracle_evaluate(const nado_oracle* oracle, const nado_model* model,
                                          const int32_t* x, size_t nx, const int32_t* y,
                                          size_t ny, double* out);
NADO_API void nado_oracle_destroy(nado_oracle* oracle);

/* ---- exact ratio tables ---- */

NADO_API nado_status nado_exact_compute(const nado_model* model, const nado_oracle* oracle,
                                        const int32_t* x, size_t nx, nado_table** out);
NADO_API nado_status nado_exact_ratio(const nado_table* table, const int32_t* prefix, size_t np,
                                      double* out);
/* Writes vocab_size guided next-token probabilities into out. */
NADO_API nado_status nado_exact_guided_step(const nado_table* table, const nado_model* model,
                                            const int32_t* prefix, size_t np, double* out,
                                            size_t n);
NADO_API void nado_table_destroy(nado_table* table);

#ifdef __cplusplus
}
#endif

#endif /* NADO_NADO_H_ */
