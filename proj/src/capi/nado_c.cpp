// Copyright 2026 The nado Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nado/nado.h"

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nado/base_model.hpp"
#include "nado/config.hpp"
#include "nado/error.hpp"
#include "nado/exact.hpp"
#include "nado/experiment.hpp"
#include "nado/oracle.hpp"

struct nado_request {
  nado::RunRequest req;
};

struct nado_model {
  nado::BaseModel model;
};

struct nado_oracle {
  nado::Oracle oracle;
};

struct nado_table {
  nado::ExactRatioTable table;
  std::vector<nado::TokenId> x;
};

namespace {

thread_local std::string g_error;
thread_local int g_code = 0;

void clear() {
  g_error.clear();
  g_code = 0;
}

nado_status status_for(nado::ErrorCode c) {
  switch (nado::exit_code_for(c)) {
    case 2: return NADO_ERR_CONFIG;
    case 3: return NADO_ERR_CAPACITY;
    case 4: return NADO_ERR_INFEASIBLE;
    default: return NADO_ERROR;
  }
}

nado_status set_error(nado_status s, int code, const std::string& msg) {
  g_error = msg;
  g_code = code;
  return s;
}

template <typename F>
nado_status guarded(F&& f) {
  clear();
  try {
    f();
    return NADO_OK;
  } catch (const nado::Error& e) {
    return set_error(status_for(e.code()), static_cast<int>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(NADO_ERR_CONFIG, static_cast<int>(nado::ErrorCode::kConfig), e.what());
  } catch (const std::exception& e) {
    return set_error(NADO_ERROR, static_cast<int>(nado::ErrorCode::kInternal), e.what());
  } catch (...) {
    return set_error(NADO_ERROR, static_cast<int>(nado::ErrorCode::kInternal), "unknown error");
  }
}

nado_status bad_arg(const char* what) {
  return set_error(NADO_ERR_ARGUMENT, 0, what);
}

nado::Tokens span_of(const int32_t* p, size_t n) { return nado::Tokens(p, p ? n : 0); }

}  // namespace

extern "C" {

const char* nado_version(void) { return nado::kVersion; }
const char* nado_last_error(void) { return g_error.c_str(); }
int nado_last_error_code(void) { return g_code; }

nado_status nado_request_create(const char* command, nado_request** out) {
  clear();
  if (!out) return bad_arg("out is NULL");
  return guarded([&] {
    auto* r = new nado_request;
    if (command) r->req.command = command;
    *out = r;
  });
}

nado_status nado_request_set_config_json(nado_request* req, const char* json) {
  clear();
  if (!req || !json) return bad_arg("NULL argument");
  return guarded([&] {
    try {
      req->req.config = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      nado::fail(nado::ErrorCode::kConfig, std::string("config: ") + e.what());
    }
  });
}

nado_status nado_request_load_config(nado_request* req, const char* path) {
  clear();
  if (!req || !path) return bad_arg("NULL argument");
  return guarded([&] {
    req->req.config = nado::read_json_file(path);
    req->req.config_dir = std::filesystem::path(path).parent_path().string();
  });
}

nado_status nado_request_set_demo(nado_request* req, const char* demo) {
  clear();
  if (!req || !demo) return bad_arg("NULL argument");
  req->req.demo = demo;
  return NADO_OK;
}

nado_status nado_request_set_seed(nado_request* req, uint64_t seed) {
  clear();
  if (!req) return bad_arg("NULL argument");
  req->req.seed = seed;
  return NADO_OK;
}

nado_status nado_request_set_out(nado_request* req, const char* dir) {
  clear();
  if (!req || !dir) return bad_arg("NULL argument");
  req->req.out_dir = dir;
  return NADO_OK;
}

nado_status nado_request_add_override(nado_request* req, const char* assignment) {
  clear();
  if (!req || !assignment) return bad_arg("NULL argument");
  req->req.overrides.emplace_back(assignment);
  return NADO_OK;
}

int nado_request_run(const nado_request* req) {
  clear();
  if (!req) {
    bad_arg("NULL argument");
    return 1;
  }
  std::string err;
  const int code = nado::run_request_status(req->req, nado::stderr_log, &err);
  if (code != 0) {
    g_error = err;
    g_code = code;
  }
  return code;
}

void nado_request_destroy(nado_request* req) { delete req; }

nado_status nado_model_load(const char* path, nado_model** out) {
  clear();
  if (!path || !out) return bad_arg("NULL argument");
  return guarded([&] { *out = new nado_model{nado::BaseModel::from_json(nado::read_json_file(path))}; });
}

nado_status nado_model_from_json(const char* json, nado_model** out) {
  clear();
  if (!json || !out) return bad_arg("NULL argument");
  return guarded([&] { *out = new nado_model{nado::BaseModel::from_json(nlohmann::json::parse(json))}; });
}

size_t nado_model_vocab_size(const nado_model* model) { return model ? model->model.vocab().size() : 0; }

int nado_model_max_len(const nado_model* model) { return model ? model->model.space().max_len : -1; }

nado_status nado_model_token_id(const nado_model* model, const char* symbol, int32_t* out) {
  clear();
  if (!model || !symbol || !out) return bad_arg("NULL argument");
  return guarded([&] { *out = model->model.vocab().id_of(symbol); });
}

nado_status nado_model_log_step(const nado_model* model, const int32_t* x, size_t nx,
                                const int32_t* prefix, size_t np, double* out, size_t n) {
  clear();
  if (!model || !out || (np && !prefix) || (nx && !x)) return bad_arg("NULL argument");
  if (n != model->model.vocab().size()) return bad_arg("output size differs from vocabulary size");
  return guarded([&] {
    const auto d = model->model.step_distribution(span_of(x, nx), span_of(prefix, np));
    for (size_t t = 0; t < n; ++t) out[t] = std::log(d.probs[t]);
  });
}

void nado_model_destroy(nado_model* model) { delete model; }

nado_status nado_oracle_from_json(const nado_model* model, const char* json, nado_oracle** out) {
  clear();
  if (!model || !json || !out) return bad_arg("NULL argument");
  return guarded([&] {
    const auto spec = nado::resolve_oracle_symbols(nlohmann::json::parse(json), model->model.vocab());
    *out = new nado_oracle{nado::Oracle::from_json(spec)};
  });
}

nado_status nado_oracle_evaluate(const nado_oracle* oracle, const nado_model* model,
                                 const int32_t* x, size_t nx, const int32_t* y, size_t ny,
                                 double* out) {
  clear();
  if (!oracle || !model || !out || (ny && !y) || (nx && !x)) return bad_arg("NULL argument");
  return guarded([&] {
    nado::TokenSeq seq{std::vector<nado::TokenId>(y, y + ny), true};
    *out = oracle->oracle.evaluate(span_of(x, nx), seq, model->model.vocab().eos());
  });
}

void nado_oracle_destroy(nado_oracle* oracle) { delete oracle; }

nado_status nado_exact_compute(const nado_model* model, const nado_oracle* oracle,
                               const int32_t* x, size_t nx, nado_table** out) {
  clear();
  if (!model || !oracle || !out || (nx && !x)) return bad_arg("NULL argument");
  return guarded([&] {
    *out = new nado_table{nado::compute_exact_ratios(model->model, oracle->oracle, span_of(x, nx)),
                          std::vector<nado::TokenId>(x, x + nx)};
  });
}

nado_status nado_exact_ratio(const nado_table* table, const int32_t* prefix, size_t np,
                             double* out) {
  clear();
  if (!table || !out || (np && !prefix)) return bad_arg("NULL argument");
  return guarded([&] { *out = table->table.at(span_of(prefix, np)); });
}

nado_status nado_exact_guided_step(const nado_table* table, const nado_model* model,
                                   const int32_t* prefix, size_t np, double* out, size_t n) {
  clear();
  if (!table || !model || !out || (np && !prefix)) return bad_arg("NULL argument");
  if (n != model->model.vocab().size()) return bad_arg("output size differs from vocabulary size");
  return guarded([&] {
    if (table->table.model_fingerprint() != model->model.fingerprint())
      nado::fail(nado::ErrorCode::kFingerprint, "table was computed for a different model");
    const auto d = nado::exact_guided_step(table->table, model->model, table->x, span_of(prefix, np));
    for (size_t t = 0; t < n; ++t) out[t] = d.probs[t];
  });
}

void nado_table_destroy(nado_table* table) { delete table; }

}  // extern "C"
