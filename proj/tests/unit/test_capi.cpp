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

// Exercises the shared library through its C interface only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <unistd.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include "nado/nado.h"

namespace fs = std::filesystem;

namespace {

const char* kModel =
    R"({"format": "nado.base_model", "version": 1, "kind": "ngram", "vocabulary": {"tokens": ["a", "b"]},
        "space": {"max_len": 2, "termination": "fixed"},
        "ngram": {"order": 1, "smoothing": "0", "contexts": [{"context": [], "counts": ["2", "1"]}]}})";

struct Model {
  nado_model* m = nullptr;
  Model() {
    // Build the uniform model through a run so the test does not depend on
    // the model file layout.
    const auto dir = fs::temp_directory_path() / ("nado_capi_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    nado_request* r = nullptr;
    REQUIRE(nado_request_create("train-base", &r) == NADO_OK);
    REQUIRE(nado_request_set_config_json(
                r, R"({"corpus": {"vocabulary": {"tokens": ["a", "b"]},
                                  "space": {"max_len": 2, "termination": "fixed"},
                                  "sequences": ["a b"]},
                       "model": {"kind": "uniform"}})") == NADO_OK);
    REQUIRE(nado_request_set_out(r, dir.string().c_str()) == NADO_OK);
    REQUIRE(nado_request_run(r) == 0);
    nado_request_destroy(r);
    REQUIRE(nado_model_load((dir / "model.json").string().c_str(), &m) == NADO_OK);
    fs::remove_all(dir);
  }
  ~Model() { nado_model_destroy(m); }
};

}  // namespace

TEST_CASE("version and error state") {
  CHECK(std::string(nado_version()) == "0.1.0");
  nado_request* r = nullptr;
  CHECK(nado_request_create("evaluate", nullptr) == NADO_ERR_ARGUMENT);
  CHECK(std::strlen(nado_last_error()) > 0);
  CHECK(nado_request_create("evaluate", &r) == NADO_OK);
  CHECK(std::strlen(nado_last_error()) == 0);
  CHECK(nado_request_set_config_json(r, "{not json") == NADO_ERR_CONFIG);
  CHECK(nado_last_error_code() == 2);
  nado_request_destroy(r);
  nado_request_destroy(nullptr);
  nado_model_destroy(nullptr);
  nado_oracle_destroy(nullptr);
  nado_table_destroy(nullptr);
}

TEST_CASE("request runs report exit codes") {
  const auto dir = fs::temp_directory_path() / ("nado_capi_run_" + std::to_string(::getpid()));
  nado_request* r = nullptr;
  REQUIRE(nado_request_create(nullptr, &r) == NADO_OK);
  REQUIRE(nado_request_set_config_json(
              r, R"({"command": "evaluate",
                     "model": {"kind": "uniform", "vocabulary": {"tokens": ["a", "b"]},
                               "space": {"max_len": 2, "termination": "fixed"}},
                     "oracle": {"kind": "lexical_coverage", "tokens": ["a"]},
                     "policy": {"kind": "exact"}})") == NADO_OK);
  nado_request_set_out(r, dir.string().c_str());
  nado_request_set_seed(r, 3);
  CHECK(nado_request_run(r) == 0);
  CHECK(fs::exists(dir / "metrics.json"));
  nado_request_add_override(r, "oracle.pattern=[\"a\",\"a\",\"a\"]");
  nado_request_add_override(r, "oracle.kind=window");
  nado_request_add_override(r, "oracle.tokens=null");
  const int code = nado_request_run(r);
  CHECK((code == 2 || code == 4));
  nado_request_destroy(r);
  REQUIRE(nado_request_create("train-nado", &r) == NADO_OK);
  nado_request_set_config_json(r, R"({"instance": "t1", "trian": {}})");
  nado_request_set_out(r, dir.string().c_str());
  CHECK(nado_request_run(r) == 2);
  CHECK(std::string(nado_last_error()).find("trian") != std::string::npos);
  nado_request_destroy(r);
  CHECK(nado_request_run(nullptr) == 1);
  nado_request* bad = nullptr;
  REQUIRE(nado_request_create("evaluate", &bad) == NADO_OK);
  CHECK(nado_request_load_config(bad, "/nonexistent/cfg.json") == NADO_ERROR);
  nado_request_destroy(bad);
  fs::remove_all(dir);
}

TEST_CASE("model, oracle and exact table") {
  Model mm;
  REQUIRE(mm.m);
  CHECK(nado_model_vocab_size(mm.m) == 2);
  CHECK(nado_model_max_len(mm.m) == 2);
  int32_t a = -1;
  CHECK(nado_model_token_id(mm.m, "b", &a) == NADO_OK);
  CHECK(a == 1);
  CHECK(nado_model_token_id(mm.m, "zz", &a) != NADO_OK);

  double lp[2];
  CHECK(nado_model_log_step(mm.m, nullptr, 0, nullptr, 0, lp, 2) == NADO_OK);
  CHECK(lp[0] == doctest::Approx(std::log(0.5)));
  CHECK(nado_model_log_step(mm.m, nullptr, 0, nullptr, 0, lp, 3) == NADO_ERR_ARGUMENT);
  const int32_t too_long[] = {0, 0};
  CHECK(nado_model_log_step(mm.m, nullptr, 0, too_long, 2, lp, 2) == NADO_ERROR);

  nado_oracle* o = nullptr;
  REQUIRE(nado_oracle_from_json(mm.m, R"({"kind": "lexical_coverage", "tokens": ["a"]})", &o) == NADO_OK);
  const int32_t ba[] = {1, 0}, bb[] = {1, 1};
  double v = -1;
  CHECK(nado_oracle_evaluate(o, mm.m, nullptr, 0, ba, 2, &v) == NADO_OK);
  CHECK(v == 1.0);
  CHECK(nado_oracle_evaluate(o, mm.m, nullptr, 0, bb, 2, &v) == NADO_OK);
  CHECK(v == 0.0);
  nado_oracle* bad = nullptr;
  CHECK(nado_oracle_from_json(mm.m, R"({"kind": "nope"})", &bad) == NADO_ERR_CONFIG);

  nado_table* t = nullptr;
  REQUIRE(nado_exact_compute(mm.m, o, nullptr, 0, &t) == NADO_OK);
  CHECK(nado_exact_ratio(t, nullptr, 0, &v) == NADO_OK);
  CHECK(v == doctest::Approx(0.75));
  const int32_t b[] = {1};
  CHECK(nado_exact_ratio(t, b, 1, &v) == NADO_OK);
  CHECK(v == doctest::Approx(0.5));
  double q[2];
  CHECK(nado_exact_guided_step(t, mm.m, nullptr, 0, q, 2) == NADO_OK);
  CHECK(q[0] == doctest::Approx(2.0 / 3.0));
  CHECK(nado_exact_guided_step(t, mm.m, b, 1, q, 2) == NADO_OK);
  CHECK(q[0] == doctest::Approx(1.0));

  // A table is bound to the model it was computed for.
  nado_model* other = nullptr;
  REQUIRE(nado_model_from_json(kModel, &other) == NADO_OK);
  CHECK(nado_exact_guided_step(t, other, nullptr, 0, q, 2) == NADO_ERROR);
  CHECK(nado_last_error_code() == 14);
  nado_model_destroy(other);

  // Unsatisfiable from "b b": guided step raises a dead end.
  nado_oracle* never = nullptr;
  REQUIRE(nado_oracle_from_json(mm.m, R"({"kind": "window", "pattern": ["a", "a"]})", &never) == NADO_OK);
  nado_table* t2 = nullptr;
  REQUIRE(nado_exact_compute(mm.m, never, nullptr, 0, &t2) == NADO_OK);
  CHECK(nado_exact_guided_step(t2, mm.m, b, 1, q, 2) == NADO_ERR_INFEASIBLE);
  nado_table_destroy(t2);
  nado_oracle_destroy(never);

  nado_table_destroy(t);
  nado_oracle_destroy(o);
}
