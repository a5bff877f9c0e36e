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

// nado-cli: command-line front end over the C API.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nado/nado.h"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* sub, Common& c, bool config_required) {
  auto* opt = sub->add_option("--config", c.config, "JSON config file");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "seed (overrides the config)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--override", c.overrides, "dotted-path override key.path=value (repeatable)");
}

int fail_setup(const char* what) {
  std::fprintf(stderr, "[ERROR] %s: %s\n", what, nado_last_error());
  return 2;
}

int run(const char* command, const Common& c, const std::string& demo) {
  nado_request* req = nullptr;
  if (nado_request_create(command, &req) != NADO_OK) return fail_setup("request");
  int code = 0;
  if (!c.config.empty() && nado_request_load_config(req, c.config.c_str()) != NADO_OK) {
    const bool io = nado_last_error_code() != 2;
    std::fprintf(stderr, "[ERROR] config: %s\n", nado_last_error());
    nado_request_destroy(req);
    return io ? 1 : 2;
  }
  if (!demo.empty()) nado_request_set_demo(req, demo.c_str());
  if (c.seed) nado_request_set_seed(req, *c.seed);
  if (!c.out.empty()) nado_request_set_out(req, c.out.c_str());
  for (const auto& o : c.overrides) nado_request_add_override(req, o.c_str());
  code = nado_request_run(req);
  nado_request_destroy(req);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nado: controllable generation with neurally decomposed oracles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nado_version()));

  Common base, nado, eval, repro, any;
  std::string demo;
  auto* s_base = app.add_subcommand("train-base", "fit a base model on a corpus or task family");
  add_common(s_base, base, true);
  auto* s_nado = app.add_subcommand("train-nado", "train a NADO layer or stack against an oracle");
  add_common(s_nado, nado, true);
  auto* s_eval = app.add_subcommand("evaluate", "score a policy: coverage, KL, residuals, bounds");
  add_common(s_eval, eval, true);
  auto* s_repro = app.add_subcommand("reproduce", "run a shipped demonstration");
  s_repro->add_option("demo", demo, "consistency | truncation | composition | exact-recovery")->required();
  add_common(s_repro, repro, false);
  auto* s_run = app.add_subcommand("run", "run the command named in a config file");
  add_common(s_run, any, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*s_base) return run("train-base", base, "");
  if (*s_nado) return run("train-nado", nado, "");
  if (*s_eval) return run("evaluate", eval, "");
  if (*s_repro) return run("reproduce", repro, demo);
  return run(nullptr, any, "");
}
