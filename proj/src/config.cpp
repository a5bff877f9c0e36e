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

#include "nado/config.hpp"

#include <sstream>

#include "nado/error.hpp"

namespace nado {

using nlohmann::json;

double json_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    try {
      return parse_double(j.get<std::string>());
    } catch (const Error&) {
      fail(ErrorCode::kConfig, "not a number: " + j.get<std::string>());
    }
  }
  fail(ErrorCode::kConfig, "expected a number, got " + j.dump());
}

double json_number_or(const json& j, const char* key, double def) {
  return j.contains(key) ? json_number(j[key]) : def;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& section) {
  if (!j.is_object()) fail(ErrorCode::kConfig, section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) fail(ErrorCode::kConfig, section + ": unknown key '" + key + "'");
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorCode::kConfig, "override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json* node = &config;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) fail(ErrorCode::kConfig, "empty path component in override: " + path);
    parts.push_back(part);
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!node->is_object()) {
      if (!node->is_null())
        fail(ErrorCode::kConfig, "override path crosses a non-object: " + path);
      *node = json::object();
    }
    node = &(*node)[parts[i]];
  }
  *node = std::move(value);
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (j.is_null()) return c;
  check_keys(j,
             {"steps", "learning_rate", "momentum", "grad_clip", "batch_size", "clamp_eps", "lambda_reg",
              "supervise_root", "strategy", "seed", "eval_every", "basis_k", "refresh_basis",
              "is_clip", "eval_budget", "eval_samples"},
             "train");
  c.steps = j.value("steps", c.steps);
  c.learning_rate = json_number_or(j, "learning_rate", c.learning_rate);
  c.momentum = json_number_or(j, "momentum", c.momentum);
  c.grad_clip = json_number_or(j, "grad_clip", c.grad_clip);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.loss.clamp_eps = json_number_or(j, "clamp_eps", c.loss.clamp_eps);
  c.loss.lambda_reg = json_number_or(j, "lambda_reg", c.loss.lambda_reg);
  c.loss.supervise_root = j.value("supervise_root", c.loss.supervise_root);
  if (j.contains("strategy")) c.strategy = parse_strategy(j["strategy"].get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.basis_k = j.value("basis_k", c.basis_k);
  c.refresh_basis = j.value("refresh_basis", c.refresh_basis);
  c.is_clip = json_number_or(j, "is_clip", c.is_clip);
  c.eval_budget = j.value("eval_budget", c.eval_budget);
  c.eval_samples = j.value("eval_samples", c.eval_samples);
  if (c.steps < 0 || c.batch_size == 0 || !(c.learning_rate >= 0.0) ||
      !(c.momentum >= 0.0 && c.momentum < 1.0) || !(c.grad_clip >= 0.0) || !(c.loss.clamp_eps > 0.0 && c.loss.clamp_eps < 0.5))
    fail(ErrorCode::kConfig, "train: out-of-range setting");
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"steps", c.steps},
              {"learning_rate", format_double(c.learning_rate)},
              {"momentum", format_double(c.momentum)},
              {"grad_clip", format_double(c.grad_clip)},
              {"batch_size", c.batch_size},
              {"clamp_eps", format_double(c.loss.clamp_eps)},
              {"lambda_reg", format_double(c.loss.lambda_reg)},
              {"supervise_root", c.loss.supervise_root},
              {"strategy", strategy_name(c.strategy)},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"basis_k", c.basis_k},
              {"refresh_basis", c.refresh_basis},
              {"is_clip", format_double(c.is_clip)},
              {"eval_budget", c.eval_budget},
              {"eval_samples", c.eval_samples}};
}

NeuralScorerSpec scorer_from_json(const json& j, NeuralScorerSpec s) {
  if (j.is_null()) return s;
  check_keys(j, {"window", "hidden", "use_x", "init_scale"}, "scorer");
  s.window = j.value("window", s.window);
  s.hidden = j.value("hidden", s.hidden);
  s.use_x = j.value("use_x", s.use_x);
  s.init_scale = json_number_or(j, "init_scale", s.init_scale);
  return s;
}

json scorer_to_json(const NeuralScorerSpec& s) {
  return json{{"window", s.window},
              {"hidden", s.hidden},
              {"use_x", s.use_x},
              {"init_scale", format_double(s.init_scale)}};
}

namespace {

json resolve_id(const json& j, const Vocabulary& vocab) {
  if (j.is_string()) return vocab.id_of(j.get<std::string>());
  return j;
}

json resolve_list(const json& j, const Vocabulary& vocab) {
  json out = json::array();
  for (const auto& e : j) out.push_back(resolve_id(e, vocab));
  return out;
}

}  // namespace

json resolve_oracle_symbols(const json& spec, const Vocabulary& vocab) {
  if (!spec.is_object()) fail(ErrorCode::kConfig, "oracle spec must be an object");
  json out = spec;
  try {
    if (out.contains("groups")) {
      json g = json::array();
      for (const auto& group : out["groups"]) g.push_back(resolve_list(group, vocab));
      out["groups"] = g;
    }
    if (out.contains("tokens")) out["tokens"] = resolve_list(out["tokens"], vocab);
    if (out.contains("pattern")) {
      json p = json::array();
      for (const auto& e : out["pattern"])
        p.push_back(e.is_string() && e.get<std::string>() == "*" ? json(-1) : resolve_id(e, vocab));
      out["pattern"] = p;
    }
    if (out.contains("bigram"))
      for (auto& b : out["bigram"]) {
        b["prev"] = resolve_id(b.at("prev"), vocab);
        b["next"] = resolve_id(b.at("next"), vocab);
      }
    if (out.contains("children"))
      for (auto& c : out["children"]) c = resolve_oracle_symbols(c, vocab);
    if (out.contains("child")) out["child"] = resolve_oracle_symbols(out["child"], vocab);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("oracle spec: ") + e.what());
  }
  return out;
}

std::vector<TokenId> parse_tokens(const json& j, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  try {
    if (j.is_string()) {
      std::stringstream ss(j.get<std::string>());
      std::string sym;
      while (ss >> sym) ids.push_back(vocab.id_of(sym));
    } else if (j.is_array()) {
      for (const auto& e : j) {
        const TokenId id = e.is_string() ? vocab.id_of(e.get<std::string>()) : e.get<TokenId>();
        if (!vocab.contains(id)) fail(ErrorCode::kConfig, "token id out of range");
        ids.push_back(id);
      }
    } else if (!j.is_null()) {
      fail(ErrorCode::kConfig, "token list must be a string or an array");
    }
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("token list: ") + e.what());
  }
  return ids;
}

}  // namespace nado
