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

// JSON plumbing shared by experiment configs: typed section readers with
// unknown-key checks, dotted-path overrides and symbol resolution.

#ifndef NADO_CONFIG_HPP_
#define NADO_CONFIG_HPP_

#include <initializer_list>
#include <string>

#include "json.hpp"
#include "nado/layer.hpp"
#include "nado/seq.hpp"
#include "nado/train.hpp"

namespace nado {

// Number from a JSON number or a decimal string (exact round trip).
double json_number(const nlohmann::json& j);
double json_number_or(const nlohmann::json& j, const char* key, double def);

// Throws kConfig naming the first key of `j` not in `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& section);

// "a.b.c=value": value parsed as JSON when possible, else taken as a string.
// Intermediate objects are created as needed.
void apply_override(nlohmann::json& config, const std::string& assignment);

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig defaults = {});
nlohmann::json train_config_to_json(const TrainConfig& c);

NeuralScorerSpec scorer_from_json(const nlohmann::json& j, NeuralScorerSpec defaults = {});
nlohmann::json scorer_to_json(const NeuralScorerSpec& s);

// Replaces token symbols (strings) by ids in an oracle spec: "groups",
// "tokens", "pattern" and classifier bigram endpoints.
nlohmann::json resolve_oracle_symbols(const nlohmann::json& spec, const Vocabulary& vocab);

// "a b c" or ["a","b"] or [0,1] to ids.
std::vector<TokenId> parse_tokens(const nlohmann::json& j, const Vocabulary& vocab);

}  // namespace nado

#endif  // NADO_CONFIG_HPP_
