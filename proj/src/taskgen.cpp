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

#include "nado/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "nado/base_model.hpp"
#include "nado/error.hpp"

namespace nado {

using nlohmann::json;

namespace {

// Grammar states.
constexpr int kStart = 0;
constexpr int kAfterContent = 1;
constexpr int kAfterFunction = 2;

void combos_of(int n, int k, int first, std::vector<int>& cur,
               std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == k) {
    out.push_back(cur);
    return;
  }
  for (int i = first; i < n; ++i) {
    cur.push_back(i);
    combos_of(n, k, i + 1, cur, out);
    cur.pop_back();
  }
}

// Fisher-Yates on our own uniform draws, so splits do not depend on the
// standard library's shuffle.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(v[i - 1], v[std::min(j, i - 1)]);
  }
}

double get_num(const json& j, const char* key, double def) {
  if (!j.contains(key)) return def;
  return j[key].is_string() ? parse_double(j[key].get<std::string>()) : j[key].get<double>();
}

}  // namespace

json FamilySpec::to_json() const {
  return json{{"num_concepts", num_concepts},
              {"tokens_per_concept", tokens_per_concept},
              {"num_function_tokens", num_function_tokens},
              {"combo_min", combo_min},
              {"combo_max", combo_max},
              {"max_len", max_len},
              {"test_fraction", format_double(test_fraction)},
              {"corpus_size", corpus_size},
              {"eos_weight", format_double(eos_weight)},
              {"function_weight", format_double(function_weight)}};
}

FamilySpec FamilySpec::from_json(const json& j) {
  FamilySpec s;
  s.num_concepts = j.value("num_concepts", s.num_concepts);
  s.tokens_per_concept = j.value("tokens_per_concept", s.tokens_per_concept);
  s.num_function_tokens = j.value("num_function_tokens", s.num_function_tokens);
  s.combo_min = j.value("combo_min", s.combo_min);
  s.combo_max = j.value("combo_max", s.combo_max);
  if (j.contains("combo_size")) s.combo_min = s.combo_max = j["combo_size"].get<int>();
  s.max_len = j.value("max_len", s.max_len);
  s.test_fraction = get_num(j, "test_fraction", s.test_fraction);
  s.corpus_size = j.value("corpus_size", s.corpus_size);
  s.eos_weight = get_num(j, "eos_weight", s.eos_weight);
  s.function_weight = get_num(j, "function_weight", s.function_weight);
  return s;
}

Oracle TaskFamily::concept_oracle(int concept_index) const {
  return Oracle::coverage_groups({concepts.at(static_cast<std::size_t>(concept_index))});
}

Oracle TaskFamily::combo_oracle(const std::vector<int>& combo) const {
  std::vector<std::vector<TokenId>> groups;
  for (int c : combo) groups.push_back(concepts.at(static_cast<std::size_t>(c)));
  return Oracle::coverage_groups(std::move(groups));
}

Oracle TaskFamily::well_formed_oracle() const { return Oracle::automaton(grammar.dfa); }

std::vector<TokenId> TaskFamily::combo_input(const std::vector<int>& combo) const {
  std::vector<TokenId> x;
  for (int c : combo) x.push_back(concepts.at(static_cast<std::size_t>(c)).front());
  return x;
}

std::string TaskFamily::combo_name(const std::vector<int>& combo) const {
  std::string s;
  for (std::size_t i = 0; i < combo.size(); ++i) {
    if (i) s += '+';
    s += "k" + std::to_string(combo[i]);
  }
  return s;
}

TaskFamily generate_family(const FamilySpec& spec, std::uint64_t seed) {
  if (spec.num_concepts < 2 || spec.tokens_per_concept < 1 || spec.num_function_tokens < 1)
    fail(ErrorCode::kConfig, "family needs >= 2 concepts, >= 1 token per concept and >= 1 function token");
  if (spec.combo_min < 1 || spec.combo_max < spec.combo_min ||
      spec.combo_max > spec.num_concepts)
    fail(ErrorCode::kConfig, "invalid combo size range");
  if (spec.combo_max < 2)
    fail(ErrorCode::kConfig,
         "size-1 combos cannot be split: every test concept would be unseen in training");
  if (spec.max_len < 1) fail(ErrorCode::kConfig, "max_len must be positive");
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
    fail(ErrorCode::kConfig, "test_fraction must lie in (0, 1)");

  TaskFamily fam;
  fam.spec = spec;
  fam.seed = seed;
  Rng rng(seed);

  std::vector<std::string> tokens;
  const int n_content = spec.num_concepts * spec.tokens_per_concept;
  for (int c = 0; c < spec.num_concepts; ++c) {
    std::vector<TokenId> group;
    for (int k = 0; k < spec.tokens_per_concept; ++k) {
      group.push_back(static_cast<TokenId>(tokens.size()));
      tokens.push_back(spec.tokens_per_concept == 1
                           ? "c" + std::to_string(c)
                           : "c" + std::to_string(c) + "_" + std::to_string(k));
    }
    fam.concepts.push_back(std::move(group));
  }
  for (int f = 0; f < spec.num_function_tokens; ++f) tokens.push_back("f" + std::to_string(f));
  const auto eos = static_cast<TokenId>(tokens.size());
  tokens.push_back("</s>");
  fam.vocab = Vocabulary(tokens, eos);
  fam.space = SpaceSpec{spec.max_len, Termination::kEos};
  const std::size_t v = fam.vocab.size();

  // Support automaton: no two content tokens and no two function tokens in a row.
  Dfa& dfa = fam.grammar.dfa;
  dfa.num_states = 3;
  dfa.start = kStart;
  dfa.accepting = {false, true, true};
  dfa.next.assign(3, std::vector<int>(v, -1));
  for (int s = 0; s < 3; ++s)
    for (std::size_t t = 0; t < v; ++t) {
      if (static_cast<TokenId>(t) == eos) continue;
      const bool content = static_cast<int>(t) < n_content;
      if (content && s != kAfterContent) dfa.next[s][t] = kAfterContent;
      if (!content && s != kAfterFunction) dfa.next[s][t] = kAfterFunction;
    }
  // Weights: random content preferences, fixed function and eos mass.
  std::vector<double> content_w(static_cast<std::size_t>(n_content));
  for (double& w : content_w) w = 0.25 + uniform01(rng);
  fam.grammar.weights.assign(3, std::vector<double>(v, 0.0));
  for (int s = 0; s < 3; ++s) {
    for (std::size_t t = 0; t < v; ++t) {
      if (static_cast<TokenId>(t) == eos) {
        fam.grammar.weights[s][t] = dfa.accepting[static_cast<std::size_t>(s)] ? spec.eos_weight : 0.0;
      } else if (dfa.next[s][t] >= 0) {
        fam.grammar.weights[s][t] =
            static_cast<int>(t) < n_content ? content_w[t] : spec.function_weight;
      }
    }
  }

  // Corpus from the grammar; sequences hitting max_len stop there.
  for (int i = 0; i < spec.corpus_size; ++i) {
    TokenSeq seq;
    int state = kStart;
    while (static_cast<int>(seq.ids.size()) < spec.max_len) {
      const auto& w = fam.grammar.weights[static_cast<std::size_t>(state)];
      double z = 0.0;
      for (double x : w) z += x;
      std::vector<double> p(w.size());
      for (std::size_t t = 0; t < w.size(); ++t) p[t] = w[t] / z;
      const TokenId t = sample_index(p, rng);
      if (t == eos) break;
      seq.ids.push_back(t);
      state = dfa.next[static_cast<std::size_t>(state)][static_cast<std::size_t>(t)];
    }
    seq.terminated = true;
    fam.corpus.push_back(std::move(seq));
  }

  // Combos and split.
  std::vector<std::vector<int>> all;
  for (int k = spec.combo_min; k <= spec.combo_max; ++k) {
    std::vector<int> cur;
    combos_of(spec.num_concepts, k, 0, cur, all);
  }
  for (const auto& combo : all)
    if (static_cast<int>(combo.size()) > spec.max_len)
      fail(ErrorCode::kInfeasible,
           "combo " + fam.combo_name(combo) + " cannot fit in max_len " +
               std::to_string(spec.max_len));
  const auto n_test = static_cast<std::size_t>(
      std::floor(static_cast<double>(all.size()) * spec.test_fraction));
  if (n_test == 0) fail(ErrorCode::kConfig, "split leaves no test combos");
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto order = all;
    shuffle_in_place(order, rng);
    std::vector<std::vector<int>> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::vector<int>> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::set<int> seen;
    for (const auto& c : train) seen.insert(c.begin(), c.end());
    if (static_cast<int>(seen.size()) != spec.num_concepts) continue;
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    fam.train_combos = std::move(train);
    fam.test_combos = std::move(test);
    return fam;
  }
  fail(ErrorCode::kConfig, "no split keeps every concept in training");
}

json TaskFamily::to_json() const {
  json j;
  j["format"] = "nado.task_family";
  j["version"] = 1;
  j["seed"] = seed;
  j["spec"] = spec.to_json();
  j["vocabulary"] = vocab_to_json(vocab);
  j["space"] = space_to_json(space);
  j["concepts"] = concepts;
  j["train_combos"] = train_combos;
  j["test_combos"] = test_combos;
  j["grammar"] = well_formed_oracle().to_json();
  json w = json::array();
  for (const auto& row : grammar.weights) w.push_back(encode_decimal_array(row));
  j["grammar_weights"] = w;
  json corpus_j = json::array();
  for (const auto& s : corpus) corpus_j.push_back(s.ids);
  j["corpus"] = corpus_j;
  return j;
}

TaskFamily TaskFamily::from_json(const json& j) {
  if (j.value("format", std::string()) != "nado.task_family")
    fail(ErrorCode::kConfig, "not a task family document");
  // Regenerate from spec + seed, then check the stored document agrees.
  auto fam = generate_family(FamilySpec::from_json(j.at("spec")), j.at("seed").get<std::uint64_t>());
  if (fam.to_json() != j)
    fail(ErrorCode::kFingerprint, "task family document does not match its spec and seed");
  return fam;
}

double coverage_metric(const std::vector<TokenSeq>& decodes, const ConstraintSet& combo,
                       Tokens x, std::optional<TokenId> eos) {
  if (decodes.empty()) fail(ErrorCode::kDomain, "coverage needs at least one decode");
  std::size_t ok = 0;
  for (const auto& y : decodes) {
    bool all = true;
    for (const auto& o : combo.oracles)
      if (o.evaluate(x, y, eos) < 1.0) {
        all = false;
        break;
      }
    if (all) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(decodes.size());
}

}  // namespace nado
