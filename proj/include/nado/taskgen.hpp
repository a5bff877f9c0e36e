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

// Synthetic concept-coverage task families with compositional train/test
// splits, plus a small weighted grammar whose support doubles as a
// well-formedness automaton.

#ifndef NADO_TASKGEN_HPP_
#define NADO_TASKGEN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "nado/oracle.hpp"
#include "nado/seq.hpp"

namespace nado {

struct FamilySpec {
  int num_concepts = 6;
  int tokens_per_concept = 1;
  int num_function_tokens = 1;
  int combo_min = 2;
  int combo_max = 2;
  int max_len = 6;
  double test_fraction = 1.0 / 3.0;
  int corpus_size = 200;
  // Grammar: a content token may not follow a content token; a function
  // token may not follow a function token.
  double eos_weight = 1.0;
  double function_weight = 1.5;

  nlohmann::json to_json() const;
  static FamilySpec from_json(const nlohmann::json& j);
};

// Weighted automaton over token ids; states with no outgoing mass reject.
struct WeightedGrammar {
  Dfa dfa;  // support (eos excluded; accepting = may stop here)
  std::vector<std::vector<double>> weights;  // [state][token], eos included
};

struct TaskFamily {
  FamilySpec spec;
  std::uint64_t seed = 0;
  Vocabulary vocab;
  SpaceSpec space;
  std::vector<std::vector<TokenId>> concepts;  // token groups
  std::vector<std::vector<int>> train_combos;  // concept indices
  std::vector<std::vector<int>> test_combos;
  WeightedGrammar grammar;
  std::vector<TokenSeq> corpus;  // token contents, no eos

  Oracle concept_oracle(int concept_index) const;
  Oracle combo_oracle(const std::vector<int>& combo) const;
  Oracle well_formed_oracle() const;
  // Input encoding for a combo: the first token of every concept.
  std::vector<TokenId> combo_input(const std::vector<int>& combo) const;
  std::string combo_name(const std::vector<int>& combo) const;

  nlohmann::json to_json() const;
  static TaskFamily from_json(const nlohmann::json& j);
};

// Deterministic given seed. Throws kConfig for impossible splits (e.g. size-1
// combos) and kInfeasible naming a combo that cannot fit in max_len.
TaskFamily generate_family(const FamilySpec& spec, std::uint64_t seed);

// Fraction of decodes satisfying every constraint of the set.
double coverage_metric(const std::vector<TokenSeq>& decodes, const ConstraintSet& combo,
                       Tokens x, std::optional<TokenId> eos);

}  // namespace nado

#endif  // NADO_TASKGEN_HPP_
