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

// Sequence-level control signals C(x, y) in [0, 1] and their combinators.
// Oracles only see terminated sequences; prefix-level quantities live in the
// exact and layer modules.

#ifndef NADO_ORACLE_HPP_
#define NADO_ORACLE_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nado/seq.hpp"

namespace nado {

// Deterministic automaton over token ids. A transition of -1 goes to an
// implicit rejecting sink.
struct Dfa {
  int num_states = 0;
  int start = 0;
  std::vector<bool> accepting;
  std::vector<std::vector<int>> next;  // [state][token]

  bool accepts(Tokens content) const;
  void validate(std::size_t vocab_size) const;
};

// Contiguous token pattern; -1 matches any token.
struct WindowPredicate {
  std::vector<TokenId> pattern;
  bool must_contain = true;
};

// Stand-in for a learned quality classifier: linear score over unigram and
// bigram counts, squashed and quantized at `threshold`, with optional
// deterministic label noise.
struct QuantizedClassifier {
  double bias = 0.0;
  std::vector<double> unigram;                              // per token
  std::map<std::pair<TokenId, TokenId>, double> bigram;     // (prev, next)
  double threshold = 0.5;
  double flip_rate = 0.0;
  std::uint64_t noise_seed = 0;

  double score(Tokens content) const;  // pre-quantization probability
};

enum class OracleKind {
  kLexicalCoverage,
  kAutomaton,
  kWindow,
  kClassifier,
  kConjunction,
  kScaled,
};

class Oracle {
 public:
  // Each group must be covered by at least one of its tokens. An empty group
  // list is the constant-1 oracle.
  static Oracle coverage_groups(std::vector<std::vector<TokenId>> groups);
  static Oracle coverage(const std::vector<TokenId>& tokens);
  static Oracle always() { return coverage_groups({}); }
  static Oracle automaton(Dfa dfa);
  static Oracle window(WindowPredicate predicate);
  static Oracle classifier(QuantizedClassifier clf);

  OracleKind kind() const { return kind_; }
  bool is_boolean() const;

  // Value on the token content of a terminated sequence (trailing eos
  // already stripped).
  double value(Tokens x, Tokens content) const;
  // Throws kContract when `y` is not terminated.
  double evaluate(Tokens x, const TokenSeq& y, std::optional<TokenId> eos) const;

  const std::vector<std::vector<TokenId>>& groups() const { return groups_; }
  const std::vector<Oracle>& children() const { return children_; }
  double tau() const { return tau_; }

  nlohmann::json to_json() const;
  static Oracle from_json(const nlohmann::json& j);
  std::string fingerprint() const;
  std::string describe() const;

  friend Oracle conjoin(std::vector<Oracle> oracles);
  friend Oracle scaled(Oracle child, double tau);

 private:
  OracleKind kind_ = OracleKind::kLexicalCoverage;
  std::vector<std::vector<TokenId>> groups_;
  Dfa dfa_;
  WindowPredicate window_;
  QuantizedClassifier clf_;
  std::vector<Oracle> children_;
  double tau_ = 1.0;
};

// Product of child values. Throws kDomain on an empty list.
Oracle conjoin(std::vector<Oracle> oracles);
// tau * child; tau must lie in (0, 1].
Oracle scaled(Oracle child, double tau);

// Strips a trailing eos; throws kContract when unterminated.
Tokens content_of(const TokenSeq& y, std::optional<TokenId> eos);

enum class Independence { kStatisticallyIndependent, kWeaklyDependent };

struct ConstraintSet {
  std::vector<Oracle> oracles;
  Independence independence = Independence::kStatisticallyIndependent;
  std::string label;
};

struct SatisfactionEstimate {
  double rate = 0.0;
  double std_error = 0.0;
  bool exact = false;
  std::size_t samples = 0;
};

// Exhaustive when the space fits `budget`; otherwise Monte-Carlo with
// `mc_samples` draws (throws kCapacity when mc_samples == 0).
SatisfactionEstimate satisfaction_rate(const Oracle& oracle,
                                       const StepSource& source, Tokens x,
                                       std::size_t mc_samples = 0,
                                       std::uint64_t seed = 0,
                                       std::size_t budget = kDefaultEnumerationBudget);

}  // namespace nado

#endif  // NADO_ORACLE_HPP_
