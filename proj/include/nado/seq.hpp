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

// Token and sequence primitives shared by every module: vocabularies, the
// finite sequence space, step distributions, and the StepSource interface that
// base models, guided layers and composed stacks all implement.

#ifndef NADO_SEQ_HPP_
#define NADO_SEQ_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nado {

using TokenId = std::int32_t;
using Tokens = std::span<const TokenId>;
using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class Vocabulary {
 public:
  Vocabulary() = default;
  // `eos` may be empty for fixed-length spaces.
  Vocabulary(std::vector<std::string> tokens, std::optional<TokenId> eos);

  std::size_t size() const { return tokens_.size(); }
  std::optional<TokenId> eos() const { return eos_; }
  bool contains(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < tokens_.size();
  }
  const std::string& symbol(TokenId id) const;
  TokenId id_of(const std::string& symbol) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Character-level convenience: "ab" -> ids of "a","b".
  std::vector<TokenId> encode_chars(const std::string& text) const;
  std::string render(Tokens ids, const std::string& sep = "") const;

  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
  std::optional<TokenId> eos_;
};

enum class Termination { kEos, kFixedLength };

struct SpaceSpec {
  int max_len = 0;
  Termination termination = Termination::kEos;
  bool operator==(const SpaceSpec&) const = default;
};

struct TokenSeq {
  std::vector<TokenId> ids;
  bool terminated = false;
  bool operator==(const TokenSeq&) const = default;
};

struct ScoredSeq {
  TokenSeq seq;
  double logprob = 0.0;
};

struct StepDistribution {
  std::vector<double> probs;

  // Max-shifted exponentiation of unnormalized log weights. -inf entries get
  // probability 0; throws kDeadEnd when every entry is -inf.
  static StepDistribution from_log_weights(std::span<const double> log_weights);
  std::size_t argmax() const;  // lowest id wins ties
};

// In-place log normalization; returns the log partition. Throws kDeadEnd when
// all weights are -inf and kNumeric on NaN.
double log_normalize(std::span<double> log_weights);
double log_sum_exp(std::span<const double> values);

// Anything that defines an autoregressive distribution over the sequence space.
class StepSource {
 public:
  virtual ~StepSource() = default;
  virtual const Vocabulary& vocab() const = 0;
  virtual const SpaceSpec& space() const = 0;
  // Writes normalized log-probabilities for the next token into `out`
  // (size == vocab().size()). `prefix` must be non-terminal.
  virtual void log_step(Tokens x, Tokens prefix, std::span<double> out) const = 0;
  virtual std::string fingerprint() const { return {}; }

  StepDistribution step(Tokens x, Tokens prefix) const;
};

bool is_terminal(Tokens prefix, const SpaceSpec& space,
                 std::optional<TokenId> eos);
// Valid prefix: ids in range, no eos except as the last token, len <= L.
bool is_valid_prefix(Tokens prefix, const SpaceSpec& space,
                     const Vocabulary& vocab);
// Throws kLength / kDomain / kContract for prefixes a source cannot extend.
void require_extendable(Tokens prefix, const SpaceSpec& space,
                        const Vocabulary& vocab);

// Number of token strings of length 0..max_len (terminal and not).
std::size_t count_prefixes(std::size_t vocab_size, int max_len);

// Enumerates every terminated sequence of positive probability under
// `source` with its log-probability, in lexicographic token-id order. Throws
// kCapacity when more than `budget` prefixes would be visited.
inline constexpr std::size_t kDefaultEnumerationBudget = 2'000'000;
void for_each_sequence(
    const StepSource& source, Tokens x,
    const std::function<void(const std::vector<TokenId>&, double)>& visit,
    std::size_t budget = kDefaultEnumerationBudget);

double sequence_logprob(const StepSource& source, Tokens x, Tokens y);

double uniform01(Rng& rng);
TokenId sample_index(std::span<const double> probs, Rng& rng);
TokenSeq sample_sequence(const StepSource& source, Tokens x, Rng& rng);

// Exact top-K terminated sequences by best-first search, ordered by
// non-increasing log-probability with lexicographic tie-breaking. Returns every
// sequence when K exceeds the space size.
std::vector<ScoredSeq> beam_topk(const StepSource& source, Tokens x,
                                 std::size_t k,
                                 std::size_t max_expansions = 5'000'000);

// Orders scored sequences by descending log-probability, grouping values
// within `tol` as ties resolved lexicographically.
void sort_scored(std::vector<ScoredSeq>& seqs, double tol = 1e-12);

// KL(a || b) in nats; +inf when a has mass where b has none.
double kl_divergence(std::span<const double> a, std::span<const double> b);

std::string format_double(double v);  // "%.17g"
double parse_double(const std::string& s);

}  // namespace nado

#endif  // NADO_SEQ_HPP_
