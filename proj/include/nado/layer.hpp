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

// Trainable approximations of the satisfaction ratio R^C and the guided
// decoding rule built on them.
//
// Both heads read a per-prefix logit vector l(x, s) of size |V| plus a root
// logit l0(x):
//
//   vanilla     R(s + t) = sigmoid(l_t(s)),        R(empty) = sigmoid(l0)
//               q(t | s) ~ p(t | s) * R(s + t)
//
//   consistent  r(. | s) = softmax(l(s)),          beta0 = sigmoid(l0)
//               q(t | s) ~ p(t | s) * r(t | s)
//               R(empty) = beta0,  R(s + t) = R(s) * r(t | s) / Z(s),
//               Z(s) = sum_t r(t | s) p(t | s)
//
// so the consistent head satisfies sum_t R(s + t) p(t | s) = R(s) for every
// parameter value. In the beta notation R(s + t) = beta(s) * r(t | s) with
// beta(s) = R(s) / Z(s).

#ifndef NADO_LAYER_HPP_
#define NADO_LAYER_HPP_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nado/exact.hpp"
#include "nado/mlp.hpp"
#include "nado/seq.hpp"

namespace nado {

enum class HeadKind { kVanilla, kConsistent };
enum class ScorerKind { kTabular, kNeural };
enum class ContextMode { kTokensOnly, kTokensUpstream };

const char* head_name(HeadKind h);
HeadKind parse_head(const std::string& s);

struct NeuralScorerSpec {
  int window = 2;
  int hidden = 16;
  bool use_x = false;  // x multi-hot features
  double init_scale = 0.5;
};

class NadoLayer {
 public:
  // Tabular scorer: one logit vector per prefix (x is ignored). All logits
  // start at `init_logit`, the root at `init_root`.
  static NadoLayer tabular(HeadKind head, const Vocabulary& vocab,
                           const SpaceSpec& space, double init_logit = 0.0,
                           double init_root = 0.0);
  static NadoLayer neural(HeadKind head, const Vocabulary& vocab,
                          const SpaceSpec& space, const NeuralScorerSpec& spec,
                          ContextMode mode, std::uint64_t seed);
  // Tabular layer whose outputs reproduce `table`: vanilla logits are
  // logit(R), consistent logits are log R(s + t).
  static NadoLayer from_exact_table(HeadKind head, const ExactRatioTable& table);

  HeadKind head() const { return head_; }
  ScorerKind scorer() const { return scorer_; }
  ContextMode context_mode() const { return mode_; }
  const Vocabulary& vocab() const { return vocab_; }
  const SpaceSpec& space() const { return space_; }
  const std::string& base_fingerprint() const { return base_fingerprint_; }
  void set_base_fingerprint(std::string fp) { base_fingerprint_ = std::move(fp); }

  std::span<double> params();
  std::span<const double> params() const;
  std::size_t num_params() const { return params().size(); }
  // Parameters that only feed the root logit.
  std::vector<std::size_t> root_param_indices() const;

  // Scorer outputs. `base_probs` is the base step distribution at `prefix`,
  // used as features in kTokensUpstream mode.
  void logits(Tokens x, Tokens prefix, std::span<const double> base_probs,
              std::span<double> out) const;
  double root_logit(Tokens x) const;
  void accumulate_logit_grad(Tokens x, Tokens prefix,
                             std::span<const double> base_probs,
                             std::span<const double> d_logits,
                             std::span<double> grad) const;
  void accumulate_root_grad(Tokens x, double d_root, std::span<double> grad) const;

  // Tabular only: direct access to a prefix's logit row.
  std::span<double> tabular_row(Tokens prefix);
  double& tabular_root();

  nlohmann::json to_json() const;
  static NadoLayer from_json(const nlohmann::json& j);
  std::string fingerprint() const;

 private:
  NadoLayer() = default;
  SparseInput features(Tokens x, Tokens prefix, std::span<const double> base_probs) const;
  SparseInput root_features(Tokens x) const;

  HeadKind head_ = HeadKind::kConsistent;
  ScorerKind scorer_ = ScorerKind::kTabular;
  ContextMode mode_ = ContextMode::kTokensOnly;
  Vocabulary vocab_;
  SpaceSpec space_;
  std::string base_fingerprint_;
  PrefixIndex index_;
  std::vector<double> table_;  // tabular: rows of |V| logits, then the root
  NeuralScorerSpec spec_;
  Mlp mlp_;  // neural: |V| + 1 outputs, the last one is the root
};

// log sigmoid, exact at +-inf.
double log_sigmoid(double z);
double sigmoid(double z);

// The guidance term added to log p before renormalization: log sigmoid(l)
// for vanilla heads, l for consistent heads.
void guidance_terms(const NadoLayer& layer, Tokens x, Tokens prefix,
                    std::span<const double> base_logp, std::span<double> out);

// R(prefix + t) for every t.
std::vector<double> ratio_next(const NadoLayer& layer, const StepSource& base,
                               Tokens x, Tokens prefix);
// log R(prefix); consistent heads accumulate along the prefix.
double log_ratio(const NadoLayer& layer, const StepSource& base, Tokens x,
                 Tokens prefix);
// beta(prefix) by literal left-to-right induction in log space:
// beta(empty) = beta0 * r(x, empty) / Z(empty) with r(x, empty) = 1, and
// beta(s + t) = beta(s) * r(t | s) / Z(s + t). Throws kNumeric on a
// non-finite result.
double beta_recursion(const NadoLayer& layer, const StepSource& base, Tokens x,
                      Tokens prefix);
StepDistribution guided_step(const NadoLayer& layer, const StepSource& base,
                             Tokens x, Tokens prefix);

// r(. | s) proportional to q / p. Throws kBijection when the supports differ.
std::vector<double> ratios_from_q(std::span<const double> p, std::span<const double> q);

// Decoding policy q_theta over a base source. Refuses a base whose
// fingerprint differs from the layer's unless `allow_mismatch`.
class LayerSource final : public StepSource {
 public:
  LayerSource(const NadoLayer& layer, const StepSource& base,
              bool allow_mismatch = false);
  const Vocabulary& vocab() const override { return base_.vocab(); }
  const SpaceSpec& space() const override { return base_.space(); }
  void log_step(Tokens x, Tokens prefix, std::span<double> out) const override;
  std::string fingerprint() const override;

 private:
  const NadoLayer& layer_;
  const StepSource& base_;
};

enum class DecodeStrategy { kGreedy, kSample, kBeam };

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
  std::size_t beam_width = 4;
  double dead_end_floor = 0.0;  // step masses at or below this count as dead
};

// Decodes one terminated sequence from `policy`. `rng` is required for
// sampling. Throws kDeadEnd naming the prefix when every next-token mass is
// at or below the floor.
TokenSeq decode(const StepSource& policy, Tokens x, const DecodeOptions& options,
                Rng* rng = nullptr);

}  // namespace nado

#endif  // NADO_LAYER_HPP_
