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

// Brute-force ground truth over enumerable sequence spaces: the expected
// satisfaction R^C(prefix) for every prefix, the closed-form projected joint
// q(y) = p(y) C(y) / Z, and joint KL measurement.

#ifndef NADO_EXACT_HPP_
#define NADO_EXACT_HPP_

#include <functional>
#include <string>
#include <vector>

#include "nado/oracle.hpp"
#include "nado/seq.hpp"

namespace nado {

// Dense index over all token strings of length 0..max_len: strings are laid
// out by length, then lexicographically.
class PrefixIndex {
 public:
  PrefixIndex() = default;
  PrefixIndex(std::size_t vocab_size, int max_len);

  std::size_t size() const { return offsets_.back(); }
  // Number of strings shorter than `len`.
  std::size_t count_shorter(int len) const { return offsets_[static_cast<std::size_t>(len)]; }
  std::size_t index(Tokens prefix) const;
  std::vector<TokenId> prefix_at(std::size_t idx) const;
  std::size_t vocab_size() const { return vocab_size_; }
  int max_len() const { return max_len_; }

 private:
  std::size_t vocab_size_ = 0;
  int max_len_ = 0;
  std::vector<std::size_t> offsets_{0};
};

class ExactRatioTable {
 public:
  ExactRatioTable(Vocabulary vocab, SpaceSpec space, std::vector<TokenId> x,
                  std::string model_fingerprint, std::string oracle_fingerprint);

  bool contains(Tokens prefix) const;
  // Throws kDomain for prefixes outside the space.
  double at(Tokens prefix) const;
  void set(Tokens prefix, double value);

  const Vocabulary& vocab() const { return vocab_; }
  const SpaceSpec& space() const { return space_; }
  const std::vector<TokenId>& x() const { return x_; }
  const std::string& model_fingerprint() const { return model_fingerprint_; }
  const std::string& oracle_fingerprint() const { return oracle_fingerprint_; }
  const PrefixIndex& index() const { return index_; }
  int max_len() const { return space_.max_len; }

  // Valid prefixes in lexicographic token-id order (depth first).
  void for_each(const std::function<void(const std::vector<TokenId>&, double)>& visit) const;
  // One "<tokens>\t<value>" line per prefix, lexicographic, %.17g values;
  // the empty prefix prints as "<root>".
  std::string export_text() const;

  ExactRatioTable scaled(double tau) const;

 private:
  Vocabulary vocab_;
  SpaceSpec space_;
  std::vector<TokenId> x_;
  std::string model_fingerprint_;
  std::string oracle_fingerprint_;
  PrefixIndex index_;
  std::vector<double> values_;  // NaN marks strings outside the space
};

// Backward DP: terminal entries are oracle values, interior entries are
// p-weighted averages of their children. Throws kCapacity when the prefix
// count exceeds `budget`.
ExactRatioTable compute_exact_ratios(const StepSource& model, const Oracle& oracle,
                                     Tokens x,
                                     std::size_t budget = kDefaultEnumerationBudget);

// q(t) proportional to p(t | prefix) * R(prefix + t). Throws kDeadEnd when
// R(prefix) == 0.
StepDistribution exact_guided_step(const ExactRatioTable& table,
                                   const StepSource& model, Tokens x, Tokens prefix);

// Guided decoding policy backed by an exact table.
class ExactGuidedSource final : public StepSource {
 public:
  ExactGuidedSource(const ExactRatioTable& table, const StepSource& model)
      : table_(table), model_(model) {}
  const Vocabulary& vocab() const override { return model_.vocab(); }
  const SpaceSpec& space() const override { return model_.space(); }
  void log_step(Tokens x, Tokens prefix, std::span<double> out) const override;

 private:
  const ExactRatioTable& table_;
  const StepSource& model_;
};

// Probability over terminated sequences, lexicographic order.
struct JointDistribution {
  std::vector<std::vector<TokenId>> seqs;
  std::vector<double> probs;

  double total() const;
  double prob_of(Tokens y) const;  // 0 when absent
};

// All sequences of `source` with their chain-rule probabilities.
JointDistribution joint_of(const StepSource& source, Tokens x,
                           std::size_t budget = kDefaultEnumerationBudget);

// p(y) C(y) / sum p C. Throws kInfeasible when no sequence satisfies C.
JointDistribution closed_form_joint(const StepSource& model, const Oracle& oracle,
                                    Tokens x,
                                    std::size_t budget = kDefaultEnumerationBudget);

// KL(reference || candidate) over a shared support listing.
double joint_kl(const JointDistribution& reference, const JointDistribution& candidate);
double joint_kl(const JointDistribution& reference, const StepSource& candidate,
                Tokens x, std::size_t budget = kDefaultEnumerationBudget);

}  // namespace nado

#endif  // NADO_EXACT_HPP_
