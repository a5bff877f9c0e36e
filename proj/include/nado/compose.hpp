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

// Stacks of per-constraint ratio layers.
//
// Independent product: q(t | s) ~ p(t | s) * prod_k g_k(t), every layer
// trained against p. Cascaded: q_k(t | s) ~ q_{k-1}(t | s) * g_k(t), layer k
// trained against q_{k-1} and reading q_{k-1}(. | s) as extra features.

#ifndef NADO_COMPOSE_HPP_
#define NADO_COMPOSE_HPP_

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "nado/exact.hpp"
#include "nado/layer.hpp"
#include "nado/oracle.hpp"
#include "nado/train.hpp"

namespace nado {

enum class ComposeMode { kIndependentProduct, kCascaded };

const char* compose_mode_name(ComposeMode m);
ComposeMode parse_compose_mode(const std::string& s);

struct CascadeStack {
  ComposeMode mode = ComposeMode::kIndependentProduct;
  std::vector<NadoLayer> layers;
  std::vector<Oracle> oracles;  // one per layer

  // Throws kConfig when the invariants of the mode do not hold.
  void validate() const;
  nlohmann::json to_json() const;
  static CascadeStack from_json(const nlohmann::json& j);
};

// Decoding policy of a stack (or of its first `depth` layers) over `base`.
class StackSource final : public StepSource {
 public:
  StackSource(const CascadeStack& stack, const StepSource& base,
              std::size_t depth = static_cast<std::size_t>(-1));
  const Vocabulary& vocab() const override { return base_.vocab(); }
  const SpaceSpec& space() const override { return base_.space(); }
  void log_step(Tokens x, Tokens prefix, std::span<double> out) const override;
  std::string fingerprint() const override;

 private:
  const CascadeStack& stack_;
  const StepSource& base_;
  std::size_t depth_;
};

// Throws kDeadEnd when every token is masked.
StepDistribution composed_step(const CascadeStack& stack, const StepSource& base,
                               Tokens x, Tokens prefix);

struct StackLayerMetrics {
  std::size_t layer = 0;
  double delta_max = 0.0;   // max |log R_hat - log R_exact| over eval prefixes
  double delta_mean = 0.0;
  std::size_t eval_prefixes = 0;
  std::vector<MetricsRow> trace;
};

// Trains every layer in order. In cascaded mode layer k sees the first k
// layers as its base. `tasks_per_layer[k]` lists the inputs for layer k; the
// oracle of each task must be stack.oracles[k]. Delta is measured against
// the exact table of the layer's own base over prefixes with R_exact > 0.
std::vector<StackLayerMetrics> train_stack(CascadeStack& stack, const StepSource& base,
                                           const std::vector<std::vector<TrainTask>>& tasks_per_layer,
                                           const TrainConfig& config);

// Max and mean |log R_hat - log R_exact| over prefixes with positive exact ratio.
std::pair<double, double> log_ratio_error(const NadoLayer& layer, const StepSource& base,
                                          const ExactRatioTable& exact, Tokens x,
                                          std::size_t* count = nullptr);

enum class PerturbationMode { kUniform, kAligned };

struct BoundRow {
  std::string combo;
  std::size_t n = 0;
  double delta = 0.0;
  std::string mode;
  double max_log_error = 0.0;  // unnormalized composed score
  double renorm_slack = 0.0;   // max normalized joint log-error minus the above
  double max_normalized_error = 0.0;
  bool within_bound = false;
  bool witness = false;        // max_log_error >= 0.95 N delta
};

// Perturbs log R of each table by up to delta (i.i.d. uniform or aligned at
// +delta), recomposes and compares against the unperturbed composition on
// every prefix with positive composed score. Combos index into `tables`.
std::vector<BoundRow> bound_check(const std::vector<ExactRatioTable>& tables,
                                  const StepSource& base,
                                  const std::vector<std::vector<std::size_t>>& combos,
                                  double delta, PerturbationMode mode, std::uint64_t seed);

std::string bound_csv(const std::vector<BoundRow>& rows);

// A single layer trained on the conjunction of each task's constraints.
NadoLayer naive_conjunction_baseline(const StepSource& base,
                                     const std::vector<TrainTask>& conjunction_tasks,
                                     const NeuralScorerSpec& spec, HeadKind head,
                                     std::uint64_t seed, const TrainConfig& config,
                                     std::vector<MetricsRow>* trace = nullptr);

}  // namespace nado

#endif  // NADO_COMPOSE_HPP_
