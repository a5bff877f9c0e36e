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

// Compositional generalization benchmark on a generated task family.
//
// Methods compared on held-out concept combinations:
//   base            the uncontrolled base model
//   monolithic      one neural layer trained on the train-combo conjunctions
//   per_constraint  one layer per concept, composed per combo
// plus cascaded vs independent-product stacks on a weakly dependent pair
// (combo coverage and grammar well-formedness).

#ifndef NADO_BENCHMARK_HPP_
#define NADO_BENCHMARK_HPP_

#include <string>
#include <vector>

#include "json.hpp"
#include "nado/layer.hpp"
#include "nado/taskgen.hpp"
#include "nado/train.hpp"

namespace nado {

struct BenchmarkConfig {
  FamilySpec family;
  std::uint64_t seed = 0;
  int ngram_order = 2;
  double ngram_smoothing = 0.5;
  HeadKind head = HeadKind::kConsistent;
  TrainConfig per_constraint;
  bool per_constraint_tabular = false;
  NeuralScorerSpec per_constraint_scorer;  // when not tabular
  TrainConfig monolithic;      // neural conjunction layer
  NeuralScorerSpec monolithic_scorer;
  TrainConfig cascade;         // neural layers of the dependent-pair stacks
  NeuralScorerSpec cascade_scorer;
  std::size_t cascade_combos = 2;  // test combos used for the dependent pair
  std::size_t decode_samples = 200;

  BenchmarkConfig();
  nlohmann::json to_json() const;
  static BenchmarkConfig from_json(const nlohmann::json& j);
};

struct CoverageRow {
  std::string combo;
  std::string method;
  double expected_coverage = 0.0;  // exact, by enumeration of the policy
  double sampled_coverage = 0.0;   // over decode_samples ancestral decodes
  double kl_to_exact = 0.0;        // KL(closed-form conjunction || policy)
};

struct CascadeRow {
  std::string combo;
  std::string mode;
  double kl_to_exact = 0.0;
  double satisfaction = 0.0;
};

struct BenchmarkResult {
  std::vector<std::string> train_combos;
  std::vector<std::string> test_combos;
  std::vector<CoverageRow> coverage;
  std::vector<CascadeRow> cascade;
  double mean_base = 0.0;
  double mean_monolithic = 0.0;
  double mean_monolithic_train = 0.0;  // on its own training combos
  double mean_per_constraint = 0.0;
  double margin = 0.0;  // per_constraint - monolithic, test combos
  double mean_kl_independent = 0.0;
  double mean_kl_cascaded = 0.0;

  std::string coverage_csv() const;
  std::string cascade_csv() const;
  nlohmann::json summary_json() const;
};

BenchmarkResult run_composition_benchmark(const BenchmarkConfig& config);

}  // namespace nado

#endif  // NADO_BENCHMARK_HPP_
