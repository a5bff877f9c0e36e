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

// Small named instances and the measurements run on them by the reproduce
// command and the acceptance suite.

#ifndef NADO_DEMOS_HPP_
#define NADO_DEMOS_HPP_

#include <string>
#include <vector>

#include "nado/base_model.hpp"
#include "nado/compose.hpp"
#include "nado/layer.hpp"
#include "nado/oracle.hpp"
#include "nado/train.hpp"

namespace nado {

struct ToyInstance {
  std::string name;
  BaseModel model;
  Oracle oracle;
  std::vector<TokenId> x;
};

// t1: uniform p over {a,b}, fixed length 2, coverage of a.
// t2: uniform p over {a,b}, fixed length 3, coverage of a.
// conj2: unigram p = (1,2)/3 over {a,b}, fixed length 2, a and b both present.
// abc3: unigram p = (1,2,3)/6 over {a,b,c}, fixed length 3, a and b present.
// eos3: unigram over {a,b,c,</s>}, eos-terminated up to 3, coverage of a.
// rare: unigram over {a,b,c,d} with p(a) = 0.05, fixed length 3, contains "a a".
ToyInstance toy_instance(const std::string& name);
std::vector<std::string> toy_instance_names();

// Fills every parameter with scale * N(0, 1).
void randomize_params(NadoLayer& layer, std::uint64_t seed, double scale);

struct RecoverySpec {
  std::string instance;
  HeadKind head = HeadKind::kVanilla;
  double tau = 1.0;  // oracle scaled by tau when < 1
  TrainConfig train;
};

struct RecoveryRow {
  std::string instance;
  std::string head;
  double tau = 1.0;
  int steps = 0;
  double kl = 0.0;  // KL(closed-form q || q_theta)
  double residual = 0.0;
};

std::vector<RecoverySpec> default_recovery_specs();
RecoveryRow run_recovery(const RecoverySpec& spec);

struct InvarianceRow {
  double tau = 1.0;
  double max_step_diff = 0.0;   // vanilla layer fit to R^C vs R^{tau C}
  double max_table_diff = 0.0;  // table of tau*C vs tau * table of C
  std::size_t prefixes = 0;
};

std::vector<InvarianceRow> invariance_check(const ToyInstance& inst,
                                            const std::vector<double>& taus);

struct ResidualPoint {
  std::string head;
  int step = 0;
  double residual = 0.0;  // max |sum_t R(s+t) p(t|s) - R(s)| over prefixes
  double kl = 0.0;
};

// Trains randomly initialized tabular vanilla and consistent heads with no
// consistency regularizer and records the residual every `every` steps.
std::vector<ResidualPoint> residual_curves(const ToyInstance& inst, int steps, int every,
                                           std::uint64_t seed, double init_scale);

struct TruncationRow {
  std::string instance;
  std::size_t k = 0;
  std::size_t space = 0;
  double topk_kl = 0.0;
  double best_kl = 0.0;
  std::size_t co_optima = 0;
  bool topk_optimal = false;
};

std::vector<TruncationRow> truncation_table(const std::vector<std::string>& instances,
                                            const std::vector<std::size_t>& ks);

struct VarianceRow {
  std::uint64_t seed = 0;
  double satisfaction = 0.0;
  double ancestral = 0.0;  // mean per-parameter gradient variance
  double basis = 0.0;      // same, truncation basis from the same draw budget
};

struct VarianceSummary {
  std::vector<VarianceRow> rows;
  double mean_ancestral = 0.0;
  double mean_basis = 0.0;
  double ratio = 0.0;  // mean_basis / mean_ancestral
};

VarianceSummary variance_table(const ToyInstance& inst, const std::vector<std::uint64_t>& seeds,
                               std::size_t trials, std::size_t budget);

// Exact coverage tables of a, b, c under uniform p over {a,b,c}, fixed
// length 3, probed with N = 2 and N = 3 combos.
std::vector<BoundRow> bound_table(const std::vector<double>& deltas, std::uint64_t seed);

std::string recovery_csv(const std::vector<RecoveryRow>& rows);
std::string invariance_csv(const std::vector<InvarianceRow>& rows);
std::string residual_csv(const std::vector<ResidualPoint>& rows);
std::string truncation_csv(const std::vector<TruncationRow>& rows);
std::string variance_csv(const VarianceSummary& summary);

}  // namespace nado

#endif  // NADO_DEMOS_HPP_
