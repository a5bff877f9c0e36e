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

// Losses, sample construction and optimization for ratio layers.
//
// The per-prefix loss is binary cross-entropy between the sequence label C
// and R(y<=i) at every position i (and at the root when supervise_root).
// dBCE/dR = (R - C) / (R (1 - R)), the minimization-sign convention.

#ifndef NADO_TRAIN_HPP_
#define NADO_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nado/layer.hpp"
#include "nado/oracle.hpp"
#include "nado/seq.hpp"

namespace nado {

struct SampleItem {
  std::vector<TokenId> x;
  std::vector<TokenId> y;  // terminated
  double label = 0.0;
  double weight = 0.0;
};

struct SampleBatch {
  std::vector<SampleItem> items;
  std::string proxy_id;
};

enum class BasisConstruction { kBeam, kSampling };

struct TruncationBasis {
  std::vector<std::vector<TokenId>> seqs;
  std::vector<double> weights;  // p(y) / sum over the basis
  BasisConstruction construction = BasisConstruction::kBeam;
  bool partial = false;  // sampling stopped before reaching K unique
  std::size_t draws = 0;
};

// Beam: exact top-K. Sampling: ancestral draws until K unique sequences or
// `max_draws` draws. Weights are p-renormalized and independent of draw order
// (sequences are stored lexicographically).
TruncationBasis build_basis(const StepSource& model, Tokens x, std::size_t k,
                            BasisConstruction construction, Rng* rng = nullptr,
                            std::size_t max_draws = 0);

struct TruncationReport {
  std::size_t k = 0;
  double topk_kl = 0.0;  // KL(renormalized top-K || p)
  double best_kl = 0.0;  // min over all K-subsets
  std::vector<std::vector<std::vector<TokenId>>> argmins;  // tied co-optima
  bool topk_is_optimal = false;
  std::size_t subsets_checked = 0;
};

// Exhaustive search over every K-subset of the (enumerable) space.
TruncationReport truncation_kl_optimality_check(const StepSource& model, Tokens x,
                                                std::size_t k,
                                                std::size_t max_space = 64);

struct LossConfig {
  double clamp_eps = 1e-6;
  double lambda_reg = 1.0;  // vanilla heads only
  bool supervise_root = true;
};

struct LossResult {
  double loss = 0.0;
  double bce = 0.0;
  double reg = 0.0;
  std::vector<double> grad;
};

// dBCE/dR.
double bce_grad_r(double r, double c);

LossResult nado_loss(const NadoLayer& layer, const StepSource& base,
                     const SampleBatch& batch, const LossConfig& config);

struct Residual {
  double abs_gap = 0.0;  // |sum_t R(s+t) p(t|s) - R(s)|
  double kl = 0.0;       // Bernoulli KL(sum_t R(s+t) p(t|s) || R(s))
};

Residual consistency_residual(const NadoLayer& layer, const StepSource& base,
                              Tokens x, Tokens prefix);
// Max over every non-terminal prefix of the space.
Residual max_consistency_residual(const NadoLayer& layer, const StepSource& base,
                                  Tokens x,
                                  std::size_t budget = kDefaultEnumerationBudget);

enum class SampleStrategy { kExhaustive, kAncestral, kBasisBeam, kBasisSampling, kSelfProxy };

const char* strategy_name(SampleStrategy s);
SampleStrategy parse_strategy(const std::string& s);

struct TrainTask {
  std::vector<TokenId> x;
  Oracle oracle;
};

struct TrainConfig {
  int steps = 500;
  double learning_rate = 0.5;
  double momentum = 0.0;
  double grad_clip = 0.0;  // max global L2 norm of a step's gradient; 0 disables
  std::size_t batch_size = 32;
  LossConfig loss;
  SampleStrategy strategy = SampleStrategy::kExhaustive;
  std::uint64_t seed = 0;
  int eval_every = 0;  // 0: evaluate at the end only; else also at step 0
  std::size_t basis_k = 16;
  bool refresh_basis = false;
  double is_clip = 10.0;
  std::size_t eval_budget = 200'000;  // exact evaluation only within this many prefixes
  std::size_t eval_samples = 2000;    // Monte-Carlo fallback
};

struct MetricsRow {
  int step = 0;
  double loss = 0.0;
  std::optional<double> kl_to_exact;
  double satisfaction_rate = 0.0;
  std::optional<double> residual_max;
};

std::string metrics_json_line(const MetricsRow& row);

struct EvalResult {
  std::optional<double> kl_to_exact;  // mean over tasks
  double satisfaction_rate = 0.0;     // mean over tasks
  std::optional<double> residual_max;
};

EvalResult evaluate_layer(const NadoLayer& layer, const StepSource& base,
                          const std::vector<TrainTask>& tasks, const TrainConfig& config);

// Gradient descent with optional momentum. One JSON line per evaluation is
// written to `trace` when given. Deterministic given config.seed.
std::vector<MetricsRow> train_nado(NadoLayer& layer, const StepSource& base,
                                   const std::vector<TrainTask>& tasks,
                                   const TrainConfig& config,
                                   std::ostream* trace = nullptr);

// Builds the batch a strategy would use for one update.
SampleBatch make_batch(const NadoLayer& layer, const StepSource& base,
                       const TrainTask& task, SampleStrategy strategy,
                       std::size_t budget, double is_clip, Rng& rng);

struct WarmupConfig {
  int steps = 200;
  double learning_rate = 0.5;
  double momentum = 0.0;
};

// Maximizes sum log q_theta(y | x) over the r-parameters only; parameters
// that feed the root logit are never written. Returns the mean NLL per step.
std::vector<double> warmup_likelihood(
    NadoLayer& layer, const StepSource& base,
    const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>>& positives,
    const WarmupConfig& config);

struct VarianceReport {
  std::string strategy;
  double satisfaction_rate = 0.0;
  double mean_abs_grad = 0.0;
  double mean_param_variance = 0.0;  // averaged over parameters
  double root_dr_mean = 0.0;         // weighted dBCE/dR at the root
  double root_dr_variance = 0.0;
  std::size_t trials = 0;
  std::size_t budget = 0;
};

// Runs `trials` independent estimators, each from `budget` draws.
VarianceReport gradient_variance_probe(const NadoLayer& layer, const StepSource& base,
                                       const TrainTask& task, SampleStrategy strategy,
                                       std::size_t trials, std::size_t budget,
                                       std::uint64_t seed, const LossConfig& loss);

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string table() const;
};

// Central differences on `indices` (all parameters when empty). Relative
// error uses max(|analytic|, |numeric|, floor) as denominator.
GradCheckReport finite_difference_check(const NadoLayer& layer, const StepSource& base,
                                        const SampleBatch& batch, const LossConfig& config,
                                        std::vector<std::size_t> indices = {},
                                        double h = 1e-5, double floor = 1e-7);

}  // namespace nado

#endif  // NADO_TRAIN_HPP_
