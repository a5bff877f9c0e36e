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

#include "nado/demos.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "nado/error.hpp"
#include "nado/exact.hpp"

namespace nado {

namespace {

Vocabulary letters(int n, bool eos) {
  std::vector<std::string> t;
  for (int i = 0; i < n; ++i) t.push_back(std::string(1, static_cast<char>('a' + i)));
  if (eos) {
    t.push_back("</s>");
    return Vocabulary(t, static_cast<TokenId>(n));
  }
  return Vocabulary(t, std::nullopt);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::string> toy_instance_names() {
  return {"t1", "t2", "conj2", "abc3", "eos3", "rare"};
}

ToyInstance toy_instance(const std::string& name) {
  const SpaceSpec fixed2{2, Termination::kFixedLength};
  const SpaceSpec fixed3{3, Termination::kFixedLength};
  if (name == "t1") {
    const auto v = letters(2, false);
    return {name, BaseModel::uniform(v, fixed2), Oracle::coverage({0}), {}};
  }
  if (name == "t2") {
    const auto v = letters(2, false);
    return {name, BaseModel::uniform(v, fixed3), Oracle::coverage({0}), {}};
  }
  if (name == "conj2") {
    const auto v = letters(2, false);
    return {name, BaseModel::unigram(v, fixed2, {1.0, 2.0}),
            conjoin({Oracle::coverage({0}), Oracle::coverage({1})}), {}};
  }
  if (name == "abc3") {
    const auto v = letters(3, false);
    return {name, BaseModel::unigram(v, fixed3, {1.0, 2.0, 3.0}),
            conjoin({Oracle::coverage({0}), Oracle::coverage({1})}), {}};
  }
  if (name == "eos3") {
    const auto v = letters(3, true);
    return {name, BaseModel::unigram(v, SpaceSpec{3, Termination::kEos}, {1.0, 2.0, 3.0, 2.0}),
            Oracle::coverage({0}), {}};
  }
  if (name == "rare") {
    const auto v = letters(4, false);
    return {name, BaseModel::unigram(v, fixed3, {0.05, 0.35, 0.3, 0.3}),
            Oracle::window(WindowPredicate{{0, 0}, true}), {}};
  }
  fail(ErrorCode::kConfig, "unknown toy instance: " + name);
}

void randomize_params(NadoLayer& layer, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (double& p : layer.params()) {
    // Box-Muller on our own uniforms keeps draws identical across platforms.
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    p = scale * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
}

std::vector<RecoverySpec> default_recovery_specs() {
  TrainConfig vanilla;
  vanilla.learning_rate = 5.0;
  vanilla.momentum = 0.9;
  vanilla.loss.lambda_reg = 0.0;
  vanilla.loss.clamp_eps = 1e-9;
  vanilla.steps = 100000;

  TrainConfig consistent = vanilla;
  consistent.learning_rate = 0.5;
  consistent.loss.clamp_eps = 1e-6;
  consistent.steps = 1000000;

  return {{"t1", HeadKind::kVanilla, 1.0, vanilla},
          {"t2", HeadKind::kVanilla, 1.0, vanilla},
          {"conj2", HeadKind::kVanilla, 1.0, vanilla},
          {"t1", HeadKind::kConsistent, 0.5, consistent}};
}

RecoveryRow run_recovery(const RecoverySpec& spec) {
  const auto inst = toy_instance(spec.instance);
  const Oracle oracle = spec.tau < 1.0 ? scaled(inst.oracle, spec.tau) : inst.oracle;
  auto layer = NadoLayer::tabular(spec.head, inst.model.vocab(), inst.model.space());
  train_nado(layer, inst.model, {TrainTask{inst.x, oracle}}, spec.train);
  RecoveryRow row;
  row.instance = spec.instance;
  row.head = head_name(spec.head);
  row.tau = spec.tau;
  row.steps = spec.train.steps;
  LayerSource policy(layer, inst.model, true);
  row.kl = joint_kl(closed_form_joint(inst.model, oracle, inst.x), policy, inst.x);
  row.residual = max_consistency_residual(layer, inst.model, inst.x).abs_gap;
  return row;
}

std::vector<InvarianceRow> invariance_check(const ToyInstance& inst,
                                            const std::vector<double>& taus) {
  const auto& model = inst.model;
  const Tokens x(inst.x);
  const auto table = compute_exact_ratios(model, inst.oracle, x);
  const auto base_layer = NadoLayer::from_exact_table(HeadKind::kVanilla, table);
  std::vector<InvarianceRow> rows;
  for (double tau : taus) {
    InvarianceRow row;
    row.tau = tau;
    const auto scaled_table = compute_exact_ratios(model, scaled(inst.oracle, tau), x);
    const auto expected = table.scaled(tau);
    const auto tau_layer = NadoLayer::from_exact_table(HeadKind::kVanilla, scaled_table);
    table.for_each([&](const std::vector<TokenId>& prefix, double r) {
      row.max_table_diff =
          std::max(row.max_table_diff, std::abs(scaled_table.at(prefix) - expected.at(prefix)));
      if (is_terminal(prefix, model.space(), model.vocab().eos()) || !(r > 0.0)) return;
      const auto a = guided_step(base_layer, model, x, prefix);
      const auto b = guided_step(tau_layer, model, x, prefix);
      for (std::size_t t = 0; t < a.probs.size(); ++t)
        row.max_step_diff = std::max(row.max_step_diff, std::abs(a.probs[t] - b.probs[t]));
      ++row.prefixes;
    });
    rows.push_back(row);
  }
  return rows;
}

std::vector<ResidualPoint> residual_curves(const ToyInstance& inst, int steps, int every,
                                           std::uint64_t seed, double init_scale) {
  if (every <= 0 || steps < every) fail(ErrorCode::kConfig, "residual curve needs 0 < every <= steps");
  std::vector<ResidualPoint> out;
  for (HeadKind head : {HeadKind::kVanilla, HeadKind::kConsistent}) {
    auto layer = NadoLayer::tabular(head, inst.model.vocab(), inst.model.space());
    randomize_params(layer, seed, init_scale);
    TrainConfig cfg;
    cfg.steps = every;
    cfg.learning_rate = 0.5;
    cfg.loss.lambda_reg = 0.0;
    cfg.seed = seed;
    const std::vector<TrainTask> tasks{TrainTask{inst.x, inst.oracle}};
    auto point = [&](int step) {
      LayerSource policy(layer, inst.model, true);
      ResidualPoint p;
      p.head = head_name(head);
      p.step = step;
      p.residual = max_consistency_residual(layer, inst.model, inst.x).abs_gap;
      p.kl = joint_kl(closed_form_joint(inst.model, inst.oracle, inst.x), policy, inst.x);
      out.push_back(p);
    };
    point(0);
    for (int s = every; s <= steps; s += every) {
      train_nado(layer, inst.model, tasks, cfg);
      point(s);
    }
  }
  return out;
}

std::vector<TruncationRow> truncation_table(const std::vector<std::string>& instances,
                                            const std::vector<std::size_t>& ks) {
  std::vector<TruncationRow> rows;
  for (const auto& name : instances) {
    const auto inst = toy_instance(name);
    for (std::size_t k : ks) {
      const auto rep = truncation_kl_optimality_check(inst.model, inst.x, k, 20);
      TruncationRow row;
      row.instance = name;
      row.k = rep.k;
      row.space = joint_of(inst.model, inst.x).seqs.size();
      row.topk_kl = rep.topk_kl;
      row.best_kl = rep.best_kl;
      row.co_optima = rep.argmins.size();
      row.topk_optimal = rep.topk_is_optimal;
      rows.push_back(row);
    }
  }
  return rows;
}

VarianceSummary variance_table(const ToyInstance& inst, const std::vector<std::uint64_t>& seeds,
                               std::size_t trials, std::size_t budget) {
  VarianceSummary sum;
  const TrainTask task{inst.x, inst.oracle};
  LossConfig loss;
  loss.lambda_reg = 0.0;
  for (auto seed : seeds) {
    auto layer = NadoLayer::tabular(HeadKind::kConsistent, inst.model.vocab(), inst.model.space());
    randomize_params(layer, seed, 0.1);
    VarianceRow row;
    row.seed = seed;
    const auto a = gradient_variance_probe(layer, inst.model, task, SampleStrategy::kAncestral,
                                           trials, budget, seed, loss);
    const auto b = gradient_variance_probe(layer, inst.model, task,
                                           SampleStrategy::kBasisSampling, trials, budget,
                                           seed, loss);
    row.satisfaction = a.satisfaction_rate;
    row.ancestral = a.mean_param_variance;
    row.basis = b.mean_param_variance;
    sum.mean_ancestral += row.ancestral;
    sum.mean_basis += row.basis;
    sum.rows.push_back(row);
  }
  if (!seeds.empty()) {
    sum.mean_ancestral /= static_cast<double>(seeds.size());
    sum.mean_basis /= static_cast<double>(seeds.size());
  }
  sum.ratio = sum.mean_ancestral > 0.0 ? sum.mean_basis / sum.mean_ancestral : kInf;
  return sum;
}

std::vector<BoundRow> bound_table(const std::vector<double>& deltas, std::uint64_t seed) {
  const auto v = letters(3, false);
  const auto model = BaseModel::uniform(v, SpaceSpec{3, Termination::kFixedLength});
  std::vector<ExactRatioTable> tables;
  for (TokenId t = 0; t < 3; ++t)
    tables.push_back(compute_exact_ratios(model, Oracle::coverage({t}), {}));
  const std::vector<std::vector<std::size_t>> combos{{0, 1}, {0, 2}, {0, 1, 2}};
  std::vector<BoundRow> rows;
  for (double d : deltas)
    for (auto mode : {PerturbationMode::kUniform, PerturbationMode::kAligned}) {
      auto r = bound_check(tables, model, combos, d, mode, seed);
      rows.insert(rows.end(), r.begin(), r.end());
    }
  return rows;
}

std::string recovery_csv(const std::vector<RecoveryRow>& rows) {
  std::string out = "instance,head,tau,steps,kl_to_exact,residual_max\n";
  for (const auto& r : rows)
    out += r.instance + "," + r.head + "," + fmt(r.tau) + "," + std::to_string(r.steps) + "," +
           fmt(r.kl) + "," + fmt(r.residual) + "\n";
  return out;
}

std::string invariance_csv(const std::vector<InvarianceRow>& rows) {
  std::string out = "tau,prefixes,max_step_diff,max_table_diff\n";
  for (const auto& r : rows)
    out += fmt(r.tau) + "," + std::to_string(r.prefixes) + "," + fmt(r.max_step_diff) + "," +
           fmt(r.max_table_diff) + "\n";
  return out;
}

std::string residual_csv(const std::vector<ResidualPoint>& rows) {
  std::string out = "head,step,residual_max,kl_to_exact\n";
  for (const auto& r : rows)
    out += r.head + "," + std::to_string(r.step) + "," + fmt(r.residual) + "," + fmt(r.kl) + "\n";
  return out;
}

std::string truncation_csv(const std::vector<TruncationRow>& rows) {
  std::string out = "instance,k,space,topk_kl,best_kl,co_optima,topk_optimal\n";
  for (const auto& r : rows)
    out += r.instance + "," + std::to_string(r.k) + "," + std::to_string(r.space) + "," +
           fmt(r.topk_kl) + "," + fmt(r.best_kl) + "," + std::to_string(r.co_optima) + "," +
           (r.topk_optimal ? "true" : "false") + "\n";
  return out;
}

std::string variance_csv(const VarianceSummary& s) {
  std::string out = "seed,satisfaction,ancestral_variance,basis_variance,ratio\n";
  for (const auto& r : s.rows)
    out += std::to_string(r.seed) + "," + fmt(r.satisfaction) + "," + fmt(r.ancestral) + "," +
           fmt(r.basis) + "," + fmt(r.ancestral > 0.0 ? r.basis / r.ancestral : kInf) + "\n";
  out += "mean,," + fmt(s.mean_ancestral) + "," + fmt(s.mean_basis) + "," + fmt(s.ratio) + "\n";
  return out;
}

}  // namespace nado
