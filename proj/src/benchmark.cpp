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

#include "nado/benchmark.hpp"

#include <cstdio>
#include <sstream>

#include "nado/base_model.hpp"
#include "nado/compose.hpp"
#include "nado/config.hpp"
#include "nado/error.hpp"
#include "nado/exact.hpp"

namespace nado {

using nlohmann::json;

BenchmarkConfig::BenchmarkConfig() {
  family.num_concepts = 6;
  family.max_len = 4;
  family.corpus_size = 60;

  // One optimizer setting for every method.
  per_constraint.steps = 300;
  per_constraint.learning_rate = 0.5;
  per_constraint.momentum = 0.9;
  per_constraint.grad_clip = 1.0;
  per_constraint.loss.lambda_reg = 0.0;

  per_constraint_scorer.hidden = 16;

  monolithic = per_constraint;
  monolithic_scorer.hidden = 16;
  monolithic_scorer.use_x = true;

  cascade = per_constraint;
  cascade_scorer.hidden = 16;
}

json BenchmarkConfig::to_json() const {
  return json{{"family", family.to_json()},
              {"seed", seed},
              {"ngram_order", ngram_order},
              {"ngram_smoothing", format_double(ngram_smoothing)},
              {"head", head_name(head)},
              {"per_constraint", train_config_to_json(per_constraint)},
              {"per_constraint_tabular", per_constraint_tabular},
              {"per_constraint_scorer", scorer_to_json(per_constraint_scorer)},
              {"monolithic", train_config_to_json(monolithic)},
              {"monolithic_scorer", scorer_to_json(monolithic_scorer)},
              {"cascade", train_config_to_json(cascade)},
              {"cascade_scorer", scorer_to_json(cascade_scorer)},
              {"cascade_combos", cascade_combos},
              {"decode_samples", decode_samples}};
}

BenchmarkConfig BenchmarkConfig::from_json(const json& j) {
  BenchmarkConfig c;
  if (j.is_null()) return c;
  check_keys(j,
             {"family", "seed", "ngram_order", "ngram_smoothing", "head", "per_constraint",
              "per_constraint_tabular", "per_constraint_scorer",
              "monolithic", "monolithic_scorer", "cascade", "cascade_scorer", "cascade_combos",
              "decode_samples"},
             "benchmark");
  if (j.contains("family")) c.family = FamilySpec::from_json(j["family"]);
  c.seed = j.value("seed", c.seed);
  c.ngram_order = j.value("ngram_order", c.ngram_order);
  c.ngram_smoothing = json_number_or(j, "ngram_smoothing", c.ngram_smoothing);
  if (j.contains("head")) c.head = parse_head(j["head"].get<std::string>());
  c.per_constraint = train_config_from_json(j.value("per_constraint", json()), c.per_constraint);
  c.per_constraint_tabular = j.value("per_constraint_tabular", c.per_constraint_tabular);
  c.per_constraint_scorer =
      scorer_from_json(j.value("per_constraint_scorer", json()), c.per_constraint_scorer);
  c.monolithic = train_config_from_json(j.value("monolithic", json()), c.monolithic);
  c.monolithic_scorer = scorer_from_json(j.value("monolithic_scorer", json()), c.monolithic_scorer);
  c.cascade = train_config_from_json(j.value("cascade", json()), c.cascade);
  c.cascade_scorer = scorer_from_json(j.value("cascade_scorer", json()), c.cascade_scorer);
  c.cascade_combos = j.value("cascade_combos", c.cascade_combos);
  c.decode_samples = j.value("decode_samples", c.decode_samples);
  if (c.decode_samples == 0) fail(ErrorCode::kConfig, "benchmark: decode_samples must be positive");
  return c;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

CoverageRow score_policy(const StepSource& policy, const StepSource& base,
                         const Oracle& oracle, Tokens x, const std::string& combo,
                         const std::string& method, std::size_t samples, std::uint64_t seed) {
  CoverageRow row;
  row.combo = combo;
  row.method = method;
  row.expected_coverage = satisfaction_rate(oracle, policy, x).rate;
  Rng rng(seed);
  std::vector<TokenSeq> decodes;
  for (std::size_t i = 0; i < samples; ++i) decodes.push_back(sample_sequence(policy, x, rng));
  ConstraintSet set;
  set.oracles = {oracle};
  row.sampled_coverage = coverage_metric(decodes, set, x, policy.vocab().eos());
  row.kl_to_exact = joint_kl(closed_form_joint(base, oracle, x), policy, x);
  return row;
}

double mean_of(const std::vector<CoverageRow>& rows, const std::string& method) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.method == method) {
      s += r.expected_coverage;
      ++n;
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

}  // namespace

std::string BenchmarkResult::coverage_csv() const {
  std::string out = "combo,method,expected_coverage,sampled_coverage,kl_to_exact\n";
  for (const auto& r : coverage)
    out += r.combo + "," + r.method + "," + fmt(r.expected_coverage) + "," +
           fmt(r.sampled_coverage) + "," + fmt(r.kl_to_exact) + "\n";
  return out;
}

std::string BenchmarkResult::cascade_csv() const {
  std::string out = "combo,mode,kl_to_exact,satisfaction\n";
  for (const auto& r : cascade)
    out += r.combo + "," + r.mode + "," + fmt(r.kl_to_exact) + "," + fmt(r.satisfaction) + "\n";
  return out;
}

json BenchmarkResult::summary_json() const {
  return json{{"train_combos", train_combos},
              {"test_combos", test_combos},
              {"mean_coverage_base", fmt(mean_base)},
              {"mean_coverage_monolithic", fmt(mean_monolithic)},
              {"mean_train_coverage_monolithic", fmt(mean_monolithic_train)},
              {"mean_coverage_per_constraint", fmt(mean_per_constraint)},
              {"coverage_margin", fmt(margin)},
              {"mean_kl_independent_product", fmt(mean_kl_independent)},
              {"mean_kl_cascaded", fmt(mean_kl_cascaded)}};
}

BenchmarkResult run_composition_benchmark(const BenchmarkConfig& config) {
  const TaskFamily fam = generate_family(config.family, config.seed);
  const BaseModel base =
      fit_ngram(fam.vocab, fam.space, fam.corpus, config.ngram_order, config.ngram_smoothing);
  BenchmarkResult res;
  for (const auto& c : fam.train_combos) res.train_combos.push_back(fam.combo_name(c));
  for (const auto& c : fam.test_combos) res.test_combos.push_back(fam.combo_name(c));

  // Per-concept tabular layers, each trained against the base alone.
  std::vector<NadoLayer> concept_layers;
  for (int k = 0; k < fam.spec.num_concepts; ++k) {
    auto layer = config.per_constraint_tabular
                     ? NadoLayer::tabular(config.head, fam.vocab, fam.space)
                     : NadoLayer::neural(config.head, fam.vocab, fam.space,
                                         config.per_constraint_scorer, ContextMode::kTokensOnly,
                                         config.seed + 31ULL * static_cast<std::uint64_t>(k + 1));
    TrainConfig cfg = config.per_constraint;
    cfg.seed = config.seed + 7919ULL * static_cast<std::uint64_t>(k + 1);
    const std::vector<TokenId> x{fam.concepts[static_cast<std::size_t>(k)].front()};
    train_nado(layer, base, {TrainTask{x, fam.concept_oracle(k)}}, cfg);
    layer.set_base_fingerprint(base.fingerprint());
    concept_layers.push_back(std::move(layer));
  }

  // Monolithic layer trained on train-combo conjunctions, conditioned on x.
  std::vector<TrainTask> mono_tasks;
  for (const auto& c : fam.train_combos)
    mono_tasks.push_back(TrainTask{fam.combo_input(c), fam.combo_oracle(c)});
  TrainConfig mono_cfg = config.monolithic;
  mono_cfg.seed = config.seed + 104729ULL;
  const NadoLayer mono = naive_conjunction_baseline(base, mono_tasks, config.monolithic_scorer,
                                                    config.head, mono_cfg.seed, mono_cfg);

  {
    double s = 0.0;
    for (const auto& c : fam.train_combos) {
      LayerSource policy(mono, base);
      s += satisfaction_rate(fam.combo_oracle(c), policy, fam.combo_input(c)).rate;
    }
    res.mean_monolithic_train = s / static_cast<double>(fam.train_combos.size());
  }

  std::uint64_t sample_seed = config.seed * 31ULL + 17ULL;
  for (const auto& combo : fam.test_combos) {
    const auto x = fam.combo_input(combo);
    const auto oracle = fam.combo_oracle(combo);
    const auto name = fam.combo_name(combo);
    res.coverage.push_back(score_policy(base, base, oracle, x, name, "base",
                                        config.decode_samples, ++sample_seed));
    LayerSource mono_policy(mono, base);
    res.coverage.push_back(score_policy(mono_policy, base, oracle, x, name, "monolithic",
                                        config.decode_samples, ++sample_seed));
    CascadeStack stack;
    for (int k : combo) {
      stack.layers.push_back(concept_layers[static_cast<std::size_t>(k)]);
      stack.oracles.push_back(fam.concept_oracle(k));
    }
    stack.validate();
    StackSource stack_policy(stack, base);
    res.coverage.push_back(score_policy(stack_policy, base, oracle, x, name, "per_constraint",
                                        config.decode_samples, ++sample_seed));
  }
  res.mean_base = mean_of(res.coverage, "base");
  res.mean_monolithic = mean_of(res.coverage, "monolithic");
  res.mean_per_constraint = mean_of(res.coverage, "per_constraint");
  res.margin = res.mean_per_constraint - res.mean_monolithic;

  // Weakly dependent pair: combo coverage followed by grammar well-formedness.
  const std::size_t n_pair = std::min(config.cascade_combos, fam.test_combos.size());
  double kl_ind = 0.0, kl_cas = 0.0;
  for (std::size_t i = 0; i < n_pair; ++i) {
    const auto& combo = fam.test_combos[i];
    const auto x = fam.combo_input(combo);
    const auto name = fam.combo_name(combo);
    const std::vector<Oracle> pair{fam.combo_oracle(combo), fam.well_formed_oracle()};
    const auto exact = closed_form_joint(base, conjoin(pair), x);
    for (ComposeMode mode : {ComposeMode::kIndependentProduct, ComposeMode::kCascaded}) {
      CascadeStack stack;
      stack.mode = mode;
      const ContextMode ctx = mode == ComposeMode::kCascaded ? ContextMode::kTokensUpstream
                                                             : ContextMode::kTokensOnly;
      for (std::size_t k = 0; k < pair.size(); ++k) {
        stack.layers.push_back(NadoLayer::neural(config.head, fam.vocab, fam.space,
                                                 config.cascade_scorer, ctx,
                                                 config.seed + 1000ULL * (i + 1) + k));
        stack.oracles.push_back(pair[k]);
      }
      std::vector<std::vector<TrainTask>> tasks;
      for (const auto& o : pair) tasks.push_back({TrainTask{x, o}});
      TrainConfig cfg = config.cascade;
      cfg.seed = config.seed + 15485863ULL * (i + 1);
      train_stack(stack, base, tasks, cfg);
      StackSource policy(stack, base);
      CascadeRow row;
      row.combo = name;
      row.mode = compose_mode_name(mode);
      row.kl_to_exact = joint_kl(exact, policy, x);
      row.satisfaction = satisfaction_rate(conjoin(pair), policy, x).rate;
      (mode == ComposeMode::kCascaded ? kl_cas : kl_ind) += row.kl_to_exact;
      res.cascade.push_back(row);
    }
  }
  if (n_pair) {
    res.mean_kl_independent = kl_ind / static_cast<double>(n_pair);
    res.mean_kl_cascaded = kl_cas / static_cast<double>(n_pair);
  }
  return res;
}

}  // namespace nado
