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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "nado/demos.hpp"
#include "nado/exact.hpp"
#include "nado/layer.hpp"
#include "nado/train.hpp"

using namespace nado;
using namespace nado::testing;

namespace {

using P = std::vector<TokenId>;

BaseModel skewed() { return BaseModel::unigram(letters(2, false), fixed(2), {0.8, 0.2}); }

double weight_of(const TruncationBasis& b, const P& y) {
  const auto it = std::find(b.seqs.begin(), b.seqs.end(), y);
  return it == b.seqs.end() ? -1.0 : b.weights[static_cast<std::size_t>(it - b.seqs.begin())];
}

SampleBatch exhaustive_batch(const StepSource& m, const Oracle& o) {
  Rng rng(0);
  const auto l = NadoLayer::tabular(HeadKind::kConsistent, m.vocab(), m.space());
  return make_batch(l, m, TrainTask{{}, o}, SampleStrategy::kExhaustive, 0, 10.0, rng);
}

double final_kl(const NadoLayer& l, const ToyInstance& inst) {
  return joint_kl(closed_form_joint(inst.model, inst.oracle, inst.x), LayerSource(l, inst.model, true), inst.x);
}

}  // namespace

TEST_CASE("beam basis examples") {
  auto b = build_basis(skewed(), {}, 2, BasisConstruction::kBeam);
  REQUIRE(b.seqs.size() == 2);
  CHECK(weight_of(b, P{0, 0}) == doctest::Approx(0.8));
  CHECK(weight_of(b, P{0, 1}) == doctest::Approx(0.2));
  CHECK_FALSE(b.partial);

  const auto u = BaseModel::uniform(letters(2, false), fixed(2));
  b = build_basis(u, {}, 2, BasisConstruction::kBeam);
  CHECK(b.seqs == std::vector<P>{{0, 0}, {0, 1}});
  CHECK(b.weights[0] == 0.5);

  b = build_basis(skewed(), {}, 4, BasisConstruction::kBeam);
  const auto p = joint_of(skewed(), {});
  for (std::size_t i = 0; i < p.seqs.size(); ++i) CHECK(weight_of(b, p.seqs[i]) == doctest::Approx(p.probs[i]));
  CHECK(code_of([&] { build_basis(u, {}, 0, BasisConstruction::kBeam); }) != ErrorCode::kInternal);
}

TEST_CASE("sampled basis weights are p-renormalized and order independent") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = random_model(rng, 2 + uniform_int(rng, 2), 2 + uniform_int(rng, 2), trial % 2 == 0);
    Rng a(static_cast<std::uint64_t>(trial)), b(static_cast<std::uint64_t>(trial) + 1000);
    const auto ba = build_basis(m, {}, 3, BasisConstruction::kSampling, &a, 500);
    const auto bb = build_basis(m, {}, 3, BasisConstruction::kSampling, &b, 500);
    double sum = 0.0, psum = 0.0;
    for (const auto& y : ba.seqs) psum += std::exp(sequence_logprob(m, {}, y));
    for (std::size_t i = 0; i < ba.seqs.size(); ++i) {
      sum += ba.weights[i];
      CHECK(ba.weights[i] == doctest::Approx(std::exp(sequence_logprob(m, {}, ba.seqs[i])) / psum));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::is_sorted(ba.seqs.begin(), ba.seqs.end()));
    CHECK(std::adjacent_find(ba.seqs.begin(), ba.seqs.end()) == ba.seqs.end());
    if (ba.seqs == bb.seqs) CHECK(ba.weights == bb.weights);
  }
  // Too few draws for K unique sequences: partial basis.
  Rng r(1);
  const auto part = build_basis(BaseModel::uniform(letters(3, false), fixed(3)), {}, 20,
                                BasisConstruction::kSampling, &r, 5);
  CHECK(part.partial);
  CHECK(part.seqs.size() <= 5);
}

TEST_CASE("truncation optimality examples") {
  auto rep = truncation_kl_optimality_check(skewed(), {}, 2);
  CHECK(rep.topk_is_optimal);
  CHECK(rep.subsets_checked == 6);
  // {aa, ab} and {aa, ba} carry equal mass.
  REQUIRE(rep.argmins.size() == 2);
  CHECK(std::find(rep.argmins.begin(), rep.argmins.end(), std::vector<P>{{0, 0}, {0, 1}}) != rep.argmins.end());
  CHECK(rep.topk_kl == doctest::Approx(rep.best_kl));
  rep = truncation_kl_optimality_check(skewed(), {}, 4);
  CHECK(rep.best_kl == doctest::Approx(0.0));
  rep = truncation_kl_optimality_check(BaseModel::uniform(letters(2, false), fixed(2)), {}, 2);
  CHECK(rep.topk_is_optimal);
  CHECK(rep.argmins.size() == 6);
  CHECK(code_of([] { truncation_kl_optimality_check(BaseModel::uniform(letters(3, false), fixed(4)), {}, 2); }) ==
        ErrorCode::kCapacity);
}

TEST_CASE("property: top-K is KL optimal on random small models") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const auto m = random_model(rng, 2, 2 + uniform_int(rng, 2), trial % 2 == 0);
    const auto rep = truncation_kl_optimality_check(m, {}, 1 + static_cast<std::size_t>(uniform_int(rng, 4)), 16);
    CHECK(rep.topk_is_optimal);
  }
}

TEST_CASE("BCE gradient convention") {
  CHECK(bce_grad_r(0.5, 1.0) == doctest::Approx(-2.0));
  CHECK(bce_grad_r(0.3, 0.3) == 0.0);
  CHECK(bce_grad_r(0.5, 0.0) == doctest::Approx(2.0));
}

TEST_CASE("labels must lie in [0, 1]") {
  const auto inst = toy_instance("t1");
  const auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  SampleBatch b;
  b.items.push_back({{}, {0, 0}, 1.5, 1.0});
  CHECK(code_of([&] { nado_loss(l, inst.model, b, LossConfig{}); }) == ErrorCode::kDomain);
  b.items[0].label = -0.1;
  CHECK(code_of([&] { nado_loss(l, inst.model, b, LossConfig{}); }) == ErrorCode::kDomain);
}

TEST_CASE("consistent heads carry no regularizer") {
  Rng rng(5);
  const auto inst = toy_instance("abc3");
  auto l = NadoLayer::tabular(HeadKind::kConsistent, inst.model.vocab(), inst.model.space());
  randomize_params(l, 5, 1.0);
  LossConfig cfg;
  cfg.lambda_reg = 3.0;
  const auto res = nado_loss(l, inst.model, exhaustive_batch(inst.model, inst.oracle), cfg);
  CHECK(res.reg == 0.0);
  CHECK(res.loss == res.bce);
  auto v = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  randomize_params(v, 5, 1.0);
  CHECK(nado_loss(v, inst.model, exhaustive_batch(inst.model, inst.oracle), cfg).reg > 0.0);
}

TEST_CASE("property: loss gradients match finite differences") {
  Rng rng(6);
  for (int trial = 0; trial < 16; ++trial) {
    const auto m = random_model(rng, 2 + uniform_int(rng, 2), 2, trial % 2 == 0);
    const auto o = random_oracle(rng, 2);
    const HeadKind head = trial % 2 ? HeadKind::kVanilla : HeadKind::kConsistent;
    NadoLayer l = NadoLayer::tabular(head, m.vocab(), m.space());
    if (trial % 4 >= 2) {
      NeuralScorerSpec spec;
      spec.hidden = 4;
      l = NadoLayer::neural(head, m.vocab(), m.space(), spec, ContextMode::kTokensUpstream, rng());
    }
    randomize_params(l, rng(), 0.7);
    LossConfig cfg;
    cfg.lambda_reg = 0.5;
    const auto rep = finite_difference_check(l, m, exhaustive_batch(m, o), cfg);
    CHECK(rep.max_rel_error <= 1e-5);
    if (trial == 0) CHECK(rep.table().find("rel_error") != std::string::npos);
  }
}

TEST_CASE("residual of an exact-fit vanilla layer vanishes") {
  const auto inst = toy_instance("abc3");
  const auto tab = compute_exact_ratios(inst.model, inst.oracle, inst.x);
  const auto l = NadoLayer::from_exact_table(HeadKind::kVanilla, tab);
  CHECK(max_consistency_residual(l, inst.model, inst.x).kl <= 1e-9);
  CHECK(max_consistency_residual(l, inst.model, inst.x).abs_gap <= 1e-9);
}

TEST_CASE("exhaustive training recovers the exact policy on t1") {
  const auto inst = toy_instance("t1");
  auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  TrainConfig cfg;
  cfg.steps = 100000;
  cfg.learning_rate = 5.0;
  cfg.momentum = 0.9;
  cfg.loss.lambda_reg = 0.0;
  cfg.loss.clamp_eps = 1e-9;
  const auto rows = train_nado(l, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg);
  REQUIRE(rows.back().kl_to_exact);
  CHECK(*rows.back().kl_to_exact <= 1e-6);
  CHECK(final_kl(l, inst) <= 1e-6);
}

TEST_CASE("500 default steps reduce but do not reach 1e-6") {
  const auto inst = toy_instance("t1");
  auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  TrainConfig cfg;
  cfg.eval_every = 100;
  const double before = final_kl(l, inst);
  const auto rows = train_nado(l, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg);
  CHECK(rows.front().step == 0);
  CHECK(*rows.front().kl_to_exact == doctest::Approx(before));
  CHECK(*rows.back().kl_to_exact < before / 10);
}

TEST_CASE("constant oracle training leaves p in place") {
  const auto inst = toy_instance("abc3");
  auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  randomize_params(l, 1, 0.5);
  TrainConfig cfg;
  cfg.steps = 3000;
  cfg.learning_rate = 2.0;
  cfg.momentum = 0.9;
  cfg.loss.lambda_reg = 0.0;
  train_nado(l, inst.model, {TrainTask{inst.x, Oracle::always()}}, cfg);
  CHECK(joint_kl(joint_of(inst.model, {}), LayerSource(l, inst.model, true), {}) <= 1e-6);
}

TEST_CASE("training is deterministic given the seed") {
  const auto inst = toy_instance("abc3");
  TrainConfig cfg;
  cfg.steps = 40;
  cfg.eval_every = 10;
  cfg.strategy = SampleStrategy::kAncestral;
  cfg.seed = 9;
  std::ostringstream ta, tb;
  auto la = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  auto lb = la;
  train_nado(la, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg, &ta);
  train_nado(lb, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg, &tb);
  CHECK(ta.str() == tb.str());
  CHECK(la.to_json().dump() == lb.to_json().dump());
  CHECK(ta.str().find("\"kl_to_exact\"") != std::string::npos);
}

TEST_CASE("vanilla training with the regularizer lowers the residual") {
  const auto inst = toy_instance("t2");
  auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  randomize_params(l, 2, 1.0);
  const double before = max_consistency_residual(l, inst.model, {}).abs_gap;
  TrainConfig cfg;
  cfg.steps = 300;
  cfg.loss.lambda_reg = 1.0;
  train_nado(l, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg);
  CHECK(max_consistency_residual(l, inst.model, {}).abs_gap < before);
}

TEST_CASE("consistent residual stays at machine precision during training") {
  const auto inst = toy_instance("abc3");
  auto l = NadoLayer::tabular(HeadKind::kConsistent, inst.model.vocab(), inst.model.space());
  randomize_params(l, 3, 1.0);
  TrainConfig cfg;
  cfg.steps = 50;
  cfg.eval_every = 5;
  cfg.loss.lambda_reg = 0.0;
  for (const auto& row : train_nado(l, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg)) {
    REQUIRE(row.residual_max);
    CHECK(*row.residual_max <= 1e-9);
  }
}

TEST_CASE("likelihood warmup leaves the root untouched") {
  const auto inst = toy_instance("t1");
  const auto q = closed_form_joint(inst.model, inst.oracle, inst.x);
  Rng rng(10);
  std::vector<std::pair<P, P>> positives;
  for (int i = 0; i < 300; ++i) positives.emplace_back(P{}, q.seqs[sample_index(q.probs, rng)]);
  auto l = NadoLayer::tabular(HeadKind::kConsistent, inst.model.vocab(), inst.model.space(), 0.0, 0.37);
  const auto roots = l.root_param_indices();
  std::vector<double> before;
  for (std::size_t i : roots) before.push_back(l.params()[i]);
  const auto nll = warmup_likelihood(l, inst.model, positives, WarmupConfig{300, 0.5, 0.5});
  CHECK(nll.back() < nll.front());
  for (std::size_t k = 0; k < roots.size(); ++k) CHECK(l.params()[roots[k]] == before[k]);
  CHECK(final_kl(l, inst) <= 0.05);

  // Positives from p itself pull q back toward p.
  positives.clear();
  const auto p = joint_of(inst.model, {});
  for (int i = 0; i < 400; ++i) positives.emplace_back(P{}, p.seqs[sample_index(p.probs, rng)]);
  auto l2 = NadoLayer::tabular(HeadKind::kConsistent, inst.model.vocab(), inst.model.space());
  randomize_params(l2, 4, 1.0);
  const double kl0 = joint_kl(p, LayerSource(l2, inst.model, true), {});
  warmup_likelihood(l2, inst.model, positives, WarmupConfig{300, 0.5, 0.5});
  CHECK(joint_kl(p, LayerSource(l2, inst.model, true), {}) < kl0 / 5);
}

TEST_CASE("variance probe: zero gradient when R is already right") {
  const auto inst = toy_instance("t1");
  auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space(), 60.0, 60.0);
  const auto rep = gradient_variance_probe(l, inst.model, TrainTask{inst.x, Oracle::always()},
                                           SampleStrategy::kAncestral, 50, 4, 1, LossConfig{});
  CHECK(rep.mean_param_variance == 0.0);
  CHECK(rep.mean_abs_grad == 0.0);
  CHECK(code_of([&] {
          gradient_variance_probe(l, inst.model, TrainTask{inst.x, Oracle::always()},
                                  SampleStrategy::kAncestral, 1, 4, 1, LossConfig{});
        }) == ErrorCode::kConfig);
}

TEST_CASE("variance probe: Bernoulli variance at satisfaction 0.5") {
  // Uniform over {a,b}, one token, coverage of a: C ~ Bernoulli(1/2). At
  // R = 1/2 a single-sample dBCE/dR is -2 or +2, variance 4.
  const auto m = BaseModel::uniform(letters(2, false), fixed(1));
  const auto l = NadoLayer::tabular(HeadKind::kVanilla, m.vocab(), m.space());
  const auto rep = gradient_variance_probe(l, m, TrainTask{{}, Oracle::coverage({0})},
                                           SampleStrategy::kAncestral, 10000, 1, 2, LossConfig{});
  CHECK(std::abs(rep.root_dr_variance - 4.0) <= 0.4);
  CHECK(std::abs(rep.root_dr_mean) < 0.1);
  CHECK(rep.satisfaction_rate == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("variance probe: the basis beats ancestral sampling at low satisfaction") {
  const auto inst = toy_instance("rare");
  CHECK(satisfaction_rate(inst.oracle, inst.model, inst.x).rate <= 0.01);
  const auto summary = variance_table(inst, {1, 2, 3}, 60, 32);
  CHECK(summary.ratio < 1.0);
}

TEST_CASE("self-proxy importance weights give an unbiased gradient") {
  const auto inst = toy_instance("t1");
  auto l = NadoLayer::tabular(HeadKind::kConsistent, inst.model.vocab(), inst.model.space());
  randomize_params(l, 11, 0.5);
  LossConfig cfg;
  const auto exact = nado_loss(l, inst.model, exhaustive_batch(inst.model, inst.oracle), cfg).grad;
  const std::size_t np = exact.size();
  std::vector<double> mean(np, 0.0), m2(np, 0.0);
  Rng rng(12);
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    const auto b = make_batch(l, inst.model, TrainTask{inst.x, inst.oracle}, SampleStrategy::kSelfProxy, 1, 1e9, rng);
    const auto g = nado_loss(l, inst.model, b, cfg).grad;
    for (std::size_t i = 0; i < np; ++i) {
      const double d = g[i] - mean[i];
      mean[i] += d / (t + 1);
      m2[i] += d * (g[i] - mean[i]);
    }
  }
  for (std::size_t i = 0; i < np; ++i) {
    const double se = std::sqrt(m2[i] / (n - 1) / n);
    CHECK(std::abs(mean[i] - exact[i]) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("strategy names round trip") {
  for (auto s : {SampleStrategy::kExhaustive, SampleStrategy::kAncestral, SampleStrategy::kBasisBeam,
                 SampleStrategy::kBasisSampling, SampleStrategy::kSelfProxy})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK(code_of([] { parse_strategy("nope"); }) == ErrorCode::kConfig);
  MetricsRow row;
  row.step = 3;
  row.loss = 0.5;
  const auto j = nlohmann::json::parse(metrics_json_line(row));
  CHECK(j["step"] == 3);
  CHECK(j["kl_to_exact"].is_null());
}
