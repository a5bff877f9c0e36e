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

#include "helpers.hpp"
#include "nado/compose.hpp"
#include "nado/demos.hpp"
#include "nado/exact.hpp"

using namespace nado;
using namespace nado::testing;

namespace {

using P = std::vector<TokenId>;

CascadeStack exact_stack(const BaseModel& m, const std::vector<Oracle>& oracles) {
  CascadeStack s;
  for (const auto& o : oracles) {
    s.layers.push_back(NadoLayer::from_exact_table(HeadKind::kConsistent, compute_exact_ratios(m, o, {})));
    s.oracles.push_back(o);
  }
  return s;
}

// Accepts sequences whose token at `pos` lies in `allowed`.
Oracle position_oracle(int vocab, int max_len, int pos, const std::vector<TokenId>& allowed) {
  Dfa d;
  d.num_states = max_len + 2;  // states 0..max_len count positions; last is "failed"
  d.start = 0;
  const int dead = max_len + 1;
  d.accepting.assign(static_cast<std::size_t>(d.num_states), false);
  d.next.assign(static_cast<std::size_t>(d.num_states), std::vector<int>(static_cast<std::size_t>(vocab), dead));
  for (int s = 0; s < max_len; ++s)
    for (int t = 0; t < vocab; ++t) {
      const bool ok = s != pos || std::find(allowed.begin(), allowed.end(), t) != allowed.end();
      d.next[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)] = ok ? s + 1 : dead;
    }
  d.accepting[static_cast<std::size_t>(max_len)] = true;
  return Oracle::automaton(d);
}

std::vector<P> interior(const StepSource& m) {
  std::vector<P> out;
  const PrefixIndex idx(m.vocab().size(), m.space().max_len);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto p = idx.prefix_at(i);
    if (is_valid_prefix(p, m.space(), m.vocab()) && !is_terminal(p, m.space(), m.vocab().eos()))
      out.push_back(std::move(p));
  }
  return out;
}

NadoLayer random_tabular(Rng& rng, HeadKind h, const BaseModel& m) {
  auto l = NadoLayer::tabular(h, m.vocab(), m.space());
  randomize_params(l, rng(), 1.0);
  return l;
}

}  // namespace

TEST_CASE("identity stack leaves p alone") {
  const auto m = BaseModel::unigram(letters(3, false), fixed(2), {1.0, 2.0, 3.0});
  CascadeStack s;
  for (int k = 0; k < 3; ++k) {
    s.layers.push_back(NadoLayer::tabular(HeadKind::kConsistent, m.vocab(), m.space()));
    s.oracles.push_back(Oracle::always());
  }
  for (const auto& pre : interior(m)) {
    const auto q = composed_step(s, m, {}, pre).probs;
    const auto p = m.step({}, pre).probs;
    for (std::size_t k = 0; k < q.size(); ++k) CHECK(q[k] == doctest::Approx(p[k]).epsilon(1e-14));
  }
}

TEST_CASE("exact coverage pair composes to the conjunction") {
  const auto m = BaseModel::uniform(letters(2, false), fixed(2));
  const auto s = exact_stack(m, {Oracle::coverage({0}), Oracle::coverage({1})});
  auto q = composed_step(s, m, {}, P{}).probs;
  CHECK(q[0] == doctest::Approx(0.5));
  q = composed_step(s, m, {}, P{0}).probs;
  CHECK(q[0] == 0.0);
  CHECK(q[1] == doctest::Approx(1.0));
  const auto joint = joint_of(StackSource(s, m), {});
  CHECK(joint.prob_of(P{0, 1}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(joint.prob_of(P{1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(joint_kl(closed_form_joint(m, conjoin(s.oracles), {}), joint) <= 1e-12);
}

TEST_CASE("property: exact composition of position-disjoint constraints") {
  Rng rng(1);
  for (int trial = 0; trial < 25; ++trial) {
    const int v = 2 + uniform_int(rng, 3), len = 2 + uniform_int(rng, 2);
    const auto m = BaseModel::unigram(letters(v, false), fixed(len), random_weights(rng, static_cast<std::size_t>(v)));
    std::vector<Oracle> os;
    for (int pos = 0; pos < len && os.size() < 3; ++pos) {
      std::vector<TokenId> allowed;
      for (int t = 0; t < v; ++t) if (uniform01(rng) < 0.5) allowed.push_back(t);
      if (allowed.empty()) allowed.push_back(uniform_int(rng, v));
      os.push_back(position_oracle(v, len, pos, allowed));
    }
    const auto s = exact_stack(m, os);
    const auto want = closed_form_joint(m, conjoin(os), {});
    const auto got = joint_of(StackSource(s, m), {});
    for (std::size_t i = 0; i < want.seqs.size(); ++i)
      CHECK(std::abs(got.prob_of(want.seqs[i]) - want.probs[i]) <= 1e-9);
    CHECK(got.total() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("property: a single-layer stack is the layer") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(rng, 2 + uniform_int(rng, 2), 1 + uniform_int(rng, 3), trial % 2 == 0);
    CascadeStack s;
    s.layers.push_back(random_tabular(rng, trial % 3 ? HeadKind::kConsistent : HeadKind::kVanilla, m));
    s.oracles.push_back(Oracle::always());
    for (const auto& pre : interior(m))
      CHECK(composed_step(s, m, {}, pre).probs == guided_step(s.layers[0], m, {}, pre).probs);
  }
}

TEST_CASE("property: layer order does not matter in product mode") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_model(rng, 2 + uniform_int(rng, 2), 1 + uniform_int(rng, 3), trial % 2 == 0);
    CascadeStack s;
    for (int k = 0; k < 3; ++k) {
      s.layers.push_back(random_tabular(rng, k % 2 ? HeadKind::kConsistent : HeadKind::kVanilla, m));
      s.oracles.push_back(Oracle::always());
    }
    CascadeStack r = s;
    std::reverse(r.layers.begin(), r.layers.end());
    std::rotate(r.layers.begin(), r.layers.begin() + 1, r.layers.end());
    for (const auto& pre : interior(m)) {
      const auto a = composed_step(s, m, {}, pre).probs, b = composed_step(r, m, {}, pre).probs;
      for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-12);
    }
  }
}

TEST_CASE("dead ends surface from composition") {
  const auto m = BaseModel::uniform(letters(2, false), fixed(1));
  // a and b cannot both appear in one token.
  const auto s = exact_stack(m, {Oracle::coverage({0}), Oracle::coverage({1})});
  CHECK(code_of([&] { composed_step(s, m, {}, P{}); }) == ErrorCode::kDeadEnd);
}

TEST_CASE("stack validation") {
  const auto m = BaseModel::uniform(letters(2, false), fixed(2));
  CascadeStack s = exact_stack(m, {Oracle::coverage({0})});
  s.mode = ComposeMode::kCascaded;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::kConfig);
  s.mode = ComposeMode::kIndependentProduct;
  s.oracles.clear();
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::kConfig);
  CHECK(code_of([&] { CascadeStack{}.validate(); }) == ErrorCode::kConfig);
  auto a = exact_stack(m, {Oracle::coverage({0}), Oracle::coverage({1})});
  a.layers[0].set_base_fingerprint("x");
  a.layers[1].set_base_fingerprint("y");
  CHECK(code_of([&] { a.validate(); }) == ErrorCode::kFingerprint);
  CHECK(parse_compose_mode(compose_mode_name(ComposeMode::kCascaded)) == ComposeMode::kCascaded);
}

TEST_CASE("stack JSON round trip") {
  const auto m = BaseModel::uniform(letters(2, false), fixed(2));
  const auto s = exact_stack(m, {Oracle::coverage({0}), Oracle::coverage({1})});
  const auto back = CascadeStack::from_json(s.to_json());
  CHECK(back.to_json().dump() == s.to_json().dump());
  CHECK(StackSource(back, m).fingerprint() == StackSource(s, m).fingerprint());
}

TEST_CASE("single-layer stack training equals train_nado") {
  const auto inst = toy_instance("abc3");
  TrainConfig cfg;
  cfg.steps = 60;
  cfg.eval_every = 20;
  cfg.strategy = SampleStrategy::kAncestral;
  cfg.seed = 4;
  auto l = NadoLayer::tabular(HeadKind::kVanilla, inst.model.vocab(), inst.model.space());
  CascadeStack s;
  s.layers.push_back(l);
  s.oracles.push_back(inst.oracle);
  const auto metrics = train_stack(s, inst.model, {{TrainTask{inst.x, inst.oracle}}}, cfg);
  const auto rows = train_nado(l, inst.model, {TrainTask{inst.x, inst.oracle}}, cfg);
  REQUIRE(metrics[0].trace.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(metrics[0].trace[i].loss == rows[i].loss);
    CHECK(*metrics[0].trace[i].kl_to_exact == *rows[i].kl_to_exact);
  }
  CHECK(s.layers[0].params()[0] == l.params()[0]);
  const auto tab = compute_exact_ratios(inst.model, inst.oracle, inst.x);
  CHECK(metrics[0].delta_max == doctest::Approx(log_ratio_error(l, inst.model, tab, inst.x).first));
}

TEST_CASE("cascaded training sees the upstream stage") {
  const auto m = BaseModel::uniform(letters(3, false), fixed(2));
  NeuralScorerSpec spec;
  spec.hidden = 6;
  CascadeStack s;
  s.mode = ComposeMode::kCascaded;
  for (TokenId t : {0, 1}) {
    s.layers.push_back(NadoLayer::neural(HeadKind::kConsistent, m.vocab(), m.space(), spec,
                                         ContextMode::kTokensUpstream, static_cast<std::uint64_t>(t) + 1));
    s.oracles.push_back(Oracle::coverage({t}));
  }
  TrainConfig cfg;
  cfg.steps = 300;
  cfg.learning_rate = 0.5;
  cfg.momentum = 0.9;
  cfg.grad_clip = 1.0;
  cfg.loss.lambda_reg = 0.0;
  const auto metrics = train_stack(s, m, {{TrainTask{{}, s.oracles[0]}}, {TrainTask{{}, s.oracles[1]}}}, cfg);
  REQUIRE(metrics.size() == 2);
  // Layer 1 is bound to the fingerprint of the one-layer cascade, not of p.
  CHECK(s.layers[1].base_fingerprint() == StackSource(s, m, 1).fingerprint());
  CHECK(s.layers[0].base_fingerprint() == m.fingerprint());
  const double before = satisfaction_rate(conjoin(s.oracles), m, {}).rate;
  CHECK(satisfaction_rate(conjoin(s.oracles), StackSource(s, m), {}).rate > before);
}

TEST_CASE("bound check examples") {
  const auto m = BaseModel::uniform(letters(3, false), fixed(3));
  std::vector<ExactRatioTable> tabs;
  for (TokenId t : {0, 1, 2}) tabs.push_back(compute_exact_ratios(m, Oracle::coverage({t}), {}));
  const std::vector<std::vector<std::size_t>> combos{{0, 1}, {0, 1, 2}};
  for (const auto& row : bound_check(tabs, m, combos, 0.0, PerturbationMode::kUniform, 1))
    CHECK(row.max_log_error == 0.0);
  for (double delta : {0.05, 0.1}) {
    for (auto mode : {PerturbationMode::kUniform, PerturbationMode::kAligned}) {
      for (const auto& row : bound_check(tabs, m, combos, delta, mode, 7)) {
        CHECK(row.within_bound);
        CHECK(row.max_log_error <= row.n * delta + 1e-12);
        if (mode == PerturbationMode::kAligned) {
          CHECK(row.witness);
          CHECK(row.max_log_error == doctest::Approx(row.n * delta).epsilon(1e-9));
          // A constant shift of every log ratio cancels under renormalization.
          CHECK(row.max_normalized_error <= 1e-9);
        }
        CHECK(row.max_normalized_error == doctest::Approx(row.max_log_error + row.renorm_slack));
      }
    }
  }
  const auto csv = bound_csv(bound_check(tabs, m, combos, 0.05, PerturbationMode::kAligned, 1));
  CHECK(csv.rfind("combo,", 0) == 0);
}

TEST_CASE("naive conjunction baseline trains one layer on the conjunction") {
  const auto m = BaseModel::uniform(letters(3, false), fixed(2));
  const auto both = conjoin({Oracle::coverage({0}), Oracle::coverage({1})});
  NeuralScorerSpec spec;
  spec.hidden = 8;
  spec.use_x = true;
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.momentum = 0.9;
  cfg.grad_clip = 1.0;
  cfg.loss.lambda_reg = 0.0;
  std::vector<MetricsRow> trace;
  const auto l = naive_conjunction_baseline(m, {TrainTask{{0, 1}, both}}, spec, HeadKind::kConsistent, 3, cfg, &trace);
  CHECK_FALSE(trace.empty());
  const P x{0, 1};
  CHECK(satisfaction_rate(both, LayerSource(l, m, true), x).rate > satisfaction_rate(both, m, x).rate);
}
