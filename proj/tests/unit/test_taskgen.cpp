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
#include <set>

#include "helpers.hpp"
#include "nado/compose.hpp"
#include "nado/exact.hpp"
#include "nado/layer.hpp"
#include "nado/taskgen.hpp"

using namespace nado;
using namespace nado::testing;

namespace {

void check_split(const TaskFamily& f) {
  std::set<std::vector<int>> train(f.train_combos.begin(), f.train_combos.end());
  for (const auto& c : f.test_combos) CHECK(train.count(c) == 0);
  std::set<int> seen;
  for (const auto& c : f.train_combos) seen.insert(c.begin(), c.end());
  CHECK(static_cast<int>(seen.size()) == f.spec.num_concepts);
}

}  // namespace

TEST_CASE("default family: 15 pairs split 10 / 5") {
  FamilySpec spec;
  const auto f = generate_family(spec, 1);
  CHECK(f.vocab.size() == 8);  // 6 concepts, 1 function token, eos
  CHECK(f.space.max_len == 6);
  CHECK(f.train_combos.size() == 10);
  CHECK(f.test_combos.size() == 5);
  check_split(f);
  CHECK(static_cast<int>(f.corpus.size()) == spec.corpus_size);
}

TEST_CASE("generation is deterministic given the seed") {
  FamilySpec spec;
  CHECK(generate_family(spec, 5).to_json().dump() == generate_family(spec, 5).to_json().dump());
  CHECK(generate_family(spec, 5).to_json().dump() != generate_family(spec, 6).to_json().dump());
  const auto f = generate_family(spec, 5);
  CHECK(TaskFamily::from_json(f.to_json()).to_json().dump() == f.to_json().dump());
  auto j = f.to_json();
  j["seed"] = 99;
  CHECK(code_of([&] { TaskFamily::from_json(j); }) == ErrorCode::kFingerprint);
  CHECK(FamilySpec::from_json(spec.to_json()).to_json() == spec.to_json());
}

TEST_CASE("impossible families are rejected") {
  FamilySpec spec;
  spec.combo_min = spec.combo_max = 1;
  CHECK(code_of([&] { generate_family(spec, 1); }) == ErrorCode::kConfig);
  spec = FamilySpec{};
  spec.combo_min = spec.combo_max = 4;
  spec.max_len = 3;
  try {
    generate_family(spec, 1);
    FAIL("expected infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInfeasible);
    CHECK(std::string(e.what()).find("combo") != std::string::npos);
  }
}

TEST_CASE("property: split invariants over random specs") {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    FamilySpec spec;
    spec.num_concepts = 3 + uniform_int(rng, 5);
    spec.tokens_per_concept = 1 + uniform_int(rng, 2);
    spec.combo_min = 2;
    spec.combo_max = 2 + uniform_int(rng, 2);
    spec.max_len = 4 + uniform_int(rng, 3);
    spec.corpus_size = 20;
    try {
      const auto f = generate_family(spec, rng());
      check_split(f);
      for (const auto& y : f.corpus) {
        CHECK(static_cast<int>(y.ids.size()) <= f.space.max_len);
        CHECK(f.well_formed_oracle().evaluate({}, y, f.vocab.eos()) == 1.0);
      }
      for (const auto& c : f.train_combos) {
        CHECK(static_cast<int>(c.size()) >= spec.combo_min);
        CHECK(f.combo_input(c).size() == c.size());
      }
    } catch (const Error& e) {
      // Small pools can have no split with full concept coverage.
      CHECK(e.code() == ErrorCode::kConfig);
    }
  }
}

TEST_CASE("every train combo is satisfiable") {
  FamilySpec spec;
  spec.num_concepts = 4;
  spec.max_len = 4;
  const auto f = generate_family(spec, 3);
  const auto m = BaseModel::uniform(f.vocab, f.space);
  for (const auto& c : f.train_combos) {
    const auto q = closed_form_joint(m, f.combo_oracle(c), f.combo_input(c));
    CHECK(q.total() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(satisfaction_rate(f.combo_oracle(c), m, f.combo_input(c)).rate > 0.0);
  }
  // Concept oracles cover any token of the concept group.
  const auto o = f.concept_oracle(0);
  CHECK(o.evaluate({}, TokenSeq{{f.concepts[0].back()}, true}, std::nullopt) == 1.0);
  CHECK(o.evaluate({}, TokenSeq{{f.concepts[1].front()}, true}, std::nullopt) == 0.0);
}

TEST_CASE("coverage metric") {
  const auto v = letters(2, true);
  const ConstraintSet set{{Oracle::coverage({0}), Oracle::coverage({1})}, Independence::kStatisticallyIndependent, "ab"};
  const std::vector<TokenSeq> good{{{0, 1}, true}, {{1, 0, 2}, true}};
  const std::vector<TokenSeq> bad{{{0, 0}, true}, {{}, true}};
  CHECK(coverage_metric(good, set, {}, v.eos()) == 1.0);
  CHECK(coverage_metric(bad, set, {}, v.eos()) == 0.0);
  std::vector<TokenSeq> mixed = good;
  mixed.insert(mixed.end(), bad.begin(), bad.end());
  CHECK(coverage_metric(mixed, set, {}, v.eos()) == 0.5);
  CHECK(code_of([&] { coverage_metric({}, set, {}, v.eos()); }) == ErrorCode::kDomain);
}

TEST_CASE("sampled coverage tracks the exact satisfying mass of a stack") {
  // Coverage of a and no "c c" under a skewed unigram: the constraints are
  // dependent, so the exact-table product does not satisfy both every time.
  const auto m = BaseModel::unigram(letters(3, false), fixed(3), {1.0, 2.0, 4.0});
  CascadeStack s;
  s.oracles = {Oracle::coverage({0}), Oracle::window(WindowPredicate{{2, 2}, false})};
  for (const auto& o : s.oracles)
    s.layers.push_back(NadoLayer::from_exact_table(HeadKind::kConsistent, compute_exact_ratios(m, o, {})));
  const StackSource src(s, m);
  const ConstraintSet set{s.oracles, Independence::kWeaklyDependent, "a+b"};
  const double mass = satisfaction_rate(conjoin(s.oracles), src, {}).rate;
  Rng rng(4);
  std::vector<TokenSeq> decodes;
  for (int i = 0; i < 100; ++i) decodes.push_back(sample_sequence(src, {}, rng));
  CHECK(std::abs(coverage_metric(decodes, set, {}, std::nullopt) - mass) <= 0.1);
  CHECK(mass < 1.0);
}
