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

#include <cmath>
#include <regex>

#include "helpers.hpp"

using namespace nado;
using namespace nado::testing;

namespace {

const Vocabulary kAb = letters(2, true);  // a b </s>

double eval(const Oracle& o, const std::string& y) {
  return o.evaluate({}, TokenSeq{kAb.encode_chars(y), true}, kAb.eos());
}

TokenId A = 0, B = 1;

std::vector<TokenId> random_content(Rng& rng, int n, int max_len) {
  std::vector<TokenId> y(static_cast<std::size_t>(uniform_int(rng, max_len + 1)));
  for (auto& t : y) t = uniform_int(rng, n);
  return y;
}

}  // namespace

TEST_CASE("lexical coverage examples") {
  CHECK(eval(Oracle::coverage({A}), "ba") == 1.0);
  CHECK(eval(Oracle::coverage({A, B}), "aa") == 0.0);
  CHECK(eval(Oracle::always(), "") == 1.0);
  // Groups are disjunctions.
  CHECK(eval(Oracle::coverage_groups({{A, B}}), "b") == 1.0);
}

TEST_CASE("scaled oracle") {
  CHECK(eval(scaled(Oracle::coverage({A}), 0.5), "ba") == 0.5);
  CHECK(eval(scaled(Oracle::coverage({A}), 0.5), "bb") == 0.0);
  CHECK(code_of([] { scaled(Oracle::always(), 0.0); }) == ErrorCode::kDomain);
  CHECK(code_of([] { scaled(Oracle::always(), 1.5); }) == ErrorCode::kDomain);
  CHECK_FALSE(scaled(Oracle::always(), 0.5).is_boolean());
}

TEST_CASE("conjunction examples") {
  const auto both = conjoin({Oracle::coverage({A}), Oracle::coverage({B})});
  CHECK(eval(both, "ab") == 1.0);
  CHECK(eval(both, "aa") == 0.0);
  const auto half = conjoin({scaled(Oracle::coverage({A}), 0.5), scaled(Oracle::coverage({B}), 0.5)});
  CHECK(eval(half, "ab") == 0.25);
  CHECK(code_of([] { conjoin({}); }) == ErrorCode::kDomain);
}

TEST_CASE("unterminated sequences are a contract error") {
  const auto o = Oracle::coverage({A});
  CHECK(code_of([&] { o.evaluate({}, TokenSeq{{A}, false}, kAb.eos()); }) == ErrorCode::kContract);
  // A trailing eos is stripped before evaluation.
  CHECK(o.evaluate({}, TokenSeq{{B, 2}, true}, kAb.eos()) == 0.0);
}

TEST_CASE("satisfaction rate examples") {
  const auto m = BaseModel::uniform(letters(2, false), fixed(2));
  const auto r = satisfaction_rate(Oracle::coverage({A}), m, {});
  CHECK(r.exact);
  CHECK(r.rate == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(satisfaction_rate(Oracle::always(), m, {}).rate == 1.0);
  CHECK(satisfaction_rate(conjoin({Oracle::coverage({A}), Oracle::coverage({B})}), m, {}).rate ==
        doctest::Approx(0.5));
}

TEST_CASE("satisfaction rate falls back to sampling") {
  const auto m = BaseModel::uniform(letters(2, false), fixed(6));
  const auto o = Oracle::coverage({A});
  CHECK(code_of([&] { satisfaction_rate(o, m, {}, 0, 0, 10); }) == ErrorCode::kCapacity);
  const auto mc = satisfaction_rate(o, m, {}, 20000, 3, 10);
  CHECK_FALSE(mc.exact);
  CHECK(mc.samples == 20000);
  const double truth = 1.0 - std::pow(0.5, 6);
  CHECK(std::abs(mc.rate - truth) < 5.0 * mc.std_error + 1e-12);
  CHECK(mc.std_error > 0.0);
}

TEST_CASE("property: values in range, boolean kinds exact") {
  Rng rng(8);
  for (int trial = 0; trial < 300; ++trial) {
    const auto o = random_oracle(rng, 3);
    const auto y = random_content(rng, 3, 5);
    const double v = o.value({}, y);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (o.is_boolean()) CHECK((v == 0.0 || v == 1.0));
    const double tau = uniform_in(rng, 0.01, 1.0);
    CHECK(scaled(o, tau).value({}, y) == doctest::Approx(tau * v).epsilon(1e-15));
  }
}

TEST_CASE("property: conjunction is commutative and associative") {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = scaled(random_oracle(rng, 3), uniform_in(rng, 0.1, 1.0));
    const auto b = random_oracle(rng, 3), c = random_oracle(rng, 3);
    const auto y = random_content(rng, 3, 5);
    const double ab = conjoin({a, b}).value({}, y);
    CHECK(ab == doctest::Approx(conjoin({b, a}).value({}, y)).epsilon(1e-15));
    const double l = conjoin({conjoin({a, b}), c}).value({}, y);
    const double r = conjoin({a, conjoin({b, c})}).value({}, y);
    CHECK(l == doctest::Approx(r).epsilon(1e-15));
    CHECK(l == doctest::Approx(conjoin({a, b, c}).value({}, y)).epsilon(1e-15));
  }
}

TEST_CASE("property: automaton agrees with regex simulation") {
  // (ab)*: states 0 (accept), 1 (after a), sink via -1.
  Dfa d;
  d.num_states = 2;
  d.start = 0;
  d.accepting = {true, false};
  d.next = {{1, -1}, {-1, 0}};
  const auto o = Oracle::automaton(d);
  const std::regex re("(ab)*");
  Rng rng(10);
  int accepted = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto y = random_content(rng, 2, 8);
    if (trial % 4 == 0) {  // bias toward accepted strings
      y.clear();
      for (int k = uniform_int(rng, 4); k > 0; --k) y.insert(y.end(), {0, 1});
    }
    std::string s;
    for (TokenId t : y) s += static_cast<char>('a' + t);
    const bool want = std::regex_match(s, re);
    accepted += want;
    CHECK(o.value({}, y) == (want ? 1.0 : 0.0));
  }
  CHECK(accepted > 100);
}

TEST_CASE("automaton validation") {
  Dfa d;
  d.num_states = 1;
  d.start = 0;
  d.accepting = {true};
  d.next = {{0, 5}};
  CHECK(code_of([&] { Oracle::automaton(d); }) != ErrorCode::kInternal);
}

TEST_CASE("window predicate with wildcard") {
  const auto has = Oracle::window(WindowPredicate{{A, -1, A}, true});
  CHECK(eval(has, "abba") == 0.0);
  CHECK(eval(has, "aabb") == 0.0);
  CHECK(eval(has, "aba") == 1.0);
  CHECK(eval(has, "bbaaab") == 1.0);
  const auto lacks = Oracle::window(WindowPredicate{{B, B}, false});
  CHECK(eval(lacks, "abab") == 1.0);
  CHECK(eval(lacks, "abba") == 0.0);
}

TEST_CASE("quantized classifier and label noise") {
  QuantizedClassifier c;
  c.bias = -1.0;
  c.unigram = {2.0, 0.0, 0.0};
  c.threshold = 0.5;
  const auto clean = Oracle::classifier(c);
  CHECK(eval(clean, "b") == 0.0);
  CHECK(eval(clean, "a") == 1.0);
  CHECK(clean.is_boolean());
  c.flip_rate = 1.0;
  const auto flipped = Oracle::classifier(c);
  CHECK(eval(flipped, "b") == 1.0);
  CHECK(eval(flipped, "a") == 0.0);
  // Partial noise is deterministic and near the configured rate.
  c.flip_rate = 0.3;
  c.noise_seed = 77;
  const auto noisy = Oracle::classifier(c);
  Rng rng(2);
  int flips = 0, n = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const auto y = random_content(rng, 2, 10);
    const double v = noisy.value({}, y);
    CHECK(v == noisy.value({}, y));
    flips += v != clean.value({}, y);
    ++n;
  }
  CHECK(std::abs(flips / double(n) - 0.3) < 0.1);
  c.threshold = 1.0;
  CHECK(code_of([&] { Oracle::classifier(c); }) == ErrorCode::kConfig);
}

TEST_CASE("JSON round trip preserves values and fingerprints") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto o = conjoin({random_oracle(rng, 3), scaled(random_oracle(rng, 3), uniform_in(rng, 0.1, 1.0))});
    const auto back = Oracle::from_json(o.to_json());
    CHECK(back.fingerprint() == o.fingerprint());
    const auto y = random_content(rng, 3, 5);
    CHECK(back.value({}, y) == o.value({}, y));
  }
  CHECK(Oracle::coverage({A}).fingerprint() != Oracle::coverage({B}).fingerprint());
}
