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

using namespace nado;
using namespace nado::testing;

TEST_CASE("vocabulary rejects degenerate inputs") {
  CHECK(code_of([] { Vocabulary({"a"}, std::nullopt); }) == ErrorCode::kConfig);
  CHECK(code_of([] { Vocabulary({"a", "a"}, std::nullopt); }) == ErrorCode::kConfig);
  CHECK(code_of([] { Vocabulary({"a", "b"}, TokenId{2}); }) == ErrorCode::kConfig);
  const auto v = letters(3, true);
  CHECK(v.id_of("c") == 2);
  CHECK(v.symbol(3) == "</s>");
  CHECK(code_of([&] { v.id_of("z"); }) == ErrorCode::kDomain);
  CHECK(code_of([&] { v.symbol(7); }) == ErrorCode::kDomain);
  CHECK(v.render(v.encode_chars("cab")) == "cab");
}

TEST_CASE("from_log_weights normalizes and masks") {
  const std::vector<double> w{std::log(1.0), std::log(3.0), -kInf};
  const auto d = StepDistribution::from_log_weights(w);
  CHECK(d.probs[0] == doctest::Approx(0.25));
  CHECK(d.probs[1] == doctest::Approx(0.75));
  CHECK(d.probs[2] == 0.0);
  CHECK(d.argmax() == 1);
  // Large offsets do not overflow.
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(StepDistribution::from_log_weights(big).probs[0] == doctest::Approx(0.5));
  const std::vector<double> dead{-kInf, -kInf};
  CHECK(code_of([&] { StepDistribution::from_log_weights(dead); }) == ErrorCode::kDeadEnd);
  const std::vector<double> nan{0.0, std::nan("")};
  CHECK(code_of([&] { StepDistribution::from_log_weights(nan); }) == ErrorCode::kNumeric);
}

TEST_CASE("argmax breaks ties toward the lowest id") {
  StepDistribution d{{0.2, 0.4, 0.4}};
  CHECK(d.argmax() == 1);
}

TEST_CASE("KL divergence examples") {
  const std::vector<double> a{1.0, 0.0}, half{0.5, 0.5}, b{0.0, 1.0};
  CHECK(kl_divergence(a, half) == doctest::Approx(std::log(2.0)));
  CHECK(kl_divergence(half, half) == 0.0);
  CHECK(std::isinf(kl_divergence(half, a)));
  CHECK(std::isinf(kl_divergence(a, b)));
  CHECK(code_of([&] { kl_divergence(a, std::vector<double>{1.0}); }) == ErrorCode::kDomain);
}

TEST_CASE("property: KL is nonnegative and zero only on equal inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(uniform_int(rng, 6));
    const auto p = random_dist(rng, n), q = random_dist(rng, n);
    CHECK(kl_divergence(p, q) >= 0.0);
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-14));
  }
}

TEST_CASE("terminal and extendable prefixes") {
  const auto v = letters(2, true);
  const auto s = eos_space(3);
  const std::vector<TokenId> ab{0, 1}, a_eos{0, 2}, eos_a{2, 0}, abc{0, 1, 0};
  CHECK_FALSE(is_terminal(ab, s, v.eos()));
  CHECK(is_terminal(a_eos, s, v.eos()));
  CHECK(is_terminal(abc, s, v.eos()));
  CHECK_FALSE(is_valid_prefix(eos_a, s, v));
  CHECK(code_of([&] { require_extendable(abc, s, v); }) == ErrorCode::kLength);
  CHECK(code_of([&] { require_extendable(std::vector<TokenId>{5}, s, v); }) == ErrorCode::kDomain);
  CHECK(code_of([&] { require_extendable(a_eos, s, v); }) == ErrorCode::kContract);
  CHECK(count_prefixes(3, 2) == 13);
}

TEST_CASE("for_each_sequence matches a naive enumeration") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const bool eos = trial % 2 == 0;
    const auto m = random_model(rng, 2 + uniform_int(rng, 2), 1 + uniform_int(rng, 3), eos);
    const auto ref = brute_joint(m, {});
    std::size_t n = 0;
    double mass = 0.0;
    std::vector<TokenId> last;
    for_each_sequence(m, {}, [&](const std::vector<TokenId>& y, double lp) {
      if (n > 0) CHECK(last < y);
      last = y;
      ++n;
      mass += std::exp(lp);
      REQUIRE(ref.count(y) == 1);
      CHECK(std::exp(lp) == doctest::Approx(ref.at(y)).epsilon(1e-12));
      CHECK(sequence_logprob(m, {}, y) == doctest::Approx(lp).epsilon(1e-12));
    });
    CHECK(n == ref.size());
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("enumeration budget raises capacity") {
  const auto m = BaseModel::uniform(letters(3, false), fixed(4));
  CHECK(code_of([&] { for_each_sequence(m, {}, [](const auto&, double) {}, 10); }) ==
        ErrorCode::kCapacity);
}

TEST_CASE("beam_topk equals sorted enumeration") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const auto m = random_model(rng, 2 + uniform_int(rng, 2), 1 + uniform_int(rng, 3), trial % 2 == 1);
    std::vector<ScoredSeq> all;
    for (const auto& [y, p] : brute_joint(m, {})) all.push_back({TokenSeq{y, true}, std::log(p)});
    sort_scored(all);
    const std::size_t k = 1 + static_cast<std::size_t>(uniform_int(rng, 6));
    const auto top = beam_topk(m, {}, k);
    CHECK(top.size() == std::min(k, all.size()));
    for (std::size_t i = 0; i < top.size(); ++i)
      CHECK(top[i].logprob == doctest::Approx(all[i].logprob).epsilon(1e-10));
    for (std::size_t i = 1; i < top.size(); ++i) CHECK(top[i - 1].logprob >= top[i].logprob - 1e-12);
  }
  const auto u = BaseModel::uniform(letters(2, false), fixed(2));
  const auto top = beam_topk(u, {}, 10);
  REQUIRE(top.size() == 4);
  // All tied: lexicographic order.
  CHECK(top[0].seq.ids == std::vector<TokenId>{0, 0});
  CHECK(top[3].seq.ids == std::vector<TokenId>{1, 1});
  CHECK(code_of([&] { beam_topk(u, {}, 0); }) == ErrorCode::kDomain);
}

TEST_CASE("sampling is seeded and matches probabilities") {
  const auto m = BaseModel::unigram(letters(2, false), fixed(1), {1.0, 3.0});
  Rng a(42), b(42);
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_sequence(m, {}, a);
    CHECK(s == sample_sequence(m, {}, b));
    CHECK(s.terminated);
    ones += s.ids[0] == 1;
  }
  // 0.75 +- 5 standard errors
  CHECK(std::abs(ones / double(n) - 0.75) < 5.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST_CASE("decimal round trip") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double v = std::ldexp(uniform_in(rng, -1.0, 1.0), uniform_int(rng, 200) - 100);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(std::isinf(parse_double(format_double(-kInf))));
  CHECK(std::isnan(parse_double("nan")));
  CHECK(code_of([] { parse_double("1.5x"); }) == ErrorCode::kConfig);
  CHECK(code_of([] { parse_double(""); }) == ErrorCode::kConfig);
}
