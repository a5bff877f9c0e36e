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

// Seeded generators and brute-force reference computations shared by the
// unit tests. Reference code here is deliberately naive and independent of
// the library's own DP / recursion code paths.

#ifndef NADO_TESTS_HELPERS_HPP_
#define NADO_TESTS_HELPERS_HPP_

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nado/base_model.hpp"
#include "nado/error.hpp"
#include "nado/oracle.hpp"
#include "nado/seq.hpp"

namespace nado::testing {

inline Vocabulary letters(int n, bool eos) {
  std::vector<std::string> t;
  for (int i = 0; i < n; ++i) t.push_back(std::string(1, static_cast<char>('a' + i)));
  if (!eos) return Vocabulary(t, std::nullopt);
  t.push_back("</s>");
  return Vocabulary(t, static_cast<TokenId>(n));
}

inline SpaceSpec fixed(int len) { return SpaceSpec{len, Termination::kFixedLength}; }
inline SpaceSpec eos_space(int len) { return SpaceSpec{len, Termination::kEos}; }

inline double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline int uniform_int(Rng& rng, int n) {
  return static_cast<int>(uniform01(rng) * n) % n;
}

inline std::vector<double> random_weights(Rng& rng, std::size_t n, double floor = 0.1) {
  std::vector<double> w(n);
  for (auto& v : w) v = floor + uniform01(rng);
  return w;
}

inline std::vector<double> random_dist(Rng& rng, std::size_t n) {
  auto w = random_weights(rng, n, 0.05);
  double s = 0.0;
  for (double v : w) s += v;
  for (auto& v : w) v /= s;
  return w;
}

// Random unigram or bigram model over `n` letters (+ eos when eos_mode).
inline BaseModel random_model(Rng& rng, int n, int max_len, bool eos_mode) {
  auto vocab = letters(n, eos_mode);
  auto space = eos_mode ? eos_space(max_len) : fixed(max_len);
  if (uniform01(rng) < 0.5) return BaseModel::unigram(vocab, space, random_weights(rng, vocab.size()));
  std::vector<TokenSeq> corpus;
  for (int i = 0; i < 8; ++i) {
    TokenSeq s;
    const int len = eos_mode ? uniform_int(rng, max_len + 1) : max_len;
    for (int k = 0; k < len; ++k) s.ids.push_back(uniform_int(rng, n));
    corpus.push_back(s);
  }
  return fit_ngram(vocab, space, corpus, 2, uniform_in(rng, 0.2, 1.5));
}

// Random boolean oracle over content tokens 0..n-1.
inline Oracle random_oracle(Rng& rng, int n) {
  const int pick = uniform_int(rng, 4);
  const TokenId a = uniform_int(rng, n), b = uniform_int(rng, n);
  switch (pick) {
    case 0: return Oracle::coverage({a});
    case 1: return Oracle::window(WindowPredicate{{a, b}, uniform01(rng) < 0.5});
    case 2: return conjoin({Oracle::coverage({a}), Oracle::coverage({b})});
    default: {
      // Even number of `a` tokens.
      Dfa d;
      d.num_states = 2;
      d.start = 0;
      d.accepting = {true, false};
      d.next.assign(2, std::vector<int>(static_cast<std::size_t>(n) + 1, 0));
      for (int s = 0; s < 2; ++s)
        for (int t = 0; t <= n; ++t) d.next[s][t] = (t == a) ? 1 - s : s;
      return Oracle::automaton(d);
    }
  }
}

// Every complete sequence with its probability, by naive recursion over
// log_step (no shared code with the library's enumerator).
inline std::map<std::vector<TokenId>, double> brute_joint(const StepSource& m, Tokens x) {
  std::map<std::vector<TokenId>, double> out;
  std::vector<TokenId> y;
  std::function<void(double)> rec = [&](double p) {
    if (is_terminal(y, m.space(), m.vocab().eos())) {
      out[y] += p;
      return;
    }
    std::vector<double> lp(m.vocab().size());
    m.log_step(x, y, lp);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      if (lp[t] == -kInf) continue;
      y.push_back(static_cast<TokenId>(t));
      rec(p * std::exp(lp[t]));
      y.pop_back();
    }
  };
  rec(1.0);
  return out;
}

// E[C | prefix] by summing the joint over completions of `prefix`.
inline double brute_ratio(const StepSource& m, const Oracle& c, Tokens x, Tokens prefix) {
  const auto joint = brute_joint(m, x);
  double num = 0.0, den = 0.0;
  for (const auto& [y, p] : joint) {
    if (y.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), y.begin())) continue;
    num += p * c.evaluate(x, TokenSeq{y, true}, m.vocab().eos());
    den += p;
  }
  return den > 0.0 ? num / den : 0.0;
}

inline ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;  // no error: tests compare against the expected code
}

}  // namespace nado::testing

#endif  // NADO_TESTS_HELPERS_HPP_
