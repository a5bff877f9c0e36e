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

#include "nado/seq.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <queue>
#include <set>

#include "nado/error.hpp"

namespace nado {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kCapacity: return "capacity";
    case ErrorCode::kInfeasible: return "infeasible-control";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kLength: return "length";
    case ErrorCode::kDeadEnd: return "dead-end";
    case ErrorCode::kContract: return "contract";
    case ErrorCode::kFingerprint: return "fingerprint";
    case ErrorCode::kBijection: return "bijection-domain";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

Vocabulary::Vocabulary(std::vector<std::string> tokens,
                       std::optional<TokenId> eos)
    : tokens_(std::move(tokens)), eos_(eos) {
  if (tokens_.size() < 2) fail(ErrorCode::kConfig, "vocabulary needs >= 2 tokens");
  std::set<std::string> seen(tokens_.begin(), tokens_.end());
  if (seen.size() != tokens_.size())
    fail(ErrorCode::kConfig, "vocabulary tokens must be distinct");
  if (eos_ && !contains(*eos_)) fail(ErrorCode::kConfig, "eos id out of range");
}

const std::string& Vocabulary::symbol(TokenId id) const {
  if (!contains(id)) fail(ErrorCode::kDomain, "token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id_of(const std::string& symbol) const {
  auto it = std::find(tokens_.begin(), tokens_.end(), symbol);
  if (it == tokens_.end()) fail(ErrorCode::kDomain, "unknown token: " + symbol);
  return static_cast<TokenId>(it - tokens_.begin());
}

std::vector<TokenId> Vocabulary::encode_chars(const std::string& text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id_of(std::string(1, c)));
  return ids;
}

std::string Vocabulary::render(Tokens ids, const std::string& sep) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += sep;
    out += symbol(ids[i]);
  }
  return out;
}

double log_sum_exp(std::span<const double> values) {
  double m = -kInf;
  for (double v : values) m = std::max(m, v);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double log_normalize(std::span<double> log_weights) {
  double m = -kInf;
  for (double v : log_weights) {
    if (std::isnan(v)) fail(ErrorCode::kNumeric, "NaN log weight");
    m = std::max(m, v);
  }
  if (m == -kInf) fail(ErrorCode::kDeadEnd, "all next-token weights are zero");
  if (m == kInf) fail(ErrorCode::kNumeric, "infinite log weight");
  double s = 0.0;
  for (double v : log_weights) s += std::exp(v - m);
  const double log_z = m + std::log(s);
  for (double& v : log_weights) v -= log_z;
  return log_z;
}

StepDistribution StepDistribution::from_log_weights(
    std::span<const double> log_weights) {
  std::vector<double> lw(log_weights.begin(), log_weights.end());
  log_normalize(lw);
  StepDistribution d;
  d.probs.resize(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) d.probs[i] = std::exp(lw[i]);
  return d;
}

std::size_t StepDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best] + 1e-12) best = i;
  return best;
}

StepDistribution StepSource::step(Tokens x, Tokens prefix) const {
  std::vector<double> lp(vocab().size());
  log_step(x, prefix, lp);
  StepDistribution d;
  d.probs.resize(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) d.probs[i] = std::exp(lp[i]);
  return d;
}

bool is_terminal(Tokens prefix, const SpaceSpec& space,
                 std::optional<TokenId> eos) {
  if (static_cast<int>(prefix.size()) >= space.max_len) return true;
  return space.termination == Termination::kEos && eos && !prefix.empty() &&
         prefix.back() == *eos;
}

bool is_valid_prefix(Tokens prefix, const SpaceSpec& space,
                     const Vocabulary& vocab) {
  if (static_cast<int>(prefix.size()) > space.max_len) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (!vocab.contains(prefix[i])) return false;
    if (space.termination == Termination::kEos && vocab.eos() &&
        prefix[i] == *vocab.eos() && i + 1 != prefix.size())
      return false;
  }
  return true;
}

void require_extendable(Tokens prefix, const SpaceSpec& space,
                        const Vocabulary& vocab) {
  if (static_cast<int>(prefix.size()) >= space.max_len)
    fail(ErrorCode::kLength, "prefix length " + std::to_string(prefix.size()) +
                                 " reaches max length " +
                                 std::to_string(space.max_len));
  for (TokenId t : prefix)
    if (!vocab.contains(t))
      fail(ErrorCode::kDomain, "token id out of range: " + std::to_string(t));
  if (!is_valid_prefix(prefix, space, vocab) ||
      is_terminal(prefix, space, vocab.eos()))
    fail(ErrorCode::kContract, "prefix is already terminated");
}

std::size_t count_prefixes(std::size_t vocab_size, int max_len) {
  std::size_t total = 0, level = 1;
  for (int n = 0; n <= max_len; ++n) {
    total += level;
    if (n < max_len) {
      if (level > std::numeric_limits<std::size_t>::max() / vocab_size)
        return std::numeric_limits<std::size_t>::max();
      level *= vocab_size;
    }
  }
  return total;
}

namespace {

struct Enumerator {
  const StepSource& source;
  Tokens x;
  const std::function<void(const std::vector<TokenId>&, double)>& visit;
  std::size_t budget;
  std::size_t visited = 0;
  std::vector<TokenId> prefix;

  void run(double logp) {
    if (++visited > budget)
      fail(ErrorCode::kCapacity, "enumeration budget of " +
                                     std::to_string(budget) + " prefixes exceeded");
    if (is_terminal(prefix, source.space(), source.vocab().eos())) {
      visit(prefix, logp);
      return;
    }
    std::vector<double> lp(source.vocab().size());
    source.log_step(x, prefix, lp);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      if (lp[t] == -kInf) continue;
      prefix.push_back(static_cast<TokenId>(t));
      run(logp + lp[t]);
      prefix.pop_back();
    }
  }
};

}  // namespace

void for_each_sequence(
    const StepSource& source, Tokens x,
    const std::function<void(const std::vector<TokenId>&, double)>& visit,
    std::size_t budget) {
  Enumerator e{source, x, visit, budget, 0, {}};
  e.run(0.0);
}

double sequence_logprob(const StepSource& source, Tokens x, Tokens y) {
  const auto& space = source.space();
  const auto& vocab = source.vocab();
  if (!is_valid_prefix(y, space, vocab)) {
    if (static_cast<int>(y.size()) > space.max_len)
      fail(ErrorCode::kLength, "sequence longer than max length");
    fail(ErrorCode::kDomain, "invalid sequence");
  }
  double total = 0.0;
  std::vector<double> lp(vocab.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    source.log_step(x, y.first(i), lp);
    total += lp[static_cast<std::size_t>(y[i])];
  }
  return total;
}

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

TokenId sample_index(std::span<const double> probs, Rng& rng) {
  double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = i;
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);
}

TokenSeq sample_sequence(const StepSource& source, Tokens x, Rng& rng) {
  TokenSeq out;
  std::vector<double> lp(source.vocab().size());
  std::vector<double> p(lp.size());
  while (!is_terminal(out.ids, source.space(), source.vocab().eos())) {
    source.log_step(x, out.ids, lp);
    for (std::size_t i = 0; i < lp.size(); ++i) p[i] = std::exp(lp[i]);
    out.ids.push_back(sample_index(p, rng));
  }
  out.terminated = true;
  return out;
}

void sort_scored(std::vector<ScoredSeq>& seqs, double tol) {
  std::sort(seqs.begin(), seqs.end(), [](const ScoredSeq& a, const ScoredSeq& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.seq.ids < b.seq.ids;
  });
  // Near-equal scores form tie groups ordered lexicographically.
  std::size_t i = 0;
  while (i < seqs.size()) {
    std::size_t j = i + 1;
    while (j < seqs.size() &&
           seqs[i].logprob - seqs[j].logprob <=
               tol * std::max(1.0, std::abs(seqs[i].logprob)))
      ++j;
    std::sort(seqs.begin() + static_cast<std::ptrdiff_t>(i),
              seqs.begin() + static_cast<std::ptrdiff_t>(j),
              [](const ScoredSeq& a, const ScoredSeq& b) {
                return a.seq.ids < b.seq.ids;
              });
    i = j;
  }
}

std::vector<ScoredSeq> beam_topk(const StepSource& source, Tokens x,
                                 std::size_t k, std::size_t max_expansions) {
  if (k == 0) fail(ErrorCode::kDomain, "K must be >= 1");
  struct Node {
    double logprob;
    std::vector<TokenId> ids;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.logprob != b.logprob) return a.logprob < b.logprob;
    return a.ids > b.ids;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> frontier(worse);
  frontier.push({0.0, {}});
  std::vector<ScoredSeq> done;
  std::vector<double> lp(source.vocab().size());
  std::size_t expansions = 0;
  constexpr double kTieTol = 1e-9;
  // Extensions never increase log-probability, so terminated sequences pop in
  // non-increasing order. Keep popping past K while scores tie with the K-th.
  while (!frontier.empty()) {
    Node node = frontier.top();
    if (done.size() >= k &&
        node.logprob < done[k - 1].logprob - kTieTol * std::max(1.0, std::abs(done[k - 1].logprob)))
      break;
    frontier.pop();
    if (is_terminal(node.ids, source.space(), source.vocab().eos())) {
      done.push_back({TokenSeq{node.ids, true}, node.logprob});
      continue;
    }
    if (++expansions > max_expansions)
      fail(ErrorCode::kCapacity, "beam_topk expansion budget exceeded");
    source.log_step(x, node.ids, lp);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      if (lp[t] == -kInf) continue;
      Node child{node.logprob + lp[t], node.ids};
      child.ids.push_back(static_cast<TokenId>(t));
      frontier.push(std::move(child));
    }
  }
  sort_scored(done, 1e-12);
  if (done.size() > k) done.resize(k);
  return done;
}

double kl_divergence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDomain, "KL support size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    if (b[i] <= 0.0) return kInf;
    kl += a[i] * (std::log(a[i]) - std::log(b[i]));
  }
  return std::max(kl, 0.0);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || (errno == ERANGE && std::isinf(v)))
    fail(ErrorCode::kConfig, "malformed decimal: '" + s + "'");
  return v;
}

}  // namespace nado
