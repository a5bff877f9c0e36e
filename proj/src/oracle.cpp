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

#include "nado/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "nado/base_model.hpp"
#include "nado/error.hpp"

namespace nado {

using nlohmann::json;

bool Dfa::accepts(Tokens content) const {
  int s = start;
  for (TokenId t : content) {
    if (s < 0) return false;
    const auto& row = next[static_cast<std::size_t>(s)];
    if (t < 0 || static_cast<std::size_t>(t) >= row.size()) return false;
    s = row[static_cast<std::size_t>(t)];
  }
  return s >= 0 && accepting[static_cast<std::size_t>(s)];
}

void Dfa::validate(std::size_t vocab_size) const {
  if (num_states <= 0 || start < 0 || start >= num_states)
    fail(ErrorCode::kConfig, "dfa: bad state count or start state");
  if (accepting.size() != static_cast<std::size_t>(num_states) ||
      next.size() != static_cast<std::size_t>(num_states))
    fail(ErrorCode::kConfig, "dfa: table size mismatch");
  for (const auto& row : next) {
    if (vocab_size && row.size() != vocab_size)
      fail(ErrorCode::kConfig, "dfa: transition row must cover the vocabulary");
    for (int s : row)
      if (s < -1 || s >= num_states) fail(ErrorCode::kConfig, "dfa: bad target state");
  }
}

double QuantizedClassifier::score(Tokens content) const {
  double a = bias;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const auto t = static_cast<std::size_t>(content[i]);
    if (t < unigram.size()) a += unigram[t];
    if (i > 0) {
      auto it = bigram.find({content[i - 1], content[i]});
      if (it != bigram.end()) a += it->second;
    }
  }
  return 1.0 / (1.0 + std::exp(-a));
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool window_matches_at(const std::vector<TokenId>& pattern, Tokens content,
                       std::size_t at) {
  for (std::size_t k = 0; k < pattern.size(); ++k)
    if (pattern[k] >= 0 && content[at + k] != pattern[k]) return false;
  return true;
}

}  // namespace

Oracle Oracle::coverage_groups(std::vector<std::vector<TokenId>> groups) {
  Oracle o;
  o.kind_ = OracleKind::kLexicalCoverage;
  for (const auto& g : groups)
    if (g.empty()) fail(ErrorCode::kConfig, "coverage group must be nonempty");
  o.groups_ = std::move(groups);
  return o;
}

Oracle Oracle::coverage(const std::vector<TokenId>& tokens) {
  std::vector<std::vector<TokenId>> groups;
  for (TokenId t : tokens) groups.push_back({t});
  return coverage_groups(std::move(groups));
}

Oracle Oracle::automaton(Dfa dfa) {
  dfa.validate(0);
  Oracle o;
  o.kind_ = OracleKind::kAutomaton;
  o.dfa_ = std::move(dfa);
  return o;
}

Oracle Oracle::window(WindowPredicate predicate) {
  if (predicate.pattern.empty()) fail(ErrorCode::kConfig, "window pattern is empty");
  Oracle o;
  o.kind_ = OracleKind::kWindow;
  o.window_ = std::move(predicate);
  return o;
}

Oracle Oracle::classifier(QuantizedClassifier clf) {
  if (!(clf.threshold > 0.0 && clf.threshold < 1.0))
    fail(ErrorCode::kConfig, "classifier threshold must lie in (0,1)");
  if (clf.flip_rate < 0.0 || clf.flip_rate > 1.0)
    fail(ErrorCode::kConfig, "flip rate must lie in [0,1]");
  Oracle o;
  o.kind_ = OracleKind::kClassifier;
  o.clf_ = std::move(clf);
  return o;
}

Oracle conjoin(std::vector<Oracle> oracles) {
  if (oracles.empty()) fail(ErrorCode::kDomain, "conjoin needs at least one oracle");
  Oracle o;
  o.kind_ = OracleKind::kConjunction;
  o.children_ = std::move(oracles);
  return o;
}

Oracle scaled(Oracle child, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorCode::kDomain, "tau must lie in (0,1]");
  Oracle o;
  o.kind_ = OracleKind::kScaled;
  o.tau_ = tau;
  o.children_.push_back(std::move(child));
  return o;
}

bool Oracle::is_boolean() const {
  switch (kind_) {
    case OracleKind::kScaled: return tau_ == 1.0 && children_[0].is_boolean();
    case OracleKind::kConjunction:
      return std::all_of(children_.begin(), children_.end(),
                         [](const Oracle& c) { return c.is_boolean(); });
    default: return true;
  }
}

double Oracle::value(Tokens x, Tokens content) const {
  switch (kind_) {
    case OracleKind::kLexicalCoverage:
      for (const auto& g : groups_) {
        const bool hit = std::any_of(content.begin(), content.end(), [&](TokenId t) {
          return std::find(g.begin(), g.end(), t) != g.end();
        });
        if (!hit) return 0.0;
      }
      return 1.0;
    case OracleKind::kAutomaton:
      return dfa_.accepts(content) ? 1.0 : 0.0;
    case OracleKind::kWindow: {
      const auto& pat = window_.pattern;
      bool found = false;
      if (content.size() >= pat.size())
        for (std::size_t at = 0; at + pat.size() <= content.size() && !found; ++at)
          found = window_matches_at(pat, content, at);
      return found == window_.must_contain ? 1.0 : 0.0;
    }
    case OracleKind::kClassifier: {
      bool label = clf_.score(content) >= clf_.threshold;
      if (clf_.flip_rate > 0.0) {
        std::uint64_t h = mix64(clf_.noise_seed);
        for (TokenId t : content) h = mix64(h ^ static_cast<std::uint64_t>(t + 1));
        h = mix64(h ^ content.size());
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u < clf_.flip_rate) label = !label;
      }
      return label ? 1.0 : 0.0;
    }
    case OracleKind::kConjunction: {
      double v = 1.0;
      for (const auto& c : children_) v *= c.value(x, content);
      return v;
    }
    case OracleKind::kScaled:
      return tau_ * children_[0].value(x, content);
  }
  fail(ErrorCode::kInternal, "unknown oracle kind");
}

Tokens content_of(const TokenSeq& y, std::optional<TokenId> eos) {
  if (!y.terminated) fail(ErrorCode::kContract, "oracle evaluation needs a terminated sequence");
  Tokens ids(y.ids);
  if (eos && !ids.empty() && ids.back() == *eos) ids = ids.first(ids.size() - 1);
  return ids;
}

double Oracle::evaluate(Tokens x, const TokenSeq& y, std::optional<TokenId> eos) const {
  return value(x, content_of(y, eos));
}

json Oracle::to_json() const {
  json j;
  switch (kind_) {
    case OracleKind::kLexicalCoverage:
      j["kind"] = "lexical_coverage";
      j["groups"] = groups_;
      break;
    case OracleKind::kAutomaton: {
      j["kind"] = "automaton";
      json acc = json::array();
      for (int s = 0; s < dfa_.num_states; ++s)
        if (dfa_.accepting[static_cast<std::size_t>(s)]) acc.push_back(s);
      j["num_states"] = dfa_.num_states;
      j["start"] = dfa_.start;
      j["accepting"] = acc;
      j["transitions"] = dfa_.next;
      break;
    }
    case OracleKind::kWindow:
      j["kind"] = "window";
      j["pattern"] = window_.pattern;
      j["must_contain"] = window_.must_contain;
      break;
    case OracleKind::kClassifier: {
      j["kind"] = "quantized_classifier";
      j["bias"] = format_double(clf_.bias);
      j["unigram"] = encode_decimal_array(clf_.unigram);
      json bi = json::array();
      for (const auto& [k, w] : clf_.bigram)
        bi.push_back({{"prev", k.first}, {"next", k.second}, {"weight", format_double(w)}});
      j["bigram"] = bi;
      j["threshold"] = format_double(clf_.threshold);
      j["flip_rate"] = format_double(clf_.flip_rate);
      j["noise_seed"] = clf_.noise_seed;
      break;
    }
    case OracleKind::kConjunction: {
      j["kind"] = "conjunction";
      json ch = json::array();
      for (const auto& c : children_) ch.push_back(c.to_json());
      j["children"] = ch;
      break;
    }
    case OracleKind::kScaled:
      j["kind"] = "scaled";
      j["tau"] = format_double(tau_);
      j["child"] = children_[0].to_json();
      break;
  }
  return j;
}

namespace {

double number_or_decimal(const json& j) {
  return j.is_string() ? parse_double(j.get<std::string>()) : j.get<double>();
}

}  // namespace

Oracle Oracle::from_json(const json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "lexical_coverage") {
      if (j.contains("groups"))
        return coverage_groups(j["groups"].get<std::vector<std::vector<TokenId>>>());
      return coverage(j.value("tokens", std::vector<TokenId>{}));
    }
    if (kind == "constant_one") return always();
    if (kind == "automaton") {
      Dfa d;
      d.num_states = j.at("num_states").get<int>();
      d.start = j.value("start", 0);
      d.accepting.assign(static_cast<std::size_t>(std::max(d.num_states, 0)), false);
      for (int s : j.at("accepting").get<std::vector<int>>()) {
        if (s < 0 || s >= d.num_states) fail(ErrorCode::kConfig, "dfa: bad accepting state");
        d.accepting[static_cast<std::size_t>(s)] = true;
      }
      d.next = j.at("transitions").get<std::vector<std::vector<int>>>();
      return automaton(std::move(d));
    }
    if (kind == "window") {
      WindowPredicate w;
      w.pattern = j.at("pattern").get<std::vector<TokenId>>();
      w.must_contain = j.value("must_contain", true);
      return window(std::move(w));
    }
    if (kind == "quantized_classifier") {
      QuantizedClassifier c;
      c.bias = number_or_decimal(j.value("bias", json(0.0)));
      c.unigram = decode_decimal_array(j.value("unigram", json::array()));
      for (const auto& b : j.value("bigram", json::array()))
        c.bigram[{b.at("prev").get<TokenId>(), b.at("next").get<TokenId>()}] =
            number_or_decimal(b.at("weight"));
      c.threshold = number_or_decimal(j.value("threshold", json(0.5)));
      c.flip_rate = number_or_decimal(j.value("flip_rate", json(0.0)));
      c.noise_seed = j.value("noise_seed", std::uint64_t{0});
      return classifier(std::move(c));
    }
    if (kind == "conjunction") {
      std::vector<Oracle> ch;
      for (const auto& c : j.at("children")) ch.push_back(from_json(c));
      return conjoin(std::move(ch));
    }
    if (kind == "scaled")
      return scaled(from_json(j.at("child")), number_or_decimal(j.at("tau")));
    fail(ErrorCode::kConfig, "unknown oracle kind: " + kind);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed oracle spec: ") + e.what());
  }
}

std::string Oracle::fingerprint() const { return fingerprint_of(to_json().dump()); }

std::string Oracle::describe() const {
  switch (kind_) {
    case OracleKind::kLexicalCoverage: {
      if (groups_.empty()) return "always";
      std::string s = "cover{";
      for (std::size_t i = 0; i < groups_.size(); ++i) {
        if (i) s += ",";
        for (std::size_t k = 0; k < groups_[i].size(); ++k) {
          if (k) s += "|";
          s += std::to_string(groups_[i][k]);
        }
      }
      return s + "}";
    }
    case OracleKind::kAutomaton: return "dfa(" + std::to_string(dfa_.num_states) + ")";
    case OracleKind::kWindow: return window_.must_contain ? "window+" : "window-";
    case OracleKind::kClassifier: return "classifier";
    case OracleKind::kConjunction: {
      std::string s = "and(";
      for (std::size_t i = 0; i < children_.size(); ++i) {
        if (i) s += ",";
        s += children_[i].describe();
      }
      return s + ")";
    }
    case OracleKind::kScaled: return format_double(tau_) + "*" + children_[0].describe();
  }
  return "?";
}

SatisfactionEstimate satisfaction_rate(const Oracle& oracle,
                                       const StepSource& source, Tokens x,
                                       std::size_t mc_samples, std::uint64_t seed,
                                       std::size_t budget) {
  const auto eos = source.vocab().eos();
  SatisfactionEstimate est;
  if (count_prefixes(source.vocab().size(), source.space().max_len) <= budget) {
    double total = 0.0;
    for_each_sequence(source, x, [&](const std::vector<TokenId>& y, double lp) {
      if (lp == -kInf) return;
      total += std::exp(lp) * oracle.evaluate(x, TokenSeq{y, true}, eos);
    }, budget);
    est.rate = total;
    est.exact = true;
    return est;
  }
  if (mc_samples == 0)
    fail(ErrorCode::kCapacity, "sequence space exceeds the enumeration budget of " +
                                   std::to_string(budget) +
                                   " prefixes and no sample budget was given");
  Rng rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < mc_samples; ++i) {
    const double v = oracle.evaluate(x, sample_sequence(source, x, rng), eos);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(mc_samples);
  est.rate = sum / n;
  const double var = mc_samples > 1 ? (sum_sq - n * est.rate * est.rate) / (n - 1.0) : 0.0;
  est.std_error = std::sqrt(std::max(var, 0.0) / n);
  est.samples = mc_samples;
  return est;
}

}  // namespace nado
