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

#include "nado/base_model.hpp"

#include <cmath>
#include <cstdio>

#include "nado/error.hpp"

namespace nado {

using nlohmann::json;

std::string fingerprint_of(const std::string& canonical) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> encode_decimal_array(std::span<const double> values) {
  std::vector<std::string> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(format_double(v));
  return out;
}

std::vector<double> decode_decimal_array(const json& j) {
  if (!j.is_array()) fail(ErrorCode::kConfig, "expected an array of decimals");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& e : j) {
    if (e.is_string()) out.push_back(parse_double(e.get<std::string>()));
    else if (e.is_number()) out.push_back(e.get<double>());
    else fail(ErrorCode::kConfig, "expected decimal string");
  }
  return out;
}

json vocab_to_json(const Vocabulary& vocab) {
  json j;
  j["tokens"] = vocab.tokens();
  j["eos"] = vocab.eos() ? json(*vocab.eos()) : json(nullptr);
  return j;
}

Vocabulary vocab_from_json(const json& j) {
  auto tokens = j.at("tokens").get<std::vector<std::string>>();
  std::optional<TokenId> eos;
  if (j.contains("eos") && !j["eos"].is_null()) {
    if (j["eos"].is_string()) {
      const auto sym = j["eos"].get<std::string>();
      auto it = std::find(tokens.begin(), tokens.end(), sym);
      if (it == tokens.end()) fail(ErrorCode::kConfig, "eos symbol not in vocabulary");
      eos = static_cast<TokenId>(it - tokens.begin());
    } else {
      eos = j["eos"].get<TokenId>();
    }
  }
  return Vocabulary(std::move(tokens), eos);
}

json space_to_json(const SpaceSpec& space) {
  return json{{"max_len", space.max_len},
              {"termination",
               space.termination == Termination::kEos ? "eos" : "fixed"}};
}

SpaceSpec space_from_json(const json& j) {
  SpaceSpec s;
  s.max_len = j.at("max_len").get<int>();
  const auto t = j.value("termination", std::string("eos"));
  if (t == "eos") s.termination = Termination::kEos;
  else if (t == "fixed") s.termination = Termination::kFixedLength;
  else fail(ErrorCode::kConfig, "termination must be 'eos' or 'fixed'");
  if (s.max_len < 0) fail(ErrorCode::kConfig, "max_len must be >= 0");
  return s;
}

namespace {

void check_space(const Vocabulary& vocab, const SpaceSpec& space) {
  if (space.termination == Termination::kEos && !vocab.eos())
    fail(ErrorCode::kConfig, "eos termination requires an eos token");
}

}  // namespace

BaseModel::BaseModel(Vocabulary vocab, SpaceSpec space,
                     std::variant<NgramTable, NeuralLmParams> body)
    : vocab_(std::move(vocab)), space_(space), body_(std::move(body)) {
  check_space(vocab_, space_);
}

BaseModel BaseModel::unigram(Vocabulary vocab, SpaceSpec space,
                             std::vector<double> weights) {
  if (weights.size() != vocab.size())
    fail(ErrorCode::kConfig, "unigram weights must match vocabulary size");
  for (double w : weights)
    if (!(w > 0.0)) fail(ErrorCode::kConfig, "unigram weights must be positive");
  NgramTable t;
  t.order = 1;
  t.smoothing = 0.0;
  t.counts[{}] = std::move(weights);
  return BaseModel(std::move(vocab), space, std::move(t));
}

BaseModel BaseModel::uniform(Vocabulary vocab, SpaceSpec space) {
  std::vector<double> w(vocab.size(), 1.0);
  return unigram(std::move(vocab), space, std::move(w));
}

BaseModel BaseModel::from_ngram(Vocabulary vocab, SpaceSpec space,
                                NgramTable table) {
  if (table.order < 1) fail(ErrorCode::kConfig, "n-gram order must be >= 1");
  if (table.smoothing < 0.0) fail(ErrorCode::kConfig, "smoothing must be >= 0");
  for (const auto& [ctx, counts] : table.counts) {
    if (ctx.size() != static_cast<std::size_t>(table.order - 1) ||
        counts.size() != vocab.size())
      fail(ErrorCode::kConfig, "n-gram table shape mismatch");
    if (table.smoothing == 0.0)
      for (double c : counts)
        if (!(c > 0.0))
          fail(ErrorCode::kConfig,
               "zero count with smoothing 0 violates positivity");
  }
  return BaseModel(std::move(vocab), space, std::move(table));
}

BaseModel BaseModel::neural(Vocabulary vocab, SpaceSpec space, int window,
                            int hidden, std::uint64_t seed, double init_scale) {
  if (window < 1) fail(ErrorCode::kConfig, "window must be >= 1");
  NeuralLmParams p;
  p.window = window;
  const int v = static_cast<int>(vocab.size());
  const int input = window * (v + 1) + std::max(space.max_len, 1);
  p.mlp = Mlp(input, hidden, v);
  Rng rng(seed);
  p.mlp.init(rng, init_scale);
  return BaseModel(std::move(vocab), space, std::move(p));
}

ModelKind BaseModel::kind() const {
  return std::holds_alternative<NgramTable>(body_) ? ModelKind::kNgram
                                                   : ModelKind::kNeural;
}

int BaseModel::neural_input_dim() const {
  const auto* p = neural_params();
  return p ? p->mlp.input_dim() : 0;
}

SparseInput BaseModel::neural_features(Tokens prefix) const {
  const auto* p = neural_params();
  if (!p) fail(ErrorCode::kInternal, "not a neural model");
  const int v = static_cast<int>(vocab_.size());
  SparseInput in;
  for (int slot = 0; slot < p->window; ++slot) {
    const auto n = static_cast<int>(prefix.size());
    const int tok = slot < n ? prefix[static_cast<std::size_t>(n - 1 - slot)] : v;
    in.emplace_back(slot * (v + 1) + tok, 1.0);
  }
  const int pos = std::min(static_cast<int>(prefix.size()),
                           std::max(space_.max_len, 1) - 1);
  in.emplace_back(p->window * (v + 1) + pos, 1.0);
  return in;
}

void BaseModel::log_step(Tokens /*x*/, Tokens prefix, std::span<double> out) const {
  const std::size_t v = vocab_.size();
  if (const auto* t = ngram()) {
    std::vector<TokenId> ctx(static_cast<std::size_t>(t->order - 1), kBos);
    const std::size_t n = prefix.size();
    for (std::size_t i = 0; i < ctx.size(); ++i) {
      const std::size_t back = ctx.size() - i;  // distance from the end
      if (back <= n) ctx[i] = prefix[n - back];
    }
    auto it = t->counts.find(ctx);
    if (it == t->counts.end()) {
      if (t->smoothing <= 0.0)
        fail(ErrorCode::kDomain, "unseen n-gram context with zero smoothing");
      const double u = -std::log(static_cast<double>(v));
      for (auto& o : out) o = u;
      return;
    }
    double total = 0.0;
    for (double c : it->second) total += c;
    const double denom = std::log(total + t->smoothing * static_cast<double>(v));
    for (std::size_t i = 0; i < v; ++i)
      out[i] = std::log(it->second[i] + t->smoothing) - denom;
    return;
  }
  const auto* p = neural_params();
  std::vector<double> hidden, logits;
  p->mlp.forward(neural_features(prefix), hidden, logits);
  std::copy(logits.begin(), logits.end(), out.begin());
  log_normalize(out);
}

StepDistribution BaseModel::step_distribution(Tokens x, Tokens prefix) const {
  require_extendable(prefix, space_, vocab_);
  return step(x, prefix);
}

json BaseModel::to_json() const {
  json j;
  j["format"] = "nado.base_model";
  j["version"] = 1;
  j["vocabulary"] = vocab_to_json(vocab_);
  j["space"] = space_to_json(space_);
  if (const auto* t = ngram()) {
    j["kind"] = "ngram";
    json contexts = json::array();
    for (const auto& [ctx, counts] : t->counts)
      contexts.push_back({{"context", ctx}, {"counts", encode_decimal_array(counts)}});
    j["ngram"] = {{"order", t->order},
                  {"smoothing", format_double(t->smoothing)},
                  {"contexts", contexts}};
  } else {
    const auto* p = neural_params();
    j["kind"] = "neural";
    j["neural"] = {{"window", p->window},
                   {"hidden", p->mlp.hidden()},
                   {"params", encode_decimal_array(p->mlp.params())}};
  }
  return j;
}

BaseModel BaseModel::from_json(const json& j) {
  if (j.value("format", std::string()) != "nado.base_model")
    fail(ErrorCode::kConfig, "not a base model document");
  if (j.value("version", 0) != 1)
    fail(ErrorCode::kConfig, "unsupported base model version");
  auto vocab = vocab_from_json(j.at("vocabulary"));
  auto space = space_from_json(j.at("space"));
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "ngram") {
    const auto& n = j.at("ngram");
    NgramTable t;
    t.order = n.at("order").get<int>();
    t.smoothing = n.at("smoothing").is_string()
                      ? parse_double(n["smoothing"].get<std::string>())
                      : n["smoothing"].get<double>();
    for (const auto& c : n.at("contexts"))
      t.counts[c.at("context").get<std::vector<TokenId>>()] =
          decode_decimal_array(c.at("counts"));
    return from_ngram(std::move(vocab), space, std::move(t));
  }
  if (kind == "neural") {
    const auto& n = j.at("neural");
    auto m = neural(std::move(vocab), space, n.at("window").get<int>(),
                    n.at("hidden").get<int>(), 0, 0.0);
    auto values = decode_decimal_array(n.at("params"));
    auto params = m.mutable_neural_params()->mlp.params();
    if (values.size() != params.size())
      fail(ErrorCode::kConfig, "neural parameter count mismatch");
    std::copy(values.begin(), values.end(), params.begin());
    return m;
  }
  fail(ErrorCode::kConfig, "unknown model kind: " + kind);
}

std::string BaseModel::fingerprint() const { return fingerprint_of(to_json().dump()); }

namespace {

std::vector<TokenId> with_eos(const TokenSeq& s, const Vocabulary& vocab,
                              const SpaceSpec& space) {
  std::vector<TokenId> ids = s.ids;
  if (static_cast<int>(ids.size()) > space.max_len)
    fail(ErrorCode::kLength, "corpus sequence longer than max length");
  for (TokenId t : ids)
    if (!vocab.contains(t)) fail(ErrorCode::kDomain, "corpus token out of range");
  if (space.termination == Termination::kEos &&
      static_cast<int>(ids.size()) < space.max_len &&
      (ids.empty() || ids.back() != *vocab.eos()))
    ids.push_back(*vocab.eos());
  return ids;
}

}  // namespace

BaseModel fit_ngram(const Vocabulary& vocab, const SpaceSpec& space,
                    const std::vector<TokenSeq>& corpus, int order,
                    double smoothing) {
  if (corpus.empty()) fail(ErrorCode::kConfig, "corpus must be nonempty");
  if (order < 1) fail(ErrorCode::kConfig, "order must be >= 1");
  if (smoothing < 0.0) fail(ErrorCode::kConfig, "smoothing must be >= 0");
  check_space(vocab, space);
  NgramTable t;
  t.order = order;
  t.smoothing = smoothing;
  const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
  for (const auto& s : corpus) {
    const auto ids = with_eos(s, vocab, space);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<TokenId> ctx(ctx_len, kBos);
      for (std::size_t k = 0; k < ctx_len; ++k) {
        const std::size_t back = ctx_len - k;
        if (back <= i) ctx[k] = ids[i - back];
      }
      auto& row = t.counts[ctx];
      if (row.empty()) row.assign(vocab.size(), 0.0);
      row[static_cast<std::size_t>(ids[i])] += 1.0;
    }
  }
  if (smoothing == 0.0) {
    // Every reachable context must be observed with all-positive counts.
    const std::size_t v = vocab.size();
    std::size_t n_ctx = 1;
    for (std::size_t k = 0; k < ctx_len; ++k) n_ctx *= (v + 1);
    for (std::size_t code = 0; code < n_ctx; ++code) {
      std::vector<TokenId> ctx(ctx_len);
      std::size_t c = code;
      for (std::size_t k = 0; k < ctx_len; ++k) {
        ctx[ctx_len - 1 - k] = static_cast<TokenId>(c % (v + 1)) - 1;
        c /= (v + 1);
      }
      // Contexts with a real token left of a kBos pad are unreachable.
      bool reachable = true;
      for (std::size_t k = 1; k < ctx_len; ++k)
        if (ctx[k] == kBos && ctx[k - 1] != kBos) reachable = false;
      for (TokenId c_id : ctx)
        if (vocab.eos() && c_id == *vocab.eos()) reachable = false;
      if (!reachable) continue;
      auto it = t.counts.find(ctx);
      if (it == t.counts.end())
        fail(ErrorCode::kDomain, "smoothing 0 with an unseen context");
    }
  }
  return BaseModel::from_ngram(vocab, space, std::move(t));
}

double neural_lm_loss(const BaseModel& model, const std::vector<TokenSeq>& corpus,
                      std::vector<double>* grad) {
  const auto* p = model.neural_params();
  if (!p) fail(ErrorCode::kConfig, "neural_lm_loss needs a neural model");
  if (grad) grad->assign(p->mlp.num_params(), 0.0);
  std::vector<double> hidden, logits;
  double total = 0.0;
  std::size_t events = 0;
  for (const auto& s : corpus) {
    const auto ids = with_eos(s, model.vocab(), model.space());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto in = model.neural_features(Tokens(ids).first(i));
      p->mlp.forward(in, hidden, logits);
      std::vector<double> lp = logits;
      log_normalize(lp);
      const auto y = static_cast<std::size_t>(ids[i]);
      total -= lp[y];
      ++events;
      if (grad) {
        std::vector<double> d(lp.size());
        for (std::size_t k = 0; k < lp.size(); ++k) d[k] = std::exp(lp[k]);
        d[y] -= 1.0;
        p->mlp.backward(in, hidden, d, *grad);
      }
    }
  }
  if (events == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(events);
  if (grad)
    for (double& g : *grad) g *= inv;
  return total * inv;
}

std::vector<double> train_neural_lm(BaseModel& model,
                                    const std::vector<TokenSeq>& corpus,
                                    const NeuralTrainConfig& config) {
  auto* p = model.mutable_neural_params();
  if (!p) fail(ErrorCode::kConfig, "train_neural_lm needs a neural model");
  std::vector<double> trace;
  std::vector<double> grad, velocity(p->mlp.num_params(), 0.0);
  for (int step = 0; step < config.steps; ++step) {
    trace.push_back(neural_lm_loss(model, corpus, &grad));
    auto params = p->mlp.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = config.momentum * velocity[i] + grad[i];
      params[i] -= config.learning_rate * velocity[i];
    }
  }
  return trace;
}

}  // namespace nado
