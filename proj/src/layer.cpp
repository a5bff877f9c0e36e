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

#include "nado/layer.hpp"

#include <algorithm>
#include <cmath>

#include "nado/base_model.hpp"
#include "nado/error.hpp"

namespace nado {

using nlohmann::json;

const char* head_name(HeadKind h) {
  return h == HeadKind::kVanilla ? "vanilla" : "consistent";
}

HeadKind parse_head(const std::string& s) {
  if (s == "vanilla") return HeadKind::kVanilla;
  if (s == "consistent") return HeadKind::kConsistent;
  fail(ErrorCode::kConfig, "unknown head kind: " + s);
}

namespace {

const char* mode_name(ContextMode m) {
  return m == ContextMode::kTokensOnly ? "tokens" : "tokens+upstream";
}

ContextMode parse_mode(const std::string& s) {
  if (s == "tokens") return ContextMode::kTokensOnly;
  if (s == "tokens+upstream") return ContextMode::kTokensUpstream;
  fail(ErrorCode::kConfig, "unknown context mode: " + s);
}

int neural_input_dim(const NeuralScorerSpec& spec, ContextMode mode, int v, int max_len) {
  int dim = spec.window * (v + 1) + std::max(max_len, 1);
  if (spec.use_x) dim += v;
  if (mode == ContextMode::kTokensUpstream) dim += v;
  return dim + 1;  // root flag
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_sigmoid(double z) {
  if (z == kInf) return 0.0;
  if (z == -kInf) return -kInf;
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

NadoLayer NadoLayer::tabular(HeadKind head, const Vocabulary& vocab,
                             const SpaceSpec& space, double init_logit,
                             double init_root) {
  NadoLayer l;
  l.head_ = head;
  l.scorer_ = ScorerKind::kTabular;
  l.mode_ = ContextMode::kTokensOnly;
  l.vocab_ = vocab;
  l.space_ = space;
  l.index_ = PrefixIndex(vocab.size(), std::max(space.max_len - 1, 0));
  l.table_.assign(l.index_.size() * vocab.size() + 1, init_logit);
  l.table_.back() = init_root;
  return l;
}

NadoLayer NadoLayer::neural(HeadKind head, const Vocabulary& vocab,
                            const SpaceSpec& space, const NeuralScorerSpec& spec,
                            ContextMode mode, std::uint64_t seed) {
  if (spec.window < 1 || spec.hidden < 1)
    fail(ErrorCode::kConfig, "neural scorer needs window >= 1 and hidden >= 1");
  NadoLayer l;
  l.head_ = head;
  l.scorer_ = ScorerKind::kNeural;
  l.mode_ = mode;
  l.vocab_ = vocab;
  l.space_ = space;
  l.spec_ = spec;
  const int v = static_cast<int>(vocab.size());
  l.mlp_ = Mlp(neural_input_dim(spec, mode, v, space.max_len), spec.hidden, v + 1);
  Rng rng(seed);
  l.mlp_.init(rng, spec.init_scale);
  return l;
}

NadoLayer NadoLayer::from_exact_table(HeadKind head, const ExactRatioTable& table) {
  NadoLayer l = tabular(head, table.vocab(), table.space());
  const std::size_t v = table.vocab().size();
  const double root = table.at({});
  l.tabular_root() = std::log(root) - std::log1p(-root);
  table.for_each([&](const std::vector<TokenId>& prefix, double r) {
    if (is_terminal(prefix, table.space(), table.vocab().eos())) return;
    auto row = l.tabular_row(prefix);
    std::vector<TokenId> child = prefix;
    child.push_back(0);
    for (std::size_t t = 0; t < v; ++t) {
      child.back() = static_cast<TokenId>(t);
      const double rc = table.contains(child) ? table.at(child) : 0.0;
      if (head == HeadKind::kVanilla) {
        row[t] = std::log(rc) - std::log1p(-rc);
      } else {
        // Dead prefixes are unreachable under q; keep their rows finite.
        row[t] = r > 0.0 ? std::log(rc) : 0.0;
      }
    }
  });
  return l;
}

std::span<double> NadoLayer::params() {
  if (scorer_ == ScorerKind::kTabular) return table_;
  return mlp_.params();
}

std::span<const double> NadoLayer::params() const {
  if (scorer_ == ScorerKind::kTabular) return table_;
  return mlp_.params();
}

std::vector<std::size_t> NadoLayer::root_param_indices() const {
  if (scorer_ == ScorerKind::kTabular) return {table_.size() - 1};
  std::vector<std::size_t> out;
  const std::size_t v = vocab_.size();
  const std::size_t h = static_cast<std::size_t>(mlp_.hidden());
  for (std::size_t k = 0; k < h; ++k) out.push_back(mlp_.w2_offset() + v * h + k);
  out.push_back(mlp_.b2_offset() + v);
  return out;
}

std::span<double> NadoLayer::tabular_row(Tokens prefix) {
  if (scorer_ != ScorerKind::kTabular) fail(ErrorCode::kInternal, "not a tabular layer");
  const std::size_t v = vocab_.size();
  return std::span<double>(table_).subspan(index_.index(prefix) * v, v);
}

double& NadoLayer::tabular_root() {
  if (scorer_ != ScorerKind::kTabular) fail(ErrorCode::kInternal, "not a tabular layer");
  return table_.back();
}

SparseInput NadoLayer::features(Tokens x, Tokens prefix,
                                std::span<const double> base_probs) const {
  const int v = static_cast<int>(vocab_.size());
  SparseInput in;
  const auto n = static_cast<int>(prefix.size());
  for (int slot = 0; slot < spec_.window; ++slot) {
    const int tok = slot < n ? prefix[static_cast<std::size_t>(n - 1 - slot)] : v;
    in.emplace_back(slot * (v + 1) + tok, 1.0);
  }
  int off = spec_.window * (v + 1);
  const int span_len = std::max(space_.max_len, 1);
  in.emplace_back(off + std::min(n, span_len - 1), 1.0);
  off += span_len;
  if (spec_.use_x) {
    std::vector<bool> seen(static_cast<std::size_t>(v), false);
    for (TokenId t : x)
      if (vocab_.contains(t)) seen[static_cast<std::size_t>(t)] = true;
    for (int t = 0; t < v; ++t)
      if (seen[static_cast<std::size_t>(t)]) in.emplace_back(off + t, 1.0);
    off += v;
  }
  if (mode_ == ContextMode::kTokensUpstream) {
    if (base_probs.size() != static_cast<std::size_t>(v))
      fail(ErrorCode::kInternal, "upstream features missing");
    for (int t = 0; t < v; ++t) in.emplace_back(off + t, base_probs[static_cast<std::size_t>(t)]);
  }
  return in;
}

SparseInput NadoLayer::root_features(Tokens x) const {
  const int v = static_cast<int>(vocab_.size());
  SparseInput in;
  int off = spec_.window * (v + 1) + std::max(space_.max_len, 1);
  if (spec_.use_x) {
    std::vector<bool> seen(static_cast<std::size_t>(v), false);
    for (TokenId t : x)
      if (vocab_.contains(t)) seen[static_cast<std::size_t>(t)] = true;
    for (int t = 0; t < v; ++t)
      if (seen[static_cast<std::size_t>(t)]) in.emplace_back(off + t, 1.0);
    off += v;
  }
  if (mode_ == ContextMode::kTokensUpstream) off += v;
  in.emplace_back(off, 1.0);
  return in;
}

void NadoLayer::logits(Tokens x, Tokens prefix, std::span<const double> base_probs,
                       std::span<double> out) const {
  const std::size_t v = vocab_.size();
  if (scorer_ == ScorerKind::kTabular) {
    const std::size_t row = index_.index(prefix) * v;
    std::copy_n(table_.begin() + static_cast<std::ptrdiff_t>(row), v, out.begin());
    return;
  }
  std::vector<double> hidden, o;
  mlp_.forward(features(x, prefix, base_probs), hidden, o);
  std::copy_n(o.begin(), v, out.begin());
}

double NadoLayer::root_logit(Tokens x) const {
  if (scorer_ == ScorerKind::kTabular) return table_.back();
  std::vector<double> hidden, o;
  mlp_.forward(root_features(x), hidden, o);
  return o.back();
}

void NadoLayer::accumulate_logit_grad(Tokens x, Tokens prefix,
                                      std::span<const double> base_probs,
                                      std::span<const double> d_logits,
                                      std::span<double> grad) const {
  const std::size_t v = vocab_.size();
  if (scorer_ == ScorerKind::kTabular) {
    const std::size_t row = index_.index(prefix) * v;
    for (std::size_t t = 0; t < v; ++t) grad[row + t] += d_logits[t];
    return;
  }
  const auto in = features(x, prefix, base_probs);
  std::vector<double> hidden, o;
  mlp_.forward(in, hidden, o);
  std::vector<double> d_out(v + 1, 0.0);
  std::copy_n(d_logits.begin(), v, d_out.begin());
  mlp_.backward(in, hidden, d_out, grad);
}

void NadoLayer::accumulate_root_grad(Tokens x, double d_root, std::span<double> grad) const {
  if (scorer_ == ScorerKind::kTabular) {
    grad[table_.size() - 1] += d_root;
    return;
  }
  const auto in = root_features(x);
  std::vector<double> hidden, o;
  mlp_.forward(in, hidden, o);
  std::vector<double> d_out(vocab_.size() + 1, 0.0);
  d_out.back() = d_root;
  mlp_.backward(in, hidden, d_out, grad);
}

json NadoLayer::to_json() const {
  json j;
  j["format"] = "nado.layer";
  j["version"] = 1;
  j["head"] = head_name(head_);
  j["context_mode"] = mode_name(mode_);
  j["vocabulary"] = vocab_to_json(vocab_);
  j["space"] = space_to_json(space_);
  j["base_fingerprint"] = base_fingerprint_;
  if (scorer_ == ScorerKind::kTabular) {
    j["scorer"] = "tabular";
    j["table"] = encode_decimal_array(table_);
  } else {
    j["scorer"] = "neural";
    j["neural"] = {{"window", spec_.window},
                   {"hidden", spec_.hidden},
                   {"use_x", spec_.use_x},
                   {"init_scale", format_double(spec_.init_scale)},
                   {"params", encode_decimal_array(mlp_.params())}};
  }
  return j;
}

NadoLayer NadoLayer::from_json(const json& j) {
  if (j.value("format", std::string()) != "nado.layer")
    fail(ErrorCode::kConfig, "not a layer document");
  if (j.value("version", 0) != 1) fail(ErrorCode::kConfig, "unsupported layer version");
  const auto head = parse_head(j.at("head").get<std::string>());
  const auto mode = parse_mode(j.value("context_mode", std::string("tokens")));
  const auto vocab = vocab_from_json(j.at("vocabulary"));
  const auto space = space_from_json(j.at("space"));
  const auto scorer = j.at("scorer").get<std::string>();
  NadoLayer l;
  if (scorer == "tabular") {
    l = tabular(head, vocab, space);
    auto values = decode_decimal_array(j.at("table"));
    if (values.size() != l.table_.size())
      fail(ErrorCode::kConfig, "tabular parameter count mismatch");
    l.table_ = std::move(values);
  } else if (scorer == "neural") {
    const auto& n = j.at("neural");
    NeuralScorerSpec spec;
    spec.window = n.at("window").get<int>();
    spec.hidden = n.at("hidden").get<int>();
    spec.use_x = n.value("use_x", false);
    if (n.contains("init_scale")) spec.init_scale = parse_double(n["init_scale"].get<std::string>());
    l = neural(head, vocab, space, spec, mode, 0);
    auto values = decode_decimal_array(n.at("params"));
    auto params = l.mlp_.params();
    if (values.size() != params.size())
      fail(ErrorCode::kConfig, "neural parameter count mismatch");
    std::copy(values.begin(), values.end(), params.begin());
  } else {
    fail(ErrorCode::kConfig, "unknown scorer kind: " + scorer);
  }
  l.base_fingerprint_ = j.value("base_fingerprint", std::string());
  return l;
}

std::string NadoLayer::fingerprint() const { return fingerprint_of(to_json().dump()); }

namespace {

std::vector<double> base_logp(const StepSource& base, Tokens x, Tokens prefix) {
  std::vector<double> lp(base.vocab().size());
  base.log_step(x, prefix, lp);
  return lp;
}

std::vector<double> probs_of(std::span<const double> logp) {
  std::vector<double> p(logp.size());
  for (std::size_t t = 0; t < p.size(); ++t) p[t] = std::exp(logp[t]);
  return p;
}

// log r(. | s) and log Z(s) for a consistent head.
void consistent_step(const NadoLayer& layer, Tokens x, Tokens prefix,
                     std::span<const double> lp, std::vector<double>& log_r,
                     double& log_z) {
  const auto p = probs_of(lp);
  log_r.assign(lp.size(), 0.0);
  layer.logits(x, prefix, p, log_r);
  log_normalize(log_r);
  std::vector<double> joint(lp.size());
  for (std::size_t t = 0; t < lp.size(); ++t) joint[t] = log_r[t] + lp[t];
  log_z = log_sum_exp(joint);
}

}  // namespace

void guidance_terms(const NadoLayer& layer, Tokens x, Tokens prefix,
                    std::span<const double> base_lp, std::span<double> out) {
  const auto p = probs_of(base_lp);
  layer.logits(x, prefix, p, out);
  if (layer.head() == HeadKind::kVanilla)
    for (double& v : out) v = log_sigmoid(v);
}

std::vector<double> ratio_next(const NadoLayer& layer, const StepSource& base,
                               Tokens x, Tokens prefix) {
  require_extendable(prefix, base.space(), base.vocab());
  const auto lp = base_logp(base, x, prefix);
  std::vector<double> out(lp.size());
  if (layer.head() == HeadKind::kVanilla) {
    layer.logits(x, prefix, probs_of(lp), out);
    for (double& v : out) v = sigmoid(v);
    return out;
  }
  std::vector<double> log_r;
  double log_z;
  consistent_step(layer, x, prefix, lp, log_r, log_z);
  const double lb = log_ratio(layer, base, x, prefix) - log_z;
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = std::exp(lb + log_r[t]);
  return out;
}

double log_ratio(const NadoLayer& layer, const StepSource& base, Tokens x,
                 Tokens prefix) {
  if (!is_valid_prefix(prefix, base.space(), base.vocab())) {
    if (static_cast<int>(prefix.size()) > base.space().max_len)
      fail(ErrorCode::kLength, "prefix longer than max length");
    fail(ErrorCode::kDomain, "invalid prefix");
  }
  if (layer.head() == HeadKind::kVanilla) {
    if (prefix.empty()) return log_sigmoid(layer.root_logit(x));
    const auto parent = prefix.first(prefix.size() - 1);
    const auto lp = base_logp(base, x, parent);
    std::vector<double> l(lp.size());
    layer.logits(x, parent, probs_of(lp), l);
    return log_sigmoid(l[static_cast<std::size_t>(prefix.back())]);
  }
  double acc = log_sigmoid(layer.root_logit(x));
  std::vector<double> log_r;
  double log_z;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const auto s = prefix.first(i);
    const auto lp = base_logp(base, x, s);
    consistent_step(layer, x, s, lp, log_r, log_z);
    acc += log_r[static_cast<std::size_t>(prefix[i])] - log_z;
  }
  return acc;
}

double beta_recursion(const NadoLayer& layer, const StepSource& base, Tokens x,
                      Tokens prefix) {
  if (layer.head() != HeadKind::kConsistent)
    fail(ErrorCode::kConfig, "beta recursion needs a consistent head");
  require_extendable(prefix, base.space(), base.vocab());
  std::vector<double> log_r;
  double log_z;
  auto lp = base_logp(base, x, {});
  consistent_step(layer, x, {}, lp, log_r, log_z);
  double log_beta = log_sigmoid(layer.root_logit(x)) - log_z;  // r(x, empty) = 1
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    const double log_r_prev = log_r[static_cast<std::size_t>(prefix[i])];
    const auto s = prefix.first(i + 1);
    lp = base_logp(base, x, s);
    consistent_step(layer, x, s, lp, log_r, log_z);
    log_beta = log_beta + log_r_prev - log_z;
  }
  const double beta = std::exp(log_beta);
  if (!std::isfinite(beta) || !std::isfinite(log_beta))
    fail(ErrorCode::kNumeric, "beta recursion produced a non-finite value");
  return beta;
}

StepDistribution guided_step(const NadoLayer& layer, const StepSource& base,
                             Tokens x, Tokens prefix) {
  LayerSource src(layer, base, true);
  return src.step(x, prefix);
}

std::vector<double> ratios_from_q(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) fail(ErrorCode::kBijection, "size mismatch between p and q");
  std::vector<double> r(p.size(), 0.0);
  double z = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if ((p[t] > 0.0) != (q[t] > 0.0))
      fail(ErrorCode::kBijection, "q and p have different supports at token " +
                                      std::to_string(t));
    if (p[t] > 0.0) r[t] = q[t] / p[t];
    z += r[t];
  }
  if (!(z > 0.0)) fail(ErrorCode::kBijection, "empty support");
  for (double& v : r) v /= z;
  return r;
}

LayerSource::LayerSource(const NadoLayer& layer, const StepSource& base,
                         bool allow_mismatch)
    : layer_(layer), base_(base) {
  if (layer.vocab().size() != base.vocab().size() || !(layer.space() == base.space()))
    fail(ErrorCode::kConfig, "layer and base model disagree on vocabulary or space");
  if (!allow_mismatch && !layer.base_fingerprint().empty() &&
      layer.base_fingerprint() != base.fingerprint())
    fail(ErrorCode::kFingerprint, "layer was trained against base " +
                                      layer.base_fingerprint() + ", got " +
                                      base.fingerprint());
}

void LayerSource::log_step(Tokens x, Tokens prefix, std::span<double> out) const {
  require_extendable(prefix, base_.space(), base_.vocab());
  std::vector<double> lp(out.size()), g(out.size());
  base_.log_step(x, prefix, lp);
  guidance_terms(layer_, x, prefix, lp, g);
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = lp[t] + g[t];
  log_normalize(out);
}

std::string LayerSource::fingerprint() const {
  return fingerprint_of(base_.fingerprint() + "|" + layer_.fingerprint());
}

namespace {

bool lex_less(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

std::string describe_prefix(const Vocabulary& vocab, Tokens prefix) {
  return prefix.empty() ? std::string("<root>") : vocab.render(prefix, " ");
}

}  // namespace

TokenSeq decode(const StepSource& policy, Tokens x, const DecodeOptions& options,
                Rng* rng) {
  const auto& space = policy.space();
  const auto& vocab = policy.vocab();
  const auto eos = vocab.eos();
  const std::size_t v = vocab.size();
  std::vector<double> lp(v);

  if (options.strategy == DecodeStrategy::kBeam) {
    if (options.beam_width == 0) fail(ErrorCode::kConfig, "beam width must be >= 1");
    struct Hyp {
      std::vector<TokenId> ids;
      double logp;
    };
    std::vector<Hyp> active{{{}, 0.0}};
    std::vector<ScoredSeq> finished;
    const double log_floor =
        options.dead_end_floor > 0.0 ? std::log(options.dead_end_floor) : -kInf;
    while (!active.empty()) {
      std::vector<Hyp> cand;
      for (const auto& h : active) {
        policy.log_step(x, h.ids, lp);
        for (std::size_t t = 0; t < v; ++t) {
          if (!(lp[t] > log_floor)) continue;
          Hyp c{h.ids, h.logp + lp[t]};
          c.ids.push_back(static_cast<TokenId>(t));
          cand.push_back(std::move(c));
        }
      }
      std::stable_sort(cand.begin(), cand.end(), [](const Hyp& a, const Hyp& b) {
        if (std::abs(a.logp - b.logp) > 1e-12) return a.logp > b.logp;
        return lex_less(a.ids, b.ids);
      });
      if (cand.size() > options.beam_width) cand.resize(options.beam_width);
      active.clear();
      for (auto& c : cand) {
        if (is_terminal(c.ids, space, eos))
          finished.push_back({{std::move(c.ids), true}, c.logp});
        else
          active.push_back(std::move(c));
      }
    }
    if (finished.empty()) fail(ErrorCode::kDeadEnd, "beam search found no sequence");
    sort_scored(finished);
    return finished.front().seq;
  }

  TokenSeq out;
  while (!is_terminal(out.ids, space, eos)) {
    policy.log_step(x, out.ids, lp);
    std::vector<double> p(v);
    double best = 0.0;
    for (std::size_t t = 0; t < v; ++t) {
      p[t] = std::exp(lp[t]);
      if (p[t] <= options.dead_end_floor) p[t] = 0.0;
      best = std::max(best, p[t]);
    }
    if (!(best > 0.0))
      fail(ErrorCode::kDeadEnd,
           "dead end after prefix " + describe_prefix(vocab, out.ids));
    TokenId next;
    if (options.strategy == DecodeStrategy::kGreedy) {
      next = static_cast<TokenId>(StepDistribution{p}.argmax());
    } else {
      if (!rng) fail(ErrorCode::kConfig, "sampling needs a random source");
      double z = 0.0;
      for (double q : p) z += q;
      for (double& q : p) q /= z;
      next = sample_index(p, *rng);
    }
    out.ids.push_back(next);
  }
  out.terminated = true;
  return out;
}

}  // namespace nado
