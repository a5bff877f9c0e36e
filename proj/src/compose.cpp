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

#include "nado/compose.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "nado/base_model.hpp"
#include "nado/error.hpp"

namespace nado {

using nlohmann::json;

const char* compose_mode_name(ComposeMode m) {
  return m == ComposeMode::kIndependentProduct ? "independent_product" : "cascaded";
}

ComposeMode parse_compose_mode(const std::string& s) {
  if (s == "independent_product" || s == "independent") return ComposeMode::kIndependentProduct;
  if (s == "cascaded") return ComposeMode::kCascaded;
  fail(ErrorCode::kConfig, "unknown composition mode: " + s);
}

void CascadeStack::validate() const {
  if (layers.empty()) fail(ErrorCode::kConfig, "stack has no layers");
  if (layers.size() != oracles.size())
    fail(ErrorCode::kConfig, "stack needs exactly one oracle per layer");
  for (const auto& l : layers) {
    if (!(l.vocab() == layers.front().vocab()) || !(l.space() == layers.front().space()))
      fail(ErrorCode::kConfig, "stack layers disagree on vocabulary or space");
    if (mode == ComposeMode::kIndependentProduct &&
        l.context_mode() != ContextMode::kTokensOnly)
      fail(ErrorCode::kConfig, "independent-product layers must be tokens-only");
    if (mode == ComposeMode::kCascaded && l.context_mode() != ContextMode::kTokensUpstream)
      fail(ErrorCode::kConfig, "cascaded layers must read upstream features");
  }
  if (mode == ComposeMode::kIndependentProduct) {
    std::string fp;
    for (const auto& l : layers) {
      if (l.base_fingerprint().empty()) continue;
      if (fp.empty()) fp = l.base_fingerprint();
      if (fp != l.base_fingerprint())
        fail(ErrorCode::kFingerprint, "stack layers were trained against different bases");
    }
  }
}

json CascadeStack::to_json() const {
  json j;
  j["format"] = "nado.stack";
  j["version"] = 1;
  j["mode"] = compose_mode_name(mode);
  j["layers"] = json::array();
  for (const auto& l : layers) j["layers"].push_back(l.to_json());
  j["oracles"] = json::array();
  for (const auto& o : oracles) j["oracles"].push_back(o.to_json());
  return j;
}

CascadeStack CascadeStack::from_json(const json& j) {
  if (j.value("format", std::string()) != "nado.stack")
    fail(ErrorCode::kConfig, "not a stack document");
  if (j.value("version", 0) != 1) fail(ErrorCode::kConfig, "unsupported stack version");
  CascadeStack s;
  s.mode = parse_compose_mode(j.at("mode").get<std::string>());
  for (const auto& l : j.at("layers")) s.layers.push_back(NadoLayer::from_json(l));
  for (const auto& o : j.at("oracles")) s.oracles.push_back(Oracle::from_json(o));
  s.validate();
  return s;
}

StackSource::StackSource(const CascadeStack& stack, const StepSource& base,
                         std::size_t depth)
    : stack_(stack), base_(base), depth_(std::min(depth, stack.layers.size())) {
  for (std::size_t k = 0; k < depth_; ++k) {
    const auto& l = stack.layers[k];
    if (l.vocab().size() != base.vocab().size() || !(l.space() == base.space()))
      fail(ErrorCode::kConfig, "stack layer and base disagree on vocabulary or space");
  }
}

void StackSource::log_step(Tokens x, Tokens prefix, std::span<double> out) const {
  require_extendable(prefix, base_.space(), base_.vocab());
  const std::size_t v = out.size();
  std::vector<double> lp(v), g(v);
  base_.log_step(x, prefix, lp);
  if (depth_ == 0) {
    std::copy(lp.begin(), lp.end(), out.begin());
    return;
  }
  if (stack_.mode == ComposeMode::kIndependentProduct) {
    guidance_terms(stack_.layers[0], x, prefix, lp, g);
    for (std::size_t t = 0; t < v; ++t) out[t] = lp[t] + g[t];
    for (std::size_t k = 1; k < depth_; ++k) {
      guidance_terms(stack_.layers[k], x, prefix, lp, g);
      for (std::size_t t = 0; t < v; ++t) out[t] += g[t];
    }
    log_normalize(out);
    return;
  }
  for (std::size_t k = 0; k < depth_; ++k) {
    guidance_terms(stack_.layers[k], x, prefix, lp, g);
    for (std::size_t t = 0; t < v; ++t) out[t] = lp[t] + g[t];
    log_normalize(out);
    if (k + 1 < depth_) std::copy(out.begin(), out.end(), lp.begin());
  }
}

std::string StackSource::fingerprint() const {
  std::string acc = base_.fingerprint() + "|" + compose_mode_name(stack_.mode);
  for (std::size_t k = 0; k < depth_; ++k) acc += "|" + stack_.layers[k].fingerprint();
  return fingerprint_of(acc);
}

StepDistribution composed_step(const CascadeStack& stack, const StepSource& base,
                               Tokens x, Tokens prefix) {
  return StackSource(stack, base).step(x, prefix);
}

std::pair<double, double> log_ratio_error(const NadoLayer& layer, const StepSource& base,
                                          const ExactRatioTable& exact, Tokens x,
                                          std::size_t* count) {
  double worst = 0.0, sum = 0.0;
  std::size_t n = 0;
  exact.for_each([&](const std::vector<TokenId>& prefix, double r) {
    if (!(r > 0.0)) return;
    const double err = std::abs(log_ratio(layer, base, x, prefix) - std::log(r));
    worst = std::max(worst, err);
    sum += err;
    ++n;
  });
  if (count) *count = n;
  return {worst, n ? sum / static_cast<double>(n) : 0.0};
}

std::vector<StackLayerMetrics> train_stack(
    CascadeStack& stack, const StepSource& base,
    const std::vector<std::vector<TrainTask>>& tasks_per_layer, const TrainConfig& config) {
  stack.validate();
  if (tasks_per_layer.size() != stack.layers.size())
    fail(ErrorCode::kConfig, "need one task list per layer");
  std::vector<StackLayerMetrics> out;
  for (std::size_t k = 0; k < stack.layers.size(); ++k) {
    const std::size_t depth = stack.mode == ComposeMode::kCascaded ? k : 0;
    StackSource layer_base(stack, base, depth);
    const StepSource& b = depth == 0 ? base : static_cast<const StepSource&>(layer_base);
    TrainConfig cfg = config;
    cfg.seed = config.seed + 1000003ULL * k;
    StackLayerMetrics m;
    m.layer = k;
    m.trace = train_nado(stack.layers[k], b, tasks_per_layer[k], cfg);
    stack.layers[k].set_base_fingerprint(b.fingerprint());
    if (count_prefixes(base.vocab().size(), base.space().max_len) <= config.eval_budget) {
      double sum = 0.0;
      std::size_t total = 0;
      for (const auto& task : tasks_per_layer[k]) {
        auto exact = compute_exact_ratios(b, task.oracle, task.x, config.eval_budget);
        std::size_t n = 0;
        auto [mx, mean] = log_ratio_error(stack.layers[k], b, exact, task.x, &n);
        m.delta_max = std::max(m.delta_max, mx);
        sum += mean * static_cast<double>(n);
        total += n;
      }
      m.eval_prefixes = total;
      m.delta_mean = total ? sum / static_cast<double>(total) : 0.0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<BoundRow> bound_check(const std::vector<ExactRatioTable>& tables,
                                  const StepSource& base,
                                  const std::vector<std::vector<std::size_t>>& combos,
                                  double delta, PerturbationMode mode, std::uint64_t seed) {
  if (tables.empty()) fail(ErrorCode::kConfig, "bound check needs tables");
  if (!(delta >= 0.0)) fail(ErrorCode::kDomain, "delta must be non-negative");
  const auto& space = tables.front().space();
  const auto& vocab = tables.front().vocab();
  for (const auto& t : tables)
    if (!(t.space() == space) || !(t.vocab() == vocab) || t.x() != tables.front().x())
      fail(ErrorCode::kConfig, "bound check tables must share model, space and input");
  const Tokens x(tables.front().x());

  // One fixed perturbation per (table, prefix), shared across combos.
  std::vector<std::vector<double>> eps(tables.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < tables.size(); ++i) {
    eps[i].resize(tables[i].index().size());
    for (double& e : eps[i])
      e = mode == PerturbationMode::kAligned ? delta : delta * (2.0 * uniform01(rng) - 1.0);
  }

  std::vector<BoundRow> rows;
  for (const auto& combo : combos) {
    BoundRow row;
    for (std::size_t j = 0; j < combo.size(); ++j) {
      if (combo[j] >= tables.size()) fail(ErrorCode::kConfig, "combo index out of range");
      row.combo += (j ? "+c" : "c") + std::to_string(combo[j]);
    }
    row.n = combo.size();
    row.delta = delta;
    row.mode = mode == PerturbationMode::kAligned ? "aligned" : "uniform";
    std::vector<double> term_true, term_pert;
    std::vector<TokenId> prefix;
    std::vector<double> lp(vocab.size());
    std::function<void(double)> walk = [&](double log_p) {
      double ls = log_p, lt = log_p;
      for (auto i : combo) {
        const double r = tables[i].at(prefix);
        if (!(r > 0.0)) return;  // zero composed score below here
        ls += std::log(r);
        lt += std::log(r) + eps[i][tables[i].index().index(prefix)];
      }
      row.max_log_error = std::max(row.max_log_error, std::abs(lt - ls));
      if (is_terminal(prefix, space, vocab.eos())) {
        term_true.push_back(ls);
        term_pert.push_back(lt);
        return;
      }
      base.log_step(x, prefix, lp);
      const auto step = lp;
      for (std::size_t t = 0; t < vocab.size(); ++t) {
        if (step[t] == -kInf) continue;
        prefix.push_back(static_cast<TokenId>(t));
        walk(log_p + step[t]);
        prefix.pop_back();
      }
    };
    walk(0.0);
    if (!term_true.empty()) {
      const double zt = log_sum_exp(term_true), zp = log_sum_exp(term_pert);
      for (std::size_t i = 0; i < term_true.size(); ++i)
        row.max_normalized_error =
            std::max(row.max_normalized_error,
                     std::abs((term_pert[i] - zp) - (term_true[i] - zt)));
    }
    row.renorm_slack = row.max_normalized_error - row.max_log_error;
    const double bound = static_cast<double>(row.n) * delta;
    row.within_bound = row.max_log_error <= bound * (1.0 + 1e-12) + 1e-15;
    row.witness = row.max_log_error >= 0.95 * bound;
    rows.push_back(row);
  }
  return rows;
}

std::string bound_csv(const std::vector<BoundRow>& rows) {
  std::ostringstream os;
  os << "combo,N,delta,max_log_error,renorm_slack,mode,max_normalized_error,within_bound,"
        "witness\n";
  for (const auto& r : rows)
    os << r.combo << ',' << r.n << ',' << format_double(r.delta) << ','
       << format_double(r.max_log_error) << ',' << format_double(r.renorm_slack) << ','
       << r.mode << ',' << format_double(r.max_normalized_error) << ','
       << (r.within_bound ? 1 : 0) << ',' << (r.witness ? 1 : 0) << '\n';
  return os.str();
}

NadoLayer naive_conjunction_baseline(const StepSource& base,
                                     const std::vector<TrainTask>& conjunction_tasks,
                                     const NeuralScorerSpec& spec, HeadKind head,
                                     std::uint64_t seed, const TrainConfig& config,
                                     std::vector<MetricsRow>* trace) {
  auto layer = NadoLayer::neural(head, base.vocab(), base.space(), spec,
                                 ContextMode::kTokensOnly, seed);
  auto rows = train_nado(layer, base, conjunction_tasks, config);
  layer.set_base_fingerprint(base.fingerprint());
  if (trace) *trace = std::move(rows);
  return layer;
}

}  // namespace nado
