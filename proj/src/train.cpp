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

#include "nado/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nado/error.hpp"
#include "nado/exact.hpp"

namespace nado {

namespace {

bool lex_less(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

double bernoulli_kl(double a, double b) {
  double kl = 0.0;
  if (a > 0.0) kl += a * (std::log(a) - std::log(b));
  if (a < 1.0) kl += (1.0 - a) * (std::log1p(-a) - std::log1p(-b));
  return kl;
}

// Base step log-probabilities are fixed during training; memoize them.
class BaseCache {
 public:
  explicit BaseCache(const StepSource& base) : base_(base) {}
  const std::vector<double>& get(Tokens x, Tokens prefix) {
    key_.assign(x.begin(), x.end());
    key_.push_back(-2);
    key_.insert(key_.end(), prefix.begin(), prefix.end());
    auto it = cache_.find(key_);
    if (it != cache_.end()) return it->second;
    std::vector<double> lp(base_.vocab().size());
    base_.log_step(x, prefix, lp);
    return cache_.emplace(key_, std::move(lp)).first->second;
  }
  const StepSource& base() const { return base_; }

 private:
  const StepSource& base_;
  std::vector<TokenId> key_;
  std::map<std::vector<TokenId>, std::vector<double>> cache_;
};

std::vector<double> exp_of(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i]);
  return out;
}

LossResult loss_impl(const NadoLayer& layer, BaseCache& cache, const SampleBatch& batch,
                     const LossConfig& config) {
  const double eps = config.clamp_eps;
  const std::size_t v = layer.vocab().size();
  LossResult res;
  res.grad.assign(layer.num_params(), 0.0);
  std::vector<double> d_logits(v);

  // BCE term in log-R coordinates: value and dL/dlogR, zero when clamped.
  auto bce = [&](double log_r, double c, double& d_log_r) {
    double r = std::exp(log_r);
    d_log_r = 0.0;
    if (r < eps) {
      r = eps;
    } else if (r > 1.0 - eps) {
      r = 1.0 - eps;
    } else {
      d_log_r = (r - c) / (1.0 - r);
    }
    return -c * std::log(r) - (1.0 - c) * std::log1p(-r);
  };

  // Scorer outputs and logit gradients are pooled per (x, prefix) so every
  // distinct prefix runs one forward and one backward pass.
  struct PrefixSlot {
    std::vector<TokenId> x, prefix;
    std::vector<double> log_probs, probs, logits, d_logits;
  };
  std::map<std::vector<TokenId>, PrefixSlot> slots;
  std::map<std::vector<TokenId>, double> root_grads, root_logits;
  std::vector<TokenId> key;
  auto slot_of = [&](Tokens x, Tokens prefix) -> PrefixSlot& {
    key.assign(x.begin(), x.end());
    key.push_back(-2);
    key.insert(key.end(), prefix.begin(), prefix.end());
    auto it = slots.find(key);
    if (it != slots.end()) return it->second;
    PrefixSlot slot;
    slot.x.assign(x.begin(), x.end());
    slot.prefix.assign(prefix.begin(), prefix.end());
    slot.log_probs = cache.get(x, prefix);
    slot.probs = exp_of(slot.log_probs);
    slot.logits.resize(v);
    layer.logits(x, prefix, slot.probs, slot.logits);
    slot.d_logits.assign(v, 0.0);
    return slots.emplace(key, std::move(slot)).first->second;
  };
  auto add_grad = [](PrefixSlot& slot, std::span<const double> d) {
    for (std::size_t t = 0; t < d.size(); ++t) slot.d_logits[t] += d[t];
  };

  for (const auto& item : batch.items) {
    if (!(item.label >= 0.0 && item.label <= 1.0))
      fail(ErrorCode::kDomain, "label outside [0, 1]");
    if (item.weight == 0.0) continue;
    const double w = item.weight;
    const double c = item.label;
    const std::size_t n = item.y.size();
    const Tokens x(item.x);
    const Tokens y(item.y);
    auto root_it = root_logits.find(item.x);
    if (root_it == root_logits.end())
      root_it = root_logits.emplace(item.x, layer.root_logit(x)).first;
    const double root = root_it->second;
    const double log_beta0 = log_sigmoid(root);
    const double beta0 = sigmoid(root);

    std::vector<PrefixSlot*> at(n);
    std::vector<std::vector<double>> qs(n);
    for (std::size_t k = 0; k < n; ++k) at[k] = &slot_of(x, y.first(k));

    double d_root = 0.0;
    if (config.supervise_root) {
      double d;
      res.bce += w * bce(log_beta0, c, d);
      d_root += w * d * (1.0 - beta0);
    }

    if (layer.head() == HeadKind::kConsistent) {
      // log R_i = log beta0 + sum_{k<i} (log q_k[y_k] - log p_k[y_k])
      std::vector<double> d_log_r(n + 1, 0.0);
      double acc = log_beta0;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& lp = at[k]->log_probs;
        std::vector<double> lq(v);
        for (std::size_t t = 0; t < v; ++t) lq[t] = lp[t] + at[k]->logits[t];
        log_normalize(lq);
        qs[k] = exp_of(lq);
        const auto yk = static_cast<std::size_t>(y[k]);
        acc += lq[yk] - lp[yk];
        double d;
        res.bce += w * bce(acc, c, d);
        d_log_r[k + 1] = w * d;
      }
      double suffix = 0.0;
      for (std::size_t k = n; k-- > 0;) {
        suffix += d_log_r[k + 1];
        if (suffix == 0.0) continue;
        for (std::size_t t = 0; t < v; ++t) d_logits[t] = -suffix * qs[k][t];
        d_logits[static_cast<std::size_t>(y[k])] += suffix;
        add_grad(*at[k], d_logits);
      }
      d_root += suffix * (1.0 - beta0);
    } else {
      const double lambda = config.lambda_reg;
      for (std::size_t k = 0; k < n; ++k) {
        std::fill(d_logits.begin(), d_logits.end(), 0.0);
        const auto yk = static_cast<std::size_t>(y[k]);
        const auto& lg = at[k]->logits;
        const auto& pk = at[k]->probs;
        double d;
        res.bce += w * bce(log_sigmoid(lg[yk]), c, d);
        const double rk = sigmoid(lg[yk]);
        d_logits[yk] += w * d * (1.0 - rk);
        if (lambda > 0.0) {
          // Bernoulli KL(A || B), A = sum_t R(s+t) p(t|s), B = R(s).
          double a = 0.0;
          for (std::size_t t = 0; t < v; ++t) a += sigmoid(lg[t]) * pk[t];
          const double b_logit =
              k == 0 ? root : at[k - 1]->logits[static_cast<std::size_t>(y[k - 1])];
          double b = sigmoid(b_logit);
          const bool a_free = a >= eps && a <= 1.0 - eps;
          const bool b_free = b >= eps && b <= 1.0 - eps;
          a = std::clamp(a, eps, 1.0 - eps);
          b = std::clamp(b, eps, 1.0 - eps);
          res.reg += w * lambda * bernoulli_kl(a, b);
          if (a_free) {
            const double d_a = std::log(a) - std::log1p(-a) - std::log(b) + std::log1p(-b);
            for (std::size_t t = 0; t < v; ++t) {
              const double s = sigmoid(lg[t]);
              d_logits[t] += w * lambda * d_a * pk[t] * s * (1.0 - s);
            }
          }
          if (b_free) {
            const double d_b_logit = w * lambda * (b - a);  // dKL/dB * B(1-B)
            if (k == 0) {
              d_root += d_b_logit;
            } else {
              at[k - 1]->d_logits[static_cast<std::size_t>(y[k - 1])] += d_b_logit;
            }
          }
        }
        add_grad(*at[k], d_logits);
      }
    }
    if (d_root != 0.0) root_grads[item.x] += d_root;
  }
  for (const auto& [k, slot] : slots) {
    bool any = false;
    for (double d : slot.d_logits) any = any || d != 0.0;
    if (any) layer.accumulate_logit_grad(slot.x, slot.prefix, slot.probs, slot.d_logits, res.grad);
  }
  for (const auto& [x, d] : root_grads) layer.accumulate_root_grad(x, d, res.grad);
  res.loss = res.bce + res.reg;
  return res;
}

}  // namespace

double bce_grad_r(double r, double c) { return (r - c) / (r * (1.0 - r)); }

LossResult nado_loss(const NadoLayer& layer, const StepSource& base,
                     const SampleBatch& batch, const LossConfig& config) {
  BaseCache cache(base);
  return loss_impl(layer, cache, batch, config);
}

TruncationBasis build_basis(const StepSource& model, Tokens x, std::size_t k,
                            BasisConstruction construction, Rng* rng,
                            std::size_t max_draws) {
  if (k == 0) fail(ErrorCode::kConfig, "basis size must be >= 1");
  TruncationBasis basis;
  basis.construction = construction;
  if (construction == BasisConstruction::kBeam) {
    for (auto& s : beam_topk(model, x, k)) basis.seqs.push_back(std::move(s.seq.ids));
    std::sort(basis.seqs.begin(), basis.seqs.end(), lex_less);
  } else {
    if (!rng) fail(ErrorCode::kConfig, "sampling basis needs a random source");
    if (max_draws == 0) max_draws = 50 * k;
    std::set<std::vector<TokenId>> seen;
    while (seen.size() < k && basis.draws < max_draws) {
      seen.insert(sample_sequence(model, x, *rng).ids);
      ++basis.draws;
    }
    basis.partial = seen.size() < k;
    basis.seqs.assign(seen.begin(), seen.end());
  }
  std::vector<double> lps;
  for (const auto& s : basis.seqs) lps.push_back(sequence_logprob(model, x, s));
  const double lz = log_sum_exp(lps);
  for (double lp : lps) basis.weights.push_back(std::exp(lp - lz));
  return basis;
}

TruncationReport truncation_kl_optimality_check(const StepSource& model, Tokens x,
                                                std::size_t k, std::size_t max_space) {
  std::vector<std::vector<TokenId>> seqs;
  std::vector<double> probs;
  for_each_sequence(model, x, [&](const std::vector<TokenId>& y, double lp) {
    seqs.push_back(y);
    probs.push_back(std::exp(lp));
  });
  if (seqs.size() > max_space)
    fail(ErrorCode::kCapacity, "space of " + std::to_string(seqs.size()) +
                                   " sequences exceeds subset-search limit " +
                                   std::to_string(max_space));
  TruncationReport rep;
  rep.k = std::min(k, seqs.size());
  // KL(p_S || p) = -log p(S) for the renormalized restriction to S.
  auto kl_of = [&](const std::vector<std::size_t>& idx) {
    double mass = 0.0;
    for (auto i : idx) mass += probs[i];
    return -std::log(mass);
  };
  auto basis = build_basis(model, x, rep.k, BasisConstruction::kBeam);
  {
    double mass = 0.0;
    for (const auto& s : basis.seqs) mass += std::exp(sequence_logprob(model, x, s));
    rep.topk_kl = -std::log(mass);
  }
  rep.best_kl = kInf;
  std::vector<std::vector<std::size_t>> best;
  std::vector<std::size_t> idx(rep.k);
  for (std::size_t i = 0; i < rep.k; ++i) idx[i] = i;
  const std::size_t n = seqs.size();
  while (true) {
    ++rep.subsets_checked;
    const double kl = kl_of(idx);
    if (kl < rep.best_kl - 1e-12) {
      rep.best_kl = kl;
      best.assign(1, idx);
    } else if (std::abs(kl - rep.best_kl) <= 1e-12) {
      best.push_back(idx);
    }
    // next combination
    std::size_t i = rep.k;
    while (i > 0 && idx[i - 1] == n - rep.k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < rep.k; ++j) idx[j] = idx[j - 1] + 1;
  }
  for (const auto& b : best) {
    std::vector<std::vector<TokenId>> subset;
    for (auto i : b) subset.push_back(seqs[i]);
    rep.argmins.push_back(std::move(subset));
  }
  rep.topk_is_optimal = rep.topk_kl <= rep.best_kl + 1e-12;
  return rep;
}

Residual consistency_residual(const NadoLayer& layer, const StepSource& base, Tokens x,
                              Tokens prefix) {
  const auto r_next = ratio_next(layer, base, x, prefix);
  std::vector<double> lp(base.vocab().size());
  base.log_step(x, prefix, lp);
  double a = 0.0;
  for (std::size_t t = 0; t < lp.size(); ++t) a += r_next[t] * std::exp(lp[t]);
  const double b = std::exp(log_ratio(layer, base, x, prefix));
  Residual res;
  res.abs_gap = std::abs(a - b);
  const double eps = 1e-12;
  res.kl = bernoulli_kl(std::clamp(a, eps, 1.0 - eps), std::clamp(b, eps, 1.0 - eps));
  return res;
}

Residual max_consistency_residual(const NadoLayer& layer, const StepSource& base,
                                  Tokens x, std::size_t budget) {
  const auto& space = base.space();
  const auto& vocab = base.vocab();
  if (count_prefixes(vocab.size(), space.max_len) > budget)
    fail(ErrorCode::kCapacity, "residual sweep exceeds budget of " +
                                   std::to_string(budget) + " prefixes");
  Residual worst;
  std::vector<TokenId> prefix;
  std::function<void()> walk = [&]() {
    if (is_terminal(prefix, space, vocab.eos())) return;
    const auto r = consistency_residual(layer, base, x, prefix);
    worst.abs_gap = std::max(worst.abs_gap, r.abs_gap);
    worst.kl = std::max(worst.kl, r.kl);
    for (std::size_t t = 0; t < vocab.size(); ++t) {
      prefix.push_back(static_cast<TokenId>(t));
      walk();
      prefix.pop_back();
    }
  };
  walk();
  return worst;
}

const char* strategy_name(SampleStrategy s) {
  switch (s) {
    case SampleStrategy::kExhaustive: return "exhaustive";
    case SampleStrategy::kAncestral: return "ancestral";
    case SampleStrategy::kBasisBeam: return "basis_beam";
    case SampleStrategy::kBasisSampling: return "basis_sampling";
    case SampleStrategy::kSelfProxy: return "self_proxy";
  }
  return "?";
}

SampleStrategy parse_strategy(const std::string& s) {
  for (auto k : {SampleStrategy::kExhaustive, SampleStrategy::kAncestral,
                 SampleStrategy::kBasisBeam, SampleStrategy::kBasisSampling,
                 SampleStrategy::kSelfProxy})
    if (s == strategy_name(k)) return k;
  fail(ErrorCode::kConfig, "unknown sampling strategy: " + s);
}

std::string metrics_json_line(const MetricsRow& row) {
  nlohmann::ordered_json j;
  j["step"] = row.step;
  j["loss"] = row.loss;
  j["kl_to_exact"] = row.kl_to_exact ? nlohmann::ordered_json(*row.kl_to_exact)
                                     : nlohmann::ordered_json(nullptr);
  j["satisfaction_rate"] = row.satisfaction_rate;
  j["residual_max"] = row.residual_max ? nlohmann::ordered_json(*row.residual_max)
                                       : nlohmann::ordered_json(nullptr);
  return j.dump();
}

SampleBatch make_batch(const NadoLayer& layer, const StepSource& base,
                       const TrainTask& task, SampleStrategy strategy,
                       std::size_t budget, double is_clip, Rng& rng) {
  SampleBatch batch;
  batch.proxy_id = strategy_name(strategy);
  const auto eos = base.vocab().eos();
  auto label = [&](const std::vector<TokenId>& y) {
    return task.oracle.evaluate(task.x, TokenSeq{y, true}, eos);
  };
  switch (strategy) {
    case SampleStrategy::kExhaustive:
      for_each_sequence(base, task.x, [&](const std::vector<TokenId>& y, double lp) {
        batch.items.push_back({task.x, y, label(y), std::exp(lp)});
      });
      break;
    case SampleStrategy::kAncestral:
      for (std::size_t i = 0; i < budget; ++i) {
        auto y = sample_sequence(base, task.x, rng).ids;
        const double c = label(y);
        batch.items.push_back({task.x, std::move(y), c, 1.0 / static_cast<double>(budget)});
      }
      break;
    case SampleStrategy::kBasisBeam:
    case SampleStrategy::kBasisSampling: {
      const bool beam = strategy == SampleStrategy::kBasisBeam;
      auto basis = build_basis(base, task.x, budget,
                               beam ? BasisConstruction::kBeam : BasisConstruction::kSampling,
                               &rng, budget);
      for (std::size_t i = 0; i < basis.seqs.size(); ++i)
        batch.items.push_back({task.x, basis.seqs[i], label(basis.seqs[i]), basis.weights[i]});
      break;
    }
    case SampleStrategy::kSelfProxy: {
      LayerSource proxy(layer, base, true);
      for (std::size_t i = 0; i < budget; ++i) {
        auto y = sample_sequence(proxy, task.x, rng).ids;
        const double lw = sequence_logprob(base, task.x, y) - sequence_logprob(proxy, task.x, y);
        const double wt = std::min(std::exp(lw), is_clip) / static_cast<double>(budget);
        const double c = label(y);
        batch.items.push_back({task.x, std::move(y), c, wt});
      }
      break;
    }
  }
  return batch;
}

EvalResult evaluate_layer(const NadoLayer& layer, const StepSource& base,
                          const std::vector<TrainTask>& tasks, const TrainConfig& config) {
  EvalResult out;
  LayerSource policy(layer, base, true);
  const bool enumerable =
      count_prefixes(base.vocab().size(), base.space().max_len) <= config.eval_budget;
  double kl_sum = 0.0;
  bool kl_ok = enumerable;
  double resid = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    if (enumerable) {
      double rate = 0.0;
      const auto eos = base.vocab().eos();
      for_each_sequence(policy, task.x, [&](const std::vector<TokenId>& y, double lp) {
        rate += std::exp(lp) * task.oracle.evaluate(task.x, TokenSeq{y, true}, eos);
      });
      out.satisfaction_rate += rate;
      try {
        kl_sum += joint_kl(closed_form_joint(base, task.oracle, task.x), policy, task.x);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInfeasible) throw;
        kl_ok = false;
      }
      resid = std::max(resid, max_consistency_residual(layer, base, task.x).abs_gap);
    } else {
      out.satisfaction_rate +=
          satisfaction_rate(task.oracle, policy, task.x, config.eval_samples,
                            config.seed + 7919 * (i + 1), 0)
              .rate;
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(tasks.size(), 1));
  out.satisfaction_rate /= n;
  if (kl_ok && !tasks.empty()) out.kl_to_exact = kl_sum / n;
  if (enumerable) out.residual_max = resid;
  return out;
}

std::vector<MetricsRow> train_nado(NadoLayer& layer, const StepSource& base,
                                   const std::vector<TrainTask>& tasks,
                                   const TrainConfig& config, std::ostream* trace) {
  if (tasks.empty()) fail(ErrorCode::kConfig, "no training tasks");
  if (config.steps < 0 || !(config.learning_rate > 0.0))
    fail(ErrorCode::kConfig, "steps must be >= 0 and learning_rate > 0");
  Rng rng(config.seed);
  BaseCache cache(base);
  std::vector<double> velocity(layer.num_params(), 0.0);
  std::vector<MetricsRow> rows;

  // Fixed batches for deterministic strategies (and fixed-per-input bases).
  const bool fixed = config.strategy == SampleStrategy::kExhaustive ||
                     config.strategy == SampleStrategy::kBasisBeam ||
                     (config.strategy == SampleStrategy::kBasisSampling && !config.refresh_basis);
  SampleBatch fixed_batch;
  if (fixed) {
    const std::size_t budget = config.strategy == SampleStrategy::kExhaustive ? 0 : config.basis_k;
    for (const auto& task : tasks) {
      auto b = make_batch(layer, base, task, config.strategy, budget, config.is_clip, rng);
      for (auto& it : b.items) {
        it.weight /= static_cast<double>(tasks.size());
        fixed_batch.items.push_back(std::move(it));
      }
    }
  }

  auto record = [&](int step, double loss) {
    auto ev = evaluate_layer(layer, base, tasks, config);
    MetricsRow row{step, loss, ev.kl_to_exact, ev.satisfaction_rate, ev.residual_max};
    if (trace) *trace << metrics_json_line(row) << '\n';
    rows.push_back(row);
  };

  double last_loss = 0.0;
  for (int step = 0; step < config.steps; ++step) {
    SampleBatch batch;
    if (!fixed) {
      const std::size_t budget =
          config.strategy == SampleStrategy::kBasisSampling ? config.basis_k : config.batch_size;
      for (const auto& task : tasks) {
        auto b = make_batch(layer, base, task, config.strategy, budget, config.is_clip, rng);
        for (auto& it : b.items) {
          it.weight /= static_cast<double>(tasks.size());
          batch.items.push_back(std::move(it));
        }
      }
    }
    auto res = loss_impl(layer, cache, fixed ? fixed_batch : batch, config.loss);
    last_loss = res.loss;
    if (step == 0 && config.eval_every > 0) record(0, res.loss);  // state at initialization
    if (config.grad_clip > 0.0) {
      double norm = 0.0;
      for (double g : res.grad) norm += g * g;
      norm = std::sqrt(norm);
      if (norm > config.grad_clip)
        for (double& g : res.grad) g *= config.grad_clip / norm;
    }
    auto params = layer.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = config.momentum * velocity[i] + res.grad[i];
      params[i] -= config.learning_rate * velocity[i];
    }
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 &&
        step + 1 != config.steps)
      record(step + 1, last_loss);
  }
  if (config.steps == 0) {
    const auto& b = fixed ? fixed_batch : SampleBatch{};
    last_loss = b.items.empty() ? 0.0 : loss_impl(layer, cache, b, config.loss).loss;
  }
  record(config.steps, last_loss);
  return rows;
}

std::vector<double> warmup_likelihood(
    NadoLayer& layer, const StepSource& base,
    const std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>>& positives,
    const WarmupConfig& config) {
  if (positives.empty()) fail(ErrorCode::kConfig, "warmup needs positive examples");
  if (layer.head() != HeadKind::kConsistent)
    fail(ErrorCode::kConfig, "warmup applies to consistent heads");
  BaseCache cache(base);
  const std::size_t v = layer.vocab().size();
  const auto root_idx = layer.root_param_indices();
  std::vector<bool> frozen(layer.num_params(), false);
  for (auto i : root_idx) frozen[i] = true;
  std::vector<double> velocity(layer.num_params(), 0.0);
  std::vector<double> curve;
  const double inv_n = 1.0 / static_cast<double>(positives.size());
  std::vector<double> logits(v), d_logits(v);
  for (int step = 0; step < config.steps; ++step) {
    std::vector<double> grad(layer.num_params(), 0.0);
    double nll = 0.0;
    for (const auto& [xv, yv] : positives) {
      const Tokens x(xv);
      const Tokens y(yv);
      for (std::size_t k = 0; k < y.size(); ++k) {
        const auto& lp = cache.get(x, y.first(k));
        const auto p = exp_of(lp);
        layer.logits(x, y.first(k), p, logits);
        std::vector<double> lq(v);
        for (std::size_t t = 0; t < v; ++t) lq[t] = lp[t] + logits[t];
        log_normalize(lq);
        const auto yk = static_cast<std::size_t>(y[k]);
        nll -= inv_n * lq[yk];
        for (std::size_t t = 0; t < v; ++t) d_logits[t] = inv_n * std::exp(lq[t]);
        d_logits[yk] -= inv_n;
        layer.accumulate_logit_grad(x, y.first(k), p, d_logits, grad);
      }
    }
    curve.push_back(nll);
    auto params = layer.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (frozen[i]) continue;
      velocity[i] = config.momentum * velocity[i] + grad[i];
      params[i] -= config.learning_rate * velocity[i];
    }
  }
  return curve;
}

VarianceReport gradient_variance_probe(const NadoLayer& layer, const StepSource& base,
                                       const TrainTask& task, SampleStrategy strategy,
                                       std::size_t trials, std::size_t budget,
                                       std::uint64_t seed, const LossConfig& loss) {
  if (trials < 2) fail(ErrorCode::kConfig, "variance probe needs at least 2 trials");
  if (budget == 0) fail(ErrorCode::kConfig, "variance probe needs a positive budget");
  Rng rng(seed);
  BaseCache cache(base);
  const std::size_t np = layer.num_params();
  std::vector<double> mean(np, 0.0), m2(np, 0.0);
  double abs_sum = 0.0, dr_mean = 0.0, dr_m2 = 0.0;
  const double r0 = sigmoid(layer.root_logit(task.x));
  for (std::size_t trial = 0; trial < trials; ++trial) {
    auto batch = make_batch(layer, base, task, strategy, budget, 10.0, rng);
    auto res = loss_impl(layer, cache, batch, loss);
    double dr = 0.0;
    for (const auto& it : batch.items) dr += it.weight * bce_grad_r(r0, it.label);
    const double k = static_cast<double>(trial + 1);
    const double d_dr = dr - dr_mean;
    dr_mean += d_dr / k;
    dr_m2 += d_dr * (dr - dr_mean);
    for (std::size_t i = 0; i < np; ++i) {
      abs_sum += std::abs(res.grad[i]);
      const double d = res.grad[i] - mean[i];
      mean[i] += d / k;
      m2[i] += d * (res.grad[i] - mean[i]);
    }
  }
  VarianceReport rep;
  rep.strategy = strategy_name(strategy);
  rep.satisfaction_rate = satisfaction_rate(task.oracle, base, task.x, 20000, seed).rate;
  rep.trials = trials;
  rep.budget = budget;
  rep.mean_abs_grad = abs_sum / static_cast<double>(trials * np);
  double var_sum = 0.0;
  for (double v : m2) var_sum += v / static_cast<double>(trials - 1);
  rep.mean_param_variance = var_sum / static_cast<double>(np);
  rep.root_dr_mean = dr_mean;
  rep.root_dr_variance = dr_m2 / static_cast<double>(trials - 1);
  return rep;
}

std::string GradCheckReport::table() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%8s %24s %24s %12s\n", "index", "analytic", "numeric",
                "rel_error");
  os << buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%8zu %24.16e %24.16e %12.3e\n", e.index, e.analytic,
                  e.numeric, e.rel_error);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "max_rel_error %.3e\n", max_rel_error);
  os << buf;
  return os.str();
}

GradCheckReport finite_difference_check(const NadoLayer& layer, const StepSource& base,
                                        const SampleBatch& batch, const LossConfig& config,
                                        std::vector<std::size_t> indices, double h,
                                        double floor) {
  BaseCache cache(base);
  const auto analytic = loss_impl(layer, cache, batch, config).grad;
  if (indices.empty())
    for (std::size_t i = 0; i < layer.num_params(); ++i) indices.push_back(i);
  NadoLayer probe = layer;
  GradCheckReport rep;
  for (auto i : indices) {
    auto params = probe.params();
    const double orig = params[i];
    params[i] = orig + h;
    const double up = loss_impl(probe, cache, batch, config).loss;
    params[i] = orig - h;
    const double down = loss_impl(probe, cache, batch, config).loss;
    params[i] = orig;
    GradCheckEntry e;
    e.index = i;
    e.analytic = analytic[i];
    e.numeric = (up - down) / (2.0 * h);
    e.rel_error = std::abs(e.analytic - e.numeric) /
                  std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    rep.max_rel_error = std::max(rep.max_rel_error, e.rel_error);
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace nado
