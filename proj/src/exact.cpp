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

#include "nado/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "nado/error.hpp"

namespace nado {

PrefixIndex::PrefixIndex(std::size_t vocab_size, int max_len)
    : vocab_size_(vocab_size), max_len_(max_len) {
  if (vocab_size == 0) fail(ErrorCode::kDomain, "empty vocabulary");
  if (max_len < 0) fail(ErrorCode::kDomain, "negative max length");
  offsets_.assign(1, 0);
  std::size_t level = 1;
  for (int n = 0; n <= max_len; ++n) {
    offsets_.push_back(offsets_.back() + level);
    if (level > std::numeric_limits<std::size_t>::max() / vocab_size)
      fail(ErrorCode::kCapacity, "prefix index overflows");
    level *= vocab_size;
  }
}

std::size_t PrefixIndex::index(Tokens prefix) const {
  if (static_cast<int>(prefix.size()) > max_len_)
    fail(ErrorCode::kLength, "prefix longer than max length");
  std::size_t local = 0;
  for (TokenId t : prefix) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_)
      fail(ErrorCode::kDomain, "token id out of range: " + std::to_string(t));
    local = local * vocab_size_ + static_cast<std::size_t>(t);
  }
  return offsets_[prefix.size()] + local;
}

std::vector<TokenId> PrefixIndex::prefix_at(std::size_t idx) const {
  if (idx >= size()) fail(ErrorCode::kDomain, "prefix index out of range");
  std::size_t len = 0;
  while (offsets_[len + 1] <= idx) ++len;
  std::size_t local = idx - offsets_[len];
  std::vector<TokenId> out(len);
  for (std::size_t i = len; i-- > 0;) {
    out[i] = static_cast<TokenId>(local % vocab_size_);
    local /= vocab_size_;
  }
  return out;
}

ExactRatioTable::ExactRatioTable(Vocabulary vocab, SpaceSpec space,
                                 std::vector<TokenId> x,
                                 std::string model_fingerprint,
                                 std::string oracle_fingerprint)
    : vocab_(std::move(vocab)),
      space_(space),
      x_(std::move(x)),
      model_fingerprint_(std::move(model_fingerprint)),
      oracle_fingerprint_(std::move(oracle_fingerprint)),
      index_(vocab_.size(), space.max_len),
      values_(index_.size(), std::numeric_limits<double>::quiet_NaN()) {}

bool ExactRatioTable::contains(Tokens prefix) const {
  if (!is_valid_prefix(prefix, space_, vocab_)) return false;
  return !std::isnan(values_[index_.index(prefix)]);
}

double ExactRatioTable::at(Tokens prefix) const {
  if (static_cast<int>(prefix.size()) > space_.max_len)
    fail(ErrorCode::kLength, "prefix longer than max length");
  if (!is_valid_prefix(prefix, space_, vocab_))
    fail(ErrorCode::kDomain, "prefix outside the sequence space");
  double v = values_[index_.index(prefix)];
  if (std::isnan(v)) fail(ErrorCode::kDomain, "prefix not present in table");
  return v;
}

void ExactRatioTable::set(Tokens prefix, double value) {
  if (!is_valid_prefix(prefix, space_, vocab_))
    fail(ErrorCode::kDomain, "prefix outside the sequence space");
  values_[index_.index(prefix)] = value;
}

void ExactRatioTable::for_each(
    const std::function<void(const std::vector<TokenId>&, double)>& visit) const {
  std::vector<TokenId> prefix;
  std::function<void()> walk = [&]() {
    double v = values_[index_.index(prefix)];
    if (std::isnan(v)) return;
    visit(prefix, v);
    if (is_terminal(prefix, space_, vocab_.eos())) return;
    for (std::size_t t = 0; t < vocab_.size(); ++t) {
      prefix.push_back(static_cast<TokenId>(t));
      walk();
      prefix.pop_back();
    }
  };
  walk();
}

std::string ExactRatioTable::export_text() const {
  std::ostringstream os;
  for_each([&](const std::vector<TokenId>& prefix, double v) {
    if (prefix.empty()) {
      os << "<root>";
    } else {
      for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (i) os << ' ';
        os << vocab_.symbol(prefix[i]);
      }
    }
    os << '\t' << format_double(v) << '\n';
  });
  return os.str();
}

ExactRatioTable ExactRatioTable::scaled(double tau) const {
  if (!(tau > 0.0 && tau <= 1.0)) fail(ErrorCode::kDomain, "tau must lie in (0, 1]");
  ExactRatioTable out = *this;
  for (double& v : out.values_)
    if (!std::isnan(v)) v *= tau;
  return out;
}

namespace {

struct RatioDp {
  const StepSource& model;
  const Oracle& oracle;
  Tokens x;
  ExactRatioTable& table;
  std::vector<TokenId> prefix;

  double run() {
    const auto& space = model.space();
    const auto eos = model.vocab().eos();
    double value;
    if (is_terminal(prefix, space, eos)) {
      TokenSeq y{prefix, true};
      value = oracle.evaluate(x, y, eos);
    } else {
      std::vector<double> lp(model.vocab().size());
      model.log_step(x, prefix, lp);
      // Weighted mean over the actual step mass, kept inside the children's
      // range so rounding cannot push a ratio past 1.
      double acc = 0.0, mass = 0.0, lo = kInf, hi = -kInf;
      for (std::size_t t = 0; t < lp.size(); ++t) {
        prefix.push_back(static_cast<TokenId>(t));
        double child = run();
        prefix.pop_back();
        if (lp[t] == -kInf) continue;
        const double w = std::exp(lp[t]);
        acc += w * child;
        mass += w;
        lo = std::min(lo, child);
        hi = std::max(hi, child);
      }
      value = mass > 0.0 ? std::clamp(acc / mass, lo, hi) : 0.0;
    }
    table.set(prefix, value);
    return value;
  }
};

}  // namespace

ExactRatioTable compute_exact_ratios(const StepSource& model, const Oracle& oracle,
                                     Tokens x, std::size_t budget) {
  std::size_t n = count_prefixes(model.vocab().size(), model.space().max_len);
  if (n > budget)
    fail(ErrorCode::kCapacity,
         "exact table needs " + std::to_string(n) + " prefixes, budget is " +
             std::to_string(budget));
  ExactRatioTable table(model.vocab(), model.space(),
                        std::vector<TokenId>(x.begin(), x.end()), model.fingerprint(),
                        oracle.fingerprint());
  RatioDp dp{model, oracle, x, table, {}};
  dp.run();
  return table;
}

StepDistribution exact_guided_step(const ExactRatioTable& table,
                                   const StepSource& model, Tokens x, Tokens prefix) {
  std::vector<double> lw(model.vocab().size());
  ExactGuidedSource(table, model).log_step(x, prefix, lw);
  StepDistribution d;
  d.probs.resize(lw.size());
  for (std::size_t t = 0; t < lw.size(); ++t) d.probs[t] = std::exp(lw[t]);
  return d;
}

void ExactGuidedSource::log_step(Tokens x, Tokens prefix, std::span<double> out) const {
  require_extendable(prefix, model_.space(), model_.vocab());
  if (table_.at(prefix) <= 0.0)
    fail(ErrorCode::kDeadEnd, "prefix has zero satisfaction probability");
  model_.log_step(x, prefix, out);
  std::vector<TokenId> child(prefix.begin(), prefix.end());
  child.push_back(0);
  for (std::size_t t = 0; t < out.size(); ++t) {
    child.back() = static_cast<TokenId>(t);
    double r = table_.at(child);
    out[t] = (r > 0.0 && out[t] != -kInf) ? out[t] + std::log(r) : -kInf;
  }
  log_normalize(out);
}

double JointDistribution::total() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

double JointDistribution::prob_of(Tokens y) const {
  auto it = std::lower_bound(
      seqs.begin(), seqs.end(), y, [](const std::vector<TokenId>& a, Tokens b) {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
      });
  if (it == seqs.end() || !std::equal(it->begin(), it->end(), y.begin(), y.end()))
    return 0.0;
  return probs[static_cast<std::size_t>(it - seqs.begin())];
}

JointDistribution joint_of(const StepSource& source, Tokens x, std::size_t budget) {
  JointDistribution j;
  for_each_sequence(
      source, x,
      [&](const std::vector<TokenId>& y, double lp) {
        j.seqs.push_back(y);
        j.probs.push_back(std::exp(lp));
      },
      budget);
  return j;
}

JointDistribution closed_form_joint(const StepSource& model, const Oracle& oracle,
                                    Tokens x, std::size_t budget) {
  JointDistribution j = joint_of(model, x, budget);
  const auto eos = model.vocab().eos();
  double z = 0.0;
  for (std::size_t i = 0; i < j.seqs.size(); ++i) {
    j.probs[i] *= oracle.evaluate(x, TokenSeq{j.seqs[i], true}, eos);
    z += j.probs[i];
  }
  if (!(z > 0.0))
    fail(ErrorCode::kInfeasible, "constraint has zero probability under the model");
  for (double& p : j.probs) p /= z;
  return j;
}

double joint_kl(const JointDistribution& reference, const JointDistribution& candidate) {
  double kl = 0.0;
  for (std::size_t i = 0; i < reference.seqs.size(); ++i) {
    double a = reference.probs[i];
    if (a <= 0.0) continue;
    double b = candidate.prob_of(reference.seqs[i]);
    if (b <= 0.0) return kInf;
    kl += a * (std::log(a) - std::log(b));
  }
  return std::max(kl, 0.0);
}

double joint_kl(const JointDistribution& reference, const StepSource& candidate,
                Tokens x, std::size_t budget) {
  return joint_kl(reference, joint_of(candidate, x, budget));
}

}  // namespace nado
