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

#include "nado/mlp.hpp"

#include <cmath>

#include "nado/error.hpp"

namespace nado {

Mlp::Mlp(int input_dim, int hidden, int output)
    : input_dim_(input_dim), hidden_(hidden), output_(output) {
  if (input_dim <= 0 || hidden <= 0 || output <= 0)
    fail(ErrorCode::kConfig, "mlp dimensions must be positive");
  params_.assign(static_cast<std::size_t>(hidden) * (input_dim + 1) +
                     static_cast<std::size_t>(output) * (hidden + 1),
                 0.0);
}

void Mlp::init(Rng& rng, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::fill(params_.begin(), params_.end(), 0.0);
  const std::size_t n_w1 = static_cast<std::size_t>(hidden_) * input_dim_;
  for (std::size_t i = 0; i < n_w1; ++i) params_[i] = scale * normal(rng);
}

void Mlp::forward(const SparseInput& in, std::vector<double>& hidden,
                  std::vector<double>& out) const {
  const double* w1 = params_.data();
  const double* b1 = w1 + static_cast<std::size_t>(hidden_) * input_dim_;
  const double* w2 = params_.data() + w2_offset();
  const double* b2 = params_.data() + b2_offset();
  hidden.assign(static_cast<std::size_t>(hidden_), 0.0);
  for (int h = 0; h < hidden_; ++h) {
    const double* row = w1 + static_cast<std::size_t>(h) * input_dim_;
    double a = b1[h];
    for (const auto& [idx, val] : in) a += row[idx] * val;
    hidden[static_cast<std::size_t>(h)] = std::tanh(a);
  }
  out.assign(static_cast<std::size_t>(output_), 0.0);
  for (int o = 0; o < output_; ++o) {
    const double* row = w2 + static_cast<std::size_t>(o) * hidden_;
    double a = b2[o];
    for (int h = 0; h < hidden_; ++h) a += row[h] * hidden[static_cast<std::size_t>(h)];
    out[static_cast<std::size_t>(o)] = a;
  }
}

void Mlp::backward(const SparseInput& in, const std::vector<double>& hidden,
                   std::span<const double> d_out, std::span<double> grad) const {
  const double* w2 = params_.data() + w2_offset();
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + static_cast<std::size_t>(hidden_) * input_dim_;
  double* g_w2 = grad.data() + w2_offset();
  double* g_b2 = grad.data() + b2_offset();
  std::vector<double> d_hidden(static_cast<std::size_t>(hidden_), 0.0);
  for (int o = 0; o < output_; ++o) {
    const double d = d_out[static_cast<std::size_t>(o)];
    if (d == 0.0) continue;
    g_b2[o] += d;
    double* g_row = g_w2 + static_cast<std::size_t>(o) * hidden_;
    const double* row = w2 + static_cast<std::size_t>(o) * hidden_;
    for (int h = 0; h < hidden_; ++h) {
      g_row[h] += d * hidden[static_cast<std::size_t>(h)];
      d_hidden[static_cast<std::size_t>(h)] += d * row[h];
    }
  }
  for (int h = 0; h < hidden_; ++h) {
    const double hv = hidden[static_cast<std::size_t>(h)];
    const double d_pre = d_hidden[static_cast<std::size_t>(h)] * (1.0 - hv * hv);
    if (d_pre == 0.0) continue;
    g_b1[h] += d_pre;
    double* g_row = g_w1 + static_cast<std::size_t>(h) * input_dim_;
    for (const auto& [idx, val] : in) g_row[idx] += d_pre * val;
  }
}

}  // namespace nado
