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

#ifndef NADO_MLP_HPP_
#define NADO_MLP_HPP_

#include <span>
#include <utility>
#include <vector>

#include "nado/seq.hpp"

namespace nado {

// Sparse feature vector: (index, value) pairs. One-hot token slots dominate,
// so the first layer only touches active columns.
using SparseInput = std::vector<std::pair<int, double>>;

// One-hidden-layer tanh network with hand-written backprop. Shared by the
// neural base model and the neural ratio heads.
//
// Parameter layout (flat): W1[hidden][input] | b1[hidden] | W2[output][hidden]
// | b2[output].
class Mlp {
 public:
  Mlp() = default;
  Mlp(int input_dim, int hidden, int output);

  int input_dim() const { return input_dim_; }
  int hidden() const { return hidden_; }
  int output() const { return output_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // W1 ~ N(0, scale^2); everything else zero, so a fresh network outputs
  // all-zero logits.
  void init(Rng& rng, double scale);

  void forward(const SparseInput& in, std::vector<double>& hidden,
               std::vector<double>& out) const;
  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(out).
  void backward(const SparseInput& in, const std::vector<double>& hidden,
                std::span<const double> d_out, std::span<double> grad) const;

  std::size_t w2_offset() const {
    return static_cast<std::size_t>(hidden_) * (input_dim_ + 1);
  }
  std::size_t b2_offset() const {
    return w2_offset() + static_cast<std::size_t>(output_) * hidden_;
  }

 private:
  int input_dim_ = 0;
  int hidden_ = 0;
  int output_ = 0;
  std::vector<double> params_;
};

}  // namespace nado

#endif  // NADO_MLP_HPP_
