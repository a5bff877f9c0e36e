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

// The two in-repo autoregressive base models: an add-k smoothed n-gram table
// and a one-hidden-layer next-token predictor over a fixed token window.
// Both ignore the input sequence x; conditioning on x is the job of the
// ratio layers.

#ifndef NADO_BASE_MODEL_HPP_
#define NADO_BASE_MODEL_HPP_

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nado/mlp.hpp"
#include "nado/seq.hpp"

namespace nado {

inline constexpr TokenId kBos = -1;

struct NgramTable {
  int order = 1;
  double smoothing = 1.0;
  // context (order-1 ids, left-padded with kBos) -> per-token counts
  std::map<std::vector<TokenId>, std::vector<double>> counts;
};

struct NeuralLmParams {
  int window = 2;
  Mlp mlp;
};

enum class ModelKind { kNgram, kNeural };

class BaseModel final : public StepSource {
 public:
  // Order-1 table with the given per-token weights and no smoothing; the
  // weights must be strictly positive.
  static BaseModel unigram(Vocabulary vocab, SpaceSpec space,
                           std::vector<double> weights);
  static BaseModel uniform(Vocabulary vocab, SpaceSpec space);
  static BaseModel from_ngram(Vocabulary vocab, SpaceSpec space, NgramTable table);
  // Fresh network: W1 random (seeded), output layer zero, so the model starts
  // uniform.
  static BaseModel neural(Vocabulary vocab, SpaceSpec space, int window,
                          int hidden, std::uint64_t seed, double init_scale = 0.5);

  ModelKind kind() const;
  const Vocabulary& vocab() const override { return vocab_; }
  const SpaceSpec& space() const override { return space_; }
  void log_step(Tokens x, Tokens prefix, std::span<double> out) const override;

  // Checked entry point: validates prefix length and token ids.
  StepDistribution step_distribution(Tokens x, Tokens prefix) const;

  const NgramTable* ngram() const { return std::get_if<NgramTable>(&body_); }
  const NeuralLmParams* neural_params() const {
    return std::get_if<NeuralLmParams>(&body_);
  }
  NeuralLmParams* mutable_neural_params() { return std::get_if<NeuralLmParams>(&body_); }

  // Feature vector of the neural model for a prefix.
  SparseInput neural_features(Tokens prefix) const;
  int neural_input_dim() const;

  nlohmann::json to_json() const;
  static BaseModel from_json(const nlohmann::json& j);
  std::string fingerprint() const override;

 private:
  BaseModel(Vocabulary vocab, SpaceSpec space,
            std::variant<NgramTable, NeuralLmParams> body);

  Vocabulary vocab_;
  SpaceSpec space_;
  std::variant<NgramTable, NeuralLmParams> body_;
};

// Sequences are token contents; in eos mode an eos is appended when the
// sequence is shorter than max_len and does not already end in eos.
BaseModel fit_ngram(const Vocabulary& vocab, const SpaceSpec& space,
                    const std::vector<TokenSeq>& corpus, int order,
                    double smoothing);

struct NeuralTrainConfig {
  int steps = 200;
  double learning_rate = 0.5;
  double momentum = 0.0;
};

// Full-batch cross-entropy gradient descent. Returns the mean NLL per step.
std::vector<double> train_neural_lm(BaseModel& model,
                                    const std::vector<TokenSeq>& corpus,
                                    const NeuralTrainConfig& config);

// Mean next-token NLL of the corpus and its gradient w.r.t. the network
// parameters (exposed for finite-difference checks).
double neural_lm_loss(const BaseModel& model, const std::vector<TokenSeq>& corpus,
                      std::vector<double>* grad);

std::string fingerprint_of(const std::string& canonical);
std::vector<std::string> encode_decimal_array(std::span<const double> values);
std::vector<double> decode_decimal_array(const nlohmann::json& j);

nlohmann::json vocab_to_json(const Vocabulary& vocab);
Vocabulary vocab_from_json(const nlohmann::json& j);
nlohmann::json space_to_json(const SpaceSpec& space);
SpaceSpec space_from_json(const nlohmann::json& j);

}  // namespace nado

#endif  // NADO_BASE_MODEL_HPP_
