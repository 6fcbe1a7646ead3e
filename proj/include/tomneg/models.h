// Copyright 2026 The tomneg Authors
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

#ifndef TOMNEG_MODELS_H_
#define TOMNEG_MODELS_H_

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "tomneg/environment.h"
#include "tomneg/features.h"
#include "tomneg/nn/parameters.h"
#include "tomneg/nn/sequence_net.h"
#include "tomneg/nn/training.h"
#include "tomneg/ontology.h"

namespace tomneg {

using Net = nn::SequenceNet<double>;
using Params = nn::ParameterSet<double>;

struct ModelConfig {
  int hidden = 300;
  int layers = 2;
  int mlp = 300;
};

// Spread of the price distribution around a predicted mean, in utility units.
inline constexpr double kPriceSigma = 0.05;

// One candidate act for a decision. Priced intents appear once per grid
// point; `grid` indexes the price grid as the actor's utility.
struct Candidate {
  DialogAct act;
  int grid = -1;
};

// Legal intents at `state`, priced ones crossed with `grid` (actor utility).
std::vector<Candidate> EnumerateCandidates(
    const DialogState& state, AgentId self,
    const Eigen::VectorXd& grid = PriceGrid());

nn::Mask IntentMask(const IntentSet& allowed);

// Intent logits plus a sigmoid price unit predicting the actor's utility.
class PolicyModel {
 public:
  static constexpr int kOutputDim = kNumIntents + 1;

  PolicyModel() = default;
  PolicyModel(const ModelConfig& config, std::uint64_t seed);
  PolicyModel(const ModelConfig& config, const Params& params);

  struct Output {
    Eigen::VectorXd intent_probs;  // zero outside the legal set
    double price_utility = 0.5;
  };
  Output Predict(const DialogState& state, AgentId self) const;

  // pi(candidate) = P(intent) * P(grid | intent) over `candidates`.
  Eigen::VectorXd Distribution(
      const DialogState& state, AgentId self,
      const std::vector<Candidate>& candidates,
      const Eigen::VectorXd& grid = PriceGrid()) const;

  Net& net() { return net_; }
  const Net& net() const { return net_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  Net net_;
};

// Critic V(s) for the actor whose turn it is. The encoder reads the history
// without its last two acts; those two acts and the context enter through
// the query, which keeps one-step lookahead cheap.
class ValueModel {
 public:
  static constexpr int kQueryDim = 2 * kActFeatureDim + kContextDim;

  ValueModel() = default;
  ValueModel(const ModelConfig& config, std::uint64_t seed);
  ValueModel(const ModelConfig& config, const Params& params);

  double Value(const DialogState& state, AgentId self) const;

  // Encoder prefix length and query for the state after the first `turn`
  // columns of `features` (kActFeatureDim x T).
  static int Prefix(int turn) { return turn >= 2 ? turn - 2 : 0; }
  static Eigen::VectorXd Query(const Eigen::MatrixXd& features, int turn,
                               AgentId self, int n);

  Net& net() { return net_; }
  const Net& net() const { return net_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  Net net_;
};

Net::Config PolicyNetConfig(const ModelConfig& config);
Net::Config ValueNetConfig(const ModelConfig& config);

}  // namespace tomneg

#endif  // TOMNEG_MODELS_H_
