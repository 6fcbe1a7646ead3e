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

#include "tomneg/models.h"

#include <cmath>

namespace tomneg {

std::vector<Candidate> EnumerateCandidates(const DialogState& state,
                                           AgentId self,
                                           const Eigen::VectorXd& grid) {
  std::vector<Candidate> out;
  for (Intent intent : LegalResponses(state.last_act()).ToVector()) {
    if (!RequiresPrice(intent)) {
      out.push_back({DialogAct::Of(intent), -1});
      continue;
    }
    for (int j = 0; j < grid.size(); ++j) {
      out.push_back({DialogAct::Of(intent, PriceFromUtility(self, grid(j))), j});
    }
  }
  return out;
}

nn::Mask IntentMask(const IntentSet& allowed) {
  nn::Mask mask(kNumIntents, false);
  for (Intent intent : allowed.ToVector()) mask[IntentIndex(intent)] = true;
  return mask;
}

Net::Config PolicyNetConfig(const ModelConfig& config) {
  Net::Config c;
  c.input_dim = kActFeatureDim;
  c.query_dim = kContextDim;
  c.hidden = config.hidden;
  c.layers = config.layers;
  c.mlp = config.mlp;
  c.output_dim = PolicyModel::kOutputDim;
  return c;
}

Net::Config ValueNetConfig(const ModelConfig& config) {
  Net::Config c;
  c.input_dim = kActFeatureDim;
  c.query_dim = ValueModel::kQueryDim;
  c.hidden = config.hidden;
  c.layers = config.layers;
  c.mlp = config.mlp;
  c.output_dim = 1;
  return c;
}

PolicyModel::PolicyModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), net_(PolicyNetConfig(config), seed) {}

PolicyModel::PolicyModel(const ModelConfig& config, const Params& params)
    : config_(config), net_(PolicyNetConfig(config), params) {}

PolicyModel::Output PolicyModel::Predict(const DialogState& state,
                                         AgentId self) const {
  const Eigen::MatrixXd x = HistoryFeatures(state, self);
  const Eigen::MatrixXd out = net_.Forward(
      x, {state.turn_index()}, ContextFeatures(state, self));
  Output result;
  result.intent_probs = nn::Softmax(
      out.col(0).head(kNumIntents).eval(),
      IntentMask(LegalResponses(state.last_act())));
  result.price_utility = 1.0 / (1.0 + std::exp(-out(kNumIntents, 0)));
  return result;
}

Eigen::VectorXd PolicyModel::Distribution(
    const DialogState& state, AgentId self,
    const std::vector<Candidate>& candidates,
    const Eigen::VectorXd& grid) const {
  const Output out = Predict(state, self);
  const Eigen::VectorXd price =
      nn::DiscretizedGaussian(out.price_utility, kPriceSigma, grid);
  Eigen::VectorXd p(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Candidate& c = candidates[i];
    p(i) = out.intent_probs(IntentIndex(c.act.intent)) *
           (c.grid >= 0 ? price(c.grid) : 1.0);
  }
  return p;
}

ValueModel::ValueModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), net_(ValueNetConfig(config), seed) {}

ValueModel::ValueModel(const ModelConfig& config, const Params& params)
    : config_(config), net_(ValueNetConfig(config), params) {}

Eigen::VectorXd ValueModel::Query(const Eigen::MatrixXd& features, int turn,
                                  AgentId self, int n) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(kQueryDim);
  if (turn >= 2) q.head(kActFeatureDim) = features.col(turn - 2);
  if (turn >= 1) q.segment(kActFeatureDim, kActFeatureDim) = features.col(turn - 1);
  q.tail(kContextDim) = ContextFeatures(self, turn, n);
  return q;
}

double ValueModel::Value(const DialogState& state, AgentId self) const {
  const Eigen::MatrixXd x = HistoryFeatures(state, self);
  const int t = state.turn_index();
  return net_.Forward(x, {Prefix(t)}, Query(x, t, self, state.max_turns()))(0, 0);
}

}  // namespace tomneg
