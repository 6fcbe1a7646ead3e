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

#include "tomneg/features.h"

#include <algorithm>
#include <stdexcept>

namespace tomneg {

Eigen::VectorXd ActFeatures(const DialogAct& act, AgentId speaker, int position,
                            int n, AgentId observer) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(kActFeatureDim);
  x(IntentIndex(act.intent)) = 1.0;
  if (act.price) {
    x(15) = 1.0;
    x(16) = UtilityOf(observer, *act.price);
  }
  x(17) = speaker == observer ? 1.0 : 0.0;
  x(18) = n > 0 ? static_cast<double>(position) / n : 0.0;
  x(19) = observer == AgentId::kSeller ? 1.0 : 0.0;
  return x;
}

Eigen::MatrixXd HistoryFeatures(const DialogState& state, AgentId observer) {
  const auto& history = state.history();
  Eigen::MatrixXd out(kActFeatureDim, history.size());
  for (size_t t = 0; t < history.size(); ++t) {
    out.col(t) = ActFeatures(history[t].act, history[t].agent,
                             static_cast<int>(t), state.max_turns(), observer);
  }
  return out;
}

Eigen::VectorXd ContextFeatures(AgentId observer, int turn, int n) {
  Eigen::VectorXd c(kContextDim);
  c << (observer == AgentId::kSeller ? 1.0 : 0.0),
      n > 0 ? static_cast<double>(turn) / n : 0.0;
  return c;
}

Eigen::MatrixXd IdentifierFeatures(const DialogState& state, AgentId observer) {
  const auto& history = state.history();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kIdentifierInputDim, history.size());
  out.topRows(kActFeatureDim) = HistoryFeatures(state, observer);
  for (size_t t = 0; t < history.size(); ++t) {
    if (history[t].agent == observer) continue;
    out.col(t).tail(kStyleFeatureDim) = StyleFeatures(
        history[t].utterance, static_cast<int>(t), state.max_turns());
  }
  return out;
}

StyleFeatureVector OwnStyleFeatures(const Utterance& utterance, int turn,
                                    int n) {
  Utterance neutral = utterance;
  neutral.style_tokens.clear();
  return StyleFeatures(neutral, turn, n);
}

StyleFeatureVector LastOpponentStyle(const DialogState& state,
                                     AgentId observer) {
  const auto& history = state.history();
  for (int t = static_cast<int>(history.size()) - 1; t >= 0; --t) {
    if (history[t].agent != observer) {
      return StyleFeatures(history[t].utterance, t, state.max_turns());
    }
  }
  return StyleFeatureVector::Zero();
}

const Eigen::VectorXd& PriceGrid() {
  static const Eigen::VectorXd grid = MakePriceGrid(kPriceGridSize);
  return grid;
}

Eigen::VectorXd MakePriceGrid(int size) {
  if (size < 2) throw std::invalid_argument("price grid needs two points");
  return Eigen::VectorXd::LinSpaced(size, 0.0, 1.0);
}

double StandingGap(const DialogState& state, AgentId observer) {
  const auto mine = state.last_priced_act(observer);
  const auto theirs = state.last_priced_act(Other(observer));
  const double ask = mine ? UtilityOf(observer, *mine->price) : 1.0;
  const double bid = theirs ? UtilityOf(observer, *theirs->price) : 0.0;
  return std::max(0.0, ask - bid);
}

}  // namespace tomneg
