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

#ifndef TOMNEG_FEATURES_H_
#define TOMNEG_FEATURES_H_

#include <optional>

#include <Eigen/Core>

#include "tomneg/environment.h"
#include "tomneg/ontology.h"
#include "tomneg/parser.h"

namespace tomneg {

// Per-act features seen from `observer`:
//   [0, 15)  intent one-hot
//   15       has price
//   16       price as the observer's utility (0 when absent)
//   17       spoken by the observer
//   18       position of the act, turn / n
//   19       observer plays the seller
inline constexpr int kActFeatureDim = 20;
// [observer plays the seller, current turn / n]
inline constexpr int kContextDim = 2;
// Act features followed by the style features of opponent utterances.
inline constexpr int kIdentifierInputDim = kActFeatureDim + kStyleFeatureDim;
inline constexpr int kPriceGridSize = 100;

Eigen::VectorXd ActFeatures(const DialogAct& act, AgentId speaker, int position,
                            int n, AgentId observer);

// kActFeatureDim x turn_index matrix of the whole history.
Eigen::MatrixXd HistoryFeatures(const DialogState& state, AgentId observer);

// Context at an arbitrary turn index (which may lie beyond the history, for
// lookahead).
Eigen::VectorXd ContextFeatures(AgentId observer, int turn, int n);
inline Eigen::VectorXd ContextFeatures(const DialogState& state,
                                       AgentId observer) {
  return ContextFeatures(observer, state.turn_index(), state.max_turns());
}

// kIdentifierInputDim x turn_index. Style columns are zero for the observer's
// own utterances.
Eigen::MatrixXd IdentifierFeatures(const DialogState& state, AgentId observer);

// Style features of one of the agent's own utterances with its style tokens
// stripped. Agent utterances are rendered style-neutral, so training on
// population utterances uses the same view.
StyleFeatureVector OwnStyleFeatures(const Utterance& utterance, int turn, int n);

// Style features of the most recent opponent utterance, zero if none.
StyleFeatureVector LastOpponentStyle(const DialogState& state, AgentId observer);

// kPriceGridSize equally spaced points on [0, 1].
const Eigen::VectorXd& PriceGrid();
Eigen::VectorXd MakePriceGrid(int size);

// Gap between what the observer last asked and what the opponent last
// offered, in observer utility; 1 until both sides have named a price.
double StandingGap(const DialogState& state, AgentId observer);

}  // namespace tomneg

#endif  // TOMNEG_FEATURES_H_
