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

#ifndef TOMNEG_PARSER_H_
#define TOMNEG_PARSER_H_

#include <optional>
#include <string_view>

#include <Eigen/Core>

#include "tomneg/environment.h"
#include "tomneg/generator.h"
#include "tomneg/ontology.h"

namespace tomneg {

// [cooperative count, competitive count, turn position]
inline constexpr int kStyleFeatureDim = 3;
using StyleFeatureVector = Eigen::Matrix<double, kStyleFeatureDim, 1>;

// Recovers the dialog act behind an utterance produced by `bank`. Voiced
// utterances are keyed on template id; silent ones on their display keyword.
// nullopt signals a parse failure (unknown template id, intent mismatch,
// missing or spurious price).
std::optional<DialogAct> Parse(const Utterance& utterance,
                               const TemplateBank& bank);

// Surface-text route: matches `text` against every template (optionally
// preceded by style words) or a silent display such as "OFFER($65)", and
// normalizes the price against `scenario`.
std::optional<DialogAct> ParseText(std::string_view text,
                                   const Scenario& scenario,
                                   const TemplateBank& bank);

// Per-valence token counts and the turn position turn / n. Zero for silent
// utterances.
StyleFeatureVector StyleFeatures(const Utterance& utterance, int turn, int n);

}  // namespace tomneg

#endif  // TOMNEG_PARSER_H_
