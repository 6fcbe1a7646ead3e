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

#ifndef TOMNEG_GENERATOR_H_
#define TOMNEG_GENERATOR_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tomneg/environment.h"
#include "tomneg/ontology.h"
#include "tomneg/random.h"

namespace tomneg {

inline constexpr int kTopTemplates = 10;

struct Template {
  int id = 0;
  Intent intent = Intent::kGreet;
  std::string text;  // may contain the "{price}" marker
};

// Per-intent template lists. Ids are unique across the bank; the position of
// a template within its intent list is its retrieval rank.
class TemplateBank {
 public:
  // The bank shipped in assets/templates.txt.
  static const TemplateBank& Default();
  // Lines of "intent<TAB>id<TAB>text"; '#' starts a comment line. Throws
  // std::invalid_argument on malformed lines, duplicate ids, silent intents,
  // price markers on price-less intents (or missing on priced ones), and
  // intents with fewer than `min_templates` templates.
  static TemplateBank Parse(std::string_view text,
                            int min_templates = kTopTemplates);
  static TemplateBank Load(const std::string& path);

  const std::vector<Template>& ForIntent(Intent intent) const {
    return by_intent_[IntentIndex(intent)];
  }
  // nullptr for unknown ids.
  const Template* Find(int id) const;
  int size() const;

 private:
  std::vector<std::vector<Template>> by_intent_ =
      std::vector<std::vector<Template>>(kNumIntents);
};

enum class GenerationMode { kDeterministic, kStochastic };

// "$43" style currency rendering of a normalized price.
std::string FormatPrice(const Scenario& scenario, double normalized);

// Display string for silent acts, e.g. "OFFER($65)" or "ACCEPT".
std::string SilentDisplay(const Scenario& scenario, const DialogAct& act);

// Renders `act`. Deterministic mode uses the top template of the intent;
// stochastic mode samples uniformly among the top kTopTemplates. Silent acts
// produce the no-utterance marker (template id kNoTemplate).
Utterance Generate(const TemplateBank& bank, const DialogState& state,
                   const DialogAct& act, std::vector<StyleToken> style_tokens,
                   GenerationMode mode, Rng& rng);

// The generator's distribution over utterances for `act`, truncated to `k`
// entries: [(top template, 1)] in deterministic mode, the top k templates at
// 1/k each in stochastic mode. Throws std::invalid_argument if k exceeds the
// templates available for a stochastic voiced act, or k < 1.
std::vector<std::pair<Utterance, double>> EnumerateSupport(
    const TemplateBank& bank, const DialogState& state, const DialogAct& act,
    int k, GenerationMode mode);

}  // namespace tomneg

#endif  // TOMNEG_GENERATOR_H_
