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

#include "tomneg/parser.h"

#include <algorithm>
#include <cmath>
#include <regex>
#include <string>

namespace tomneg {
namespace {

constexpr std::string_view kPriceMarker = "{price}";
const char kPricePattern[] = R"(\$(-?[0-9]+(?:\.[0-9]+)?))";

std::string EscapeRegex(std::string_view text) {
  static const std::string kSpecial = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : text) {
    if (kSpecial.find(c) != std::string::npos) out += '\\';
    out += c;
  }
  return out;
}

std::string TemplatePattern(const Template& t) {
  std::string pattern;
  std::string_view text = t.text;
  if (const auto pos = text.find(kPriceMarker); pos != std::string_view::npos) {
    pattern = EscapeRegex(text.substr(0, pos)) + kPricePattern +
              EscapeRegex(text.substr(pos + kPriceMarker.size()));
  } else {
    pattern = EscapeRegex(text);
  }
  // Style words, if any, precede the template text.
  return R"(^(?:[A-Za-z'-]+ )*?)" + pattern + "$";
}

}  // namespace

std::optional<DialogAct> Parse(const Utterance& utterance,
                               const TemplateBank& bank) {
  DialogAct act{utterance.intent, utterance.rendered_price};
  if (utterance.silent()) {
    if (!IsSilent(utterance.intent)) return std::nullopt;
  } else {
    const Template* t = bank.Find(utterance.template_id);
    if (t == nullptr) return std::nullopt;
    act.intent = t->intent;
    if (t->intent != utterance.intent) return std::nullopt;
  }
  if (ValidateAct(act) != ActVerdict::kValid) return std::nullopt;
  return act;
}

std::optional<DialogAct> ParseText(std::string_view text,
                                   const Scenario& scenario,
                                   const TemplateBank& bank) {
  const std::string s(text);
  std::smatch match;
  static const std::regex kOffer(std::string(R"(^OFFER\()") + kPricePattern +
                                 R"(\)$)");
  if (std::regex_match(s, match, kOffer)) {
    const double price = scenario.Normalize(std::stod(match[1].str()));
    DialogAct act = DialogAct::Of(Intent::kOffer, price);
    if (ValidateAct(act) != ActVerdict::kValid) return std::nullopt;
    return act;
  }
  if (s == "ACCEPT") return DialogAct::Of(Intent::kAccept);
  if (s == "REJECT") return DialogAct::Of(Intent::kReject);
  if (s == "QUIT") return DialogAct::Of(Intent::kQuit);

  for (Intent intent : kAllIntents) {
    if (IsSilent(intent)) continue;
    for (const Template& t : bank.ForIntent(intent)) {
      const std::regex re(TemplatePattern(t));
      if (!std::regex_match(s, match, re)) continue;
      DialogAct act = DialogAct::Of(intent);
      if (RequiresPrice(intent)) {
        // Rendered prices are rounded to whole currency units.
        act.price = std::clamp(
            scenario.Normalize(std::stod(match[1].str())), 0.0, 1.0);
      }
      return act;
    }
  }
  return std::nullopt;
}

StyleFeatureVector StyleFeatures(const Utterance& utterance, int turn, int n) {
  StyleFeatureVector features = StyleFeatureVector::Zero();
  if (utterance.silent()) return features;
  for (const StyleToken& token : utterance.style_tokens) {
    features[token.valence == Valence::kCooperative ? 0 : 1] += 1.0;
  }
  features[2] = n > 0 ? static_cast<double>(turn) / n : 0.0;
  return features;
}

}  // namespace tomneg
