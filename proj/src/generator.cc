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

#include "tomneg/generator.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "default_templates.h"

namespace tomneg {
namespace {

constexpr std::string_view kPriceMarker = "{price}";

std::string Trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::string Render(const Template& t, const Scenario& scenario,
                   const std::optional<double>& price,
                   const std::vector<StyleToken>& tokens) {
  std::string text = t.text;
  if (const auto pos = text.find(kPriceMarker); pos != std::string::npos) {
    text.replace(pos, kPriceMarker.size(), FormatPrice(scenario, *price));
  }
  if (tokens.empty()) return text;
  std::string lead;
  for (const StyleToken& token : tokens) {
    lead += token.text;
    lead += ' ';
  }
  return lead + text;
}

Utterance FromTemplate(const Template& t, const DialogState& state,
                       const DialogAct& act, std::vector<StyleToken> tokens) {
  Utterance u;
  u.template_id = t.id;
  u.intent = act.intent;
  u.rendered_price = act.price;
  u.text = Render(t, state.scenario(), act.price, tokens);
  u.style_tokens = std::move(tokens);
  return u;
}

Utterance Silent(const DialogState& state, const DialogAct& act) {
  Utterance u;
  u.template_id = Utterance::kNoTemplate;
  u.intent = act.intent;
  u.rendered_price = act.price;
  u.text = SilentDisplay(state.scenario(), act);
  return u;
}

}  // namespace

const TemplateBank& TemplateBank::Default() {
  static const TemplateBank bank = Parse(internal::kDefaultTemplates);
  return bank;
}

TemplateBank TemplateBank::Parse(std::string_view text, int min_templates) {
  TemplateBank bank;
  std::set<int> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("template bank line " +
                                std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = Trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto tab1 = line.find('\t');
    const auto tab2 =
        tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) fail("expected three tab-separated fields");
    const auto intent = IntentFromName(Trim(line.substr(0, tab1)));
    if (!intent) fail("unknown intent");
    if (IsSilent(*intent)) fail("silent intents have no templates");
    Template t;
    t.intent = *intent;
    try {
      t.id = std::stoi(line.substr(tab1 + 1, tab2 - tab1 - 1));
    } catch (const std::exception&) {
      fail("bad template id");
    }
    t.text = Trim(line.substr(tab2 + 1));
    if (t.text.empty()) fail("empty template text");
    if (!ids.insert(t.id).second) fail("duplicate template id");
    const bool has_marker = t.text.find(kPriceMarker) != std::string::npos;
    if (has_marker != RequiresPrice(t.intent)) {
      fail(has_marker ? "price marker on a price-less intent"
                      : "missing price marker");
    }
    bank.by_intent_[IntentIndex(t.intent)].push_back(std::move(t));
  }
  for (Intent intent : kAllIntents) {
    if (IsSilent(intent)) continue;
    if (bank.ForIntent(intent).size() < static_cast<size_t>(min_templates)) {
      throw std::invalid_argument("template bank: intent " +
                                  std::string(IntentName(intent)) +
                                  " has fewer than " +
                                  std::to_string(min_templates) + " templates");
    }
  }
  return bank;
}

TemplateBank TemplateBank::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open template bank " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return Parse(buffer.str());
}

const Template* TemplateBank::Find(int id) const {
  for (const auto& list : by_intent_) {
    for (const Template& t : list) {
      if (t.id == id) return &t;
    }
  }
  return nullptr;
}

int TemplateBank::size() const {
  int total = 0;
  for (const auto& list : by_intent_) total += static_cast<int>(list.size());
  return total;
}

std::string FormatPrice(const Scenario& scenario, double normalized) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "$%.0f",
                scenario.Denormalize(normalized));
  return buffer;
}

std::string SilentDisplay(const Scenario& scenario, const DialogAct& act) {
  switch (act.intent) {
    case Intent::kOffer:
      return "OFFER(" + FormatPrice(scenario, act.price.value_or(0.0)) + ")";
    case Intent::kAccept:
      return "ACCEPT";
    case Intent::kReject:
      return "REJECT";
    case Intent::kQuit:
      return "QUIT";
    default:
      return std::string(IntentName(act.intent));
  }
}

Utterance Generate(const TemplateBank& bank, const DialogState& state,
                   const DialogAct& act, std::vector<StyleToken> style_tokens,
                   GenerationMode mode, Rng& rng) {
  if (IsSilent(act.intent)) return Silent(state, act);
  const std::vector<Template>& list = bank.ForIntent(act.intent);
  int rank = 0;
  if (mode == GenerationMode::kStochastic) {
    const int top = std::min<int>(kTopTemplates, static_cast<int>(list.size()));
    rank = static_cast<int>(rng() % static_cast<std::uint64_t>(top));
  }
  return FromTemplate(list[rank], state, act, std::move(style_tokens));
}

std::vector<std::pair<Utterance, double>> EnumerateSupport(
    const TemplateBank& bank, const DialogState& state, const DialogAct& act,
    int k, GenerationMode mode) {
  if (k < 1) throw std::invalid_argument("support size must be positive");
  std::vector<std::pair<Utterance, double>> support;
  if (IsSilent(act.intent)) {
    support.emplace_back(Silent(state, act), 1.0);
    return support;
  }
  const std::vector<Template>& list = bank.ForIntent(act.intent);
  if (mode == GenerationMode::kDeterministic) {
    support.emplace_back(FromTemplate(list[0], state, act, {}), 1.0);
    return support;
  }
  if (k > static_cast<int>(list.size())) {
    throw std::invalid_argument("support size exceeds template count");
  }
  for (int i = 0; i < k; ++i) {
    support.emplace_back(FromTemplate(list[i], state, act, {}), 1.0 / k);
  }
  return support;
}

}  // namespace tomneg
