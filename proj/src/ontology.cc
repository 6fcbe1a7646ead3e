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

#include "tomneg/ontology.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <system_error>
#include <stdexcept>

namespace tomneg {
namespace {

constexpr std::array<std::string_view, kNumIntents> kIntentNames = {
    "greet",   "inquire", "inform",          "propose", "counter",
    "counter-noprice", "confirm", "affirm",  "deny",    "agree",
    "disagree", "offer",  "accept",          "reject",  "quit"};

}  // namespace

std::string_view IntentName(Intent intent) {
  const int index = IntentIndex(intent);
  if (index < 0 || index >= kNumIntents) return "unknown";
  return kIntentNames[index];
}

std::optional<Intent> IntentFromName(std::string_view name) {
  for (int i = 0; i < kNumIntents; ++i) {
    if (kIntentNames[i] == name) return IntentAt(i);
  }
  return std::nullopt;
}

bool RequiresPrice(Intent intent) {
  switch (intent) {
    case Intent::kPropose:
    case Intent::kCounter:
    case Intent::kAgree:
    case Intent::kDisagree:
    case Intent::kOffer:
      return true;
    default:
      return false;
  }
}

bool IsSilent(Intent intent) {
  return intent == Intent::kOffer || IsTerminal(intent);
}

bool IsTerminal(Intent intent) {
  return intent == Intent::kAccept || intent == Intent::kReject ||
         intent == Intent::kQuit;
}

IntentSet::IntentSet(std::initializer_list<Intent> intents) {
  for (Intent intent : intents) Insert(intent);
}

IntentSet IntentSet::All() {
  IntentSet set;
  set.bits_.set();
  return set;
}

std::vector<Intent> IntentSet::ToVector() const {
  std::vector<Intent> out;
  for (int i = 0; i < kNumIntents; ++i) {
    if (bits_.test(i)) out.push_back(IntentAt(i));
  }
  return out;
}

std::string_view VerdictName(ActVerdict verdict) {
  switch (verdict) {
    case ActVerdict::kValid:
      return "valid";
    case ActVerdict::kMissingPrice:
      return "missing-price";
    case ActVerdict::kSpuriousPrice:
      return "spurious-price";
    case ActVerdict::kPriceOutOfRange:
      return "price-out-of-range";
    case ActVerdict::kUnknownIntent:
      return "unknown-intent";
  }
  return "unknown";
}

ActVerdict ValidateAct(const DialogAct& act) {
  const int index = IntentIndex(act.intent);
  if (index < 0 || index >= kNumIntents) return ActVerdict::kUnknownIntent;
  if (RequiresPrice(act.intent)) {
    if (!act.price.has_value()) return ActVerdict::kMissingPrice;
    const double p = *act.price;
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      return ActVerdict::kPriceOutOfRange;
    }
  } else if (act.price.has_value()) {
    return ActVerdict::kSpuriousPrice;
  }
  return ActVerdict::kValid;
}

IntentSet LegalResponses(const std::optional<DialogAct>& previous) {
  IntentSet open = IntentSet::All();
  open.Erase(Intent::kAccept);
  open.Erase(Intent::kReject);
  if (!previous.has_value()) return open;

  const ActVerdict verdict = ValidateAct(*previous);
  if (verdict != ActVerdict::kValid) {
    throw std::invalid_argument("LegalResponses: invalid previous act (" +
                                std::string(VerdictName(verdict)) + ")");
  }
  if (previous->intent == Intent::kOffer) {
    return IntentSet{Intent::kAccept, Intent::kReject};
  }
  if (IsTerminal(previous->intent)) return IntentSet{};
  return open;
}

std::string_view ValenceName(Valence valence) {
  return valence == Valence::kCooperative ? "cooperative" : "competitive";
}

std::optional<Valence> ValenceFromName(std::string_view name) {
  if (name == "cooperative") return Valence::kCooperative;
  if (name == "competitive") return Valence::kCompetitive;
  return std::nullopt;
}

std::string ActToken(const DialogAct& act) {
  std::string token(IntentName(act.intent));
  if (act.price.has_value()) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), ":%.3f", *act.price);
    token += buffer;
  }
  return token;
}

DialogAct ParseActToken(std::string_view token) {
  const auto colon = token.find(':');
  const std::string_view name = token.substr(0, colon);
  const std::optional<Intent> intent = IntentFromName(name);
  if (!intent) {
    throw std::invalid_argument("unknown intent in act token: " +
                                std::string(token));
  }
  DialogAct act{*intent, std::nullopt};
  if (colon != std::string_view::npos) {
    const std::string_view digits = token.substr(colon + 1);
    double value = 0.0;
    const auto [end, ec] =
        std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (digits.empty() || ec != std::errc() ||
        end != digits.data() + digits.size()) {
      throw std::invalid_argument("malformed price in act token: " +
                                  std::string(token));
    }
    act.price = value;
  }
  const ActVerdict verdict = ValidateAct(act);
  if (verdict != ActVerdict::kValid) {
    throw std::invalid_argument("invalid act token " + std::string(token) +
                                ": " + std::string(VerdictName(verdict)));
  }
  return act;
}

}  // namespace tomneg
