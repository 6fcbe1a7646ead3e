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

#ifndef TOMNEG_ONTOLOGY_H_
#define TOMNEG_ONTOLOGY_H_

#include <array>
#include <bitset>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tomneg {

// The fifteen dialog-act intents. The numeric values index model outputs, so
// the order is part of the checkpoint format.
enum class Intent : int {
  kGreet = 0,
  kInquire,
  kInform,
  kPropose,
  kCounter,
  kCounterNoPrice,
  kConfirm,
  kAffirm,
  kDeny,
  kAgree,
  kDisagree,
  kOffer,
  kAccept,
  kReject,
  kQuit,
};

inline constexpr int kNumIntents = 15;

inline constexpr std::array<Intent, kNumIntents> kAllIntents = {
    Intent::kGreet,   Intent::kInquire, Intent::kInform,
    Intent::kPropose, Intent::kCounter, Intent::kCounterNoPrice,
    Intent::kConfirm, Intent::kAffirm,  Intent::kDeny,
    Intent::kAgree,   Intent::kDisagree, Intent::kOffer,
    Intent::kAccept,  Intent::kReject,  Intent::kQuit};

constexpr int IntentIndex(Intent intent) { return static_cast<int>(intent); }
constexpr Intent IntentAt(int index) { return static_cast<Intent>(index); }

std::string_view IntentName(Intent intent);
std::optional<Intent> IntentFromName(std::string_view name);

// propose, counter, agree, disagree and offer carry a price slot.
bool RequiresPrice(Intent intent);
// offer, accept, reject and quit have no utterance text.
bool IsSilent(Intent intent);
// accept, reject and quit end the dialog. offer does not: it forces a reply.
bool IsTerminal(Intent intent);

// A set of intents, indexed by IntentIndex.
class IntentSet {
 public:
  IntentSet() = default;
  IntentSet(std::initializer_list<Intent> intents);
  static IntentSet All();

  void Insert(Intent intent) { bits_.set(IntentIndex(intent)); }
  void Erase(Intent intent) { bits_.reset(IntentIndex(intent)); }
  bool Contains(Intent intent) const { return bits_.test(IntentIndex(intent)); }
  bool Empty() const { return bits_.none(); }
  int Size() const { return static_cast<int>(bits_.count()); }
  std::vector<Intent> ToVector() const;

  friend bool operator==(const IntentSet&, const IntentSet&) = default;

 private:
  std::bitset<kNumIntents> bits_;
};

// Intent plus optional price. Prices are normalized: 0 is the buyer target and
// 1 the listing price.
struct DialogAct {
  Intent intent = Intent::kGreet;
  std::optional<double> price;

  static DialogAct Of(Intent intent) { return {intent, std::nullopt}; }
  static DialogAct Of(Intent intent, double price) { return {intent, price}; }

  friend bool operator==(const DialogAct&, const DialogAct&) = default;
};

enum class ActVerdict {
  kValid,
  kMissingPrice,
  kSpuriousPrice,
  kPriceOutOfRange,
  kUnknownIntent,
};

std::string_view VerdictName(ActVerdict verdict);

ActVerdict ValidateAct(const DialogAct& act);

// Intents allowed in reply to `previous`; nullopt means the opening move.
// Throws std::invalid_argument if `previous` is not a valid act.
IntentSet LegalResponses(const std::optional<DialogAct>& previous);

// Compact text tokens: "propose:0.460", "offer:0.650", "greet".
std::string ActToken(const DialogAct& act);
// Throws std::invalid_argument on malformed tokens or invalid acts.
DialogAct ParseActToken(std::string_view token);

enum class Valence { kCooperative, kCompetitive };

std::string_view ValenceName(Valence valence);
std::optional<Valence> ValenceFromName(std::string_view name);

// A population-specific word inserted into an utterance.
struct StyleToken {
  std::string text;
  Valence valence = Valence::kCooperative;

  friend bool operator==(const StyleToken&, const StyleToken&) = default;
};

// Rendered form of a dialog act. Silent acts carry kNoTemplate and a display
// string such as "OFFER($65)".
struct Utterance {
  static constexpr int kNoTemplate = -1;

  int template_id = kNoTemplate;
  Intent intent = Intent::kGreet;
  std::optional<double> rendered_price;
  std::vector<StyleToken> style_tokens;
  std::string text;

  bool silent() const { return template_id == kNoTemplate; }
};

}  // namespace tomneg

#endif  // TOMNEG_ONTOLOGY_H_
