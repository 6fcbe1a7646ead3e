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

#ifndef TOMNEG_ENVIRONMENT_H_
#define TOMNEG_ENVIRONMENT_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tomneg/ontology.h"

namespace tomneg {

inline constexpr int kDefaultMaxTurns = 20;
inline constexpr double kNoDealReward = -0.5;

enum class AgentId : int { kBuyer = -1, kSeller = 1 };

constexpr AgentId Other(AgentId id) {
  return id == AgentId::kBuyer ? AgentId::kSeller : AgentId::kBuyer;
}
std::string_view AgentName(AgentId id);

// Utility of a normalized price to `id`: the price itself for the seller,
// its complement for the buyer.
constexpr double UtilityOf(AgentId id, double normalized_price) {
  return id == AgentId::kSeller ? normalized_price : 1.0 - normalized_price;
}
// Inverse of UtilityOf.
constexpr double PriceFromUtility(AgentId id, double utility) {
  return id == AgentId::kSeller ? utility : 1.0 - utility;
}

struct ScenarioConfig {
  double listing_min = 40.0;
  double listing_max = 60.0;
  double ratio_min = 0.7;
  double ratio_max = 0.8;
};

// Throws std::invalid_argument on empty, inverted or non-positive ranges and
// on ratios that would put the buyer target at or above the listing price.
void ValidateScenarioConfig(const ScenarioConfig& config);

struct Scenario {
  double listing_price = 50.0;
  double buyer_target = 38.0;
  double seller_target = 50.0;
  std::vector<std::string> description_tags;
  std::uint64_t scenario_id = 0;

  double Normalize(double currency) const;
  double Denormalize(double normalized) const;
  double Midpoint() const { return 0.5 * (listing_price + buyer_target); }
};

// Deterministic in `seed`. Listing prices are whole currency units.
Scenario SampleScenario(std::uint64_t seed, const ScenarioConfig& config);

struct Turn {
  AgentId agent = AgentId::kBuyer;
  DialogAct act;
  Utterance utterance;
};

enum class OutcomeKind { kDeal, kNoDealReject, kNoDealQuit, kNoDealTimeout };

std::string_view OutcomeName(OutcomeKind kind);

struct Outcome {
  OutcomeKind kind = OutcomeKind::kNoDealTimeout;
  std::optional<double> deal_price;  // normalized; present iff kind == kDeal
  int length = 0;

  bool deal() const { return kind == OutcomeKind::kDeal; }
};

class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct StepResult;

// The observable dialog state s_t: scenario plus ordered turn history.
class DialogState {
 public:
  explicit DialogState(Scenario scenario, int max_turns = kDefaultMaxTurns,
                       AgentId first_mover = AgentId::kBuyer);

  const Scenario& scenario() const { return scenario_; }
  const std::vector<Turn>& history() const { return history_; }
  int turn_index() const { return static_cast<int>(history_.size()); }
  int max_turns() const { return max_turns_; }
  AgentId first_mover() const { return first_mover_; }
  AgentId whose_turn() const { return whose_turn_; }
  bool closed() const { return closed_; }
  std::optional<DialogAct> last_act() const;
  // Most recent priced act by `id`, if any.
  std::optional<DialogAct> last_priced_act(AgentId id) const;
  int turns_taken(AgentId id) const;

 private:
  friend StepResult Step(const DialogState&, AgentId, const DialogAct&,
                         const Utterance&);

  Scenario scenario_;
  std::vector<Turn> history_;
  int max_turns_;
  AgentId first_mover_;
  AgentId whose_turn_;
  bool closed_ = false;
};

struct StepResult {
  DialogState state;
  std::optional<Outcome> outcome;
};

// Applies one act. Throws ProtocolError for out-of-turn acts, invalid acts,
// replies outside LegalResponses, and steps on a closed dialog. Accept
// concludes at the standing offer price; reject and quit end without a deal;
// reaching max_turns without a terminal act is a timeout.
StepResult Step(const DialogState& state, AgentId actor, const DialogAct& act,
                const Utterance& utterance);

// Linear in the deal price: 1 at the agent's own extreme, 0 at the midpoint
// of listing price and buyer target, kNoDealReward without a deal.
double Reward(const Outcome& outcome, AgentId agent, const Scenario& scenario);

struct MetricsRecord {
  int agreement = 0;
  double utility_buyer = 0.0;
  double utility_seller = 0.0;
  std::optional<double> fairness;  // deals only; identical for both sides
  int length = 0;
  double reward_buyer = kNoDealReward;
  double reward_seller = kNoDealReward;

  double utility(AgentId id) const {
    return id == AgentId::kBuyer ? utility_buyer : utility_seller;
  }
  double reward(AgentId id) const {
    return id == AgentId::kBuyer ? reward_buyer : reward_seller;
  }
};

MetricsRecord ComputeMetrics(const Outcome& outcome, const Scenario& scenario);

}  // namespace tomneg

#endif  // TOMNEG_ENVIRONMENT_H_
