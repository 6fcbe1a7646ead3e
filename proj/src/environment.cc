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

#include "tomneg/environment.h"

#include <array>
#include <cmath>

#include "tomneg/random.h"

namespace tomneg {
namespace {

constexpr std::array<const char*, 6> kCategories = {
    "phone", "furniture", "bike", "electronics", "housing", "car"};
constexpr std::array<const char*, 3> kConditions = {"new", "like-new", "used"};

void RequireRange(double lo, double hi, const char* what) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
    throw std::invalid_argument(std::string("invalid ") + what + " range");
  }
}

}  // namespace

std::string_view AgentName(AgentId id) {
  return id == AgentId::kBuyer ? "buyer" : "seller";
}

std::string_view OutcomeName(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::kDeal:
      return "deal";
    case OutcomeKind::kNoDealReject:
      return "no_deal_reject";
    case OutcomeKind::kNoDealQuit:
      return "no_deal_quit";
    case OutcomeKind::kNoDealTimeout:
      return "no_deal_timeout";
  }
  return "unknown";
}

void ValidateScenarioConfig(const ScenarioConfig& config) {
  RequireRange(config.listing_min, config.listing_max, "listing price");
  RequireRange(config.ratio_min, config.ratio_max, "target ratio");
  if (config.listing_min < 1.0) {
    throw std::invalid_argument("listing prices must be at least 1");
  }
  if (config.ratio_min <= 0.0) {
    throw std::invalid_argument("target ratio must be positive");
  }
  if (config.ratio_max >= 1.0) {
    throw std::invalid_argument("buyer target must be below listing price");
  }
}

double Scenario::Normalize(double currency) const {
  return (currency - buyer_target) / (listing_price - buyer_target);
}

double Scenario::Denormalize(double normalized) const {
  return buyer_target + normalized * (listing_price - buyer_target);
}

Scenario SampleScenario(std::uint64_t seed, const ScenarioConfig& config) {
  ValidateScenarioConfig(config);
  Rng rng(seed);
  Scenario scenario;
  scenario.scenario_id = seed;
  const double listing =
      config.listing_min +
      Uniform01(rng) * (config.listing_max - config.listing_min);
  scenario.listing_price = std::round(listing);
  const double ratio =
      config.ratio_min + Uniform01(rng) * (config.ratio_max - config.ratio_min);
  scenario.buyer_target = ratio * scenario.listing_price;
  scenario.seller_target = scenario.listing_price;
  scenario.description_tags = {
      kCategories[rng() % kCategories.size()],
      kConditions[rng() % kConditions.size()]};
  return scenario;
}

DialogState::DialogState(Scenario scenario, int max_turns, AgentId first_mover)
    : scenario_(std::move(scenario)),
      max_turns_(max_turns),
      first_mover_(first_mover),
      whose_turn_(first_mover) {
  if (max_turns_ < 1) throw std::invalid_argument("max_turns must be >= 1");
}

std::optional<DialogAct> DialogState::last_act() const {
  if (history_.empty()) return std::nullopt;
  return history_.back().act;
}

std::optional<DialogAct> DialogState::last_priced_act(AgentId id) const {
  for (auto it = history_.rbegin(); it != history_.rend(); ++it) {
    if (it->agent == id && it->act.price.has_value()) return it->act;
  }
  return std::nullopt;
}

int DialogState::turns_taken(AgentId id) const {
  int count = 0;
  for (const Turn& turn : history_) count += turn.agent == id;
  return count;
}

StepResult Step(const DialogState& state, AgentId actor, const DialogAct& act,
                const Utterance& utterance) {
  if (state.closed()) throw ProtocolError("dialog is already over");
  if (actor != state.whose_turn()) {
    throw ProtocolError(std::string("out-of-turn act by ") +
                        std::string(AgentName(actor)));
  }
  const ActVerdict verdict = ValidateAct(act);
  if (verdict != ActVerdict::kValid) {
    throw ProtocolError("invalid act: " + std::string(VerdictName(verdict)));
  }
  const std::optional<DialogAct> previous = state.last_act();
  if (!LegalResponses(previous).Contains(act.intent)) {
    throw ProtocolError("protocol violation: " + ActToken(act) + " after " +
                        (previous ? ActToken(*previous) : "opening"));
  }

  StepResult result{state, std::nullopt};
  DialogState& next = result.state;
  next.history_.push_back(Turn{actor, act, utterance});
  next.whose_turn_ = Other(actor);

  const int length = next.turn_index();
  switch (act.intent) {
    case Intent::kAccept:
      result.outcome = Outcome{OutcomeKind::kDeal, previous->price, length};
      break;
    case Intent::kReject:
      result.outcome = Outcome{OutcomeKind::kNoDealReject, std::nullopt, length};
      break;
    case Intent::kQuit:
      result.outcome = Outcome{OutcomeKind::kNoDealQuit, std::nullopt, length};
      break;
    default:
      if (length >= next.max_turns_) {
        result.outcome =
            Outcome{OutcomeKind::kNoDealTimeout, std::nullopt, length};
      }
      break;
  }
  if (result.outcome) next.closed_ = true;
  return result;
}

double Reward(const Outcome& outcome, AgentId agent, const Scenario& scenario) {
  if (!outcome.deal()) return kNoDealReward;
  const double deal = scenario.Denormalize(*outcome.deal_price);
  const double mid = scenario.Midpoint();
  if (agent == AgentId::kSeller) {
    return (deal - mid) / (scenario.listing_price - mid);
  }
  return (mid - deal) / (mid - scenario.buyer_target);
}

MetricsRecord ComputeMetrics(const Outcome& outcome, const Scenario& scenario) {
  MetricsRecord record;
  record.length = outcome.length;
  record.reward_buyer = Reward(outcome, AgentId::kBuyer, scenario);
  record.reward_seller = Reward(outcome, AgentId::kSeller, scenario);
  if (!outcome.deal()) return record;

  record.agreement = 1;
  const double deal = scenario.Denormalize(*outcome.deal_price);
  // Ut^i = (P_deal - P_target^{-i}) / (P_target^i - P_target^{-i})
  record.utility_seller = (deal - scenario.buyer_target) /
                          (scenario.seller_target - scenario.buyer_target);
  record.utility_buyer = (deal - scenario.seller_target) /
                         (scenario.buyer_target - scenario.seller_target);
  record.fairness = 1.0 - 2.0 * std::abs(record.utility_seller - 0.5);
  return record;
}

}  // namespace tomneg
