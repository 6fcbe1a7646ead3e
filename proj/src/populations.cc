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

#include "tomneg/populations.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace tomneg {
namespace {

using json = nlohmann::json;

constexpr std::array<const char*, 6> kCooperativeWords = {
    "great", "ok", "sure", "glad", "happy", "thanks"};
constexpr std::array<const char*, 6> kCompetitiveWords = {
    "afraid", "unfortunately", "firm", "sorry", "cannot", "honestly"};

struct Curve {
  const char* name;
  double floor, slope, convexity, band_base, band_growth;
  int offer_turn, tokens;
  double cooperative_share;
};

// Floors fall from aggressive (0) to cooperative (5); convexity sets how
// late the concession happens. Competitive (6) concedes late and keeps a
// high floor.
constexpr std::array<Curve, kNumPopulations> kCurves = {{
    {"aggressive", 0.80, 0.0, 1.0, 0.03, 0.05, 17, 3, 0.10},
    {"stubborn", 0.65, 0.8, 2.0, 0.05, 0.10, 17, 2, 0.30},
    {"firm", 0.50, 0.9, 1.5, 0.05, 0.10, 16, 1, 0.45},
    {"moderate", 0.40, 1.0, 1.0, 0.05, 0.10, 16, 2, 0.60},
    {"flexible", 0.30, 1.0, 0.7, 0.05, 0.10, 15, 1, 0.75},
    {"cooperative", 0.10, 1.0, 0.5, 0.10, 0.10, 14, 2, 0.90},
    {"competitive", 0.45, 0.9, 2.0, 0.03, 0.10, 17, 3, 0.25},
}};

std::vector<WeightedToken> MakeTokenWeights(int id, double cooperative_share) {
  std::vector<WeightedToken> tokens;
  const int emphasis_coop = id % 6;
  const int emphasis_comp = (id + 3) % 6;
  for (int j = 0; j < 6; ++j) {
    tokens.push_back({{kCooperativeWords[j], Valence::kCooperative},
                      cooperative_share * (j == emphasis_coop ? 3.0 : 1.0) / 8.0});
  }
  for (int j = 0; j < 6; ++j) {
    tokens.push_back(
        {{kCompetitiveWords[j], Valence::kCompetitive},
         (1.0 - cooperative_share) * (j == emphasis_comp ? 3.0 : 1.0) / 8.0});
  }
  return tokens;
}

DialogAct Priced(Intent intent, AgentId self, double utility) {
  return DialogAct::Of(intent,
                       std::clamp(PriceFromUtility(self, utility), 0.0, 1.0));
}

PopulationSpec SpecFromJson(const json& j) {
  PopulationSpec spec;
  spec.id = j.at("id").get<int>();
  spec.name = j.value("name", "population-" + std::to_string(spec.id));
  spec.floor_utility = j.at("floor_utility").get<double>();
  spec.slope = j.at("slope").get<double>();
  spec.convexity = j.at("convexity").get<double>();
  spec.band_base = j.value("band_base", spec.band_base);
  spec.band_growth = j.value("band_growth", spec.band_growth);
  spec.offer_turn = j.value("offer_turn", spec.offer_turn);
  spec.tokens_per_utterance =
      j.value("tokens_per_utterance", spec.tokens_per_utterance);
  for (const json& t : j.at("token_weights")) {
    const auto valence = ValenceFromName(t.at("valence").get<std::string>());
    if (!valence) throw std::invalid_argument("unknown token valence");
    spec.token_weights.push_back(
        {{t.at("token").get<std::string>(), *valence},
         t.at("weight").get<double>()});
  }
  ValidatePopulation(spec);
  return spec;
}

}  // namespace

void ValidatePopulation(const PopulationSpec& spec) {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("population " + std::to_string(spec.id) +
                                ": " + what);
  };
  if (spec.floor_utility < 0.0 || spec.floor_utility > 1.0) {
    fail("floor_utility outside [0,1]");
  }
  if (spec.slope < 0.0) fail("negative slope");
  if (spec.convexity <= 0.0) fail("convexity must be positive");
  if (spec.band_base < 0.0 || spec.band_growth < 0.0) fail("negative band");
  if (spec.tokens_per_utterance < 0) fail("negative token count");
  if (spec.offer_turn < 0) fail("negative offer_turn");
  double total = 0.0;
  for (const WeightedToken& t : spec.token_weights) {
    if (t.weight < 0.0) fail("negative token weight");
    total += t.weight;
  }
  if (spec.tokens_per_utterance > 0 && total <= 0.0) {
    fail("token weights are all zero");
  }
}

std::vector<PopulationSpec> DefaultPopulations() {
  std::vector<PopulationSpec> roster;
  for (int id = 0; id < kNumPopulations; ++id) {
    const Curve& c = kCurves[id];
    PopulationSpec spec;
    spec.id = id;
    spec.name = c.name;
    spec.floor_utility = c.floor;
    spec.slope = c.slope;
    spec.convexity = c.convexity;
    spec.band_base = c.band_base;
    spec.band_growth = c.band_growth;
    spec.offer_turn = c.offer_turn;
    spec.tokens_per_utterance = c.tokens;
    spec.token_weights = MakeTokenWeights(id, c.cooperative_share);
    roster.push_back(std::move(spec));
  }
  return roster;
}

std::vector<PopulationSpec> ParsePopulations(const std::string& json_text) {
  const json doc = json::parse(json_text);
  const json& list = doc.is_object() ? doc.at("populations") : doc;
  std::vector<PopulationSpec> roster;
  for (const json& j : list) roster.push_back(SpecFromJson(j));
  return roster;
}

std::vector<PopulationSpec> LoadPopulations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open population file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParsePopulations(buffer.str());
}

std::string PopulationsToJson(const std::vector<PopulationSpec>& roster) {
  json list = json::array();
  for (const PopulationSpec& spec : roster) {
    json tokens = json::array();
    for (const WeightedToken& t : spec.token_weights) {
      tokens.push_back({{"token", t.token.text},
                        {"valence", std::string(ValenceName(t.token.valence))},
                        {"weight", t.weight}});
    }
    list.push_back({{"id", spec.id},
                    {"name", spec.name},
                    {"floor_utility", spec.floor_utility},
                    {"slope", spec.slope},
                    {"convexity", spec.convexity},
                    {"band_base", spec.band_base},
                    {"band_growth", spec.band_growth},
                    {"offer_turn", spec.offer_turn},
                    {"tokens_per_utterance", spec.tokens_per_utterance},
                    {"token_weights", tokens}});
  }
  return json{{"populations", list}}.dump(2);
}

double ConcessionUtility(const PopulationSpec& spec, int turn, int n) {
  const double progress =
      n > 0 ? std::clamp(static_cast<double>(turn) / n, 0.0, 1.0) : 1.0;
  const double conceded = spec.slope * (1.0 - spec.floor_utility) *
                          std::pow(progress, spec.convexity);
  return std::clamp(1.0 - conceded, spec.floor_utility, 1.0);
}

double ConcessionPrice(const PopulationSpec& spec, int turn, int n,
                       AgentId role) {
  return PriceFromUtility(role, ConcessionUtility(spec, turn, n));
}

bool Acceptable(const PopulationSpec& spec, double utility, int turn, int n) {
  const double progress =
      n > 0 ? std::clamp(static_cast<double>(turn) / n, 0.0, 1.0) : 1.0;
  const double band = spec.band_base + spec.band_growth * progress;
  const double threshold =
      std::max(spec.floor_utility, ConcessionUtility(spec, turn, n) - band);
  return utility >= threshold;
}

DialogAct PopulationAct(const DialogState& state, AgentId self,
                        const PopulationSpec& spec, Rng& rng) {
  const int t = state.turn_index();
  const int n = state.max_turns();
  const std::optional<DialogAct> last = state.last_act();

  if (last && last->intent == Intent::kOffer) {
    const bool ok = Acceptable(spec, UtilityOf(self, *last->price), t, n);
    return DialogAct::Of(ok ? Intent::kAccept : Intent::kReject);
  }

  const double asking = ConcessionUtility(spec, t, n);
  const AgentId other = Other(self);
  std::optional<double> standing;
  if (auto act = state.last_priced_act(other);
      act && act->intent != Intent::kDisagree) {
    standing = UtilityOf(self, *act->price);
  }
  const std::optional<DialogAct> mine = state.last_priced_act(self);

  if (standing && Acceptable(spec, *standing, t, n)) {
    const bool already_agreed =
        (last && last->intent == Intent::kAgree) ||
        (mine && mine->intent == Intent::kAgree);
    if (already_agreed || Uniform01(rng) < 0.5) {
      return Priced(Intent::kOffer, self, *standing);
    }
    return Priced(Intent::kAgree, self, *standing);
  }

  if (t >= spec.offer_turn) return Priced(Intent::kOffer, self, asking);

  const double u = Uniform01(rng);
  if (last && last->intent == Intent::kInquire && u < 0.7) {
    return DialogAct::Of(Intent::kInform);
  }
  if (last && last->intent == Intent::kConfirm && u < 0.7) {
    return DialogAct::Of(u < 0.45 ? Intent::kAffirm : Intent::kDeny);
  }
  if (state.turns_taken(self) == 0) {
    if (t == 0 || u < 0.4) return DialogAct::Of(Intent::kGreet);
    return DialogAct::Of(u < 0.7 ? Intent::kInform : Intent::kInquire);
  }
  if (!mine) {
    return Priced(standing ? Intent::kCounter : Intent::kPropose, self, asking);
  }
  if (u < 0.65) return Priced(Intent::kCounter, self, asking);
  if (u < 0.75) return DialogAct::Of(Intent::kCounterNoPrice);
  if (u < 0.85) return DialogAct::Of(Intent::kInform);
  if (u < 0.93 && standing) return Priced(Intent::kDisagree, self, asking);
  return DialogAct::Of(u < 0.965 ? Intent::kConfirm : Intent::kInquire);
}

std::vector<StyleToken> SampleStyleTokens(const PopulationSpec& spec,
                                          Rng& rng) {
  std::vector<StyleToken> tokens;
  if (spec.token_weights.empty()) return tokens;
  std::vector<double> weights;
  weights.reserve(spec.token_weights.size());
  for (const WeightedToken& t : spec.token_weights) weights.push_back(t.weight);
  for (int i = 0; i < spec.tokens_per_utterance; ++i) {
    tokens.push_back(spec.token_weights[SampleIndex(weights, rng)].token);
  }
  return tokens;
}

Move PopulationNegotiator::Act(const DialogState& state, AgentId self,
                               Rng& rng) {
  Move move;
  move.act = PopulationAct(state, self, spec_, rng);
  if (!IsSilent(move.act.intent)) move.style_tokens = SampleStyleTokens(spec_, rng);
  return move;
}

}  // namespace tomneg
