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

#ifndef TOMNEG_POPULATIONS_H_
#define TOMNEG_POPULATIONS_H_

#include <string>
#include <utility>
#include <vector>

#include "tomneg/environment.h"
#include "tomneg/episode.h"
#include "tomneg/ontology.h"
#include "tomneg/random.h"

namespace tomneg {

inline constexpr int kNumPopulations = 7;
inline constexpr int kAggressivePopulation = 0;
inline constexpr int kCooperativePopulation = 5;
inline constexpr int kCompetitivePopulation = 6;

struct WeightedToken {
  StyleToken token;
  double weight = 1.0;
};

// One rule-based opponent personality. Prices are expressed as the
// population's own utility, so the same spec plays either role.
struct PopulationSpec {
  int id = 0;
  std::string name;
  double floor_utility = 0.5;  // never deals below this
  double slope = 0.0;          // fraction of (1 - floor) conceded by turn n
  double convexity = 1.0;      // exponent on turn / n
  double band_base = 0.05;     // acceptance band at turn 0
  double band_growth = 0.1;    // band added by turn n
  int offer_turn = 14;         // from this turn on, closes with an offer
  int tokens_per_utterance = 2;
  std::vector<WeightedToken> token_weights;
};

// Throws std::invalid_argument when a field is out of range.
void ValidatePopulation(const PopulationSpec& spec);

std::vector<PopulationSpec> DefaultPopulations();
// Declarative roster: a JSON array of population objects.
std::vector<PopulationSpec> LoadPopulations(const std::string& path);
std::vector<PopulationSpec> ParsePopulations(const std::string& json_text);
std::string PopulationsToJson(const std::vector<PopulationSpec>& roster);

// Own-utility asking price at `turn` of an `n`-turn dialog:
//   1 - slope * (1 - floor) * (turn / n)^convexity, clamped to [floor, 1].
double ConcessionUtility(const PopulationSpec& spec, int turn, int n);
// The same curve as a normalized price for `role`.
double ConcessionPrice(const PopulationSpec& spec, int turn, int n,
                       AgentId role = AgentId::kSeller);
// Whether a proposal worth `utility` to the population is acceptable: within
// the band below the asking price, and never below the floor.
bool Acceptable(const PopulationSpec& spec, double utility, int turn, int n);

// Scripted flow: opening small talk, counters along the concession curve,
// agreement or an offer once the other side's standing price is acceptable,
// and a closing offer from `offer_turn` on. Replies to offers with
// accept/reject.
DialogAct PopulationAct(const DialogState& state, AgentId self,
                        const PopulationSpec& spec, Rng& rng);

// Draws `tokens_per_utterance` tokens according to `token_weights`.
std::vector<StyleToken> SampleStyleTokens(const PopulationSpec& spec, Rng& rng);

class PopulationNegotiator : public Negotiator {
 public:
  explicit PopulationNegotiator(PopulationSpec spec) : spec_(std::move(spec)) {}

  Move Act(const DialogState& state, AgentId self, Rng& rng) override;
  std::string label() const override { return "population-" + spec_.name; }
  int population_id() const override { return spec_.id; }
  const PopulationSpec& spec() const { return spec_; }

 private:
  PopulationSpec spec_;
};

}  // namespace tomneg

#endif  // TOMNEG_POPULATIONS_H_
