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

#ifndef TOMNEG_EPISODE_H_
#define TOMNEG_EPISODE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tomneg/environment.h"
#include "tomneg/generator.h"
#include "tomneg/random.h"

namespace tomneg {

// What a negotiator decides on its turn. Style tokens are rendered into the
// utterance by the episode runner.
struct Move {
  DialogAct act;
  std::vector<StyleToken> style_tokens;
  bool exploratory = false;
};

class Negotiator {
 public:
  virtual ~Negotiator() = default;
  virtual Move Act(const DialogState& state, AgentId self, Rng& rng) = 0;
  virtual std::string label() const = 0;
  // Population id for labelled corpora; -1 for learned managers.
  virtual int population_id() const { return -1; }
};

struct TranscriptTurn {
  Turn turn;
  bool exploratory = false;
};

struct Transcript {
  std::uint64_t seed = 0;
  Scenario scenario;
  int max_turns = kDefaultMaxTurns;
  AgentId first_mover = AgentId::kBuyer;
  std::string buyer_label;
  std::string seller_label;
  int buyer_population = -1;
  int seller_population = -1;
  std::vector<TranscriptTurn> turns;
  Outcome outcome;
  MetricsRecord metrics;

  int population_of(AgentId id) const {
    return id == AgentId::kBuyer ? buyer_population : seller_population;
  }
  // Replays the turns into a fresh state, up to (excluding) turn `count`.
  DialogState Replay(int count) const;
};

struct EpisodeOptions {
  int max_turns = kDefaultMaxTurns;
  AgentId first_mover = AgentId::kBuyer;
  GenerationMode mode = GenerationMode::kStochastic;
  // Probability that `explorer` replaces its move with a random legal act.
  double explore = 0.0;
  std::optional<AgentId> explorer;
  // Share of exploratory moves that are offers; see RandomLegalAct.
  double explore_offer = 0.0;
};

// Plays one dialog to completion. Every act passes through Step, so the
// returned transcript is protocol-valid by construction.
Transcript PlayDialog(const Scenario& scenario, Negotiator& buyer,
                      Negotiator& seller, const TemplateBank& bank,
                      const EpisodeOptions& options, std::uint64_t seed);

// Random legal act. With probability `offer_share` (when an offer is legal)
// it is an offer; otherwise the intent is uniform over the legal set. Priced
// intents get a uniform price.
DialogAct RandomLegalAct(const DialogState& state, Rng& rng,
                         double offer_share = 0.0);

}  // namespace tomneg

#endif  // TOMNEG_EPISODE_H_
