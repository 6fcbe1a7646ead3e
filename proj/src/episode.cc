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

#include "tomneg/episode.h"

#include <vector>

namespace tomneg {

DialogState Transcript::Replay(int count) const {
  DialogState state(scenario, max_turns, first_mover);
  for (int i = 0; i < count && i < static_cast<int>(turns.size()); ++i) {
    const Turn& turn = turns[i].turn;
    state = Step(state, turn.agent, turn.act, turn.utterance).state;
  }
  return state;
}

DialogAct RandomLegalAct(const DialogState& state, Rng& rng,
                         double offer_share) {
  const IntentSet allowed = LegalResponses(state.last_act());
  if (offer_share > 0.0 && allowed.Contains(Intent::kOffer) &&
      Uniform01(rng) < offer_share) {
    return DialogAct::Of(Intent::kOffer, Uniform01(rng));
  }
  const std::vector<Intent> legal = allowed.ToVector();
  const Intent intent = legal[rng() % legal.size()];
  if (RequiresPrice(intent)) return DialogAct::Of(intent, Uniform01(rng));
  return DialogAct::Of(intent);
}

Transcript PlayDialog(const Scenario& scenario, Negotiator& buyer,
                      Negotiator& seller, const TemplateBank& bank,
                      const EpisodeOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  Transcript transcript;
  transcript.seed = seed;
  transcript.scenario = scenario;
  transcript.max_turns = options.max_turns;
  transcript.first_mover = options.first_mover;
  transcript.buyer_label = buyer.label();
  transcript.seller_label = seller.label();
  transcript.buyer_population = buyer.population_id();
  transcript.seller_population = seller.population_id();

  DialogState state(scenario, options.max_turns, options.first_mover);
  std::optional<Outcome> outcome;
  while (!outcome) {
    const AgentId actor = state.whose_turn();
    Negotiator& negotiator = actor == AgentId::kBuyer ? buyer : seller;
    Move move = negotiator.Act(state, actor, rng);
    if (options.explorer == actor && options.explore > 0.0 &&
        Uniform01(rng) < options.explore) {
      move.act = RandomLegalAct(state, rng, options.explore_offer);
      move.exploratory = true;
      if (IsSilent(move.act.intent)) move.style_tokens.clear();
    }
    Utterance utterance = Generate(bank, state, move.act,
                                   std::move(move.style_tokens), options.mode,
                                   rng);
    StepResult result = Step(state, actor, move.act, utterance);
    transcript.turns.push_back(
        {Turn{actor, move.act, std::move(utterance)}, move.exploratory});
    state = std::move(result.state);
    outcome = result.outcome;
  }
  transcript.outcome = *outcome;
  transcript.metrics = ComputeMetrics(*outcome, scenario);
  return transcript;
}

}  // namespace tomneg
