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

// Central-difference checks of every trainable head on real transcripts.

#ifndef TOMNEG_TESTS_GRAD_HEADS_H_
#define TOMNEG_TESTS_GRAD_HEADS_H_

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tomneg/tom.h"

namespace tomneg::testing {

struct HeadCheck {
  std::string head;
  double max_relative_error = 0.0;
};

// Probes at a jittered copy of `params`: zero-initialized biases put some
// softsign inputs exactly on the kink at 0, where differences are one-sided.
inline double CheckLoss(const std::function<double(const Params&, Params*)>& loss,
                        Params params, int probes, std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, 7));
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (int i = 0; i < params.size(); ++i) {
    for (Eigen::Index j = 0; j < params[i].size(); ++j) {
      params[i].data()[j] += jitter(rng);
    }
  }
  Params grads = params.ZerosLike();
  loss(params, &grads);
  const std::function<double(const Params&)> value = [&](const Params& p) {
    return loss(p, nullptr);
  };
  return nn::GradCheck<double>(value, params, grads, probes, 1e-3, seed)
      .max_relative_error;
}

inline std::vector<HeadCheck> CheckAllHeads(std::uint64_t seed, int probes = 200) {
  const ModelConfig mc{6, 2, 5};
  const auto roster = DefaultPopulations();
  const TemplateBank& bank = TemplateBank::Default();

  auto policy = std::make_shared<PolicyModel>(mc, DeriveSeed(seed, 1));
  PolicyManager agent(ManagerKind::kRl, policy);
  std::vector<Decision> decisions;
  agent.set_recorder(&decisions);
  PopulationNegotiator seller(roster[3]);
  Transcript transcript;
  // Keep a dialog with several agent decisions and at least one priced act.
  for (std::uint64_t k = 0;; ++k) {
    decisions.clear();
    transcript = PlayDialog(SampleScenario(DeriveSeed(seed, 100 + k), {}), agent,
                            seller, bank, {}, DeriveSeed(seed, 200 + k));
    bool priced = false;
    for (const Decision& d : decisions) priced = priced || d.chosen.grid >= 0;
    if (decisions.size() >= 4 && priced) break;
  }
  const AgentId buyer = AgentId::kBuyer;
  std::vector<int> turns;
  std::vector<double> targets, advantages;
  for (size_t k = 0; k < decisions.size(); ++k) {
    turns.push_back(decisions[k].turn);
    targets.push_back(0.3 - 0.2 * static_cast<double>(k));
    advantages.push_back(k % 2 == 0 ? 0.7 : -0.4);
  }

  std::vector<HeadCheck> out;
  out.push_back({"policy (intent + price)",
                 CheckLoss([&](const Params& p, Params* g) {
                   return PolicyLoss(PolicyModel(mc, p), transcript, 1.0, g, nullptr);
                 }, policy->net().params(), probes, seed)});
  out.push_back({"actor (policy gradient)",
                 CheckLoss([&](const Params& p, Params* g) {
                   return ActorLoss(PolicyModel(mc, p), transcript, buyer,
                                    decisions, advantages, 0.01, g);
                 }, policy->net().params(), probes, seed + 1)});
  const ValueModel value(mc, DeriveSeed(seed, 2));
  out.push_back({"critic",
                 CheckLoss([&](const Params& p, Params* g) {
                   return CriticLoss(ValueModel(mc, p), transcript, buyer, turns,
                                     targets, g);
                 }, value.net().params(), probes, seed + 2)});
  const Identifier identifier(mc, DeriveSeed(seed, 3));
  out.push_back({"identifier",
                 CheckLoss([&](const Params& p, Params* g) {
                   return IdentifierLoss(Identifier(mc, p), transcript, buyer, g,
                                         nullptr);
                 }, identifier.net().params(), probes, seed + 3)});
  for (ToMMode mode : {ToMMode::kExplicit, ToMMode::kImplicit}) {
    const TransitionModel tm(mode, mc, DeriveSeed(seed, 4));
    out.push_back({"transition (" + std::string(ToMModeName(mode)) + ")",
                   CheckLoss([&](const Params& p, Params* g) {
                     return TransitionLoss(TransitionModel(mode, mc, p), transcript,
                                           buyer, &identifier, 1.0, g, nullptr);
                   }, tm.net().params(), probes, seed + 4)});
  }
  return out;
}

}  // namespace tomneg::testing

#endif  // TOMNEG_TESTS_GRAD_HEADS_H_
