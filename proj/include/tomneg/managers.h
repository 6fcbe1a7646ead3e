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

#ifndef TOMNEG_MANAGERS_H_
#define TOMNEG_MANAGERS_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tomneg/environment.h"
#include "tomneg/episode.h"
#include "tomneg/generator.h"
#include "tomneg/models.h"
#include "tomneg/populations.h"
#include "tomneg/random.h"

namespace tomneg {

enum class ManagerKind { kSlRule, kRl, kToMImplicit, kToMExplicit };

std::string_view ManagerKindName(ManagerKind kind);
std::optional<ManagerKind> ManagerKindFromName(std::string_view name);

// Hand-written rules shared by every manager: never name a price below the
// bottom line and never accept an offer below it.
struct GuardConfig {
  bool enabled = true;
  double bottom_utility = 0.0;
};

bool GuardAllows(const DialogState& state, AgentId self, const DialogAct& act,
                 const GuardConfig& guard);
// Zeroes disallowed candidates and renormalizes. Returns false (leaving
// `probs` all zero) when nothing survives.
bool ApplyGuard(const DialogState& state, AgentId self,
                const std::vector<Candidate>& candidates,
                const GuardConfig& guard, Eigen::VectorXd* probs);
// Used when no candidate survives: reject a standing offer, otherwise quit.
DialogAct GuardFallback(const DialogState& state);

// SL+rule accepts an offer only at this utility or better.
inline constexpr double kSlAcceptUtility = 0.7;

struct Decision {
  int turn = 0;
  Candidate chosen;
};

// SL+rule and RL managers: sample from the policy network's candidate
// distribution, apply the rules, and sample.
class PolicyManager : public Negotiator {
 public:
  PolicyManager(ManagerKind kind, std::shared_ptr<const PolicyModel> policy,
                GuardConfig guard = {});

  Move Act(const DialogState& state, AgentId self, Rng& rng) override;
  std::string label() const override {
    return std::string(ManagerKindName(kind_));
  }

  // Decisions are appended here when set.
  void set_recorder(std::vector<Decision>* recorder) { recorder_ = recorder; }

 private:
  ManagerKind kind_;
  std::shared_ptr<const PolicyModel> policy_;
  GuardConfig guard_;
  std::vector<Decision>* recorder_ = nullptr;
};

// Samples an index of `probs` (assumed normalized).
int SampleCandidate(const Eigen::VectorXd& probs, Rng& rng);

// ---------------------------------------------------------------------------
// Corpus

struct CorpusConfig {
  int dialogs = 5000;
  // The agent side explores with this probability per turn; exploratory
  // turns are flagged and never used as policy targets.
  double explore = 0.2;
  // Share of exploratory moves that are offers at a uniform price.
  double explore_offer = 0.25;
  AgentId agent = AgentId::kBuyer;
  // Opponent population weights; empty means uniform.
  std::vector<double> mixture;
  ScenarioConfig scenario;
  GenerationMode mode = GenerationMode::kStochastic;
  std::uint64_t seed = 1;
};

// Population-vs-population self-play. Both sides are drawn from the roster:
// the agent side uniformly, the opponent from `mixture`.
std::vector<Transcript> GenerateCorpus(const CorpusConfig& config,
                                       const std::vector<PopulationSpec>& roster,
                                       const TemplateBank& bank);

// The (state, act, reward) sequence of one side; rewards are zero except on
// the last step.
struct Trajectory {
  struct Step {
    int turn = 0;
    DialogAct act;
    double reward = 0.0;
  };
  AgentId agent = AgentId::kBuyer;
  std::vector<Step> steps;
};

Trajectory ExtractTrajectory(const Transcript& transcript, AgentId agent);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-3;
  double alpha = 1.0;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  double clip_norm = 5.0;
};

struct TrainReport {
  std::vector<double> train_loss;       // mean per-sample loss per epoch
  std::vector<double> validation_loss;  // after each epoch
  double initial_validation_loss = 0.0;
  int best_epoch = -1;
};

// Policy targets: every non-exploratory act of either side, with the
// intent distribution masked to the legal set.
double PolicyLoss(const PolicyModel& model, const Transcript& transcript,
                  double alpha, Params* grads, int* samples);

// Mean per-sample policy loss over `corpus`.
double MeanPolicyLoss(const PolicyModel& model,
                      const std::vector<Transcript>& corpus, double alpha);

// Minimizes CE(intent) + alpha * MSE(price) and keeps the epoch with the
// lowest validation loss. Throws std::invalid_argument on an empty corpus.
PolicyModel TrainSl(const std::vector<Transcript>& corpus,
                    const ModelConfig& model, const TrainConfig& config,
                    TrainReport* report = nullptr);

// One opponent per episode, drawn from `weights`.
struct OpponentPool {
  std::vector<std::shared_ptr<Negotiator>> members;
  std::vector<double> weights;

  Negotiator& Draw(Rng& rng) const;
};

OpponentPool PopulationPool(const std::vector<PopulationSpec>& roster,
                            const std::vector<double>& weights = {});

struct RlConfig {
  int iterations = 300;
  int episodes_per_iteration = 16;
  double learning_rate = 1e-4;
  double value_learning_rate = 1e-3;
  // Iterations at the start that train only the critic.
  int critic_warmup = 20;
  double entropy_weight = 0.0;
  double clip_norm = 5.0;
  int eval_every = 25;
  int eval_episodes = 200;
  AgentId agent = AgentId::kBuyer;
  ScenarioConfig scenario;
  GenerationMode mode = GenerationMode::kStochastic;
  GuardConfig guard;
  // Train against the learning policy itself, updating from both sides. The
  // opponent pool is then used only for evaluation and model selection.
  bool self_play = true;
  std::uint64_t seed = 2;
};

struct RlReport {
  std::vector<double> reward_curve;  // mean training reward per iteration
  std::vector<double> eval_reward;   // at each evaluation point
  int best_iteration = -1;
};

struct ActorCritic {
  PolicyModel policy;
  ValueModel value;
};

// Fresh critic whose encoder starts from the policy encoder.
ValueModel CriticFromPolicy(const PolicyModel& policy, std::uint64_t seed);

// Policy-gradient term for the agent's decisions in one transcript:
// sum_k -advantage_k * log pi(a_k | s_k), plus optional entropy bonus on the
// intent distribution. Accumulates into `grads` and returns the loss.
double ActorLoss(const PolicyModel& model, const Transcript& transcript,
                 AgentId agent, const std::vector<Decision>& decisions,
                 const std::vector<double>& advantages, double entropy_weight,
                 Params* grads);

// Sum of (V(s_k) - target_k)^2 over the given decision turns.
double CriticLoss(const ValueModel& value, const Transcript& transcript,
                  AgentId agent, const std::vector<int>& turns,
                  const std::vector<double>& targets, Params* grads,
                  std::vector<double>* predictions = nullptr);

// V(s_k) for each turn in `turns`.
std::vector<double> CriticValues(const ValueModel& value,
                                 const Transcript& transcript, AgentId agent,
                                 const std::vector<int>& turns);

// Actor-critic with one-step TD advantages (gamma = 1), initialized from
// `init`. Keeps the evaluation point with the highest mean reward.
ActorCritic TrainRl(const PolicyModel& init, const OpponentPool& opponents,
                    const TemplateBank& bank, const RlConfig& config,
                    RlReport* report = nullptr);

// Mean agent reward of `agent_manager` over `episodes` seeded dialogs.
double MeanReward(Negotiator& agent_manager, const OpponentPool& opponents,
                  const TemplateBank& bank, AgentId agent,
                  const ScenarioConfig& scenario, GenerationMode mode,
                  int episodes, std::uint64_t seed);

}  // namespace tomneg

#endif  // TOMNEG_MANAGERS_H_
