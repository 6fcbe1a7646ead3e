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

#ifndef TOMNEG_TOM_H_
#define TOMNEG_TOM_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tomneg/environment.h"
#include "tomneg/episode.h"
#include "tomneg/generator.h"
#include "tomneg/managers.h"
#include "tomneg/models.h"
#include "tomneg/populations.h"
#include "tomneg/random.h"

namespace tomneg {

enum class ToMMode { kImplicit, kExplicit };
enum class ScoreVariant { kExpected, kCompetitive, kCooperative };

std::string_view ToMModeName(ToMMode mode);
std::optional<ToMMode> ToMModeFromName(std::string_view name);
std::string_view ScoreVariantName(ScoreVariant variant);
std::optional<ScoreVariant> ScoreVariantFromName(std::string_view name);

// Opponent-type classifier over the kNumPopulations types. Reads act
// features plus opponent style features; the query is the context.
class Identifier {
 public:
  static constexpr int kOutputDim = kNumPopulations;

  Identifier() = default;
  Identifier(const ModelConfig& config, std::uint64_t seed);
  Identifier(const ModelConfig& config, const Params& params);

  // Type distribution at the state; uniform before any opponent turn.
  Eigen::VectorXd Identify(const DialogState& state, AgentId observer) const;
  // Column t holds the distribution after the first t turns, t = 0..T.
  Eigen::MatrixXd IdentifyPrefixes(const DialogState& state,
                                   AgentId observer) const;
  // Hidden MLP activations at the state, used as the type embedding.
  Eigen::VectorXd Embedding(const DialogState& state, AgentId observer) const;

  Net& net() { return net_; }
  const Net& net() const { return net_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  Net net_;
};

Net::Config IdentifierNetConfig(const ModelConfig& config);

// First-order transition model: the opponent's reply to one of our acts.
// Query = [own act features, own style features, condition, context], where
// the condition is the identifier's type distribution (explicit) or the
// last opponent style features (implicit).
class TransitionModel {
 public:
  static constexpr int kOutputDim = kNumIntents + 1;
  static int ConditionDim(ToMMode mode);
  static int QueryDim(ToMMode mode);

  TransitionModel() = default;
  TransitionModel(ToMMode mode, const ModelConfig& config, std::uint64_t seed);
  TransitionModel(ToMMode mode, const ModelConfig& config, const Params& params);

  struct Prediction {
    Eigen::VectorXd intent_probs;  // zero outside LegalResponses(own act)
    double price_utility = 0.5;    // reply price as the observer's utility
  };

  // Predictions for own acts `acts` (with style features `styles`) spoken
  // at the state's current turn.
  std::vector<Prediction> Predict(const DialogState& state, AgentId self,
                                  const std::vector<DialogAct>& acts,
                                  const std::vector<StyleFeatureVector>& styles,
                                  const Eigen::VectorXd& condition) const;

  static Eigen::VectorXd Query(ToMMode mode, const Eigen::VectorXd& act,
                               const StyleFeatureVector& style,
                               const Eigen::VectorXd& condition,
                               const Eigen::VectorXd& context);

  ToMMode mode() const { return mode_; }
  Net& net() { return net_; }
  const Net& net() const { return net_; }
  const ModelConfig& config() const { return config_; }

 private:
  ToMMode mode_ = ToMMode::kExplicit;
  ModelConfig config_;
  Net net_;
};

Net::Config TransitionNetConfig(ToMMode mode, const ModelConfig& config);

// Condition input of the transition model at `state`.
Eigen::VectorXd Condition(ToMMode mode, const DialogState& state, AgentId self,
                          const Identifier* identifier);

struct ToMConfig {
  ToMMode mode = ToMMode::kExplicit;
  ScoreVariant variant = ScoreVariant::kExpected;
  double beta = 0.05;
  int grid_size = kPriceGridSize;
  // Utterance support size for stochastic generation.
  int utterance_samples = 3;
  GenerationMode generation = GenerationMode::kDeterministic;
  // Successors below this probability are ignored by the min/max variants.
  double support_threshold = 1e-3;
  bool combine_prior = true;
  GuardConfig guard;
};

// One utterance of a candidate: its probability under the generator and the
// distribution over successor states with their values.
struct Branch {
  double weight = 1.0;
  Eigen::VectorXd probs;
  Eigen::VectorXd values;
};

struct VariantScores {
  double expected = 0.0;
  double competitive = 0.0;
  double cooperative = 0.0;

  double Get(ScoreVariant variant) const;
};

// Expected value over branches and successors; the competitive (cooperative)
// score replaces each branch's expectation by its minimum (maximum) value
// over successors with probability above `support_threshold`, or above zero
// when none clears it.
VariantScores CombineBranches(const std::vector<Branch>& branches,
                              double support_threshold);

// Mean value of `samples` draws of (utterance, successor).
double MonteCarloScore(const std::vector<Branch>& branches, int samples,
                       Rng& rng);

// Replies to `own`, priced ones crossed with `grid` as the observer's utility.
std::vector<Candidate> ResponseCandidates(const DialogAct& own,
                                          AgentId observer,
                                          const Eigen::VectorXd& grid);

struct ToMModels {
  const TransitionModel* transition = nullptr;
  const ValueModel* value = nullptr;
  const Identifier* identifier = nullptr;  // explicit mode
  const PolicyModel* prior = nullptr;      // pi_rl
  const TemplateBank* bank = nullptr;
};

// Lookahead scores of `candidates` at the state. Successor values are
// rewards at terminal successors and V(s') otherwise, minus
// `shaping * StandingGap(s')` at non-terminal successors. Branch detail is
// written to `detail` when given.
std::vector<VariantScores> ScoreCandidates(
    const DialogState& state, AgentId self,
    const std::vector<Candidate>& candidates, const ToMModels& models,
    const ToMConfig& config, double shaping = 0.0,
    std::vector<std::vector<Branch>>* detail = nullptr);

// softmax(scores / beta), shifted by the maximum.
Eigen::VectorXd Boltzmann(const Eigen::VectorXd& scores, double beta);

// prior * tom renormalized; returns the prior when the product vanishes.
Eigen::VectorXd CombinePrior(const Eigen::VectorXd& prior,
                             const Eigen::VectorXd& tom);

struct ToMDecision {
  std::vector<Candidate> candidates;
  Eigen::VectorXd scores;
  Eigen::VectorXd tom;       // Boltzmann policy
  Eigen::VectorXd prior;     // pi_rl
  Eigen::VectorXd combined;  // after the guard
  Eigen::VectorXd identity;  // type distribution, explicit mode
  int chosen = -1;
  bool fallback = false;  // guard removed every candidate
};

// Identify, score, Boltzmann, combine with the prior, guard, sample.
ToMDecision ToMDecide(const DialogState& state, AgentId self,
                      const ToMModels& models, const ToMConfig& config,
                      Rng& rng);

class ToMManager : public Negotiator {
 public:
  ToMManager(ToMModels models, ToMConfig config);

  Move Act(const DialogState& state, AgentId self, Rng& rng) override;
  std::string label() const override;

  void set_recorder(std::vector<Decision>* recorder) { recorder_ = recorder; }
  // One JSON line per decision: top candidates, scores and probabilities.
  void set_debug(std::ostream* out) { debug_ = out; }

  const ToMConfig& config() const { return config_; }

 private:
  ToMModels models_;
  ToMConfig config_;
  std::vector<Decision>* recorder_ = nullptr;
  std::ostream* debug_ = nullptr;
};

// Identifier training: every prefix of the agent's view with at least one
// opponent turn, labelled by the opponent population.
double IdentifierLoss(const Identifier& model, const Transcript& transcript,
                      AgentId agent, Params* grads, int* samples);

Identifier TrainIdentifier(const std::vector<Transcript>& corpus, AgentId agent,
                           const ModelConfig& model, const TrainConfig& config,
                           TrainReport* report = nullptr);

struct IdentifierAccuracy {
  double top1 = 0.0;
  double top3 = 0.0;
  int dialogs = 0;
};

// Accuracy after `opponent_turns` opponent turns, or at the end of dialogs
// that have fewer.
IdentifierAccuracy EvaluateIdentifier(const Identifier& model,
                                      const std::vector<Transcript>& corpus,
                                      AgentId agent, int opponent_turns = 6);

// Transition training: each agent act that draws a reply. The own style
// features are the agent's neutral ones, OwnStyleFeatures.
double TransitionLoss(const TransitionModel& model, const Transcript& transcript,
                      AgentId agent, const Identifier* identifier, double alpha,
                      Params* grads, int* samples);

TransitionModel TrainTransition(const std::vector<Transcript>& corpus,
                                AgentId agent, ToMMode mode,
                                const Identifier* identifier,
                                const ModelConfig& model,
                                const TrainConfig& config,
                                TrainReport* report = nullptr);

// Mean squared error of the predicted reply price over priced replies.
double TransitionPriceMse(const TransitionModel& model,
                          const std::vector<Transcript>& corpus, AgentId agent,
                          const Identifier* identifier);

struct FinetuneConfig {
  int iterations = 50;
  int episodes_per_iteration = 8;
  double learning_rate = 1e-3;
  double value_learning_rate = 1e-3;
  // Weight of the standing-gap penalty in the critic's one-step target.
  double shaping = 0.1;
  double clip_norm = 5.0;
  int eval_every = 10;
  int eval_episodes = 100;
  AgentId agent = AgentId::kBuyer;
  ScenarioConfig scenario;
  GenerationMode mode = GenerationMode::kStochastic;
  std::uint64_t seed = 3;
};

struct FinetuneReport {
  std::vector<double> reward_curve;
  // The first entry evaluates the initial models.
  std::vector<double> eval_reward;
  // -1 when the initial models are kept.
  int best_iteration = -1;
};

// Actor-critic fine-tuning of pi_rl and V under the ToM policy. The critic
// target of a decision is the expectation under T of r(s') + V_k(s') for the
// chosen act, with V_k frozen per iteration.
ActorCritic FinetuneToM(const ActorCritic& init, const TransitionModel& transition,
                        const Identifier* identifier, const OpponentPool& opponents,
                        const TemplateBank& bank, const ToMConfig& tom,
                        const FinetuneConfig& config,
                        FinetuneReport* report = nullptr);

}  // namespace tomneg

#endif  // TOMNEG_TOM_H_
