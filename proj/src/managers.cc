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

#include "tomneg/managers.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tomneg/nn/training.h"
#include "fit.h"

namespace tomneg {
namespace {

IntentSet LegalAt(const Transcript& transcript, int turn) {
  if (turn == 0) return LegalResponses(std::nullopt);
  return LegalResponses(transcript.turns[turn - 1].turn.act);
}

int FindCandidate(const std::vector<Candidate>& candidates, Intent intent) {
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].act.intent == intent) return static_cast<int>(i);
  }
  return -1;
}

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::string_view ManagerKindName(ManagerKind kind) {
  switch (kind) {
    case ManagerKind::kSlRule:
      return "sl_rule";
    case ManagerKind::kRl:
      return "rl";
    case ManagerKind::kToMImplicit:
      return "tom_implicit";
    case ManagerKind::kToMExplicit:
      return "tom_explicit";
  }
  return "?";
}

std::optional<ManagerKind> ManagerKindFromName(std::string_view name) {
  for (ManagerKind kind : {ManagerKind::kSlRule, ManagerKind::kRl,
                           ManagerKind::kToMImplicit, ManagerKind::kToMExplicit}) {
    if (ManagerKindName(kind) == name) return kind;
  }
  return std::nullopt;
}

bool GuardAllows(const DialogState& state, AgentId self, const DialogAct& act,
                 const GuardConfig& guard) {
  if (!guard.enabled) return true;
  if (act.price && UtilityOf(self, *act.price) < guard.bottom_utility) {
    return false;
  }
  if (act.intent == Intent::kAccept) {
    const auto last = state.last_act();
    if (!last || !last->price ||
        UtilityOf(self, *last->price) < guard.bottom_utility) {
      return false;
    }
  }
  return true;
}

bool ApplyGuard(const DialogState& state, AgentId self,
                const std::vector<Candidate>& candidates,
                const GuardConfig& guard, Eigen::VectorXd* probs) {
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (!GuardAllows(state, self, candidates[i].act, guard)) (*probs)(i) = 0.0;
  }
  const double total = probs->sum();
  if (!(total > 0.0)) {
    probs->setZero();
    return false;
  }
  *probs /= total;
  return true;
}

DialogAct GuardFallback(const DialogState& state) {
  const auto last = state.last_act();
  if (last && last->intent == Intent::kOffer) {
    return DialogAct::Of(Intent::kReject);
  }
  return DialogAct::Of(Intent::kQuit);
}

int SampleCandidate(const Eigen::VectorXd& probs, Rng& rng) {
  return SampleIndex(std::span<const double>(probs.data(), probs.size()), rng);
}

PolicyManager::PolicyManager(ManagerKind kind,
                             std::shared_ptr<const PolicyModel> policy,
                             GuardConfig guard)
    : kind_(kind), policy_(std::move(policy)), guard_(guard) {
  if (kind != ManagerKind::kSlRule && kind != ManagerKind::kRl) {
    throw std::invalid_argument("PolicyManager serves SL+rule and RL only");
  }
}

Move PolicyManager::Act(const DialogState& state, AgentId self, Rng& rng) {
  const std::vector<Candidate> candidates = EnumerateCandidates(state, self);
  Eigen::VectorXd probs = policy_->Distribution(state, self, candidates);
  const auto last = state.last_act();
  if (kind_ == ManagerKind::kSlRule && last && last->intent == Intent::kOffer) {
    const bool ok = UtilityOf(self, *last->price) >= kSlAcceptUtility;
    probs.setZero();
    probs(FindCandidate(candidates, ok ? Intent::kAccept : Intent::kReject)) = 1.0;
  }
  int index;
  if (ApplyGuard(state, self, candidates, guard_, &probs)) {
    index = SampleCandidate(probs, rng);
  } else {
    index = FindCandidate(candidates, GuardFallback(state).intent);
  }
  if (recorder_) recorder_->push_back({state.turn_index(), candidates[index]});
  return Move{candidates[index].act, {}, false};
}

std::vector<Transcript> GenerateCorpus(const CorpusConfig& config,
                                       const std::vector<PopulationSpec>& roster,
                                       const TemplateBank& bank) {
  if (config.dialogs < 1) throw std::invalid_argument("corpus needs dialogs");
  if (roster.empty()) throw std::invalid_argument("empty population roster");
  std::vector<double> mixture = config.mixture;
  if (mixture.empty()) mixture.assign(roster.size(), 1.0);
  if (mixture.size() != roster.size()) {
    throw std::invalid_argument("mixture size differs from roster size");
  }
  EpisodeOptions options;
  options.mode = config.mode;
  options.explore = config.explore;
  options.explorer = config.agent;
  options.explore_offer = config.explore_offer;
  std::vector<Transcript> corpus;
  corpus.reserve(config.dialogs);
  for (int i = 0; i < config.dialogs; ++i) {
    const std::uint64_t seed = DeriveSeed(config.seed, i);
    Rng rng(seed);
    PopulationNegotiator agent(roster[rng() % roster.size()]);
    PopulationNegotiator opponent(roster[SampleIndex(mixture, rng)]);
    const Scenario scenario =
        SampleScenario(DeriveSeed(seed, 1), config.scenario);
    const bool agent_buys = config.agent == AgentId::kBuyer;
    corpus.push_back(PlayDialog(scenario, agent_buys ? agent : opponent,
                                agent_buys ? opponent : agent, bank, options,
                                DeriveSeed(seed, 2)));
  }
  return corpus;
}

Trajectory ExtractTrajectory(const Transcript& transcript, AgentId agent) {
  Trajectory trajectory;
  trajectory.agent = agent;
  for (size_t t = 0; t < transcript.turns.size(); ++t) {
    const Turn& turn = transcript.turns[t].turn;
    if (turn.agent != agent) continue;
    trajectory.steps.push_back({static_cast<int>(t), turn.act, 0.0});
  }
  if (!trajectory.steps.empty()) {
    trajectory.steps.back().reward = transcript.metrics.reward(agent);
  }
  return trajectory;
}

double PolicyLoss(const PolicyModel& model, const Transcript& transcript,
                  double alpha, Params* grads, int* samples) {
  const DialogState final_state =
      transcript.Replay(static_cast<int>(transcript.turns.size()));
  const int n = transcript.max_turns;
  double total = 0.0;
  int count = 0;
  for (AgentId side : {AgentId::kBuyer, AgentId::kSeller}) {
    std::vector<int> prefix;
    for (size_t t = 0; t < transcript.turns.size(); ++t) {
      const TranscriptTurn& turn = transcript.turns[t];
      if (turn.turn.agent == side && !turn.exploratory) {
        prefix.push_back(static_cast<int>(t));
      }
    }
    if (prefix.empty()) continue;
    const Eigen::MatrixXd x = HistoryFeatures(final_state, side);
    Eigen::MatrixXd queries(kContextDim, prefix.size());
    for (size_t b = 0; b < prefix.size(); ++b) {
      queries.col(b) = ContextFeatures(side, prefix[b], n);
    }
    Net::Trace trace;
    const Eigen::MatrixXd out =
        model.net().Forward(x, prefix, queries, grads ? &trace : nullptr);
    Eigen::MatrixXd d_out(out.rows(), out.cols());
    for (size_t b = 0; b < prefix.size(); ++b) {
      const DialogAct& act = transcript.turns[prefix[b]].turn.act;
      std::optional<double> utility;
      if (act.price) utility = UtilityOf(side, *act.price);
      const auto lg = nn::IntentPriceLoss<double>(
          out.col(b), kNumIntents, IntentIndex(act.intent), utility, alpha,
          IntentMask(LegalAt(transcript, prefix[b])));
      total += lg.loss;
      d_out.col(b) = lg.grad;
    }
    if (grads) model.net().Backward(trace, d_out, grads);
    count += static_cast<int>(prefix.size());
  }
  if (samples) *samples = count;
  return total;
}

double MeanPolicyLoss(const PolicyModel& model,
                      const std::vector<Transcript>& corpus, double alpha) {
  return internal::MeanLoss(
      model, corpus,
      [&](const PolicyModel& m, const Transcript& t, Params* g, int* n) {
        return PolicyLoss(m, t, alpha, g, n);
      });
}

PolicyModel TrainSl(const std::vector<Transcript>& corpus,
                    const ModelConfig& model_config, const TrainConfig& config,
                    TrainReport* report) {
  if (corpus.empty()) throw std::invalid_argument("TrainSl: empty corpus");
  PolicyModel model(model_config, DeriveSeed(config.seed, 0));
  internal::Fit(&model, corpus, config,
                [&](const PolicyModel& m, const Transcript& t, Params* g, int* n) {
                  return PolicyLoss(m, t, config.alpha, g, n);
                },
                report);
  return model;
}

Negotiator& OpponentPool::Draw(Rng& rng) const {
  if (members.empty()) throw std::invalid_argument("empty opponent pool");
  if (weights.empty()) return *members[rng() % members.size()];
  return *members[SampleIndex(weights, rng)];
}

OpponentPool PopulationPool(const std::vector<PopulationSpec>& roster,
                            const std::vector<double>& weights) {
  OpponentPool pool;
  for (const PopulationSpec& spec : roster) {
    pool.members.push_back(std::make_shared<PopulationNegotiator>(spec));
  }
  pool.weights = weights;
  return pool;
}

ValueModel CriticFromPolicy(const PolicyModel& policy, std::uint64_t seed) {
  ValueModel value(policy.config(), seed);
  value.net().params().CopyMatching(policy.net().params(), "enc.");
  return value;
}

double ActorLoss(const PolicyModel& model, const Transcript& transcript,
                 AgentId agent, const std::vector<Decision>& decisions,
                 const std::vector<double>& advantages, double entropy_weight,
                 Params* grads) {
  if (decisions.empty()) return 0.0;
  const DialogState final_state =
      transcript.Replay(static_cast<int>(transcript.turns.size()));
  const Eigen::MatrixXd x = HistoryFeatures(final_state, agent);
  std::vector<int> prefix;
  Eigen::MatrixXd queries(kContextDim, decisions.size());
  for (size_t k = 0; k < decisions.size(); ++k) {
    prefix.push_back(decisions[k].turn);
    queries.col(k) = ContextFeatures(agent, decisions[k].turn, transcript.max_turns);
  }
  Net::Trace trace;
  const Eigen::MatrixXd out = model.net().Forward(x, prefix, queries, &trace);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  double loss = 0.0;
  for (size_t k = 0; k < decisions.size(); ++k) {
    const Candidate& c = decisions[k].chosen;
    const double a = advantages[k];
    const nn::Mask mask = IntentMask(LegalAt(transcript, decisions[k].turn));
    const Eigen::VectorXd logits = out.col(k).head(kNumIntents);
    const Eigen::VectorXd p = nn::Softmax(logits, mask);
    const int target = IntentIndex(c.act.intent);
    loss -= a * std::log(p(target));
    Eigen::VectorXd d_logits = a * p;
    d_logits(target) -= a;
    if (entropy_weight > 0.0) {
      double entropy = 0.0;
      for (int i = 0; i < kNumIntents; ++i) {
        if (p(i) > 0.0) entropy -= p(i) * std::log(p(i));
      }
      loss -= entropy_weight * entropy;
      for (int i = 0; i < kNumIntents; ++i) {
        if (p(i) > 0.0) {
          d_logits(i) += entropy_weight * p(i) * (std::log(p(i)) + entropy);
        }
      }
    }
    d_out.col(k).head(kNumIntents) = d_logits;
    if (c.grid >= 0) {
      const double mean = Sigmoid(out(kNumIntents, k));
      const Eigen::VectorXd price =
          nn::DiscretizedGaussian(mean, kPriceSigma, PriceGrid());
      loss -= a * std::log(price(c.grid));
      d_out(kNumIntents, k) =
          -a * nn::DiscretizedGaussianScore(mean, kPriceSigma, PriceGrid(), c.grid) *
          mean * (1.0 - mean);
    }
  }
  if (grads) model.net().Backward(trace, d_out, grads);
  return loss;
}

double CriticLoss(const ValueModel& value, const Transcript& transcript,
                  AgentId agent, const std::vector<int>& turns,
                  const std::vector<double>& targets, Params* grads,
                  std::vector<double>* predictions) {
  if (turns.empty()) return 0.0;
  const DialogState final_state =
      transcript.Replay(static_cast<int>(transcript.turns.size()));
  const Eigen::MatrixXd x = HistoryFeatures(final_state, agent);
  std::vector<int> prefix;
  Eigen::MatrixXd queries(ValueModel::kQueryDim, turns.size());
  for (size_t k = 0; k < turns.size(); ++k) {
    prefix.push_back(ValueModel::Prefix(turns[k]));
    queries.col(k) = ValueModel::Query(x, turns[k], agent, transcript.max_turns);
  }
  Net::Trace trace;
  const Eigen::MatrixXd out = value.net().Forward(x, prefix, queries, &trace);
  if (predictions) {
    predictions->assign(out.data(), out.data() + out.size());
  }
  Eigen::MatrixXd d_out(1, turns.size());
  double loss = 0.0;
  for (size_t k = 0; k < turns.size(); ++k) {
    const double diff = out(0, k) - targets[k];
    loss += diff * diff;
    d_out(0, k) = 2.0 * diff;
  }
  if (grads) value.net().Backward(trace, d_out, grads);
  return loss;
}

std::vector<double> CriticValues(const ValueModel& value,
                                 const Transcript& transcript, AgentId agent,
                                 const std::vector<int>& turns) {
  std::vector<double> predictions;
  const std::vector<double> zeros(turns.size(), 0.0);
  CriticLoss(value, transcript, agent, turns, zeros, nullptr, &predictions);
  return predictions;
}

double MeanReward(Negotiator& agent_manager, const OpponentPool& opponents,
                  const TemplateBank& bank, AgentId agent,
                  const ScenarioConfig& scenario, GenerationMode mode,
                  int episodes, std::uint64_t seed) {
  EpisodeOptions options;
  options.mode = mode;
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t s = DeriveSeed(seed, i);
    Rng rng(s);
    Negotiator& opponent = opponents.Draw(rng);
    const Scenario sc = SampleScenario(DeriveSeed(s, 1), scenario);
    const bool buys = agent == AgentId::kBuyer;
    const Transcript t =
        PlayDialog(sc, buys ? agent_manager : opponent,
                   buys ? opponent : agent_manager, bank, options,
                   DeriveSeed(s, 2));
    total += t.metrics.reward(agent);
  }
  return episodes > 0 ? total / episodes : 0.0;
}

ActorCritic TrainRl(const PolicyModel& init, const OpponentPool& opponents,
                    const TemplateBank& bank, const RlConfig& config,
                    RlReport* report) {
  auto policy = std::make_shared<PolicyModel>(init);
  ValueModel value = CriticFromPolicy(init, DeriveSeed(config.seed, 0));
  RlReport local;
  RlReport& rep = report ? *report : local;
  rep = RlReport{};
  if (config.iterations <= 0) return {*policy, value};

  nn::AdamConfig actor_config;
  actor_config.learning_rate = config.learning_rate;
  actor_config.clip_norm = config.clip_norm;
  nn::AdamConfig critic_config = actor_config;
  critic_config.learning_rate = config.value_learning_rate;
  nn::Adam<double> actor(policy->net().params(), actor_config);
  nn::Adam<double> critic(value.net().params(), critic_config);

  PolicyManager manager(ManagerKind::kRl, policy, config.guard);
  PolicyManager mirror(ManagerKind::kRl, policy, config.guard);
  std::vector<Decision> decisions;
  std::vector<Decision> mirror_decisions;
  manager.set_recorder(&decisions);
  mirror.set_recorder(&mirror_decisions);
  EpisodeOptions options;
  options.mode = config.mode;
  const bool buys = config.agent == AgentId::kBuyer;

  double best_reward = -std::numeric_limits<double>::infinity();
  ActorCritic best{*policy, value};
  const std::uint64_t eval_seed = DeriveSeed(config.seed, 99);

  for (int iter = 0; iter < config.iterations; ++iter) {
    Params actor_grads = policy->net().params().ZerosLike();
    Params critic_grads = value.net().params().ZerosLike();
    int steps = 0;
    double reward_sum = 0.0;
    // One-step TD on the decisions of `side`; the final target is the
    // episode reward.
    auto accumulate = [&](const Transcript& t, AgentId side,
                          const std::vector<Decision>& made) {
      if (made.empty()) return;
      const double reward = t.metrics.reward(side);
      std::vector<int> turns;
      for (const Decision& d : made) turns.push_back(d.turn);
      const std::vector<double> v = CriticValues(value, t, side, turns);
      std::vector<double> targets(turns.size()), advantages(turns.size());
      for (size_t k = 0; k < turns.size(); ++k) {
        targets[k] = k + 1 < turns.size() ? v[k + 1] : reward;
        advantages[k] = targets[k] - v[k];
      }
      CriticLoss(value, t, side, turns, targets, &critic_grads);
      if (iter >= config.critic_warmup) {
        ActorLoss(*policy, t, side, made, advantages, config.entropy_weight,
                  &actor_grads);
      }
      steps += static_cast<int>(turns.size());
    };
    for (int e = 0; e < config.episodes_per_iteration; ++e) {
      const std::uint64_t s =
          DeriveSeed(config.seed, 1000 + iter * config.episodes_per_iteration + e);
      Rng rng(s);
      Negotiator& opponent =
          config.self_play ? static_cast<Negotiator&>(mirror) : opponents.Draw(rng);
      const Scenario sc = SampleScenario(DeriveSeed(s, 1), config.scenario);
      decisions.clear();
      mirror_decisions.clear();
      const Transcript t = PlayDialog(sc, buys ? static_cast<Negotiator&>(manager) : opponent,
                                      buys ? opponent : static_cast<Negotiator&>(manager),
                                      bank, options, DeriveSeed(s, 2));
      reward_sum += t.metrics.reward(config.agent);
      accumulate(t, config.agent, decisions);
      if (config.self_play) accumulate(t, Other(config.agent), mirror_decisions);
    }
    rep.reward_curve.push_back(reward_sum / config.episodes_per_iteration);
    if (steps > 0) {
      critic_grads.Scale(1.0 / steps);
      critic.Step(&value.net().params(), critic_grads);
      if (iter >= config.critic_warmup) {
        actor_grads.Scale(1.0 / steps);
        actor.Step(&policy->net().params(), actor_grads);
      }
    }
    const bool last = iter + 1 == config.iterations;
    if (config.eval_every > 0 && ((iter + 1) % config.eval_every == 0 || last) &&
        iter >= config.critic_warmup) {
      manager.set_recorder(nullptr);
      const double r = MeanReward(manager, opponents, bank, config.agent,
                                  config.scenario, config.mode,
                                  config.eval_episodes, eval_seed);
      manager.set_recorder(&decisions);
      rep.eval_reward.push_back(r);
      if (r > best_reward) {
        best_reward = r;
        rep.best_iteration = iter;
        best = {*policy, value};
      }
    }
  }
  if (rep.best_iteration < 0) {
    rep.best_iteration = config.iterations - 1;
    best = {*policy, value};
  }
  return best;
}

}  // namespace tomneg
