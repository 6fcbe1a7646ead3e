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

#include "tomneg/tom.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "fit.h"
#include "tomneg/nn/training.h"

namespace tomneg {
namespace {

double Sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

int FindIntent(const std::vector<Candidate>& candidates, Intent intent) {
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].act.intent == intent) return static_cast<int>(i);
  }
  return -1;
}

bool HasOpponentTurn(const std::vector<Turn>& history, AgentId observer,
                     int count) {
  for (int t = 0; t < count; ++t) {
    if (history[t].agent != observer) return true;
  }
  return false;
}

// Style features of the last opponent utterance among the first `count`
// turns.
StyleFeatureVector OpponentStyleBefore(const std::vector<Turn>& history,
                                       AgentId observer, int count, int n) {
  for (int t = count - 1; t >= 0; --t) {
    if (history[t].agent != observer) {
      return StyleFeatures(history[t].utterance, t, n);
    }
  }
  return StyleFeatureVector::Zero();
}

double DealReward(const Scenario& scenario, AgentId self, double price,
                  int length) {
  Outcome outcome;
  outcome.kind = OutcomeKind::kDeal;
  outcome.deal_price = price;
  outcome.length = length;
  return Reward(outcome, self, scenario);
}

double UtilityOrDefault(const std::optional<DialogAct>& act, AgentId self,
                        double fallback) {
  return act && act->price ? UtilityOf(self, *act->price) : fallback;
}

Branch SingleOutcome(double value) {
  Branch b;
  b.probs = Eigen::VectorXd::Ones(1);
  b.values = Eigen::VectorXd::Constant(1, value);
  return b;
}

}  // namespace

std::string_view ToMModeName(ToMMode mode) {
  return mode == ToMMode::kImplicit ? "implicit" : "explicit";
}

std::optional<ToMMode> ToMModeFromName(std::string_view name) {
  if (name == "implicit") return ToMMode::kImplicit;
  if (name == "explicit") return ToMMode::kExplicit;
  return std::nullopt;
}

std::string_view ScoreVariantName(ScoreVariant variant) {
  switch (variant) {
    case ScoreVariant::kExpected:
      return "expected";
    case ScoreVariant::kCompetitive:
      return "competitive";
    case ScoreVariant::kCooperative:
      return "cooperative";
  }
  return "expected";
}

std::optional<ScoreVariant> ScoreVariantFromName(std::string_view name) {
  for (ScoreVariant v : {ScoreVariant::kExpected, ScoreVariant::kCompetitive,
                         ScoreVariant::kCooperative}) {
    if (ScoreVariantName(v) == name) return v;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Identifier

Net::Config IdentifierNetConfig(const ModelConfig& config) {
  Net::Config c;
  c.input_dim = kIdentifierInputDim;
  c.query_dim = kContextDim;
  c.hidden = config.hidden;
  c.layers = config.layers;
  c.mlp = config.mlp;
  c.output_dim = Identifier::kOutputDim;
  return c;
}

Identifier::Identifier(const ModelConfig& config, std::uint64_t seed)
    : config_(config), net_(IdentifierNetConfig(config), seed) {}

Identifier::Identifier(const ModelConfig& config, const Params& params)
    : config_(config), net_(IdentifierNetConfig(config), params) {}

Eigen::MatrixXd Identifier::IdentifyPrefixes(const DialogState& state,
                                             AgentId observer) const {
  const int T = state.turn_index();
  const Eigen::MatrixXd x = IdentifierFeatures(state, observer);
  std::vector<int> prefix(T + 1);
  std::iota(prefix.begin(), prefix.end(), 0);
  Eigen::MatrixXd queries(kContextDim, T + 1);
  for (int t = 0; t <= T; ++t) {
    queries.col(t) = ContextFeatures(observer, t, state.max_turns());
  }
  const Eigen::MatrixXd out = net_.Forward(x, prefix, queries);
  Eigen::MatrixXd probs(kOutputDim, T + 1);
  for (int t = 0; t <= T; ++t) {
    if (HasOpponentTurn(state.history(), observer, t)) {
      probs.col(t) = nn::Softmax(out.col(t));
    } else {
      probs.col(t).setConstant(1.0 / kOutputDim);
    }
  }
  return probs;
}

Eigen::VectorXd Identifier::Identify(const DialogState& state,
                                     AgentId observer) const {
  const int T = state.turn_index();
  if (!HasOpponentTurn(state.history(), observer, T)) {
    return Eigen::VectorXd::Constant(kOutputDim, 1.0 / kOutputDim);
  }
  const Eigen::MatrixXd out = net_.Forward(IdentifierFeatures(state, observer),
                                           {T}, ContextFeatures(state, observer));
  return nn::Softmax(out.col(0));
}

Eigen::VectorXd Identifier::Embedding(const DialogState& state,
                                      AgentId observer) const {
  Net::Trace trace;
  net_.Forward(IdentifierFeatures(state, observer), {state.turn_index()},
               ContextFeatures(state, observer), &trace);
  return trace.act.col(0);
}

// ---------------------------------------------------------------------------
// Transition model

int TransitionModel::ConditionDim(ToMMode mode) {
  return mode == ToMMode::kExplicit ? Identifier::kOutputDim : kStyleFeatureDim;
}

int TransitionModel::QueryDim(ToMMode mode) {
  return kActFeatureDim + kStyleFeatureDim + ConditionDim(mode) + kContextDim;
}

Net::Config TransitionNetConfig(ToMMode mode, const ModelConfig& config) {
  Net::Config c;
  c.input_dim = kActFeatureDim;
  c.query_dim = TransitionModel::QueryDim(mode);
  c.hidden = config.hidden;
  c.layers = config.layers;
  c.mlp = config.mlp;
  c.output_dim = TransitionModel::kOutputDim;
  return c;
}

TransitionModel::TransitionModel(ToMMode mode, const ModelConfig& config,
                                 std::uint64_t seed)
    : mode_(mode), config_(config), net_(TransitionNetConfig(mode, config), seed) {}

TransitionModel::TransitionModel(ToMMode mode, const ModelConfig& config,
                                 const Params& params)
    : mode_(mode), config_(config),
      net_(TransitionNetConfig(mode, config), params) {}

Eigen::VectorXd TransitionModel::Query(ToMMode mode, const Eigen::VectorXd& act,
                                       const StyleFeatureVector& style,
                                       const Eigen::VectorXd& condition,
                                       const Eigen::VectorXd& context) {
  if (condition.size() != ConditionDim(mode)) {
    throw std::invalid_argument("transition model: condition size mismatch");
  }
  Eigen::VectorXd q(QueryDim(mode));
  q << act, style, condition, context;
  return q;
}

std::vector<TransitionModel::Prediction> TransitionModel::Predict(
    const DialogState& state, AgentId self, const std::vector<DialogAct>& acts,
    const std::vector<StyleFeatureVector>& styles,
    const Eigen::VectorXd& condition) const {
  if (acts.size() != styles.size()) {
    throw std::invalid_argument("transition model: one style per act");
  }
  const int t = state.turn_index();
  const int n = state.max_turns();
  const Eigen::VectorXd context = ContextFeatures(self, t, n);
  Eigen::MatrixXd queries(QueryDim(mode_), acts.size());
  for (size_t i = 0; i < acts.size(); ++i) {
    queries.col(i) = Query(mode_, ActFeatures(acts[i], self, t, n, self),
                           styles[i], condition, context);
  }
  const Eigen::MatrixXd out =
      net_.Forward(HistoryFeatures(state, self),
                   std::vector<int>(acts.size(), t), queries);
  std::vector<Prediction> result(acts.size());
  for (size_t i = 0; i < acts.size(); ++i) {
    result[i].intent_probs =
        nn::Softmax(out.col(i).head(kNumIntents).eval(),
                    IntentMask(LegalResponses(acts[i])));
    result[i].price_utility = Sigmoid(out(kNumIntents, i));
  }
  return result;
}

Eigen::VectorXd Condition(ToMMode mode, const DialogState& state, AgentId self,
                          const Identifier* identifier) {
  if (mode == ToMMode::kImplicit) return LastOpponentStyle(state, self);
  if (!identifier) {
    throw std::invalid_argument("explicit ToM needs an identifier");
  }
  return identifier->Identify(state, self);
}

// ---------------------------------------------------------------------------
// Scoring

double VariantScores::Get(ScoreVariant variant) const {
  switch (variant) {
    case ScoreVariant::kExpected:
      return expected;
    case ScoreVariant::kCompetitive:
      return competitive;
    case ScoreVariant::kCooperative:
      return cooperative;
  }
  return expected;
}

VariantScores CombineBranches(const std::vector<Branch>& branches,
                              double support_threshold) {
  VariantScores s;
  for (const Branch& b : branches) {
    if (b.probs.size() != b.values.size() || b.probs.size() == 0) {
      throw std::invalid_argument("branch probabilities and values differ");
    }
    s.expected += b.weight * b.probs.dot(b.values);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double floor : {support_threshold, 0.0}) {
      for (Eigen::Index i = 0; i < b.probs.size(); ++i) {
        if (b.probs(i) > floor) {
          lo = std::min(lo, b.values(i));
          hi = std::max(hi, b.values(i));
        }
      }
      if (hi >= lo) break;
    }
    if (!(hi >= lo)) throw std::invalid_argument("branch without support");
    s.competitive += b.weight * lo;
    s.cooperative += b.weight * hi;
  }
  return s;
}

double MonteCarloScore(const std::vector<Branch>& branches, int samples,
                       Rng& rng) {
  if (samples < 1) throw std::invalid_argument("need at least one sample");
  std::vector<double> weights;
  for (const Branch& b : branches) weights.push_back(b.weight);
  double total = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Branch& b = branches[SampleIndex(weights, rng)];
    const int i = SampleIndex(
        std::span<const double>(b.probs.data(), b.probs.size()), rng);
    total += b.values(i);
  }
  return total / samples;
}

std::vector<Candidate> ResponseCandidates(const DialogAct& own,
                                          AgentId observer,
                                          const Eigen::VectorXd& grid) {
  std::vector<Candidate> out;
  for (Intent intent : LegalResponses(own).ToVector()) {
    if (!RequiresPrice(intent)) {
      out.push_back({DialogAct::Of(intent), -1});
      continue;
    }
    for (int j = 0; j < grid.size(); ++j) {
      out.push_back({DialogAct::Of(intent, PriceFromUtility(observer, grid(j))), j});
    }
  }
  return out;
}

namespace {

// Replies shared by all own acts of one intent, with their critic query
// contributions and terminal flags.
struct ReplySet {
  std::vector<Candidate> replies;
  Eigen::MatrixXd value_pre;   // mlp x replies
  std::vector<bool> terminal;  // accept, reject, quit
};

}  // namespace

std::vector<VariantScores> ScoreCandidates(
    const DialogState& state, AgentId self,
    const std::vector<Candidate>& candidates, const ToMModels& models,
    const ToMConfig& config, double shaping,
    std::vector<std::vector<Branch>>* detail) {
  if (!models.transition || !models.value || !models.bank) {
    throw std::invalid_argument("ToM scoring needs T, V and a template bank");
  }
  const TransitionModel& tm = *models.transition;
  const Net& vnet = models.value->net();
  const Net& tnet = tm.net();
  const int t = state.turn_index();
  const int n = state.max_turns();
  const AgentId other = Other(self);
  const Scenario& scenario = state.scenario();
  const Eigen::VectorXd grid = MakePriceGrid(config.grid_size);
  const auto last = state.last_act();
  const double own_ask = UtilityOrDefault(state.last_priced_act(self), self, 1.0);
  const double their_bid =
      UtilityOrDefault(state.last_priced_act(other), self, 0.0);

  const Eigen::MatrixXd x = HistoryFeatures(state, self);
  // Critic at s' = s + own act + reply: prefix t, query [x(own), x(reply),
  // context at t + 2]. Everything but the two act columns is shared.
  const bool lookahead = t + 2 < n;
  const Eigen::MatrixXd& wv = vnet.query_weights();
  Eigen::VectorXd v_base;
  if (lookahead) {
    const Eigen::MatrixXd top = vnet.Encode(x);
    v_base = vnet.HiddenPre(top.col(t)) +
             wv.rightCols(kContextDim) * ContextFeatures(self, t + 2, n);
  }
  const Eigen::RowVectorXd v_out = vnet.output_weights();
  const double v_bias = vnet.output_bias()(0, 0);

  // Transition model inputs shared by all candidates.
  const Eigen::VectorXd condition =
      Condition(tm.mode(), state, self, models.identifier);
  const Eigen::VectorXd t_hidden = tnet.HiddenPre(tnet.Encode(x).col(t));
  const Eigen::VectorXd context = ContextFeatures(self, t, n);

  std::map<int, ReplySet> reply_sets;
  auto replies_for = [&](Intent intent) -> const ReplySet& {
    const int key = IntentIndex(intent);
    auto it = reply_sets.find(key);
    if (it != reply_sets.end()) return it->second;
    ReplySet rs;
    const DialogAct probe = RequiresPrice(intent)
                                ? DialogAct::Of(intent, 0.5)
                                : DialogAct::Of(intent);
    rs.replies = ResponseCandidates(probe, self, grid);
    Eigen::MatrixXd xr(kActFeatureDim, rs.replies.size());
    for (size_t r = 0; r < rs.replies.size(); ++r) {
      xr.col(r) = ActFeatures(rs.replies[r].act, other, t + 1, n, self);
      rs.terminal.push_back(IsTerminal(rs.replies[r].act.intent));
    }
    if (lookahead) {
      rs.value_pre = wv.middleCols(kActFeatureDim, kActFeatureDim) * xr;
    }
    return reply_sets.emplace(key, std::move(rs)).first->second;
  };

  std::vector<VariantScores> scores(candidates.size());
  if (detail) detail->assign(candidates.size(), {});
  for (size_t ci = 0; ci < candidates.size(); ++ci) {
    const DialogAct& act = candidates[ci].act;
    std::vector<Branch> branches;
    if (act.intent == Intent::kAccept) {
      if (!last || !last->price) {
        throw std::invalid_argument("accept candidate without an offer");
      }
      branches.push_back(SingleOutcome(DealReward(scenario, self, *last->price, t + 1)));
    } else if (IsTerminal(act.intent) || t + 1 >= n) {
      branches.push_back(SingleOutcome(kNoDealReward));
    } else {
      // Utterance support, grouped by identical style features.
      const int voiced = IsSilent(act.intent)
                             ? 1
                             : static_cast<int>(models.bank->ForIntent(act.intent).size());
      const auto support =
          EnumerateSupport(*models.bank, state, act,
                           std::min(config.utterance_samples, voiced),
                           config.generation);
      std::vector<std::pair<StyleFeatureVector, double>> groups;
      for (const auto& [utterance, weight] : support) {
        const StyleFeatureVector f = StyleFeatures(utterance, t, n);
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const auto& g) { return g.first == f; });
        if (it == groups.end()) {
          groups.emplace_back(f, weight);
        } else {
          it->second += weight;
        }
      }
      const Eigen::VectorXd xa = ActFeatures(act, self, t, n, self);
      Eigen::MatrixXd queries(TransitionModel::QueryDim(tm.mode()), groups.size());
      for (size_t g = 0; g < groups.size(); ++g) {
        queries.col(g) = TransitionModel::Query(tm.mode(), xa, groups[g].first,
                                                condition, context);
      }
      Eigen::MatrixXd pre = tnet.query_weights() * queries;
      pre.colwise() += t_hidden;
      const Eigen::MatrixXd out = tnet.OutputFromPre(pre);
      const nn::Mask mask = IntentMask(LegalResponses(act));

      const ReplySet& rs = replies_for(act.intent);
      const int num_replies = static_cast<int>(rs.replies.size());
      // Successor values do not depend on the utterance.
      Eigen::VectorXd values(num_replies);
      Eigen::RowVectorXd v_lookahead;
      if (lookahead) {
        const Eigen::VectorXd shift =
            v_base + wv.leftCols(kActFeatureDim) * xa;
        Eigen::MatrixXd p = rs.value_pre;
        p.colwise() += shift;
        v_lookahead = v_out * (p.array() / (1.0 + p.array().abs())).matrix();
      }
      const double ask = act.price ? UtilityOf(self, *act.price) : own_ask;
      for (int r = 0; r < num_replies; ++r) {
        const DialogAct& reply = rs.replies[r].act;
        if (reply.intent == Intent::kAccept) {
          values(r) = DealReward(scenario, self, *act.price, t + 2);
        } else if (rs.terminal[r] || !lookahead) {
          values(r) = kNoDealReward;
        } else {
          const double bid = reply.price ? UtilityOf(self, *reply.price) : their_bid;
          values(r) = v_lookahead(r) + v_bias - shaping * std::max(0.0, ask - bid);
        }
      }
      for (size_t g = 0; g < groups.size(); ++g) {
        const Eigen::VectorXd intents =
            nn::Softmax(out.col(g).head(kNumIntents).eval(), mask);
        const Eigen::VectorXd price = nn::DiscretizedGaussian(
            Sigmoid(out(kNumIntents, g)), kPriceSigma, grid);
        Branch b;
        b.weight = groups[g].second;
        b.probs.resize(num_replies);
        for (int r = 0; r < num_replies; ++r) {
          const Candidate& reply = rs.replies[r];
          b.probs(r) = intents(IntentIndex(reply.act.intent)) *
                       (reply.grid >= 0 ? price(reply.grid) : 1.0);
        }
        b.values = values;
        branches.push_back(std::move(b));
      }
    }
    scores[ci] = CombineBranches(branches, config.support_threshold);
    if (detail) (*detail)[ci] = std::move(branches);
  }
  return scores;
}

Eigen::VectorXd Boltzmann(const Eigen::VectorXd& scores, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("Boltzmann needs beta > 0");
  if (scores.size() == 0) throw std::invalid_argument("no scores");
  const Eigen::ArrayXd e = ((scores.array() - scores.maxCoeff()) / beta).exp();
  return (e / e.sum()).matrix();
}

Eigen::VectorXd CombinePrior(const Eigen::VectorXd& prior,
                             const Eigen::VectorXd& tom) {
  if (prior.size() != tom.size()) {
    throw std::invalid_argument("prior and ToM policy sizes differ");
  }
  Eigen::VectorXd p = prior.cwiseProduct(tom);
  const double total = p.sum();
  if (!(total > 0.0)) return prior;
  return p / total;
}

// ---------------------------------------------------------------------------
// Manager

ToMDecision ToMDecide(const DialogState& state, AgentId self,
                      const ToMModels& models, const ToMConfig& config,
                      Rng& rng) {
  ToMDecision d;
  const Eigen::VectorXd grid = MakePriceGrid(config.grid_size);
  d.candidates = EnumerateCandidates(state, self, grid);
  if (config.mode == ToMMode::kExplicit && models.identifier) {
    d.identity = models.identifier->Identify(state, self);
  }
  const std::vector<VariantScores> scores =
      ScoreCandidates(state, self, d.candidates, models, config);
  d.scores.resize(scores.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    d.scores(i) = scores[i].Get(config.variant);
  }
  d.tom = Boltzmann(d.scores, config.beta);
  if (models.prior) {
    d.prior = models.prior->Distribution(state, self, d.candidates, grid);
  } else {
    d.prior = Eigen::VectorXd::Constant(d.candidates.size(),
                                        1.0 / d.candidates.size());
  }
  d.combined = config.combine_prior ? CombinePrior(d.prior, d.tom) : d.tom;
  if (ApplyGuard(state, self, d.candidates, config.guard, &d.combined)) {
    d.chosen = SampleCandidate(d.combined, rng);
  } else {
    d.fallback = true;
    d.chosen = FindIntent(d.candidates, GuardFallback(state).intent);
  }
  return d;
}

ToMManager::ToMManager(ToMModels models, ToMConfig config)
    : models_(models), config_(config) {
  if (!models_.transition || !models_.value || !models_.bank) {
    throw std::invalid_argument("ToM manager needs T, V and a template bank");
  }
  if (models_.transition->mode() != config_.mode) {
    throw std::invalid_argument("transition model mode differs from config");
  }
  if (config_.mode == ToMMode::kExplicit && !models_.identifier) {
    throw std::invalid_argument("explicit ToM needs an identifier");
  }
}

std::string ToMManager::label() const {
  return std::string(ManagerKindName(config_.mode == ToMMode::kExplicit
                                         ? ManagerKind::kToMExplicit
                                         : ManagerKind::kToMImplicit));
}

Move ToMManager::Act(const DialogState& state, AgentId self, Rng& rng) {
  const ToMDecision d = ToMDecide(state, self, models_, config_, rng);
  const Candidate& chosen = d.candidates[d.chosen];
  if (recorder_) recorder_->push_back({state.turn_index(), chosen});
  if (debug_) {
    std::vector<int> order(d.candidates.size());
    std::iota(order.begin(), order.end(), 0);
    const int top = std::min<int>(5, static_cast<int>(order.size()));
    std::partial_sort(order.begin(), order.begin() + top, order.end(),
                      [&](int a, int b) { return d.combined(a) > d.combined(b); });
    nlohmann::json line;
    line["turn"] = state.turn_index();
    line["chosen"] = ActToken(chosen.act);
    line["fallback"] = d.fallback;
    if (d.identity.size() > 0) {
      line["identity"] = std::vector<double>(d.identity.data(),
                                             d.identity.data() + d.identity.size());
    }
    for (int k = 0; k < top; ++k) {
      const int i = order[k];
      line["top"].push_back({{"act", ActToken(d.candidates[i].act)},
                             {"score", d.scores(i)},
                             {"tom", d.tom(i)},
                             {"prior", d.prior(i)},
                             {"combined", d.combined(i)}});
    }
    *debug_ << line.dump() << "\n";
  }
  return Move{chosen.act, {}, false};
}

// ---------------------------------------------------------------------------
// Training

double IdentifierLoss(const Identifier& model, const Transcript& transcript,
                      AgentId agent, Params* grads, int* samples) {
  const int label = transcript.population_of(Other(agent));
  if (label < 0 || label >= Identifier::kOutputDim) {
    throw std::invalid_argument("identifier training needs population labels");
  }
  const int T = static_cast<int>(transcript.turns.size());
  const DialogState final_state = transcript.Replay(T);
  std::vector<int> prefix;
  for (int t = 1; t <= T; ++t) {
    if (HasOpponentTurn(final_state.history(), agent, t)) prefix.push_back(t);
  }
  if (samples) *samples = static_cast<int>(prefix.size());
  if (prefix.empty()) return 0.0;
  Eigen::MatrixXd queries(kContextDim, prefix.size());
  for (size_t b = 0; b < prefix.size(); ++b) {
    queries.col(b) = ContextFeatures(agent, prefix[b], transcript.max_turns);
  }
  Net::Trace trace;
  const Eigen::MatrixXd out =
      model.net().Forward(IdentifierFeatures(final_state, agent), prefix,
                          queries, grads ? &trace : nullptr);
  Eigen::MatrixXd d_out(out.rows(), out.cols());
  double total = 0.0;
  for (size_t b = 0; b < prefix.size(); ++b) {
    const auto lg = nn::CrossEntropy<double>(out.col(b), label);
    total += lg.loss;
    d_out.col(b) = lg.grad;
  }
  if (grads) model.net().Backward(trace, d_out, grads);
  return total;
}

Identifier TrainIdentifier(const std::vector<Transcript>& corpus, AgentId agent,
                           const ModelConfig& model_config,
                           const TrainConfig& config, TrainReport* report) {
  Identifier model(model_config, DeriveSeed(config.seed, 0));
  internal::Fit(&model, corpus, config,
                [&](const Identifier& m, const Transcript& t, Params* g, int* n) {
                  return IdentifierLoss(m, t, agent, g, n);
                },
                report);
  return model;
}

IdentifierAccuracy EvaluateIdentifier(const Identifier& model,
                                      const std::vector<Transcript>& corpus,
                                      AgentId agent, int opponent_turns) {
  IdentifierAccuracy acc;
  for (const Transcript& transcript : corpus) {
    const int label = transcript.population_of(Other(agent));
    int seen = 0;
    int prefix = 0;
    for (size_t t = 0; t < transcript.turns.size() && seen < opponent_turns; ++t) {
      if (transcript.turns[t].turn.agent != agent) {
        ++seen;
        prefix = static_cast<int>(t) + 1;
      }
    }
    if (seen == 0) continue;
    const Eigen::VectorXd p = model.Identify(transcript.Replay(prefix), agent);
    int rank = 0;
    for (int k = 0; k < p.size(); ++k) {
      if (p(k) > p(label)) ++rank;
    }
    acc.top1 += rank < 1 ? 1.0 : 0.0;
    acc.top3 += rank < 3 ? 1.0 : 0.0;
    ++acc.dialogs;
  }
  if (acc.dialogs > 0) {
    acc.top1 /= acc.dialogs;
    acc.top3 /= acc.dialogs;
  }
  return acc;
}

namespace {

struct TransitionBatch {
  std::vector<int> prefix;
  Eigen::MatrixXd queries;
  std::vector<int> reply;  // transcript index of the reply
  Eigen::MatrixXd x;
};

TransitionBatch BuildTransitionBatch(ToMMode mode, const Transcript& transcript,
                                     AgentId agent,
                                     const Identifier* identifier) {
  TransitionBatch batch;
  const int T = static_cast<int>(transcript.turns.size());
  const int n = transcript.max_turns;
  const DialogState final_state = transcript.Replay(T);
  const auto& history = final_state.history();
  batch.x = HistoryFeatures(final_state, agent);
  Eigen::MatrixXd identity;
  if (mode == ToMMode::kExplicit) {
    if (!identifier) throw std::invalid_argument("explicit T needs an identifier");
    identity = identifier->IdentifyPrefixes(final_state, agent);
  }
  std::vector<Eigen::VectorXd> columns;
  for (int t = 0; t + 1 < T; ++t) {
    if (history[t].agent != agent) continue;
    const Eigen::VectorXd condition =
        mode == ToMMode::kExplicit
            ? Eigen::VectorXd(identity.col(t))
            : Eigen::VectorXd(OpponentStyleBefore(history, agent, t, n));
    columns.push_back(TransitionModel::Query(
        mode, batch.x.col(t), OwnStyleFeatures(history[t].utterance, t, n),
        condition, ContextFeatures(agent, t, n)));
    batch.prefix.push_back(t);
    batch.reply.push_back(t + 1);
  }
  batch.queries.resize(TransitionModel::QueryDim(mode), columns.size());
  for (size_t b = 0; b < columns.size(); ++b) batch.queries.col(b) = columns[b];
  return batch;
}

}  // namespace

double TransitionLoss(const TransitionModel& model, const Transcript& transcript,
                      AgentId agent, const Identifier* identifier, double alpha,
                      Params* grads, int* samples) {
  const TransitionBatch batch =
      BuildTransitionBatch(model.mode(), transcript, agent, identifier);
  if (samples) *samples = static_cast<int>(batch.prefix.size());
  if (batch.prefix.empty()) return 0.0;
  Net::Trace trace;
  const Eigen::MatrixXd out = model.net().Forward(
      batch.x, batch.prefix, batch.queries, grads ? &trace : nullptr);
  Eigen::MatrixXd d_out(out.rows(), out.cols());
  double total = 0.0;
  for (size_t b = 0; b < batch.prefix.size(); ++b) {
    const DialogAct& own = transcript.turns[batch.prefix[b]].turn.act;
    const DialogAct& reply = transcript.turns[batch.reply[b]].turn.act;
    std::optional<double> utility;
    if (reply.price) utility = UtilityOf(agent, *reply.price);
    const auto lg = nn::IntentPriceLoss<double>(
        out.col(b), kNumIntents, IntentIndex(reply.intent), utility, alpha,
        IntentMask(LegalResponses(own)));
    total += lg.loss;
    d_out.col(b) = lg.grad;
  }
  if (grads) model.net().Backward(trace, d_out, grads);
  return total;
}

TransitionModel TrainTransition(const std::vector<Transcript>& corpus,
                                AgentId agent, ToMMode mode,
                                const Identifier* identifier,
                                const ModelConfig& model_config,
                                const TrainConfig& config, TrainReport* report) {
  if (mode == ToMMode::kExplicit && !identifier) {
    throw std::invalid_argument("explicit T needs an identifier");
  }
  TransitionModel model(mode, model_config, DeriveSeed(config.seed, 0));
  internal::Fit(&model, corpus, config,
                [&](const TransitionModel& m, const Transcript& t, Params* g,
                    int* n) {
                  return TransitionLoss(m, t, agent, identifier, config.alpha, g, n);
                },
                report);
  return model;
}

double TransitionPriceMse(const TransitionModel& model,
                          const std::vector<Transcript>& corpus, AgentId agent,
                          const Identifier* identifier) {
  double total = 0.0;
  int count = 0;
  for (const Transcript& transcript : corpus) {
    const TransitionBatch batch =
        BuildTransitionBatch(model.mode(), transcript, agent, identifier);
    if (batch.prefix.empty()) continue;
    const Eigen::MatrixXd out =
        model.net().Forward(batch.x, batch.prefix, batch.queries);
    for (size_t b = 0; b < batch.prefix.size(); ++b) {
      const DialogAct& reply = transcript.turns[batch.reply[b]].turn.act;
      if (!reply.price) continue;
      const double e = Sigmoid(out(kNumIntents, b)) - UtilityOf(agent, *reply.price);
      total += e * e;
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

// ---------------------------------------------------------------------------
// Fine-tuning

ActorCritic FinetuneToM(const ActorCritic& init, const TransitionModel& transition,
                        const Identifier* identifier, const OpponentPool& opponents,
                        const TemplateBank& bank, const ToMConfig& tom,
                        const FinetuneConfig& config, FinetuneReport* report) {
  auto policy = std::make_shared<PolicyModel>(init.policy);
  ValueModel value = init.value;
  FinetuneReport local;
  FinetuneReport& rep = report ? *report : local;
  rep = FinetuneReport{};
  if (config.iterations <= 0) return {*policy, value};

  nn::AdamConfig actor_config;
  actor_config.learning_rate = config.learning_rate;
  actor_config.clip_norm = config.clip_norm;
  nn::AdamConfig critic_config = actor_config;
  critic_config.learning_rate = config.value_learning_rate;
  nn::Adam<double> actor(policy->net().params(), actor_config);
  nn::Adam<double> critic(value.net().params(), critic_config);

  EpisodeOptions options;
  options.mode = config.mode;
  const bool buys = config.agent == AgentId::kBuyer;
  const std::uint64_t eval_seed = DeriveSeed(config.seed, 99);
  auto evaluate = [&]() {
    const ToMModels current{&transition, &value, identifier, policy.get(), &bank};
    ToMManager evaluator(current, tom);
    const double r = MeanReward(evaluator, opponents, bank, config.agent,
                                config.scenario, config.mode,
                                config.eval_episodes, eval_seed);
    rep.eval_reward.push_back(r);
    return r;
  };
  // The initial models are a selection candidate at iteration -1.
  double best_reward = config.eval_every > 0
                           ? evaluate()
                           : -std::numeric_limits<double>::infinity();
  ActorCritic best{*policy, value};
  const bool selected = config.eval_every > 0;
  std::vector<Decision> decisions;

  for (int iter = 0; iter < config.iterations; ++iter) {
    const ValueModel frozen = value;
    const ToMModels models{&transition, &frozen, identifier, policy.get(), &bank};
    ToMManager manager(models, tom);
    manager.set_recorder(&decisions);
    Params actor_grads = policy->net().params().ZerosLike();
    Params critic_grads = value.net().params().ZerosLike();
    int steps = 0;
    double reward_sum = 0.0;
    for (int e = 0; e < config.episodes_per_iteration; ++e) {
      const std::uint64_t s =
          DeriveSeed(config.seed, 1000 + iter * config.episodes_per_iteration + e);
      Rng rng(s);
      Negotiator& opponent = opponents.Draw(rng);
      const Scenario sc = SampleScenario(DeriveSeed(s, 1), config.scenario);
      decisions.clear();
      const Transcript t =
          PlayDialog(sc, buys ? static_cast<Negotiator&>(manager) : opponent,
                     buys ? opponent : static_cast<Negotiator&>(manager), bank,
                     options, DeriveSeed(s, 2));
      reward_sum += t.metrics.reward(config.agent);
      if (decisions.empty()) continue;
      std::vector<int> turns;
      std::vector<double> targets;
      for (const Decision& d : decisions) {
        turns.push_back(d.turn);
        const auto scored =
            ScoreCandidates(t.Replay(d.turn), config.agent, {d.chosen}, models,
                            tom, config.shaping);
        targets.push_back(scored[0].expected);
      }
      std::vector<double> v;
      CriticLoss(value, t, config.agent, turns, targets, &critic_grads, &v);
      std::vector<double> advantages(turns.size());
      for (size_t k = 0; k < turns.size(); ++k) advantages[k] = targets[k] - v[k];
      ActorLoss(*policy, t, config.agent, decisions, advantages, 0.0, &actor_grads);
      steps += static_cast<int>(turns.size());
    }
    rep.reward_curve.push_back(reward_sum / config.episodes_per_iteration);
    if (steps > 0) {
      critic_grads.Scale(1.0 / steps);
      critic.Step(&value.net().params(), critic_grads);
      actor_grads.Scale(1.0 / steps);
      actor.Step(&policy->net().params(), actor_grads);
    }
    const bool last = iter + 1 == config.iterations;
    if (config.eval_every > 0 && ((iter + 1) % config.eval_every == 0 || last)) {
      const double r = evaluate();
      if (r > best_reward) {
        best_reward = r;
        rep.best_iteration = iter;
        best = {*policy, value};
      }
    }
  }
  if (!selected) {
    rep.best_iteration = config.iterations - 1;
    best = {*policy, value};
  }
  return best;
}

}  // namespace tomneg
