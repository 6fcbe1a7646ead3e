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

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "json.hpp"
#include "toy_instance.h"
#include "tomneg/tom.h"

namespace tomneg {
namespace {

using testing::MakeToyInstance;
using testing::OracleScore;

Eigen::VectorXd RandomVector(int n, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

Eigen::VectorXd RandomSimplex(int n, std::mt19937_64& rng) {
  Eigen::VectorXd v = RandomVector(n, rng, 0.0, 1.0);
  return v / v.sum();
}

TEST_CASE("boltzmann examples") {
  Eigen::VectorXd s(2);
  s << 1.0, 0.0;
  const Eigen::VectorXd p = Boltzmann(s, 1.0);
  CHECK(p(0) == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-15));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-15));

  const Eigen::VectorXd flat = Boltzmann(Eigen::VectorXd::Constant(4, 3.0), 0.05);
  for (int i = 0; i < 4; ++i) CHECK(flat(i) == doctest::Approx(0.25));

  // Large scores do not overflow.
  Eigen::VectorXd big(3);
  big << 1e4, 1e4 - 0.05, 0.0;
  const Eigen::VectorXd q = Boltzmann(big, 0.05);
  CHECK(q.allFinite());
  CHECK(q(0) / q(1) == doctest::Approx(std::exp(1.0)));
  CHECK_THROWS_AS(Boltzmann(s, 0.0), std::invalid_argument);
}

TEST_CASE("boltzmann is shift invariant and preserves the argmax") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd s = RandomVector(20, rng);
    const double beta = std::exp(RandomVector(1, rng, -5.0, 3.0)(0));
    const Eigen::VectorXd p = Boltzmann(s, beta);
    const Eigen::VectorXd shifted =
        Boltzmann((s.array() + 7.5).matrix(), beta);
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::Index a, b;
    s.maxCoeff(&a);
    p.maxCoeff(&b);
    CHECK(a == b);
  }
}

TEST_CASE("combine prior identities") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd prior = RandomSimplex(30, rng);
    const Eigen::VectorXd tom = RandomSimplex(30, rng);
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(30, 1.0 / 30);
    CHECK((CombinePrior(prior, uniform) - prior).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((CombinePrior(uniform, tom) - tom).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::VectorXd c = CombinePrior(prior, tom);
    CHECK(c.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  Eigen::VectorXd a(2), b(2);
  a << 1.0, 0.0;
  b << 0.0, 1.0;
  CHECK(CombinePrior(a, b) == a);
  CHECK_THROWS_AS(CombinePrior(a, Eigen::VectorXd::Ones(3)), std::invalid_argument);
}

TEST_CASE("two-outcome branch scores") {
  Branch b;
  b.probs = Eigen::Vector2d(0.5, 0.5);
  b.values = Eigen::Vector2d(1.0, -1.0);
  const VariantScores s = CombineBranches({b}, 1e-3);
  CHECK(s.expected == 0.0);
  CHECK(s.competitive == -1.0);
  CHECK(s.cooperative == 1.0);
  CHECK(s.Get(ScoreVariant::kCompetitive) == -1.0);

  // Outcomes below the support threshold do not move the extremes.
  b.probs = Eigen::Vector3d(0.6, 0.3999, 1e-4);
  b.values = Eigen::Vector3d(0.2, 0.1, -5.0);
  const VariantScores t = CombineBranches({b}, 1e-3);
  CHECK(t.competitive == 0.1);
  CHECK(t.expected == doctest::Approx(0.6 * 0.2 + 0.3999 * 0.1 - 5e-4));

  // With nothing above the threshold the whole support counts.
  b.probs = Eigen::Vector3d(0.0, 5e-4, 5e-4);
  b.values = Eigen::Vector3d(9.0, 1.0, 2.0);
  const VariantScores u = CombineBranches({b}, 1e-3);
  CHECK(u.competitive == 1.0);
  CHECK(u.cooperative == 2.0);
}

TEST_CASE("competitive <= expected <= cooperative on random instances") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Branch> branches;
    const Eigen::VectorXd g = RandomSimplex(1 + trial % 3, rng);
    for (int k = 0; k < g.size(); ++k) {
      Branch b;
      b.weight = g(k);
      b.probs = RandomSimplex(2 + trial % 11, rng);
      b.values = RandomVector(static_cast<int>(b.probs.size()), rng);
      branches.push_back(b);
    }
    const VariantScores s = CombineBranches(branches, 0.0);
    CHECK(s.competitive <= s.expected);
    CHECK(s.expected <= s.cooperative);
  }
}

TEST_CASE("toy instance: fast scoring matches the exhaustive oracle") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto toy = MakeToyInstance(seed);
    const auto scores = ScoreCandidates(toy.state, toy.self, toy.candidates,
                                        toy.models(), toy.config);
    REQUIRE(scores.size() == 4);
    for (size_t i = 0; i < toy.candidates.size(); ++i) {
      CHECK(std::abs(scores[i].expected - OracleScore(toy, toy.candidates[i])) <
            1e-12);
    }
  }
}

TEST_CASE("toy instance: replies at the horizon score as timeouts") {
  const auto toy = MakeToyInstance(4, 6);
  const auto scores = ScoreCandidates(toy.state, toy.self, toy.candidates,
                                      toy.models(), toy.config);
  for (size_t i = 0; i < toy.candidates.size(); ++i) {
    CHECK(std::abs(scores[i].expected - OracleScore(toy, toy.candidates[i])) <
          1e-12);
  }
  CHECK(scores[0].expected == kNoDealReward);
  CHECK(scores[3].expected == kNoDealReward);
}

TEST_CASE("toy instance: branch detail") {
  const auto toy = MakeToyInstance(5);
  std::vector<std::vector<Branch>> detail;
  ScoreCandidates(toy.state, toy.self, toy.candidates, toy.models(), toy.config,
                  0.0, &detail);
  // Agent utterances are style-neutral, so both templates fall in one group.
  REQUIRE(detail[0].size() == 1);
  CHECK(detail[0][0].weight == doctest::Approx(1.0));
  // 5 priced replies x 5 grid points + 8 price-less replies.
  CHECK(detail[0][0].probs.size() == 33);
  CHECK(detail[0][0].probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // An offer draws accept or reject only.
  REQUIRE(detail[2].size() == 1);
  CHECK(detail[2][0].probs.size() == 2);
  CHECK(detail[2][0].probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(detail[2][0].values(1) == kNoDealReward);
  // Quit is exact.
  CHECK(detail[3][0].probs.size() == 1);
}

TEST_CASE("monte carlo scores converge at the square-root rate") {
  const auto toy = MakeToyInstance(6);
  std::vector<std::vector<Branch>> detail;
  const auto scores = ScoreCandidates(toy.state, toy.self, toy.candidates,
                                      toy.models(), toy.config, 0.0, &detail);
  const double exact = scores[0].expected;
  Rng rng(11);
  std::vector<double> rmse;
  for (int k : {10, 100, 1000}) {
    double sq = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      const double e = MonteCarloScore(detail[0], k, rng) - exact;
      sq += e * e;
    }
    rmse.push_back(std::sqrt(sq / reps));
  }
  // Each tenfold increase of k shrinks the error by about sqrt(10).
  for (int i = 0; i + 1 < 3; ++i) {
    const double ratio = rmse[i] / rmse[i + 1];
    CHECK(ratio > 2.2);
    CHECK(ratio < 4.5);
  }
}

TEST_CASE("shaping lowers non-terminal successor values only") {
  const auto toy = MakeToyInstance(7);
  const auto plain = ScoreCandidates(toy.state, toy.self, toy.candidates,
                                     toy.models(), toy.config, 0.0);
  const auto shaped = ScoreCandidates(toy.state, toy.self, toy.candidates,
                                      toy.models(), toy.config, 0.5);
  CHECK(shaped[0].expected < plain[0].expected);
  CHECK(shaped[3].expected == plain[3].expected);
  // Offers resolve in one reply, so shaping never applies.
  CHECK(shaped[2].expected == plain[2].expected);
}

TEST_CASE("identifier is uniform before any opponent turn") {
  Identifier id(ModelConfig{8, 1, 8}, 3);
  DialogState s(SampleScenario(1, {}));
  const Eigen::VectorXd p = id.Identify(s, AgentId::kBuyer);
  for (int k = 0; k < Identifier::kOutputDim; ++k) {
    CHECK(p(k) == 1.0 / Identifier::kOutputDim);
  }
  const auto bank = testing::TwoTemplateBank();
  s = testing::Advance(s, AgentId::kBuyer, DialogAct::Of(Intent::kGreet), bank);
  CHECK(id.Identify(s, AgentId::kBuyer) == p);
  s = testing::Advance(s, AgentId::kSeller, DialogAct::Of(Intent::kGreet), bank);
  const Eigen::VectorXd q = id.Identify(s, AgentId::kBuyer);
  CHECK(q.sum() == doctest::Approx(1.0));
  CHECK((q - p).cwiseAbs().maxCoeff() > 1e-6);

  const Eigen::MatrixXd prefixes = id.IdentifyPrefixes(s, AgentId::kBuyer);
  REQUIRE(prefixes.cols() == 3);
  CHECK(prefixes.col(1) == p);
  CHECK((prefixes.col(2) - q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(id.Embedding(s, AgentId::kBuyer).size() == 8);
}

TEST_CASE("transition predictions are masked to legal replies") {
  TransitionModel tm(ToMMode::kImplicit, ModelConfig{8, 1, 8}, 4);
  DialogState s(SampleScenario(2, {}));
  const auto preds = tm.Predict(
      s, AgentId::kBuyer,
      {DialogAct::Of(Intent::kOffer, 0.4), DialogAct::Of(Intent::kGreet)},
      {StyleFeatureVector::Zero(), OwnStyleFeatures(Utterance{}, 0, 20)},
      Eigen::VectorXd::Zero(kStyleFeatureDim));
  REQUIRE(preds.size() == 2);
  for (Intent intent : kAllIntents) {
    const double p = preds[0].intent_probs(IntentIndex(intent));
    if (intent == Intent::kAccept || intent == Intent::kReject) {
      CHECK(p > 0.0);
    } else {
      CHECK(p == 0.0);
    }
  }
  CHECK(preds[1].intent_probs(IntentIndex(Intent::kAccept)) == 0.0);
  CHECK(preds[1].intent_probs.sum() == doctest::Approx(1.0));
  CHECK(preds[0].price_utility > 0.0);
  CHECK(preds[0].price_utility < 1.0);
  CHECK_THROWS_AS(tm.Predict(s, AgentId::kBuyer, {DialogAct::Of(Intent::kGreet)},
                             {}, Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      tm.Predict(s, AgentId::kBuyer, {DialogAct::Of(Intent::kGreet)},
                 {StyleFeatureVector::Zero()}, Eigen::VectorXd::Zero(7)),
      std::invalid_argument);
}

TEST_CASE("mode and variant names round trip") {
  for (ToMMode m : {ToMMode::kImplicit, ToMMode::kExplicit}) {
    CHECK(ToMModeFromName(ToMModeName(m)) == m);
  }
  for (ScoreVariant v : {ScoreVariant::kExpected, ScoreVariant::kCompetitive,
                         ScoreVariant::kCooperative}) {
    CHECK(ScoreVariantFromName(ScoreVariantName(v)) == v);
  }
  CHECK_FALSE(ToMModeFromName("neither"));
}

struct SmallStack {
  ModelConfig model{8, 1, 8};
  Identifier identifier{model, 1};
  TransitionModel transition{ToMMode::kExplicit, model, 2};
  ValueModel value{model, 3};
  PolicyModel policy{model, 4};

  ToMModels models() const {
    return {&transition, &value, &identifier, &policy, &TemplateBank::Default()};
  }
};

// Random dialog prefixes played by populations, stopped at a random turn.
std::vector<DialogState> RandomStates(int count, std::uint64_t seed) {
  const auto roster = DefaultPopulations();
  std::vector<DialogState> states;
  for (int i = 0; i < count; ++i) {
    Rng rng(DeriveSeed(seed, i));
    PopulationNegotiator buyer(roster[rng() % roster.size()]);
    PopulationNegotiator seller(roster[rng() % roster.size()]);
    EpisodeOptions options;
    options.explore = 0.3;
    options.explorer = AgentId::kBuyer;
    const Transcript t = PlayDialog(SampleScenario(DeriveSeed(seed, i), {}),
                                    buyer, seller, TemplateBank::Default(),
                                    options, DeriveSeed(seed, 1000 + i));
    // Buyer turns are the even indices; keep the state open.
    const int last = static_cast<int>(t.turns.size()) - 1;
    int stop = 2 * static_cast<int>(rng() % (last / 2 + 1));
    if (stop > last) stop = last - (last % 2);
    states.push_back(t.Replay(stop));
  }
  return states;
}

TEST_CASE("guard binds the ToM manager over random states") {
  SmallStack stack;
  ToMConfig config;
  config.guard.bottom_utility = 0.4;
  config.grid_size = 20;
  int checked = 0;
  for (const DialogState& s : RandomStates(40, 21)) {
    if (s.closed() || s.whose_turn() != AgentId::kBuyer) continue;
    for (int draw = 0; draw < 3; ++draw) {
      Rng rng(DeriveSeed(draw, s.turn_index()));
      const ToMDecision d = ToMDecide(s, AgentId::kBuyer, stack.models(), config, rng);
      const DialogAct& act = d.candidates[d.chosen].act;
      CHECK(GuardAllows(s, AgentId::kBuyer, act, config.guard));
      CHECK(d.combined.sum() == doctest::Approx(d.fallback ? 0.0 : 1.0));
      ++checked;
    }
  }
  CHECK(checked > 60);
}

TEST_CASE("ToM decisions are reproducible and respect the prior switch") {
  SmallStack stack;
  ToMConfig config;
  config.grid_size = 10;
  DialogState s(SampleScenario(8, {}));
  Rng a(1), b(1);
  const ToMDecision x = ToMDecide(s, AgentId::kBuyer, stack.models(), config, a);
  const ToMDecision y = ToMDecide(s, AgentId::kBuyer, stack.models(), config, b);
  CHECK(x.chosen == y.chosen);
  CHECK(x.combined == y.combined);
  CHECK(x.identity.size() == Identifier::kOutputDim);

  config.combine_prior = false;
  config.guard.enabled = false;
  Rng c(1);
  const ToMDecision z = ToMDecide(s, AgentId::kBuyer, stack.models(), config, c);
  CHECK((z.combined - z.tom).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ToM manager plays valid dialogs and writes debug lines") {
  SmallStack stack;
  ToMConfig config;
  config.grid_size = 10;
  ToMManager manager(stack.models(), config);
  std::ostringstream debug;
  manager.set_debug(&debug);
  std::vector<Decision> decisions;
  manager.set_recorder(&decisions);
  PopulationNegotiator seller(DefaultPopulations()[kCooperativePopulation]);
  const Transcript t = PlayDialog(SampleScenario(3, {}), manager, seller,
                                  TemplateBank::Default(), {}, 4);
  CHECK(t.Replay(static_cast<int>(t.turns.size())).closed());
  CHECK(manager.label() == "tom_explicit");
  CHECK_FALSE(decisions.empty());
  std::istringstream lines(debug.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("chosen"));
    CHECK(j["top"].size() >= 1);
    ++count;
  }
  CHECK(count == static_cast<int>(decisions.size()));

  ToMConfig implicit = config;
  implicit.mode = ToMMode::kImplicit;
  CHECK_THROWS_AS(ToMManager(stack.models(), implicit), std::invalid_argument);
}

TEST_CASE("identifier and transition training reduce validation loss") {
  CorpusConfig cc;
  cc.dialogs = 300;
  const auto corpus =
      GenerateCorpus(cc, DefaultPopulations(), TemplateBank::Default());
  TrainConfig tc;
  tc.epochs = 4;
  tc.learning_rate = 3e-3;
  const ModelConfig model{16, 1, 16};
  TrainReport id_report;
  const Identifier id = TrainIdentifier(corpus, AgentId::kBuyer, model, tc, &id_report);
  CHECK(id_report.train_loss.back() < id_report.train_loss.front());
  CHECK(id_report.best_epoch >= 0);
  TrainReport t_report;
  const TransitionModel tm = TrainTransition(corpus, AgentId::kBuyer,
                                             ToMMode::kExplicit, &id, model, tc,
                                             &t_report);
  CHECK(t_report.train_loss.back() < t_report.train_loss.front());
  CHECK(t_report.best_epoch >= 0);
  CHECK(TransitionPriceMse(tm, corpus, AgentId::kBuyer, &id) < 0.25);
  const IdentifierAccuracy acc = EvaluateIdentifier(id, corpus, AgentId::kBuyer);
  CHECK(acc.dialogs > 280);
  CHECK(acc.dialogs <= 300);
  CHECK(acc.top3 >= acc.top1);
  CHECK_THROWS_AS(TrainTransition(corpus, AgentId::kBuyer, ToMMode::kExplicit,
                                  nullptr, model, tc),
                  std::invalid_argument);
}

TEST_CASE("zero-iteration fine-tuning returns the initial models") {
  SmallStack stack;
  const ActorCritic init{stack.policy, stack.value};
  FinetuneConfig fc;
  fc.iterations = 0;
  ToMConfig tc;
  const ActorCritic out =
      FinetuneToM(init, stack.transition, &stack.identifier,
                  PopulationPool(DefaultPopulations()), TemplateBank::Default(),
                  tc, fc);
  CHECK(out.policy.net().params()["out.W"] == init.policy.net().params()["out.W"]);
  CHECK(out.value.net().params()["out.W"] == init.value.net().params()["out.W"]);
}

}  // namespace
}  // namespace tomneg
