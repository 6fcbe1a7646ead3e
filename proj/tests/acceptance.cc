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

// Acceptance suite: one PASS/FAIL line per criterion.
//
// Criteria 1-7 are exact property checks. Criteria 8-11 train the full stack
// at several seeds and pass on a majority; their stages are cached under the
// run directory, so reruns only re-evaluate what changed. The exit status
// reflects criteria 1-7, or every criterion with --strict.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grad_heads.h"
#include "tomneg/harness.h"
#include "toy_instance.h"

namespace tomneg {
namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Suite {
 public:
  void Run(int id, const std::string& title, const std::function<Verdict()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d: %s  %s (%.2fs)  %s\n", id, v.pass ? "PASS" : "FAIL",
                title.c_str(), seconds, v.detail.c_str());
    std::fflush(stdout);
    results_.push_back({id, v.pass});
  }

  bool AllPassed(int up_to) const {
    for (const auto& [id, pass] : results_) {
      if (id <= up_to && !pass) return false;
    }
    return true;
  }

 private:
  std::vector<std::pair<int, bool>> results_;
};

std::string Format(const char* fmt, double a, double b = 0.0, double c = 0.0,
                   double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c, d);
  return buf;
}

Eigen::VectorXd Uniform(int n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

Eigen::VectorXd Simplex(int n, std::mt19937_64& rng) {
  const Eigen::VectorXd v = Uniform(n, rng, 0.0, 1.0);
  return v / v.sum();
}

// ---------------------------------------------------------------------------
// Criteria 1-7

Verdict MetricIdentities() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Scenario scenario = SampleScenario(DeriveSeed(1, i), ScenarioConfig{});
    const MetricsRecord m =
        ComputeMetrics(Outcome{OutcomeKind::kDeal, unit(rng), 6}, scenario);
    const double fa_buyer = 1.0 - 2.0 * std::abs(m.utility_buyer - 0.5);
    const double fa_seller = 1.0 - 2.0 * std::abs(m.utility_seller - 0.5);
    worst = std::max({worst, std::abs(m.utility_buyer + m.utility_seller - 1.0),
                      std::abs(fa_buyer - fa_seller), std::abs(*m.fairness - fa_buyer),
                      std::abs(m.reward_buyer + m.reward_seller)});
  }
  return {worst <= 1e-9, Format("max deviation %.2e over 10000 deals", worst)};
}

Verdict RewardAnchors() {
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scenario s = SampleScenario(seed, ScenarioConfig{});
    auto deal = [&](double currency) {
      return Outcome{OutcomeKind::kDeal, s.Normalize(currency), 4};
    };
    const Outcome none{OutcomeKind::kNoDealTimeout, std::nullopt, 20};
    const Outcome quit{OutcomeKind::kNoDealQuit, std::nullopt, 3};
    const bool ok =
        std::abs(Reward(deal(s.buyer_target), AgentId::kBuyer, s) - 1.0) < 1e-12 &&
        std::abs(Reward(deal(s.listing_price), AgentId::kSeller, s) - 1.0) < 1e-12 &&
        std::abs(Reward(deal(s.Midpoint()), AgentId::kBuyer, s)) < 1e-12 &&
        std::abs(Reward(deal(s.Midpoint()), AgentId::kSeller, s)) < 1e-12 &&
        Reward(none, AgentId::kBuyer, s) == -0.5 &&
        Reward(none, AgentId::kSeller, s) == -0.5 &&
        Reward(quit, AgentId::kBuyer, s) == -0.5;
    failures += !ok;
  }
  return {failures == 0, std::to_string(failures) + " of 100 scenarios off-anchor"};
}

Verdict BoltzmannLimits() {
  std::mt19937_64 rng(3);
  double worst_tv = 0.0, worst_mass = 1.0;
  int argmax_mismatch = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 40;
    const Eigen::VectorXd s = Uniform(n, rng, -1.0, 1.0);
    const double range = s.maxCoeff() - s.minCoeff();
    Eigen::Index top;
    s.maxCoeff(&top);
    const Eigen::VectorXd hot = Boltzmann(s, 1e6 * range);
    worst_tv = std::max(worst_tv, 0.5 * (hot.array() - 1.0 / n).abs().sum());
    worst_mass = std::min(worst_mass, Boltzmann(s, 1e-6 * range)(top));
    for (double beta : {1e-6 * range, 1e-3, 0.05, 1.0, 1e3, 1e6 * range}) {
      Eigen::Index picked;
      Boltzmann(s, beta).maxCoeff(&picked);
      argmax_mismatch += picked != top;
    }
  }
  return {worst_tv < 1e-3 && worst_mass > 0.999 && argmax_mismatch == 0,
          Format("max TV %.2e, min argmax mass %.6f, argmax mismatches %.0f", worst_tv,
                 worst_mass, argmax_mismatch)};
}

Verdict PriorIdentities() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 60;
    const Eigen::VectorXd prior = Simplex(n, rng);
    const Eigen::VectorXd tom = Simplex(n, rng);
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / n);
    worst = std::max({worst, (CombinePrior(prior, uniform) - prior).cwiseAbs().maxCoeff(),
                      (CombinePrior(uniform, tom) - tom).cwiseAbs().maxCoeff()});
  }
  return {worst <= 1e-12, Format("max deviation %.2e", worst)};
}

Verdict BruteForceOracle() {
  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto toy = testing::MakeToyInstance(seed);
    const auto scores = ScoreCandidates(toy.state, toy.self, toy.candidates,
                                        toy.models(), toy.config);
    for (size_t i = 0; i < toy.candidates.size(); ++i) {
      const double oracle = testing::OracleScore(toy, toy.candidates[i]);
      worst = std::max(worst, std::abs(scores[i].expected - oracle));
    }
  }
  // Monte-Carlo error at k = 10, 100, 1000 against the exact score.
  const auto toy = testing::MakeToyInstance(6);
  std::vector<std::vector<Branch>> detail;
  const auto scores = ScoreCandidates(toy.state, toy.self, toy.candidates, toy.models(),
                                      toy.config, 0.0, &detail);
  Rng rng(11);
  std::vector<double> rmse;
  for (int k : {10, 100, 1000}) {
    double sq = 0.0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
      const double e = MonteCarloScore(detail[0], k, rng) - scores[0].expected;
      sq += e * e;
    }
    rmse.push_back(std::sqrt(sq / reps));
  }
  // sqrt(10) = 3.16 per decade.
  const double r1 = rmse[0] / rmse[1], r2 = rmse[1] / rmse[2];
  const bool rate = r1 > 2.2 && r1 < 4.5 && r2 > 2.2 && r2 < 4.5;
  return {worst <= 1e-12 && rate,
          Format("oracle gap %.2e; MC error ratios per decade %.2f, %.2f", worst, r1,
                 r2)};
}

Verdict GradientChecks() {
  double worst = 0.0;
  const auto checks = testing::CheckAllHeads(31, 200);
  for (const auto& check : checks) worst = std::max(worst, check.max_relative_error);
  return {worst < 1e-4, Format("max relative error %.2e over %.0f heads", worst,
                               static_cast<double>(checks.size()))};
}

Verdict VariantOrdering() {
  std::mt19937_64 rng(9);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Branch> branches;
    const Eigen::VectorXd g = Simplex(1 + trial % 3, rng);
    for (int k = 0; k < g.size(); ++k) {
      Branch b;
      b.weight = g(k);
      b.probs = Simplex(2 + trial % 31, rng);
      b.values = Uniform(static_cast<int>(b.probs.size()), rng, -1.0, 1.0);
      branches.push_back(b);
    }
    const VariantScores s = CombineBranches(branches, 0.0);
    violations += !(s.competitive <= s.expected && s.expected <= s.cooperative);
  }
  return {violations == 0, std::to_string(violations) + " violations in 1000"};
}

// ---------------------------------------------------------------------------
// Criteria 8-11

struct SeedResult {
  std::uint64_t seed = 0;
  IdentifierAccuracy identifier;
  double rl_mixed_ag = 0, ex_mixed_ag = 0, rl_coop_ag = 0, ex_coop_ag = 0;
  double ex_mixed_re = 0, im_mixed_re = 0;
  double ex_mse_quarter = 0, im_mse_quarter = 0;
  MetricSummary ex_fa_comp, ex_fa_coop;
};

SeedResult RunSeed(const ExperimentConfig& base, std::uint64_t seed,
                   std::ostream* log) {
  ExperimentConfig config = base;
  config.seed = seed;
  SeedResult r;
  r.seed = seed;
  {
    Pipeline pipeline(config, log);
    const EvaluationReport& report = pipeline.Evaluate();
    r.identifier = pipeline.IdentifierHeldoutAccuracy();
    auto row = [&](const char* manager, const char* group) -> const Aggregate& {
      const ReportRow* found = report.Find(manager, group);
      if (!found) {
        throw std::runtime_error(std::string("report lacks ") + manager + "/" + group);
      }
      return found->overall;
    };
    r.rl_mixed_ag = row("rl", "mixed").agreement.mean;
    r.ex_mixed_ag = row("tom_explicit", "mixed").agreement.mean;
    r.rl_coop_ag = row("rl", "cooperative").agreement.mean;
    r.ex_coop_ag = row("tom_explicit", "cooperative").agreement.mean;
    r.ex_mixed_re = row("tom_explicit", "mixed").reward.mean;
    r.im_mixed_re = row("tom_implicit", "mixed").reward.mean;
    r.ex_fa_comp = row("tom_explicit", "competitive").fairness;
    r.ex_fa_coop = row("tom_explicit", "cooperative").fairness;
  }
  {
    // Transition models, and the identifier behind the explicit one, trained
    // on a quarter of the corpus; errors on the full-size held-out set.
    ExperimentConfig quarter = config;
    quarter.corpus.dialogs = config.corpus.dialogs / 4;
    Pipeline pipeline(quarter, log);
    const auto& heldout = pipeline.Heldout();
    r.ex_mse_quarter = TransitionPriceMse(pipeline.Transition(ToMMode::kExplicit),
                                          heldout, config.agent,
                                          &pipeline.IdentifierModel());
    r.im_mse_quarter = TransitionPriceMse(pipeline.Transition(ToMMode::kImplicit),
                                          heldout, config.agent, nullptr);
  }
  return r;
}

Verdict Majority(const std::vector<SeedResult>& results,
                 const std::function<bool(const SeedResult&, std::string*)>& check) {
  int passed = 0;
  std::string detail;
  for (const SeedResult& r : results) {
    std::string line;
    const bool ok = check(r, &line);
    passed += ok;
    detail += "[seed " + std::to_string(r.seed) + (ok ? " ok: " : " no: ") + line + "] ";
  }
  return {2 * passed > static_cast<int>(results.size()),
          std::to_string(passed) + "/" + std::to_string(results.size()) + " seeds " +
              detail};
}

}  // namespace
}  // namespace tomneg

int main(int argc, char** argv) {
  using namespace tomneg;
  CLI::App app{"Acceptance criteria"};
  std::string config_path;
  std::string run_dir = "acceptance_runs";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool properties_only = false;
  bool strict = false;
  bool verbose = false;
  app.add_option("--config", config_path, "experiment config for criteria 8-11")
      ->check(CLI::ExistingFile);
  app.add_option("--run-dir", run_dir, "stage cache for criteria 8-11");
  app.add_option("--seeds", seeds, "seeds of the directional criteria");
  app.add_flag("--properties-only", properties_only, "run criteria 1-7 only");
  app.add_flag("--strict", strict, "exit status reflects every criterion");
  app.add_flag("--verbose", verbose, "stage log on stderr");
  CLI11_PARSE(app, argc, argv);

  Suite suite;
  suite.Run(1, "metric identities", MetricIdentities);
  suite.Run(2, "reward anchors", RewardAnchors);
  suite.Run(3, "Boltzmann limits", BoltzmannLimits);
  suite.Run(4, "prior-combination identities", PriorIdentities);
  suite.Run(5, "brute-force oracle and Monte-Carlo rate", BruteForceOracle);
  suite.Run(6, "gradient checks", GradientChecks);
  suite.Run(7, "competitive <= expected <= cooperative", VariantOrdering);
  if (properties_only) return suite.AllPassed(7) ? 0 : 1;

  std::vector<SeedResult> results;
  try {
    ExperimentConfig base =
        config_path.empty() ? ExperimentConfig() : LoadExperimentConfig(config_path);
    base.run_dir = run_dir;
    for (std::uint64_t seed : seeds) {
      const auto start = std::chrono::steady_clock::now();
      results.push_back(RunSeed(base, seed, verbose ? &std::cerr : nullptr));
      const double minutes = std::chrono::duration<double>(
                                 std::chrono::steady_clock::now() - start).count() / 60;
      std::printf("seed %llu done in %.1f min\n", static_cast<unsigned long long>(seed),
                  minutes);
      std::fflush(stdout);
    }
  } catch (const std::exception& e) {
    std::printf("directional runs failed: %s\n", e.what());
    for (int id = 8; id <= 11; ++id) {
      suite.Run(id, "directional", [] { return Verdict{false, "no runs"}; });
    }
    return strict || !suite.AllPassed(7) ? 1 : 0;
  }

  suite.Run(8, "identifier accuracy after 6 opponent turns", [&] {
    return Majority(results, [](const SeedResult& r, std::string* line) {
      *line = Format("top1 %.3f top3 %.3f n=%.0f", r.identifier.top1, r.identifier.top3,
                     r.identifier.dialogs);
      return r.identifier.top1 > 0.60 && r.identifier.top3 > 0.80 &&
             r.identifier.dialogs >= 1000;
    });
  });
  suite.Run(9, "explicit ToM agreement over RL (mixed +10%, cooperative +25%)", [&] {
    return Majority(results, [](const SeedResult& r, std::string* line) {
      *line = Format("mixed %.3f vs %.3f, coop %.3f vs %.3f", r.ex_mixed_ag,
                     r.rl_mixed_ag, r.ex_coop_ag, r.rl_coop_ag);
      return r.ex_mixed_ag >= 1.10 * r.rl_mixed_ag && r.ex_coop_ag >= 1.25 * r.rl_coop_ag;
    });
  });
  suite.Run(10, "explicit vs implicit (mixed reward, price MSE at 25% data)", [&] {
    return Majority(results, [](const SeedResult& r, std::string* line) {
      *line = Format("Re %.3f vs %.3f, MSE %.5f vs %.5f", r.ex_mixed_re, r.im_mixed_re,
                     r.ex_mse_quarter, r.im_mse_quarter);
      return r.ex_mixed_re >= r.im_mixed_re - 0.02 &&
             r.ex_mse_quarter <= r.im_mse_quarter;
    });
  });
  suite.Run(11, "explicit ToM fairness: competitive over cooperative", [&] {
    return Majority(results, [](const SeedResult& r, std::string* line) {
      *line = Format("Fa %.3f (n=%.0f) vs %.3f (n=%.0f)", r.ex_fa_comp.mean,
                     r.ex_fa_comp.count, r.ex_fa_coop.mean, r.ex_fa_coop.count);
      return r.ex_fa_comp.count > 0 && r.ex_fa_coop.count > 0 &&
             r.ex_fa_comp.mean > r.ex_fa_coop.mean;
    });
  });
  return suite.AllPassed(strict ? 11 : 7) ? 0 : 1;
}
