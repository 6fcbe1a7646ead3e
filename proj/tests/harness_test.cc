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
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "tomneg/harness.h"

namespace tomneg {
namespace {

namespace fs = std::filesystem;

std::string Slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string FreshDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("tomneg_harness_" + name);
  fs::remove_all(dir);
  return dir.string();
}

// Small enough to run every stage in seconds.
ExperimentConfig TinyConfig(const std::string& run_dir) {
  ExperimentConfig c;
  c.run_dir = run_dir;
  c.seed = 3;
  c.model = {8, 1, 8};
  c.corpus.dialogs = 60;
  c.heldout_dialogs = 30;
  c.sl.epochs = 2;
  c.identifier.epochs = 2;
  c.transition.epochs = 2;
  c.rl.iterations = 4;
  c.rl.episodes_per_iteration = 4;
  c.rl.critic_warmup = 1;
  c.rl.eval_every = 2;
  c.rl.eval_episodes = 8;
  c.tom.grid_size = 5;
  c.tom.utterance_samples = 1;
  c.finetune.iterations = 2;
  c.finetune.episodes_per_iteration = 2;
  c.finetune.eval_every = 1;
  c.finetune.eval_episodes = 4;
  c.evaluation.groups = {{"cooperative", {5}, {}, 12},
                         {"mixed", {}, {}, 21}};
  c.evaluation.debug_dialogs = 1;
  return c;
}

std::vector<Transcript> SomeTranscripts(int count, std::uint64_t seed) {
  CorpusConfig cc;
  cc.dialogs = count;
  cc.seed = seed;
  return GenerateCorpus(cc, DefaultPopulations(), TemplateBank::Default());
}

TEST_CASE("config round-trips through json") {
  ExperimentConfig c = TinyConfig("runs/x");
  c.agent = AgentId::kSeller;
  c.mixture = {0.1, 0.1, 0.1, 0.1, 0.2, 0.2, 0.2};
  c.tom.variant = ScoreVariant::kCompetitive;
  c.evaluation.mode = GenerationMode::kDeterministic;
  const std::string text = ExperimentConfigToJson(c);
  const ExperimentConfig back = ParseExperimentConfig(text);
  CHECK(ExperimentConfigToJson(back) == text);
  CHECK(back.agent == AgentId::kSeller);
  CHECK(back.evaluation.groups.size() == 2);
}

TEST_CASE("config defaults and unknown keys") {
  const ExperimentConfig c = ParseExperimentConfig("{}");
  CHECK(c.transition.epochs == 40);
  CHECK(c.model.hidden == 300);
  CHECK(c.evaluation.groups.size() == 3);
  CHECK_THROWS_AS(ParseExperimentConfig(R"({"sedd": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(ParseExperimentConfig(R"({"rl": {"iters": 1}})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ParseExperimentConfig(R"({"agent": "broker"})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(ParseExperimentConfig("{"), std::invalid_argument);
}

TEST_CASE("config validation rejects bad values") {
  const auto roster = DefaultPopulations();
  ExperimentConfig c;
  CHECK_NOTHROW(ValidateExperimentConfig(c, roster));
  auto bad = [&](auto edit) {
    ExperimentConfig e;
    edit(e);
    CHECK_THROWS_AS(ValidateExperimentConfig(e, roster), std::invalid_argument);
  };
  bad([](ExperimentConfig& e) { e.mixture = {0.5, 0.5}; });
  bad([](ExperimentConfig& e) { e.mixture = {1, 1, 1, 1, 1, 1, 1}; });
  bad([](ExperimentConfig& e) { e.evaluation.groups[0].episodes = 0; });
  bad([](ExperimentConfig& e) { e.evaluation.groups[0].populations = {7}; });
  bad([](ExperimentConfig& e) { e.evaluation.groups[1].name = "cooperative"; });
  bad([](ExperimentConfig& e) { e.evaluation.groups[0].name = "a/b"; });
  bad([](ExperimentConfig& e) { e.evaluation.managers.push_back(ManagerKind::kRl); });
  bad([](ExperimentConfig& e) { e.corpus.dialogs = 0; });
  bad([](ExperimentConfig& e) { e.tom.beta = 0.0; });
}

TEST_CASE("transcripts round-trip exactly through json lines") {
  const auto transcripts = SomeTranscripts(40, 21);
  const std::string path = FreshDir("transcripts") + ".jsonl";
  WriteTranscripts(transcripts, path);
  const auto back = ReadTranscripts(path);
  REQUIRE(back.size() == transcripts.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(TranscriptToJson(back[i]) == TranscriptToJson(transcripts[i]));
    CHECK(back[i].turns.size() == transcripts[i].turns.size());
    CHECK(back[i].metrics.fairness == transcripts[i].metrics.fairness);
    CHECK(back[i].scenario.buyer_target == transcripts[i].scenario.buyer_target);
  }
  fs::remove(path);
  CHECK_THROWS_AS(TranscriptFromJson(R"({"seed": 1})"), std::invalid_argument);
}

TEST_CASE("schedule follows the weights and interleaves") {
  const std::vector<int> all = {0, 1, 2, 3, 4, 5, 6};
  const auto schedule = EvaluationSchedule(all, {}, 4352);
  REQUIRE(schedule.size() == 4352);
  std::vector<int> counts(7, 0);
  for (int p : schedule) ++counts[p];
  for (int c : counts) CHECK((c == 621 || c == 622));
  CHECK(std::vector<int>(schedule.begin(), schedule.begin() + 7) == all);

  const auto weighted = EvaluationSchedule({2, 4}, {0.75, 0.25}, 10);
  int twos = 0;
  for (int p : weighted) twos += p == 2;
  CHECK(twos == 8);  // 7.5 and 2.5 tie on remainder; the first wins
  CHECK(EvaluationSchedule({5}, {}, 3) == std::vector<int>{5, 5, 5});
}

TEST_CASE("summaries use the normal half-width and leave empty sets undefined") {
  const MetricSummary m = Summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(m.count == 4);
  CHECK(m.mean == doctest::Approx(2.5));
  CHECK(m.half_width == doctest::Approx(1.96 * std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(Summarize({}).count == 0);
  CHECK(Summarize({7.0}).half_width == 0.0);
}

TEST_CASE("fairness is undefined without deals and agreement matches a recount") {
  auto transcripts = SomeTranscripts(80, 22);
  std::vector<Transcript> no_deals;
  int deals = 0;
  for (const Transcript& t : transcripts) {
    if (t.outcome.deal()) {
      ++deals;
    } else {
      no_deals.push_back(t);
    }
  }
  REQUIRE_FALSE(no_deals.empty());
  const Aggregate none = AggregateMetrics(no_deals, AgentId::kBuyer);
  CHECK(none.fairness.count == 0);
  CHECK(none.agreement.mean == 0.0);
  const ReportRow row = MakeReportRow("x", "g", transcripts, AgentId::kBuyer);
  CHECK(row.overall.agreement.mean ==
        doctest::Approx(static_cast<double>(deals) / transcripts.size()));
  CHECK(row.overall.fairness.count == deals);
  int split = 0;
  for (const auto& [population, a] : row.by_population) split += a.dialogs;
  CHECK(split == static_cast<int>(transcripts.size()));

  EvaluationReport report;
  report.rows.push_back(MakeReportRow("x", "g", no_deals, AgentId::kBuyer));
  const std::string tsv = ReportToTsv(report);
  // Fa and its half-width are blank on the "all" line.
  const std::string all = tsv.substr(tsv.find("x\tg\tall"));
  std::vector<std::string> cells;
  std::stringstream line(all.substr(0, all.find('\n')));
  for (std::string cell; std::getline(line, cell, '\t');) cells.push_back(cell);
  REQUIRE(cells.size() == 15);
  CHECK(cells[8].empty());
  CHECK(cells[9].empty());
  CHECK(cells[10] == "0");
}

TEST_CASE("evaluation is role-symmetric within noise") {
  // Population 3 playing itself, with the agent opening as buyer and then as
  // seller. Mirroring the roles, including the first move, leaves agreement
  // and the agent's utility unchanged up to sampling noise.
  const auto roster = DefaultPopulations();
  const TemplateBank& bank = TemplateBank::Default();
  auto play = [&](AgentId side, std::uint64_t seed) {
    std::vector<Transcript> out;
    for (int i = 0; i < 600; ++i) {
      PopulationNegotiator agent(roster[3]);
      PopulationNegotiator opponent(roster[3]);
      EpisodeOptions options;
      options.first_mover = side;
      const Scenario sc = SampleScenario(DeriveSeed(seed, 2 * i), {});
      const bool buys = side == AgentId::kBuyer;
      out.push_back(PlayDialog(sc, buys ? agent : opponent, buys ? opponent : agent,
                               bank, options, DeriveSeed(seed, 2 * i + 1)));
    }
    return AggregateMetrics(out, side);
  };
  const Aggregate b = play(AgentId::kBuyer, 5);
  const Aggregate s = play(AgentId::kSeller, 6);
  CHECK(std::abs(b.agreement.mean - s.agreement.mean) <=
        2.0 * (b.agreement.half_width + s.agreement.half_width));
  CHECK(std::abs(b.utility.mean - s.utility.mean) <=
        2.0 * (b.utility.half_width + s.utility.half_width));

  const std::vector<int> schedule(50, 3);
  PopulationNegotiator agent(roster[3]);
  for (const Transcript& t :
       EvaluateManager(agent, AgentId::kSeller, roster, schedule, bank, {},
                       GenerationMode::kStochastic, 7)) {
    CHECK(t.seller_population == 3);
    CHECK(t.buyer_population == 3);
  }
}

TEST_CASE("pipeline runs, caches, verifies and detects tampering") {
  const std::string run_dir = FreshDir("pipeline");
  std::ostringstream log;
  std::string tsv, first_eval_dir;
  {
    Pipeline pipeline(TinyConfig(run_dir), &log);
    pipeline.RunAll();
    for (const StageInfo& s : pipeline.stages()) {
      CHECK_FALSE(s.cached);
      CHECK(s.key.size() == 16);
      CHECK(fs::exists(fs::path(s.dir) / "manifest.json"));
    }
    first_eval_dir = pipeline.evaluation_dir();
    const EvaluationReport& report = pipeline.Evaluate();
    CHECK(report.rows.size() == 8);
    const ReportRow* row = report.Find("tom_explicit", "mixed");
    REQUIRE(row != nullptr);
    CHECK(row->overall.dialogs == 21);
    CHECK(row->by_population.size() == 7);
    tsv = Slurp((fs::path(run_dir) / "report.tsv").string());
    CHECK(fs::exists(fs::path(first_eval_dir) / "debug" / "tom_explicit__mixed.jsonl"));
    const IdentifierAccuracy acc = pipeline.IdentifierHeldoutAccuracy();
    CHECK(acc.dialogs > 0);
  }
  {
    Pipeline pipeline(TinyConfig(run_dir), &log);
    pipeline.RunAll();
    for (const StageInfo& s : pipeline.stages()) {
      INFO(s.name);
      CHECK(s.cached);
    }
    CHECK(pipeline.evaluation_dir() == first_eval_dir);
    CHECK(Slurp((fs::path(run_dir) / "report.tsv").string()) == tsv);
  }
  {
    // A changed evaluation section recomputes only the evaluation.
    ExperimentConfig c = TinyConfig(run_dir);
    c.evaluation.groups[0].episodes = 13;
    Pipeline pipeline(c, &log);
    pipeline.RunAll();
    for (const StageInfo& s : pipeline.stages()) {
      INFO(s.name);
      CHECK(s.cached == (s.name != "evaluate"));
    }
  }

  VerifyResult ok = VerifyReport(first_eval_dir);
  CHECK(ok.ok);
  CHECK(ok.transcripts == 4 * (12 + 21));
  for (const std::string& p : ok.problems) MESSAGE(p);

  // Flip the first recorded outcome of one transcript file.
  const fs::path file = fs::path(first_eval_dir) / "transcripts" / "rl__cooperative.jsonl";
  const std::string original = Slurp(file.string());
  std::string edited = original;
  const size_t at = edited.find("\"agreement\":");
  REQUIRE(at != std::string::npos);
  const size_t digit = at + std::string("\"agreement\":").size();
  edited[digit] = edited[digit] == '1' ? '0' : '1';
  {
    std::ofstream out(file, std::ios::binary);
    out << edited;
  }
  const VerifyResult tampered = VerifyReport(first_eval_dir);
  CHECK_FALSE(tampered.ok);
  CHECK(tampered.problems.size() >= 2);
  {
    std::ofstream out(file, std::ios::binary);
    out << original;
  }
  CHECK(VerifyReport(first_eval_dir).ok);
  fs::remove_all(run_dir);
}

TEST_CASE("a failing stage writes error.json") {
  const std::string run_dir = FreshDir("failing");
  std::string dir;
  {
    Pipeline pipeline(TinyConfig(run_dir));
    pipeline.Corpus();
    dir = pipeline.stages().at(0).dir;
  }
  {
    std::ofstream out(fs::path(dir) / "transcripts.jsonl", std::ios::binary);
    out << "{not json\n";
  }
  Pipeline pipeline(TinyConfig(run_dir));
  try {
    pipeline.Corpus();
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "corpus");
  }
  const fs::path error = fs::path(run_dir) / "error.json";
  REQUIRE(fs::exists(error));
  CHECK(Slurp(error.string()).find("\"stage\": \"corpus\"") != std::string::npos);
  fs::remove_all(run_dir);
}

TEST_CASE("embeddings dump one row per dialog") {
  const auto dialogs = SomeTranscripts(10, 23);
  const Identifier identifier(ModelConfig{8, 1, 8}, 1);
  std::ostringstream out;
  DumpEmbeddings(identifier, dialogs, AgentId::kBuyer, 3, out);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 11);
  CHECK(out.str().rfind("dialog\tpopulation\tpredicted\te0", 0) == 0);
}

}  // namespace
}  // namespace tomneg
