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

// Experiment runner: configuration, transcript records, metric aggregation,
// reports, and a staged pipeline whose outputs are cached on disk under
// content-addressed directories.

#ifndef TOMNEG_HARNESS_H_
#define TOMNEG_HARNESS_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tomneg/episode.h"
#include "tomneg/managers.h"
#include "tomneg/populations.h"
#include "tomneg/tom.h"

namespace tomneg {

// ---------------------------------------------------------------------------
// Transcript records: one JSON object per line.

std::string TranscriptToJson(const Transcript& transcript);
// Throws std::invalid_argument on malformed records.
Transcript TranscriptFromJson(std::string_view line);
void WriteTranscripts(const std::vector<Transcript>& transcripts,
                      const std::string& path);
std::vector<Transcript> ReadTranscripts(const std::string& path);

// ---------------------------------------------------------------------------
// Configuration

// Opponents of one evaluation column. An empty population list means the
// whole roster; empty weights mean uniform.
struct EvalGroup {
  std::string name;
  std::vector<int> populations;
  std::vector<double> weights;
  int episodes = 1000;
};

struct EvaluationConfig {
  std::vector<ManagerKind> managers = {ManagerKind::kSlRule, ManagerKind::kRl,
                                       ManagerKind::kToMImplicit,
                                       ManagerKind::kToMExplicit};
  std::vector<EvalGroup> groups = {{"cooperative", {5}, {}, 1000},
                                   {"competitive", {6}, {}, 1000},
                                   {"mixed", {}, {}, 4352}};
  GenerationMode mode = GenerationMode::kStochastic;
  // ToM decisions of the first this many dialogs per (manager, group) are
  // written as debug records.
  int debug_dialogs = 0;
};

struct ExperimentConfig {
  std::string run_dir = "runs/default";
  std::uint64_t seed = 1;
  AgentId agent = AgentId::kBuyer;
  ScenarioConfig scenario;
  // Empty paths select the built-in roster and template bank.
  std::string populations_file;
  std::string templates_file;
  // Opponent weights over the roster for training; empty means uniform.
  std::vector<double> mixture;
  ModelConfig model;
  // Shared by every manager.
  GuardConfig guard;
  CorpusConfig corpus;
  TrainConfig sl;
  RlConfig rl;
  TrainConfig identifier;
  // Held-out dialogs for identifier accuracy and transition price error.
  int heldout_dialogs = 1000;
  TrainConfig transition;
  // The mode field is ignored; both modes are built.
  ToMConfig tom;
  FinetuneConfig finetune;
  EvaluationConfig evaluation;

  ExperimentConfig();
};

// Missing keys keep their defaults; unknown keys are errors. Throws
// std::invalid_argument on malformed or invalid configs.
ExperimentConfig ParseExperimentConfig(std::string_view json_text);
ExperimentConfig LoadExperimentConfig(const std::string& path);
std::string ExperimentConfigToJson(const ExperimentConfig& config);
// Episode counts > 0, weights non-negative and summing to 1, population ids
// inside the roster, known names.
void ValidateExperimentConfig(const ExperimentConfig& config,
                              const std::vector<PopulationSpec>& roster);

// 64-bit FNV-1a.
std::uint64_t Fnv1a(std::string_view bytes);

// ---------------------------------------------------------------------------
// Metrics and reports

struct MetricSummary {
  int count = 0;  // 0 means undefined
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation half-width
};

MetricSummary Summarize(const std::vector<double>& values);

struct Aggregate {
  int dialogs = 0;
  MetricSummary agreement;
  MetricSummary utility;   // 0 on no-deal
  MetricSummary fairness;  // deals only
  MetricSummary length;
  MetricSummary reward;
};

Aggregate AggregateMetrics(const std::vector<Transcript>& transcripts,
                           AgentId agent);

struct ReportRow {
  std::string manager;
  std::string group;
  Aggregate overall;
  // By opponent population id.
  std::map<int, Aggregate> by_population;
};

struct EvaluationReport {
  AgentId agent = AgentId::kBuyer;
  std::vector<ReportRow> rows;

  const ReportRow* Find(std::string_view manager, std::string_view group) const;
};

ReportRow MakeReportRow(const std::string& manager, const std::string& group,
                        const std::vector<Transcript>& transcripts,
                        AgentId agent);

// Tab-separated: one line per (manager, group, population or "all"). Blank
// cells for undefined metrics.
std::string ReportToTsv(const EvaluationReport& report);
std::string ReportToJson(const EvaluationReport& report);

// Population of each evaluation episode. Counts follow the weights by
// largest remainder; populations are interleaved round-robin.
std::vector<int> EvaluationSchedule(const std::vector<int>& populations,
                                    const std::vector<double>& weights,
                                    int episodes);

// Plays `agent` against the scheduled populations. Episode i uses scenario
// seed DeriveSeed(seed, 2i) and dialog seed DeriveSeed(seed, 2i + 1), so
// every manager meets the same scenarios.
std::vector<Transcript> EvaluateManager(Negotiator& agent, AgentId side,
                                        const std::vector<PopulationSpec>& roster,
                                        const std::vector<int>& schedule,
                                        const TemplateBank& bank,
                                        const ScenarioConfig& scenario,
                                        GenerationMode mode, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Pipeline

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& message)
      : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageInfo {
  std::string name;
  std::string key;  // 16 hex digits
  std::string dir;
  bool cached = false;
};

// Stages: corpus, heldout, sl, rl, identifier, transition_{explicit,implicit},
// finetune_{explicit,implicit}, evaluate. Each stage is computed on first use,
// written to run_dir/stages/<name>-<key>, and loaded from there afterwards.
// The key hashes the stage's config section and its upstream keys. A failing
// stage writes run_dir/error.json and throws StageError.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config, std::ostream* log = nullptr);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const ExperimentConfig& config() const { return config_; }
  const std::vector<PopulationSpec>& roster() const { return roster_; }
  const TemplateBank& bank() const { return bank_; }

  const std::vector<Transcript>& Corpus();
  const std::vector<Transcript>& Heldout();
  const PolicyModel& Sl();
  const ActorCritic& Rl();
  const Identifier& IdentifierModel();
  IdentifierAccuracy IdentifierHeldoutAccuracy();
  const TransitionModel& Transition(ToMMode mode);
  // The RL models when fine-tuning is disabled (zero iterations).
  const ActorCritic& Finetuned(ToMMode mode);
  std::unique_ptr<Negotiator> MakeManager(ManagerKind kind);
  // Writes transcripts, report.tsv, report.json and debug records.
  const EvaluationReport& Evaluate();

  // Runs every stage up to and including the evaluation.
  void RunAll();

  // Directory of the most recent evaluation stage; empty before Evaluate.
  const std::string& evaluation_dir() const { return evaluation_dir_; }
  const std::vector<StageInfo>& stages() const { return stages_; }

 private:
  struct State;

  std::string StageKey(const std::string& name, const std::string& section,
                       const std::vector<std::string>& upstream) const;

  ExperimentConfig config_;
  std::ostream* log_;
  std::vector<PopulationSpec> roster_;
  TemplateBank bank_;
  std::unique_ptr<State> state_;
  std::vector<StageInfo> stages_;
  std::string evaluation_dir_;
};

// Recomputes every aggregate of an evaluation directory from its transcripts
// and compares with report.json and report.tsv byte for byte. Also replays
// each transcript and recomputes its metrics.
struct VerifyResult {
  bool ok = true;
  int transcripts = 0;
  std::vector<std::string> problems;
};

VerifyResult VerifyReport(const std::string& evaluation_dir);

// Identifier embeddings of the held-out dialogs after `opponent_turns`
// opponent turns (or at dialog end). TSV: dialog, population, predicted
// population, embedding values.
void DumpEmbeddings(const Identifier& identifier,
                    const std::vector<Transcript>& dialogs, AgentId agent,
                    int opponent_turns, std::ostream& out);

}  // namespace tomneg

#endif  // TOMNEG_HARNESS_H_
