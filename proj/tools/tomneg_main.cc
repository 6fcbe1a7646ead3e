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

// Command-line front end of the experiment pipeline.
//
//   tomneg run --config experiment.json --run-dir runs/a
//   tomneg verify-report --run-dir runs/a
//
// Every stage subcommand builds its upstream stages as needed; finished
// stages are loaded from the run directory.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tomneg/harness.h"

namespace {

using namespace tomneg;

struct Options {
  std::string config;
  std::string run_dir;
  std::string out;
  int opponent_turns = 6;
  bool quiet = false;
};

ExperimentConfig Configure(const Options& options) {
  ExperimentConfig config = options.config.empty()
                                ? ExperimentConfig()
                                : LoadExperimentConfig(options.config);
  if (!options.run_dir.empty()) config.run_dir = options.run_dir;
  return config;
}

void PrintStages(const Pipeline& pipeline) {
  for (const StageInfo& s : pipeline.stages()) {
    std::printf("%-22s %s %s\n", s.name.c_str(), s.cached ? "cached  " : "computed",
                s.dir.c_str());
  }
}

void PrintReport(const EvaluationReport& report) {
  std::printf("%-14s %-12s %7s %6s %6s %6s %6s %7s\n", "manager", "group", "dialogs",
              "Ag", "Ut", "Fa", "Len", "Re");
  for (const ReportRow& row : report.rows) {
    const Aggregate& a = row.overall;
    char fa[16] = "-";
    if (a.fairness.count > 0) std::snprintf(fa, sizeof(fa), "%.3f", a.fairness.mean);
    std::printf("%-14s %-12s %7d %6.3f %6.3f %6s %6.2f %7.3f\n", row.manager.c_str(),
                row.group.c_str(), a.dialogs, a.agreement.mean, a.utility.mean, fa,
                a.length.mean, a.reward.mean);
  }
}

// Verifies one evaluation stage directory, or every finished evaluation
// stage under a run directory. Never trains.
int RunVerify(const Options& options) {
  namespace fs = std::filesystem;
  std::string root = options.run_dir;
  if (root.empty()) root = Configure(options).run_dir;
  std::vector<std::string> dirs;
  if (fs::exists(fs::path(root) / "transcripts")) {
    dirs.push_back(root);
  } else if (fs::exists(fs::path(root) / "stages")) {
    for (const auto& entry : fs::directory_iterator(fs::path(root) / "stages")) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("evaluate-", 0) == 0 && name.find(".tmp") == std::string::npos &&
          fs::exists(entry.path() / "manifest.json")) {
        dirs.push_back(entry.path().string());
      }
    }
  }
  if (dirs.empty()) {
    std::fprintf(stderr, "error: no evaluation found under %s\n", root.c_str());
    return 1;
  }
  std::sort(dirs.begin(), dirs.end());
  bool ok = true;
  for (const std::string& dir : dirs) {
    const VerifyResult result = VerifyReport(dir);
    for (const std::string& p : result.problems) std::printf("problem: %s\n", p.c_str());
    std::printf("%s: %d transcripts in %s\n", result.ok ? "verified" : "FAILED",
                result.transcripts, dir.c_str());
    ok = ok && result.ok;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Negotiation agents with opponent modelling"};
  app.require_subcommand(1);
  Options options;

  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", options.config, "experiment config (JSON)")
        ->check(CLI::ExistingFile);
    sub->add_option("--run-dir", options.run_dir, "overrides the config run_dir");
    sub->add_flag("--quiet", options.quiet, "no stage log");
    return sub;
  };
  CLI::App* gen_corpus = add("gen-corpus", "generate the training corpus");
  CLI::App* train_sl = add("train-sl", "train the supervised policy");
  CLI::App* train_rl = add("train-rl", "train the actor-critic policy");
  CLI::App* train_tom =
      add("train-tom", "train the identifier and both transition models");
  CLI::App* finetune = add("finetune-tom", "fine-tune policy and critic under ToM");
  CLI::App* evaluate = add("evaluate", "evaluate all managers and write reports");
  CLI::App* verify = add("verify-report", "recompute a report from its transcripts");
  CLI::App* dump = add("dump-embeddings", "write identifier embeddings as TSV");
  dump->add_option("--out", options.out, "output file (default stdout)");
  dump->add_option("--opponent-turns", options.opponent_turns,
                   "opponent turns observed before embedding")
      ->check(CLI::PositiveNumber);
  CLI::App* run = add("run", "run every stage");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return RunVerify(options);
    Pipeline pipeline(Configure(options), options.quiet ? nullptr : &std::cerr);
    if (gen_corpus->parsed()) {
      std::printf("corpus: %zu dialogs\n", pipeline.Corpus().size());
    } else if (train_sl->parsed()) {
      pipeline.Sl();
    } else if (train_rl->parsed()) {
      pipeline.Rl();
    } else if (train_tom->parsed()) {
      pipeline.Transition(ToMMode::kImplicit);
      pipeline.Transition(ToMMode::kExplicit);
      const IdentifierAccuracy acc = pipeline.IdentifierHeldoutAccuracy();
      std::printf("identifier top-1 %.3f top-3 %.3f over %d held-out dialogs\n",
                  acc.top1, acc.top3, acc.dialogs);
    } else if (finetune->parsed()) {
      pipeline.Finetuned(ToMMode::kImplicit);
      pipeline.Finetuned(ToMMode::kExplicit);
    } else if (evaluate->parsed() || run->parsed()) {
      if (run->parsed()) {
        pipeline.RunAll();
      } else {
        pipeline.Evaluate();
      }
      PrintReport(pipeline.Evaluate());
      std::printf("reports: %s\n", pipeline.evaluation_dir().c_str());
    } else if (dump->parsed()) {
      const Identifier& identifier = pipeline.IdentifierModel();
      const AgentId agent = pipeline.config().agent;
      if (options.out.empty()) {
        DumpEmbeddings(identifier, pipeline.Heldout(), agent, options.opponent_turns,
                       std::cout);
      } else {
        std::ofstream out(options.out);
        if (!out) throw std::runtime_error("cannot write " + options.out);
        DumpEmbeddings(identifier, pipeline.Heldout(), agent, options.opponent_turns,
                       out);
      }
    }
    if (!options.quiet) PrintStages(pipeline);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
