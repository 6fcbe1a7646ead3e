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

#include "tomneg/harness.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "tomneg/nn/checkpoint.h"

namespace tomneg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Names

std::optional<AgentId> AgentFromName(std::string_view name) {
  if (name == AgentName(AgentId::kBuyer)) return AgentId::kBuyer;
  if (name == AgentName(AgentId::kSeller)) return AgentId::kSeller;
  return std::nullopt;
}

std::optional<OutcomeKind> OutcomeFromName(std::string_view name) {
  for (OutcomeKind k : {OutcomeKind::kDeal, OutcomeKind::kNoDealReject,
                        OutcomeKind::kNoDealQuit, OutcomeKind::kNoDealTimeout}) {
    if (OutcomeName(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view ModeName(GenerationMode mode) {
  return mode == GenerationMode::kDeterministic ? "deterministic" : "stochastic";
}

std::optional<GenerationMode> ModeFromName(std::string_view name) {
  if (name == "deterministic") return GenerationMode::kDeterministic;
  if (name == "stochastic") return GenerationMode::kStochastic;
  return std::nullopt;
}

template <typename T>
T Require(std::optional<T> value, std::string_view what, std::string_view name) {
  if (!value) {
    throw std::invalid_argument("unknown " + std::string(what) + " '" +
                                std::string(name) + "'");
  }
  return *value;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string Hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Transcript records

json OptionalNumber(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> ReadOptional(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json TurnToJson(const TranscriptTurn& t) {
  json tokens = json::array();
  for (const StyleToken& tok : t.turn.utterance.style_tokens) {
    tokens.push_back({tok.text, ValenceName(tok.valence)});
  }
  return {{"agent", AgentName(t.turn.agent)},
          {"intent", IntentName(t.turn.act.intent)},
          {"price", OptionalNumber(t.turn.act.price)},
          {"template", t.turn.utterance.template_id},
          {"utterance_intent", IntentName(t.turn.utterance.intent)},
          {"rendered_price", OptionalNumber(t.turn.utterance.rendered_price)},
          {"tokens", tokens},
          {"text", t.turn.utterance.text},
          {"exploratory", t.exploratory}};
}

TranscriptTurn TurnFromJson(const json& j) {
  TranscriptTurn t;
  t.turn.agent = Require(AgentFromName(j.at("agent").get<std::string>()), "agent",
                         j.at("agent").get<std::string>());
  const std::string intent = j.at("intent").get<std::string>();
  t.turn.act.intent = Require(IntentFromName(intent), "intent", intent);
  t.turn.act.price = ReadOptional(j.at("price"));
  t.turn.utterance.template_id = j.at("template").get<int>();
  const std::string uintent = j.at("utterance_intent").get<std::string>();
  t.turn.utterance.intent = Require(IntentFromName(uintent), "intent", uintent);
  t.turn.utterance.rendered_price = ReadOptional(j.at("rendered_price"));
  for (const json& tok : j.at("tokens")) {
    const std::string valence = tok.at(1).get<std::string>();
    t.turn.utterance.style_tokens.push_back(
        {tok.at(0).get<std::string>(),
         Require(ValenceFromName(valence), "valence", valence)});
  }
  t.turn.utterance.text = j.at("text").get<std::string>();
  t.exploratory = j.at("exploratory").get<bool>();
  return t;
}

// ---------------------------------------------------------------------------
// Config sections

json ScenarioToJson(const ScenarioConfig& c) {
  return {{"listing_min", c.listing_min},
          {"listing_max", c.listing_max},
          {"ratio_min", c.ratio_min},
          {"ratio_max", c.ratio_max}};
}

json TrainToJson(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"alpha", c.alpha},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"validation_fraction", c.validation_fraction},
          {"clip_norm", c.clip_norm}};
}

json ModelToJson(const ModelConfig& c) {
  return {{"hidden", c.hidden}, {"layers", c.layers}, {"mlp", c.mlp}};
}

json CorpusToJson(const CorpusConfig& c) {
  return {{"dialogs", c.dialogs},
          {"explore", c.explore},
          {"explore_offer", c.explore_offer},
          {"mode", ModeName(c.mode)}};
}

json RlToJson(const RlConfig& c) {
  return {{"iterations", c.iterations},
          {"episodes_per_iteration", c.episodes_per_iteration},
          {"learning_rate", c.learning_rate},
          {"value_learning_rate", c.value_learning_rate},
          {"critic_warmup", c.critic_warmup},
          {"entropy_weight", c.entropy_weight},
          {"clip_norm", c.clip_norm},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"self_play", c.self_play},
          {"mode", ModeName(c.mode)}};
}

json TomToJson(const ToMConfig& c) {
  return {{"variant", ScoreVariantName(c.variant)},
          {"beta", c.beta},
          {"grid_size", c.grid_size},
          {"utterance_samples", c.utterance_samples},
          {"generation", ModeName(c.generation)},
          {"support_threshold", c.support_threshold},
          {"combine_prior", c.combine_prior}};
}

json FinetuneToJson(const FinetuneConfig& c) {
  return {{"iterations", c.iterations},
          {"episodes_per_iteration", c.episodes_per_iteration},
          {"learning_rate", c.learning_rate},
          {"value_learning_rate", c.value_learning_rate},
          {"shaping", c.shaping},
          {"clip_norm", c.clip_norm},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes},
          {"mode", ModeName(c.mode)}};
}

json EvaluationToJson(const EvaluationConfig& c) {
  json managers = json::array();
  for (ManagerKind k : c.managers) managers.push_back(ManagerKindName(k));
  json groups = json::array();
  for (const EvalGroup& g : c.groups) {
    groups.push_back({{"name", g.name},
                      {"populations", g.populations},
                      {"weights", g.weights},
                      {"episodes", g.episodes}});
  }
  return {{"managers", managers},
          {"groups", groups},
          {"mode", ModeName(c.mode)},
          {"debug_dialogs", c.debug_dialogs}};
}

json ConfigToJson(const ExperimentConfig& c) {
  return {{"run_dir", c.run_dir},
          {"seed", c.seed},
          {"agent", AgentName(c.agent)},
          {"scenario", ScenarioToJson(c.scenario)},
          {"populations_file", c.populations_file},
          {"templates_file", c.templates_file},
          {"mixture", c.mixture},
          {"model", ModelToJson(c.model)},
          {"guard", {{"enabled", c.guard.enabled},
                     {"bottom_utility", c.guard.bottom_utility}}},
          {"corpus", CorpusToJson(c.corpus)},
          {"sl", TrainToJson(c.sl)},
          {"rl", RlToJson(c.rl)},
          {"identifier", TrainToJson(c.identifier)},
          {"heldout_dialogs", c.heldout_dialogs},
          {"transition", TrainToJson(c.transition)},
          {"tom", TomToJson(c.tom)},
          {"finetune", FinetuneToJson(c.finetune)},
          {"evaluation", EvaluationToJson(c.evaluation)}};
}

void CheckKeys(const json& j, std::initializer_list<std::string_view> keys,
               const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void Get(const json& j, const char* key, T* out) {
  if (j.contains(key)) *out = j.at(key).get<T>();
}

void GetMode(const json& j, const char* key, GenerationMode* out) {
  if (!j.contains(key)) return;
  const std::string name = j.at(key).get<std::string>();
  *out = Require(ModeFromName(name), "generation mode", name);
}

void ReadTrain(const json& j, const std::string& where, TrainConfig* c) {
  CheckKeys(j, {"learning_rate", "alpha", "batch_size", "epochs",
                "validation_fraction", "clip_norm"}, where);
  Get(j, "learning_rate", &c->learning_rate);
  Get(j, "alpha", &c->alpha);
  Get(j, "batch_size", &c->batch_size);
  Get(j, "epochs", &c->epochs);
  Get(j, "validation_fraction", &c->validation_fraction);
  Get(j, "clip_norm", &c->clip_norm);
}

ExperimentConfig ConfigFromJson(const json& j) {
  ExperimentConfig c;
  CheckKeys(j, {"run_dir", "seed", "agent", "scenario", "populations_file",
                "templates_file", "mixture", "model", "guard", "corpus", "sl", "rl",
                "identifier", "heldout_dialogs", "transition", "tom", "finetune",
                "evaluation"}, "config");
  Get(j, "run_dir", &c.run_dir);
  Get(j, "seed", &c.seed);
  if (j.contains("agent")) {
    const std::string name = j.at("agent").get<std::string>();
    c.agent = Require(AgentFromName(name), "agent", name);
  }
  if (j.contains("scenario")) {
    const json& s = j.at("scenario");
    CheckKeys(s, {"listing_min", "listing_max", "ratio_min", "ratio_max"},
              "scenario");
    Get(s, "listing_min", &c.scenario.listing_min);
    Get(s, "listing_max", &c.scenario.listing_max);
    Get(s, "ratio_min", &c.scenario.ratio_min);
    Get(s, "ratio_max", &c.scenario.ratio_max);
  }
  Get(j, "populations_file", &c.populations_file);
  Get(j, "templates_file", &c.templates_file);
  Get(j, "mixture", &c.mixture);
  if (j.contains("model")) {
    const json& m = j.at("model");
    CheckKeys(m, {"hidden", "layers", "mlp"}, "model");
    Get(m, "hidden", &c.model.hidden);
    Get(m, "layers", &c.model.layers);
    Get(m, "mlp", &c.model.mlp);
  }
  if (j.contains("guard")) {
    const json& g = j.at("guard");
    CheckKeys(g, {"enabled", "bottom_utility"}, "guard");
    Get(g, "enabled", &c.guard.enabled);
    Get(g, "bottom_utility", &c.guard.bottom_utility);
  }
  if (j.contains("corpus")) {
    const json& s = j.at("corpus");
    CheckKeys(s, {"dialogs", "explore", "explore_offer", "mode"}, "corpus");
    Get(s, "dialogs", &c.corpus.dialogs);
    Get(s, "explore", &c.corpus.explore);
    Get(s, "explore_offer", &c.corpus.explore_offer);
    GetMode(s, "mode", &c.corpus.mode);
  }
  if (j.contains("sl")) ReadTrain(j.at("sl"), "sl", &c.sl);
  if (j.contains("rl")) {
    const json& s = j.at("rl");
    CheckKeys(s, {"iterations", "episodes_per_iteration", "learning_rate",
                  "value_learning_rate", "critic_warmup", "entropy_weight",
                  "clip_norm", "eval_every", "eval_episodes", "self_play", "mode"},
              "rl");
    Get(s, "iterations", &c.rl.iterations);
    Get(s, "episodes_per_iteration", &c.rl.episodes_per_iteration);
    Get(s, "learning_rate", &c.rl.learning_rate);
    Get(s, "value_learning_rate", &c.rl.value_learning_rate);
    Get(s, "critic_warmup", &c.rl.critic_warmup);
    Get(s, "entropy_weight", &c.rl.entropy_weight);
    Get(s, "clip_norm", &c.rl.clip_norm);
    Get(s, "eval_every", &c.rl.eval_every);
    Get(s, "eval_episodes", &c.rl.eval_episodes);
    Get(s, "self_play", &c.rl.self_play);
    GetMode(s, "mode", &c.rl.mode);
  }
  if (j.contains("identifier")) ReadTrain(j.at("identifier"), "identifier", &c.identifier);
  Get(j, "heldout_dialogs", &c.heldout_dialogs);
  if (j.contains("transition")) ReadTrain(j.at("transition"), "transition", &c.transition);
  if (j.contains("tom")) {
    const json& s = j.at("tom");
    CheckKeys(s, {"variant", "beta", "grid_size", "utterance_samples", "generation",
                  "support_threshold", "combine_prior"}, "tom");
    if (s.contains("variant")) {
      const std::string name = s.at("variant").get<std::string>();
      c.tom.variant = Require(ScoreVariantFromName(name), "score variant", name);
    }
    Get(s, "beta", &c.tom.beta);
    Get(s, "grid_size", &c.tom.grid_size);
    Get(s, "utterance_samples", &c.tom.utterance_samples);
    GetMode(s, "generation", &c.tom.generation);
    Get(s, "support_threshold", &c.tom.support_threshold);
    Get(s, "combine_prior", &c.tom.combine_prior);
  }
  if (j.contains("finetune")) {
    const json& s = j.at("finetune");
    CheckKeys(s, {"iterations", "episodes_per_iteration", "learning_rate",
                  "value_learning_rate", "shaping", "clip_norm", "eval_every",
                  "eval_episodes", "mode"}, "finetune");
    Get(s, "iterations", &c.finetune.iterations);
    Get(s, "episodes_per_iteration", &c.finetune.episodes_per_iteration);
    Get(s, "learning_rate", &c.finetune.learning_rate);
    Get(s, "value_learning_rate", &c.finetune.value_learning_rate);
    Get(s, "shaping", &c.finetune.shaping);
    Get(s, "clip_norm", &c.finetune.clip_norm);
    Get(s, "eval_every", &c.finetune.eval_every);
    Get(s, "eval_episodes", &c.finetune.eval_episodes);
    GetMode(s, "mode", &c.finetune.mode);
  }
  if (j.contains("evaluation")) {
    const json& s = j.at("evaluation");
    CheckKeys(s, {"managers", "groups", "mode", "debug_dialogs"}, "evaluation");
    if (s.contains("managers")) {
      c.evaluation.managers.clear();
      for (const json& m : s.at("managers")) {
        const std::string name = m.get<std::string>();
        c.evaluation.managers.push_back(
            Require(ManagerKindFromName(name), "manager", name));
      }
    }
    if (s.contains("groups")) {
      c.evaluation.groups.clear();
      for (const json& g : s.at("groups")) {
        CheckKeys(g, {"name", "populations", "weights", "episodes"},
                  "evaluation group");
        EvalGroup group;
        Get(g, "name", &group.name);
        Get(g, "populations", &group.populations);
        Get(g, "weights", &group.weights);
        Get(g, "episodes", &group.episodes);
        c.evaluation.groups.push_back(std::move(group));
      }
    }
    GetMode(s, "mode", &c.evaluation.mode);
    Get(s, "debug_dialogs", &c.evaluation.debug_dialogs);
  }
  return c;
}

void CheckWeights(const std::vector<double>& weights, size_t expected,
                  const std::string& where) {
  if (weights.empty()) return;
  if (weights.size() != expected) {
    throw std::invalid_argument(where + ": expected " + std::to_string(expected) +
                                " weights");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument(where + ": negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument(where + ": weights must sum to 1");
  }
}

void CheckPositive(long long value, const std::string& what) {
  if (value <= 0) throw std::invalid_argument(what + " must be positive");
}

std::vector<PopulationSpec> RosterOf(const ExperimentConfig& config) {
  return config.populations_file.empty() ? DefaultPopulations()
                                         : LoadPopulations(config.populations_file);
}

TemplateBank BankOf(const ExperimentConfig& config) {
  return config.templates_file.empty() ? TemplateBank::Default()
                                       : TemplateBank::Load(config.templates_file);
}

// ---------------------------------------------------------------------------
// Reports

json SummaryToJson(const MetricSummary& m) {
  if (m.count == 0) return nullptr;
  return {{"count", m.count}, {"mean", m.mean}, {"half_width", m.half_width}};
}

json AggregateToJson(const Aggregate& a) {
  return {{"dialogs", a.dialogs},
          {"Ag", SummaryToJson(a.agreement)},
          {"Ut", SummaryToJson(a.utility)},
          {"Fa", SummaryToJson(a.fairness)},
          {"Len", SummaryToJson(a.length)},
          {"Re", SummaryToJson(a.reward)}};
}

void TsvCells(std::ostream& out, const MetricSummary& m) {
  if (m.count == 0) {
    out << "\t\t";
    return;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "\t%.4f\t%.4f", m.mean, m.half_width);
  out << buf;
}

void TsvLine(std::ostream& out, const std::string& manager, const std::string& group,
             const std::string& population, const Aggregate& a) {
  out << manager << '\t' << group << '\t' << population << '\t' << a.dialogs;
  TsvCells(out, a.agreement);
  TsvCells(out, a.utility);
  TsvCells(out, a.fairness);
  out << '\t' << a.fairness.count;
  TsvCells(out, a.length);
  TsvCells(out, a.reward);
  out << '\n';
}

std::string TranscriptFileName(const std::string& manager, const std::string& group) {
  return manager + "__" + group + ".jsonl";
}

json TrainReportToJson(const TrainReport& r) {
  return {{"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss},
          {"initial_validation_loss", r.initial_validation_loss},
          {"best_epoch", r.best_epoch}};
}

int ModeIndex(ToMMode mode) { return mode == ToMMode::kExplicit ? 1 : 0; }

}  // namespace

// ---------------------------------------------------------------------------
// Transcript records

std::string TranscriptToJson(const Transcript& t) {
  json turns = json::array();
  for (const TranscriptTurn& turn : t.turns) turns.push_back(TurnToJson(turn));
  json j = {
      {"seed", t.seed},
      {"scenario",
       {{"listing_price", t.scenario.listing_price},
        {"buyer_target", t.scenario.buyer_target},
        {"seller_target", t.scenario.seller_target},
        {"tags", t.scenario.description_tags},
        {"id", t.scenario.scenario_id}}},
      {"max_turns", t.max_turns},
      {"first_mover", AgentName(t.first_mover)},
      {"buyer", {{"label", t.buyer_label}, {"population", t.buyer_population}}},
      {"seller", {{"label", t.seller_label}, {"population", t.seller_population}}},
      {"turns", turns},
      {"outcome",
       {{"kind", OutcomeName(t.outcome.kind)},
        {"price", OptionalNumber(t.outcome.deal_price)},
        {"length", t.outcome.length}}},
      {"metrics",
       {{"agreement", t.metrics.agreement},
        {"utility_buyer", t.metrics.utility_buyer},
        {"utility_seller", t.metrics.utility_seller},
        {"fairness", OptionalNumber(t.metrics.fairness)},
        {"length", t.metrics.length},
        {"reward_buyer", t.metrics.reward_buyer},
        {"reward_seller", t.metrics.reward_seller}}}};
  return j.dump();
}

Transcript TranscriptFromJson(std::string_view line) {
  try {
    const json j = json::parse(line);
    Transcript t;
    t.seed = j.at("seed").get<std::uint64_t>();
    const json& s = j.at("scenario");
    t.scenario.listing_price = s.at("listing_price").get<double>();
    t.scenario.buyer_target = s.at("buyer_target").get<double>();
    t.scenario.seller_target = s.at("seller_target").get<double>();
    t.scenario.description_tags = s.at("tags").get<std::vector<std::string>>();
    t.scenario.scenario_id = s.at("id").get<std::uint64_t>();
    t.max_turns = j.at("max_turns").get<int>();
    const std::string first = j.at("first_mover").get<std::string>();
    t.first_mover = Require(AgentFromName(first), "agent", first);
    t.buyer_label = j.at("buyer").at("label").get<std::string>();
    t.buyer_population = j.at("buyer").at("population").get<int>();
    t.seller_label = j.at("seller").at("label").get<std::string>();
    t.seller_population = j.at("seller").at("population").get<int>();
    for (const json& turn : j.at("turns")) t.turns.push_back(TurnFromJson(turn));
    const json& o = j.at("outcome");
    const std::string kind = o.at("kind").get<std::string>();
    t.outcome.kind = Require(OutcomeFromName(kind), "outcome", kind);
    t.outcome.deal_price = ReadOptional(o.at("price"));
    t.outcome.length = o.at("length").get<int>();
    const json& m = j.at("metrics");
    t.metrics.agreement = m.at("agreement").get<int>();
    t.metrics.utility_buyer = m.at("utility_buyer").get<double>();
    t.metrics.utility_seller = m.at("utility_seller").get<double>();
    t.metrics.fairness = ReadOptional(m.at("fairness"));
    t.metrics.length = m.at("length").get<int>();
    t.metrics.reward_buyer = m.at("reward_buyer").get<double>();
    t.metrics.reward_seller = m.at("reward_seller").get<double>();
    return t;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("transcript record: ") + e.what());
  }
}

void WriteTranscripts(const std::vector<Transcript>& transcripts,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const Transcript& t : transcripts) out << TranscriptToJson(t) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Transcript> ReadTranscripts(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Transcript> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(TranscriptFromJson(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig::ExperimentConfig() {
  // The transition heads need longer training than the policy to resolve
  // the opponents' acceptance thresholds.
  transition.epochs = 40;
}

ExperimentConfig ParseExperimentConfig(std::string_view json_text) {
  try {
    return ConfigFromJson(json::parse(json_text));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  return ParseExperimentConfig(ReadFile(path));
}

std::string ExperimentConfigToJson(const ExperimentConfig& config) {
  return ConfigToJson(config).dump(2) + "\n";
}

void ValidateExperimentConfig(const ExperimentConfig& c,
                              const std::vector<PopulationSpec>& roster) {
  ValidateScenarioConfig(c.scenario);
  if (roster.empty()) throw std::invalid_argument("empty population roster");
  for (size_t i = 0; i < roster.size(); ++i) {
    ValidatePopulation(roster[i]);
    if (roster[i].id < 0 || roster[i].id >= kNumPopulations) {
      throw std::invalid_argument("population ids must lie in [0, " +
                                  std::to_string(kNumPopulations) + ")");
    }
  }
  CheckWeights(c.mixture, roster.size(), "mixture");
  CheckPositive(c.model.hidden, "model.hidden");
  CheckPositive(c.model.layers, "model.layers");
  CheckPositive(c.model.mlp, "model.mlp");
  CheckPositive(c.corpus.dialogs, "corpus.dialogs");
  CheckPositive(c.heldout_dialogs, "heldout_dialogs");
  for (const auto& [name, t] : {std::pair{"sl", &c.sl},
                                {"identifier", &c.identifier},
                                {"transition", &c.transition}}) {
    CheckPositive(t->epochs, std::string(name) + ".epochs");
    CheckPositive(t->batch_size, std::string(name) + ".batch_size");
    if (t->validation_fraction < 0.0 || t->validation_fraction >= 1.0) {
      throw std::invalid_argument(std::string(name) +
                                  ".validation_fraction outside [0, 1)");
    }
  }
  if (c.rl.iterations < 0) throw std::invalid_argument("rl.iterations < 0");
  CheckPositive(c.rl.episodes_per_iteration, "rl.episodes_per_iteration");
  CheckPositive(c.rl.eval_episodes, "rl.eval_episodes");
  if (c.finetune.iterations < 0) {
    throw std::invalid_argument("finetune.iterations < 0");
  }
  CheckPositive(c.finetune.episodes_per_iteration,
                "finetune.episodes_per_iteration");
  CheckPositive(c.finetune.eval_episodes, "finetune.eval_episodes");
  if (!(c.tom.beta > 0.0)) throw std::invalid_argument("tom.beta must be positive");
  if (c.tom.grid_size < 2) throw std::invalid_argument("tom.grid_size < 2");
  CheckPositive(c.tom.utterance_samples, "tom.utterance_samples");
  if (c.evaluation.managers.empty()) {
    throw std::invalid_argument("evaluation.managers is empty");
  }
  std::set<ManagerKind> kinds(c.evaluation.managers.begin(),
                              c.evaluation.managers.end());
  if (kinds.size() != c.evaluation.managers.size()) {
    throw std::invalid_argument("evaluation.managers has duplicates");
  }
  if (c.evaluation.groups.empty()) {
    throw std::invalid_argument("evaluation.groups is empty");
  }
  std::set<std::string> names;
  for (const EvalGroup& g : c.evaluation.groups) {
    const std::string where = "evaluation group '" + g.name + "'";
    if (g.name.empty() ||
        !std::all_of(g.name.begin(), g.name.end(), [](char ch) {
          return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' ||
                 ch == '-';
        })) {
      throw std::invalid_argument(where + ": names use [A-Za-z0-9_-]");
    }
    if (!names.insert(g.name).second) {
      throw std::invalid_argument(where + ": duplicate name");
    }
    CheckPositive(g.episodes, where + " episodes");
    for (int p : g.populations) {
      if (p < 0 || p >= static_cast<int>(roster.size())) {
        throw std::invalid_argument(where + ": population " + std::to_string(p) +
                                    " outside the roster");
      }
    }
    CheckWeights(g.weights,
                 g.populations.empty() ? roster.size() : g.populations.size(),
                 where);
  }
  if (c.evaluation.debug_dialogs < 0) {
    throw std::invalid_argument("evaluation.debug_dialogs < 0");
  }
}

std::uint64_t Fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Metrics and reports

MetricSummary Summarize(const std::vector<double>& values) {
  MetricSummary m;
  m.count = static_cast<int>(values.size());
  if (m.count == 0) return m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / m.count;
  if (m.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.half_width = 1.96 * std::sqrt(ss / (m.count - 1) / m.count);
  }
  return m;
}

Aggregate AggregateMetrics(const std::vector<Transcript>& transcripts,
                           AgentId agent) {
  std::vector<double> ag, ut, fa, len, re;
  for (const Transcript& t : transcripts) {
    ag.push_back(t.metrics.agreement);
    ut.push_back(t.metrics.utility(agent));
    if (t.metrics.fairness) fa.push_back(*t.metrics.fairness);
    len.push_back(t.metrics.length);
    re.push_back(t.metrics.reward(agent));
  }
  Aggregate a;
  a.dialogs = static_cast<int>(transcripts.size());
  a.agreement = Summarize(ag);
  a.utility = Summarize(ut);
  a.fairness = Summarize(fa);
  a.length = Summarize(len);
  a.reward = Summarize(re);
  return a;
}

const ReportRow* EvaluationReport::Find(std::string_view manager,
                                        std::string_view group) const {
  for (const ReportRow& row : rows) {
    if (row.manager == manager && row.group == group) return &row;
  }
  return nullptr;
}

ReportRow MakeReportRow(const std::string& manager, const std::string& group,
                        const std::vector<Transcript>& transcripts,
                        AgentId agent) {
  ReportRow row{manager, group, AggregateMetrics(transcripts, agent), {}};
  std::map<int, std::vector<Transcript>> split;
  for (const Transcript& t : transcripts) {
    split[t.population_of(Other(agent))].push_back(t);
  }
  for (const auto& [population, part] : split) {
    row.by_population[population] = AggregateMetrics(part, agent);
  }
  return row;
}

std::string ReportToTsv(const EvaluationReport& report) {
  std::ostringstream out;
  out << "manager\tgroup\tpopulation\tdialogs\tAg\tAg_ci\tUt\tUt_ci\tFa\tFa_ci\t"
         "deals\tLen\tLen_ci\tRe\tRe_ci\n";
  for (const ReportRow& row : report.rows) {
    TsvLine(out, row.manager, row.group, "all", row.overall);
    for (const auto& [population, a] : row.by_population) {
      TsvLine(out, row.manager, row.group, std::to_string(population), a);
    }
  }
  return out.str();
}

std::string ReportToJson(const EvaluationReport& report) {
  json rows = json::array();
  for (const ReportRow& row : report.rows) {
    json populations = json::object();
    for (const auto& [population, a] : row.by_population) {
      populations[std::to_string(population)] = AggregateToJson(a);
    }
    rows.push_back({{"manager", row.manager},
                    {"group", row.group},
                    {"overall", AggregateToJson(row.overall)},
                    {"populations", populations}});
  }
  json j = {{"agent", AgentName(report.agent)}, {"rows", rows}};
  return j.dump(2) + "\n";
}

std::vector<int> EvaluationSchedule(const std::vector<int>& populations,
                                    const std::vector<double>& weights,
                                    int episodes) {
  if (populations.empty() || episodes <= 0) return {};
  const size_t m = populations.size();
  std::vector<double> w = weights.empty() ? std::vector<double>(m, 1.0 / m) : weights;
  std::vector<int> counts(m);
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t i = 0; i < m; ++i) {
    const double exact = w[i] * episodes;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.push_back({exact - counts[i], i});
  }
  // Largest remainder first; ties go to the earlier population.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t k = 0; assigned < episodes; ++k, ++assigned) {
    ++counts[remainders[k % m].second];
  }
  std::vector<int> schedule;
  schedule.reserve(episodes);
  while (static_cast<int>(schedule.size()) < episodes) {
    for (size_t i = 0; i < m; ++i) {
      if (counts[i] > 0) {
        schedule.push_back(populations[i]);
        --counts[i];
      }
    }
  }
  return schedule;
}

namespace {

Transcript EvaluationEpisode(Negotiator& agent, AgentId side,
                             const PopulationSpec& population,
                             const TemplateBank& bank,
                             const ScenarioConfig& scenario, GenerationMode mode,
                             std::uint64_t seed, int index) {
  PopulationNegotiator opponent(population);
  const std::uint64_t i = static_cast<std::uint64_t>(index);
  const Scenario sc = SampleScenario(DeriveSeed(seed, 2 * i), scenario);
  EpisodeOptions options;
  options.mode = mode;
  const bool buys = side == AgentId::kBuyer;
  return PlayDialog(sc, buys ? agent : static_cast<Negotiator&>(opponent),
                    buys ? static_cast<Negotiator&>(opponent) : agent, bank,
                    options, DeriveSeed(seed, 2 * i + 1));
}

}  // namespace

std::vector<Transcript> EvaluateManager(Negotiator& agent, AgentId side,
                                        const std::vector<PopulationSpec>& roster,
                                        const std::vector<int>& schedule,
                                        const TemplateBank& bank,
                                        const ScenarioConfig& scenario,
                                        GenerationMode mode, std::uint64_t seed) {
  std::vector<Transcript> out;
  out.reserve(schedule.size());
  for (size_t i = 0; i < schedule.size(); ++i) {
    out.push_back(EvaluationEpisode(agent, side, roster.at(schedule[i]), bank,
                                    scenario, mode, seed, static_cast<int>(i)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::State {
  json config;  // full config, for stage sections
  std::string roster_json;
  std::string bank_id;

  std::optional<std::vector<Transcript>> corpus, heldout;
  std::string corpus_key, heldout_key;
  std::shared_ptr<PolicyModel> sl;
  std::string sl_key;
  std::optional<ActorCritic> rl;
  std::shared_ptr<PolicyModel> rl_policy;
  std::string rl_key;
  std::optional<Identifier> identifier;
  std::optional<IdentifierAccuracy> accuracy;
  std::string identifier_key;
  std::optional<TransitionModel> transition[2];
  std::string transition_key[2];
  std::optional<ActorCritic> finetuned[2];
  std::string finetune_key[2];
  std::optional<EvaluationReport> report;
};

namespace {

// Runs or loads one stage. `load` reads from a finished stage directory;
// `compute` writes into a scratch directory that is renamed on success.
template <typename Load, typename Compute>
StageInfo RunStage(const std::string& run_dir, const std::string& name,
                   const std::string& key, const json& manifest, std::ostream* log,
                   Load load, Compute compute) {
  StageInfo info{name, key, (fs::path(run_dir) / "stages" / (name + "-" + key)).string(),
                 false};
  const auto start = std::chrono::steady_clock::now();
  try {
    if (fs::exists(fs::path(info.dir) / "manifest.json")) {
      load(info.dir);
      info.cached = true;
    } else {
      const std::string scratch = info.dir + ".tmp";
      fs::remove_all(scratch);
      fs::create_directories(scratch);
      compute(scratch);
      WriteFile((fs::path(scratch) / "manifest.json").string(), manifest.dump(2) + "\n");
      fs::remove_all(info.dir);
      fs::rename(scratch, info.dir);
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    fs::create_directories(run_dir);
    const json error = {{"stage", name}, {"key", key}, {"error", e.what()}};
    WriteFile((fs::path(run_dir) / "error.json").string(), error.dump(2) + "\n");
    throw StageError(name, e.what());
  }
  if (log) {
    const double seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - start).count();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1fs", seconds);
    *log << "[stage] " << name << " " << key << " "
         << (info.cached ? "cached" : std::string("computed in ") + buf) << "\n";
  }
  return info;
}

std::string PathIn(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig config, std::ostream* log)
    : config_(std::move(config)),
      log_(log),
      roster_(RosterOf(config_)),
      bank_(BankOf(config_)),
      state_(std::make_unique<State>()) {
  ValidateExperimentConfig(config_, roster_);
  state_->config = ConfigToJson(config_);
  state_->roster_json = PopulationsToJson(roster_);
  state_->bank_id = config_.templates_file.empty()
                        ? std::string("default")
                        : Hex(Fnv1a(ReadFile(config_.templates_file)));
}

Pipeline::~Pipeline() = default;

std::string Pipeline::StageKey(const std::string& name, const std::string& section,
                               const std::vector<std::string>& upstream) const {
  std::string text = "tomneg-stage-1\n" + name + "\n" + section + "\n";
  for (const std::string& key : upstream) text += key + ",";
  return Hex(Fnv1a(text));
}

const std::vector<Transcript>& Pipeline::Corpus() {
  if (state_->corpus) return *state_->corpus;
  const json& c = state_->config;
  const json section = {{"seed", c["seed"]},         {"agent", c["agent"]},
                        {"scenario", c["scenario"]}, {"mixture", c["mixture"]},
                        {"corpus", c["corpus"]},     {"roster", state_->roster_json},
                        {"templates", state_->bank_id}};
  const std::string key = StageKey("corpus", section.dump(), {});
  state_->corpus_key = key;
  stages_.push_back(RunStage(
      config_.run_dir, "corpus", key, {{"stage", "corpus"}, {"section", section}},
      log_,
      [&](const std::string& dir) {
        state_->corpus = ReadTranscripts(PathIn(dir, "transcripts.jsonl"));
      },
      [&](const std::string& dir) {
        CorpusConfig cc = config_.corpus;
        cc.agent = config_.agent;
        cc.mixture = config_.mixture;
        cc.scenario = config_.scenario;
        cc.seed = DeriveSeed(config_.seed, 1);
        state_->corpus = GenerateCorpus(cc, roster_, bank_);
        WriteTranscripts(*state_->corpus, PathIn(dir, "transcripts.jsonl"));
      }));
  return *state_->corpus;
}

const std::vector<Transcript>& Pipeline::Heldout() {
  if (state_->heldout) return *state_->heldout;
  const json& c = state_->config;
  const json section = {{"seed", c["seed"]},
                        {"agent", c["agent"]},
                        {"scenario", c["scenario"]},
                        {"mixture", c["mixture"]},
                        {"corpus", c["corpus"]},
                        {"heldout_dialogs", c["heldout_dialogs"]},
                        {"roster", state_->roster_json},
                        {"templates", state_->bank_id}};
  const std::string key = StageKey("heldout", section.dump(), {});
  state_->heldout_key = key;
  stages_.push_back(RunStage(
      config_.run_dir, "heldout", key, {{"stage", "heldout"}, {"section", section}},
      log_,
      [&](const std::string& dir) {
        state_->heldout = ReadTranscripts(PathIn(dir, "transcripts.jsonl"));
      },
      [&](const std::string& dir) {
        CorpusConfig cc = config_.corpus;
        cc.dialogs = config_.heldout_dialogs;
        cc.agent = config_.agent;
        cc.mixture = config_.mixture;
        cc.scenario = config_.scenario;
        cc.seed = DeriveSeed(config_.seed, 2);
        state_->heldout = GenerateCorpus(cc, roster_, bank_);
        WriteTranscripts(*state_->heldout, PathIn(dir, "transcripts.jsonl"));
      }));
  return *state_->heldout;
}

const PolicyModel& Pipeline::Sl() {
  if (state_->sl) return *state_->sl;
  const std::vector<Transcript>& corpus = Corpus();
  const json& c = state_->config;
  const json section = {{"seed", c["seed"]}, {"model", c["model"]}, {"sl", c["sl"]}};
  const std::string key = StageKey("sl", section.dump(), {state_->corpus_key});
  state_->sl_key = key;
  const json manifest = {{"stage", "sl"}, {"section", section},
                         {"upstream", {state_->corpus_key}}};
  stages_.push_back(RunStage(
      config_.run_dir, "sl", key, manifest, log_,
      [&](const std::string& dir) {
        state_->sl = std::make_shared<PolicyModel>(
            config_.model, nn::LoadParametersFile(PathIn(dir, "policy.params")));
      },
      [&](const std::string& dir) {
        TrainConfig tc = config_.sl;
        tc.seed = DeriveSeed(config_.seed, 3);
        TrainReport report;
        state_->sl = std::make_shared<PolicyModel>(
            TrainSl(corpus, config_.model, tc, &report));
        nn::SaveParametersFile(state_->sl->net().params(), PathIn(dir, "policy.params"));
        WriteFile(PathIn(dir, "train.json"), TrainReportToJson(report).dump(2) + "\n");
      }));
  return *state_->sl;
}

const ActorCritic& Pipeline::Rl() {
  if (state_->rl) return *state_->rl;
  const PolicyModel& sl = Sl();
  const json& c = state_->config;
  const json section = {{"seed", c["seed"]},         {"agent", c["agent"]},
                        {"model", c["model"]},       {"rl", c["rl"]},
                        {"guard", c["guard"]},       {"scenario", c["scenario"]},
                        {"mixture", c["mixture"]},   {"roster", state_->roster_json},
                        {"templates", state_->bank_id}};
  const std::string key = StageKey("rl", section.dump(), {state_->sl_key});
  state_->rl_key = key;
  const json manifest = {{"stage", "rl"}, {"section", section},
                         {"upstream", {state_->sl_key}}};
  stages_.push_back(RunStage(
      config_.run_dir, "rl", key, manifest, log_,
      [&](const std::string& dir) {
        state_->rl = ActorCritic{
            PolicyModel(config_.model,
                        nn::LoadParametersFile(PathIn(dir, "policy.params"))),
            ValueModel(config_.model,
                       nn::LoadParametersFile(PathIn(dir, "value.params")))};
      },
      [&](const std::string& dir) {
        RlConfig rc = config_.rl;
        rc.agent = config_.agent;
        rc.scenario = config_.scenario;
        rc.guard = config_.guard;
        rc.seed = DeriveSeed(config_.seed, 4);
        RlReport report;
        state_->rl = TrainRl(sl, PopulationPool(roster_, config_.mixture), bank_, rc,
                             &report);
        nn::SaveParametersFile(state_->rl->policy.net().params(),
                               PathIn(dir, "policy.params"));
        nn::SaveParametersFile(state_->rl->value.net().params(),
                               PathIn(dir, "value.params"));
        const json j = {{"reward_curve", report.reward_curve},
                        {"eval_reward", report.eval_reward},
                        {"best_iteration", report.best_iteration}};
        WriteFile(PathIn(dir, "train.json"), j.dump(2) + "\n");
      }));
  state_->rl_policy = std::make_shared<PolicyModel>(state_->rl->policy);
  return *state_->rl;
}

const Identifier& Pipeline::IdentifierModel() {
  if (state_->identifier) return *state_->identifier;
  const std::vector<Transcript>& corpus = Corpus();
  const std::vector<Transcript>& heldout = Heldout();
  const json& c = state_->config;
  const json section = {{"seed", c["seed"]},
                        {"agent", c["agent"]},
                        {"model", c["model"]},
                        {"identifier", c["identifier"]}};
  const std::string key = StageKey("identifier", section.dump(),
                                   {state_->corpus_key, state_->heldout_key});
  state_->identifier_key = key;
  const json manifest = {{"stage", "identifier"}, {"section", section},
                         {"upstream", {state_->corpus_key, state_->heldout_key}}};
  auto read_accuracy = [&](const std::string& dir) {
    const json j = json::parse(ReadFile(PathIn(dir, "accuracy.json")));
    state_->accuracy = IdentifierAccuracy{j.at("top1").get<double>(),
                                          j.at("top3").get<double>(),
                                          j.at("dialogs").get<int>()};
  };
  stages_.push_back(RunStage(
      config_.run_dir, "identifier", key, manifest, log_,
      [&](const std::string& dir) {
        state_->identifier = Identifier(
            config_.model, nn::LoadParametersFile(PathIn(dir, "identifier.params")));
        read_accuracy(dir);
      },
      [&](const std::string& dir) {
        TrainConfig tc = config_.identifier;
        tc.seed = DeriveSeed(config_.seed, 5);
        TrainReport report;
        state_->identifier =
            TrainIdentifier(corpus, config_.agent, config_.model, tc, &report);
        nn::SaveParametersFile(state_->identifier->net().params(),
                               PathIn(dir, "identifier.params"));
        WriteFile(PathIn(dir, "train.json"), TrainReportToJson(report).dump(2) + "\n");
        const IdentifierAccuracy acc =
            EvaluateIdentifier(*state_->identifier, heldout, config_.agent, 6);
        const json j = {{"opponent_turns", 6},
                        {"top1", acc.top1},
                        {"top3", acc.top3},
                        {"dialogs", acc.dialogs}};
        WriteFile(PathIn(dir, "accuracy.json"), j.dump(2) + "\n");
        state_->accuracy = acc;
      }));
  return *state_->identifier;
}

IdentifierAccuracy Pipeline::IdentifierHeldoutAccuracy() {
  IdentifierModel();
  return *state_->accuracy;
}

const TransitionModel& Pipeline::Transition(ToMMode mode) {
  const int m = ModeIndex(mode);
  if (state_->transition[m]) return *state_->transition[m];
  const std::vector<Transcript>& corpus = Corpus();
  const std::vector<Transcript>& heldout = Heldout();
  const Identifier* identifier =
      mode == ToMMode::kExplicit ? &IdentifierModel() : nullptr;
  const json& c = state_->config;
  const std::string name = "transition_" + std::string(ToMModeName(mode));
  const json section = {{"seed", c["seed"]},
                        {"agent", c["agent"]},
                        {"model", c["model"]},
                        {"transition", c["transition"]}};
  std::vector<std::string> upstream = {state_->corpus_key, state_->heldout_key};
  if (identifier) upstream.push_back(state_->identifier_key);
  const std::string key = StageKey(name, section.dump(), upstream);
  state_->transition_key[m] = key;
  const json manifest = {{"stage", name}, {"section", section}, {"upstream", upstream}};
  stages_.push_back(RunStage(
      config_.run_dir, name, key, manifest, log_,
      [&](const std::string& dir) {
        state_->transition[m] =
            TransitionModel(mode, config_.model,
                            nn::LoadParametersFile(PathIn(dir, "transition.params")));
      },
      [&](const std::string& dir) {
        TrainConfig tc = config_.transition;
        tc.seed = DeriveSeed(config_.seed, 6 + m);
        TrainReport report;
        state_->transition[m] = TrainTransition(corpus, config_.agent, mode, identifier,
                                                config_.model, tc, &report);
        nn::SaveParametersFile(state_->transition[m]->net().params(),
                               PathIn(dir, "transition.params"));
        json j = TrainReportToJson(report);
        j["heldout_price_mse"] =
            TransitionPriceMse(*state_->transition[m], heldout, config_.agent, identifier);
        WriteFile(PathIn(dir, "train.json"), j.dump(2) + "\n");
      }));
  return *state_->transition[m];
}

const ActorCritic& Pipeline::Finetuned(ToMMode mode) {
  const int m = ModeIndex(mode);
  if (state_->finetuned[m]) return *state_->finetuned[m];
  const ActorCritic& rl = Rl();
  if (config_.finetune.iterations == 0) {
    state_->finetune_key[m] = state_->rl_key;
    state_->finetuned[m] = rl;
    return *state_->finetuned[m];
  }
  const TransitionModel& transition = Transition(mode);
  const Identifier* identifier =
      mode == ToMMode::kExplicit ? &IdentifierModel() : nullptr;
  const json& c = state_->config;
  const std::string name = "finetune_" + std::string(ToMModeName(mode));
  const json section = {{"seed", c["seed"]},         {"agent", c["agent"]},
                        {"model", c["model"]},       {"tom", c["tom"]},
                        {"guard", c["guard"]},       {"finetune", c["finetune"]},
                        {"scenario", c["scenario"]}, {"mixture", c["mixture"]},
                        {"roster", state_->roster_json},
                        {"templates", state_->bank_id}};
  std::vector<std::string> upstream = {state_->rl_key, state_->transition_key[m]};
  if (identifier) upstream.push_back(state_->identifier_key);
  const std::string key = StageKey(name, section.dump(), upstream);
  state_->finetune_key[m] = key;
  const json manifest = {{"stage", name}, {"section", section}, {"upstream", upstream}};
  stages_.push_back(RunStage(
      config_.run_dir, name, key, manifest, log_,
      [&](const std::string& dir) {
        state_->finetuned[m] = ActorCritic{
            PolicyModel(config_.model,
                        nn::LoadParametersFile(PathIn(dir, "policy.params"))),
            ValueModel(config_.model,
                       nn::LoadParametersFile(PathIn(dir, "value.params")))};
      },
      [&](const std::string& dir) {
        ToMConfig tom = config_.tom;
        tom.mode = mode;
        tom.guard = config_.guard;
        FinetuneConfig fc = config_.finetune;
        fc.agent = config_.agent;
        fc.scenario = config_.scenario;
        fc.seed = DeriveSeed(config_.seed, 8 + m);
        FinetuneReport report;
        state_->finetuned[m] =
            FinetuneToM(rl, transition, identifier,
                        PopulationPool(roster_, config_.mixture), bank_, tom, fc,
                        &report);
        nn::SaveParametersFile(state_->finetuned[m]->policy.net().params(),
                               PathIn(dir, "policy.params"));
        nn::SaveParametersFile(state_->finetuned[m]->value.net().params(),
                               PathIn(dir, "value.params"));
        const json j = {{"reward_curve", report.reward_curve},
                        {"eval_reward", report.eval_reward},
                        {"best_iteration", report.best_iteration}};
        WriteFile(PathIn(dir, "train.json"), j.dump(2) + "\n");
      }));
  return *state_->finetuned[m];
}

std::unique_ptr<Negotiator> Pipeline::MakeManager(ManagerKind kind) {
  switch (kind) {
    case ManagerKind::kSlRule:
      Sl();
      return std::make_unique<PolicyManager>(kind, state_->sl, config_.guard);
    case ManagerKind::kRl:
      Rl();
      return std::make_unique<PolicyManager>(kind, state_->rl_policy, config_.guard);
    case ManagerKind::kToMImplicit:
    case ManagerKind::kToMExplicit: {
      const ToMMode mode = kind == ManagerKind::kToMExplicit ? ToMMode::kExplicit
                                                             : ToMMode::kImplicit;
      const ActorCritic& models = Finetuned(mode);
      const TransitionModel& transition = Transition(mode);
      const Identifier* identifier =
          mode == ToMMode::kExplicit ? &IdentifierModel() : nullptr;
      ToMConfig tom = config_.tom;
      tom.mode = mode;
      tom.guard = config_.guard;
      return std::make_unique<ToMManager>(
          ToMModels{&transition, &models.value, identifier, &models.policy, &bank_},
          tom);
    }
  }
  throw std::logic_error("unknown manager kind");
}

const EvaluationReport& Pipeline::Evaluate() {
  if (state_->report) return *state_->report;
  std::vector<std::unique_ptr<Negotiator>> managers;
  std::vector<std::string> upstream;
  for (ManagerKind kind : config_.evaluation.managers) {
    managers.push_back(MakeManager(kind));
    switch (kind) {
      case ManagerKind::kSlRule:
        upstream.push_back(state_->sl_key);
        break;
      case ManagerKind::kRl:
        upstream.push_back(state_->rl_key);
        break;
      case ManagerKind::kToMImplicit:
      case ManagerKind::kToMExplicit: {
        const int m = ModeIndex(kind == ManagerKind::kToMExplicit ? ToMMode::kExplicit
                                                                  : ToMMode::kImplicit);
        upstream.push_back(state_->finetune_key[m]);
        upstream.push_back(state_->transition_key[m]);
        if (m == 1) upstream.push_back(state_->identifier_key);
        break;
      }
    }
  }
  const json& c = state_->config;
  const json section = {{"seed", c["seed"]},         {"agent", c["agent"]},
                        {"model", c["model"]},       {"tom", c["tom"]},
                        {"guard", c["guard"]},       {"scenario", c["scenario"]},
                        {"evaluation", c["evaluation"]},
                        {"roster", state_->roster_json},
                        {"templates", state_->bank_id}};
  const std::string key = StageKey("evaluate", section.dump(), upstream);
  const json manifest = {{"stage", "evaluate"}, {"section", section},
                         {"upstream", upstream}};
  const EvaluationConfig& ec = config_.evaluation;
  StageInfo info = RunStage(
      config_.run_dir, "evaluate", key, manifest, log_,
      [&](const std::string& dir) {
        EvaluationReport report;
        report.agent = config_.agent;
        for (ManagerKind kind : ec.managers) {
          for (const EvalGroup& g : ec.groups) {
            const std::string name(ManagerKindName(kind));
            report.rows.push_back(MakeReportRow(
                name, g.name,
                ReadTranscripts(PathIn(dir, "transcripts/" +
                                                TranscriptFileName(name, g.name))),
                config_.agent));
          }
        }
        state_->report = std::move(report);
      },
      [&](const std::string& dir) {
        fs::create_directories(PathIn(dir, "transcripts"));
        if (ec.debug_dialogs > 0) fs::create_directories(PathIn(dir, "debug"));
        EvaluationReport report;
        report.agent = config_.agent;
        for (size_t k = 0; k < managers.size(); ++k) {
          const std::string name(ManagerKindName(ec.managers[k]));
          auto* tom = dynamic_cast<ToMManager*>(managers[k].get());
          for (const EvalGroup& g : ec.groups) {
            std::vector<int> populations = g.populations;
            if (populations.empty()) {
              for (size_t p = 0; p < roster_.size(); ++p) {
                populations.push_back(static_cast<int>(p));
              }
            }
            const std::vector<int> schedule =
                EvaluationSchedule(populations, g.weights, g.episodes);
            const std::uint64_t seed =
                DeriveSeed(DeriveSeed(config_.seed, 10), Fnv1a(g.name));
            std::ofstream debug;
            if (tom && ec.debug_dialogs > 0) {
              debug.open(PathIn(dir, "debug/" + TranscriptFileName(name, g.name)));
            }
            std::vector<Transcript> transcripts;
            for (size_t i = 0; i < schedule.size(); ++i) {
              const bool traced = debug.is_open() &&
                                  static_cast<int>(i) < ec.debug_dialogs;
              if (traced) {
                debug << json({{"dialog", i}, {"population", schedule[i]}}).dump()
                      << "\n";
              }
              if (tom) tom->set_debug(traced ? &debug : nullptr);
              transcripts.push_back(EvaluationEpisode(
                  *managers[k], config_.agent, roster_.at(schedule[i]), bank_,
                  config_.scenario, ec.mode, seed, static_cast<int>(i)));
            }
            if (tom) tom->set_debug(nullptr);
            WriteTranscripts(transcripts,
                             PathIn(dir, "transcripts/" + TranscriptFileName(name, g.name)));
            report.rows.push_back(MakeReportRow(name, g.name, transcripts, config_.agent));
            if (log_) {
              const Aggregate& a = report.rows.back().overall;
              *log_ << "  " << name << " vs " << g.name << ": Ag " << a.agreement.mean
                    << " Re " << a.reward.mean << "\n";
            }
          }
        }
        WriteFile(PathIn(dir, "report.tsv"), ReportToTsv(report));
        WriteFile(PathIn(dir, "report.json"), ReportToJson(report));
        state_->report = std::move(report);
      });
  stages_.push_back(info);
  evaluation_dir_ = info.dir;
  fs::copy_file(PathIn(info.dir, "report.tsv"), PathIn(config_.run_dir, "report.tsv"),
                fs::copy_options::overwrite_existing);
  fs::copy_file(PathIn(info.dir, "report.json"), PathIn(config_.run_dir, "report.json"),
                fs::copy_options::overwrite_existing);
  return *state_->report;
}

void Pipeline::RunAll() {
  fs::create_directories(config_.run_dir);
  WriteFile(PathIn(config_.run_dir, "config.json"), ExperimentConfigToJson(config_));
  Evaluate();
  IdentifierHeldoutAccuracy();
}

// ---------------------------------------------------------------------------
// Verification

VerifyResult VerifyReport(const std::string& evaluation_dir) {
  VerifyResult result;
  auto problem = [&](const std::string& text) {
    result.ok = false;
    result.problems.push_back(text);
  };
  const std::string json_path = PathIn(evaluation_dir, "report.json");
  const std::string tsv_path = PathIn(evaluation_dir, "report.tsv");
  std::string stored_json, stored_tsv;
  try {
    stored_json = ReadFile(json_path);
    stored_tsv = ReadFile(tsv_path);
  } catch (const std::exception& e) {
    problem(e.what());
    return result;
  }
  json stored;
  try {
    stored = json::parse(stored_json);
  } catch (const json::exception& e) {
    problem(std::string("report.json: ") + e.what());
    return result;
  }
  EvaluationReport recomputed;
  const std::string agent_name = stored.value("agent", "");
  const std::optional<AgentId> agent = AgentFromName(agent_name);
  if (!agent) {
    problem("report.json: unknown agent '" + agent_name + "'");
    return result;
  }
  recomputed.agent = *agent;
  for (const json& row : stored.at("rows")) {
    const std::string manager = row.at("manager").get<std::string>();
    const std::string group = row.at("group").get<std::string>();
    const std::string file =
        PathIn(evaluation_dir, "transcripts/" + TranscriptFileName(manager, group));
    std::vector<Transcript> transcripts;
    try {
      transcripts = ReadTranscripts(file);
    } catch (const std::exception& e) {
      problem(e.what());
      continue;
    }
    for (size_t i = 0; i < transcripts.size(); ++i) {
      const Transcript& t = transcripts[i];
      const std::string where = manager + "/" + group + " #" + std::to_string(i);
      try {
        DialogState state(t.scenario, t.max_turns, t.first_mover);
        std::optional<Outcome> outcome;
        for (const TranscriptTurn& turn : t.turns) {
          StepResult r = Step(state, turn.turn.agent, turn.turn.act, turn.turn.utterance);
          state = std::move(r.state);
          if (r.outcome) outcome = r.outcome;
        }
        if (!outcome) {
          problem(where + ": dialog never closes");
          continue;
        }
        if (outcome->kind != t.outcome.kind ||
            outcome->deal_price != t.outcome.deal_price ||
            outcome->length != t.outcome.length) {
          problem(where + ": outcome differs from replay");
        }
        const MetricsRecord m = ComputeMetrics(*outcome, t.scenario);
        if (m.agreement != t.metrics.agreement ||
            m.utility_buyer != t.metrics.utility_buyer ||
            m.utility_seller != t.metrics.utility_seller ||
            m.fairness != t.metrics.fairness || m.length != t.metrics.length ||
            m.reward_buyer != t.metrics.reward_buyer ||
            m.reward_seller != t.metrics.reward_seller) {
          problem(where + ": metrics differ from recomputation");
        }
      } catch (const std::exception& e) {
        problem(where + ": replay failed: " + e.what());
      }
    }
    result.transcripts += static_cast<int>(transcripts.size());
    recomputed.rows.push_back(MakeReportRow(manager, group, transcripts, *agent));
  }
  if (ReportToJson(recomputed) != stored_json) {
    problem("report.json differs from the recomputed aggregates");
  }
  if (ReportToTsv(recomputed) != stored_tsv) {
    problem("report.tsv differs from the recomputed aggregates");
  }
  return result;
}

void DumpEmbeddings(const Identifier& identifier,
                    const std::vector<Transcript>& dialogs, AgentId agent,
                    int opponent_turns, std::ostream& out) {
  bool header = false;
  for (size_t d = 0; d < dialogs.size(); ++d) {
    const Transcript& t = dialogs[d];
    int seen = 0;
    int prefix = 0;
    for (size_t k = 0; k < t.turns.size() && seen < opponent_turns; ++k) {
      if (t.turns[k].turn.agent != agent) {
        ++seen;
        prefix = static_cast<int>(k) + 1;
      }
    }
    if (seen == 0) continue;
    const DialogState state = t.Replay(prefix);
    const Eigen::VectorXd e = identifier.Embedding(state, agent);
    const Eigen::VectorXd p = identifier.Identify(state, agent);
    Eigen::Index predicted = 0;
    p.maxCoeff(&predicted);
    if (!header) {
      out << "dialog\tpopulation\tpredicted";
      for (Eigen::Index i = 0; i < e.size(); ++i) out << "\te" << i;
      out << "\n";
      header = true;
    }
    out << d << '\t' << t.population_of(Other(agent)) << '\t' << predicted;
    char buf[32];
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "\t%.6g", e(i));
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace tomneg
