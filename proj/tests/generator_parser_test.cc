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

#include <numeric>
#include <random>

#include "doctest.h"
#include "tomneg/generator.h"
#include "tomneg/parser.h"

namespace tomneg {
namespace {

// Normalized prices read as currency/100, which keeps examples legible.
Scenario PercentScenario() {
  Scenario scenario;
  scenario.listing_price = 100.0;
  scenario.buyer_target = 0.0;
  scenario.seller_target = 100.0;
  return scenario;
}

const TemplateBank& Bank() { return TemplateBank::Default(); }

TEST_CASE("default bank covers every voiced intent") {
  CHECK(Bank().size() == 110);
  for (Intent intent : kAllIntents) {
    if (IsSilent(intent)) {
      CHECK(Bank().ForIntent(intent).empty());
    } else {
      CHECK(Bank().ForIntent(intent).size() >= kTopTemplates);
    }
  }
}

TEST_CASE("bank parsing rejects malformed input") {
  CHECK_THROWS_AS(TemplateBank::Parse("greet\t0\tHi"), std::invalid_argument);
  CHECK_THROWS_AS(TemplateBank::Parse("offer\t0\tOffer {price}"),
                  std::invalid_argument);
  CHECK_THROWS_AS(TemplateBank::Parse("propose\t0\tno marker"),
                  std::invalid_argument);
  CHECK_THROWS_AS(TemplateBank::Parse("greet 0 Hi"), std::invalid_argument);
}

TEST_CASE("deterministic generation picks the top template") {
  const DialogState state(PercentScenario());
  Rng rng(1);
  const Utterance u = Generate(Bank(), state, DialogAct::Of(Intent::kPropose, 0.46),
                               {}, GenerationMode::kDeterministic, rng);
  CHECK(u.template_id == Bank().ForIntent(Intent::kPropose)[0].id);
  CHECK(u.intent == Intent::kPropose);
  CHECK(*u.rendered_price == 0.46);
  CHECK(u.text.find("$46") != std::string::npos);
}

TEST_CASE("stochastic generation is reproducible under a seed") {
  const DialogState state(PercentScenario());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    const DialogAct act = DialogAct::Of(Intent::kInform);
    CHECK(Generate(Bank(), state, act, {}, GenerationMode::kStochastic, a)
              .template_id ==
          Generate(Bank(), state, act, {}, GenerationMode::kStochastic, b)
              .template_id);
  }
}

TEST_CASE("stochastic generation stays within the top templates") {
  const DialogState state(PercentScenario());
  Rng rng(4);
  const auto& list = Bank().ForIntent(Intent::kCounter);
  std::vector<int> hits(list.size(), 0);
  for (int i = 0; i < 2000; ++i) {
    const Utterance u = Generate(Bank(), state, DialogAct::Of(Intent::kCounter, 0.7),
                                 {}, GenerationMode::kStochastic, rng);
    int rank = -1;
    for (size_t r = 0; r < list.size(); ++r) {
      if (list[r].id == u.template_id) rank = static_cast<int>(r);
    }
    REQUIRE(rank >= 0);
    REQUIRE(rank < kTopTemplates);
    ++hits[rank];
  }
  for (int r = 0; r < kTopTemplates; ++r) CHECK(hits[r] > 120);
}

TEST_CASE("silent acts render without a template") {
  const DialogState state(PercentScenario());
  Rng rng(0);
  const Utterance offer = Generate(Bank(), state, DialogAct::Of(Intent::kOffer, 0.65),
                                   {}, GenerationMode::kStochastic, rng);
  CHECK(offer.silent());
  CHECK(offer.text == "OFFER($65)");
  const Utterance accept = Generate(Bank(), state, DialogAct::Of(Intent::kAccept),
                                    {}, GenerationMode::kStochastic, rng);
  CHECK(accept.silent());
  CHECK(accept.text == "ACCEPT");
}

TEST_CASE("enumerate_support") {
  const DialogState state(PercentScenario());
  const DialogAct act = DialogAct::Of(Intent::kPropose, 0.3);
  const auto det = EnumerateSupport(Bank(), state, act, 1,
                                    GenerationMode::kDeterministic);
  REQUIRE(det.size() == 1);
  CHECK(det[0].first.template_id == Bank().ForIntent(Intent::kPropose)[0].id);
  CHECK(det[0].second == 1.0);

  const auto ten = EnumerateSupport(Bank(), state, act, 10,
                                    GenerationMode::kStochastic);
  REQUIRE(ten.size() == 10);
  for (const auto& [u, p] : ten) CHECK(p == doctest::Approx(0.1));

  for (int k = 1; k <= kTopTemplates; ++k) {
    const auto support = EnumerateSupport(Bank(), state, act, k,
                                          GenerationMode::kStochastic);
    double total = 0.0;
    for (const auto& entry : support) total += entry.second;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto silent = EnumerateSupport(Bank(), state,
                                       DialogAct::Of(Intent::kQuit), 5,
                                       GenerationMode::kStochastic);
  REQUIRE(silent.size() == 1);
  CHECK(silent[0].first.silent());
  CHECK_THROWS_AS(EnumerateSupport(Bank(), state, act, 0,
                                   GenerationMode::kStochastic),
                  std::invalid_argument);
  CHECK_THROWS_AS(EnumerateSupport(Bank(), state, act, 500,
                                   GenerationMode::kStochastic),
                  std::invalid_argument);
}

TEST_CASE("generate then parse round-trips every intent and template") {
  const DialogState state(PercentScenario());
  std::mt19937_64 prices(12);
  const std::vector<StyleToken> style = {{"great", Valence::kCooperative},
                                         {"afraid", Valence::kCompetitive}};
  for (Intent intent : kAllIntents) {
    DialogAct act = DialogAct::Of(intent);
    if (RequiresPrice(intent)) act.price = (prices() % 101) / 100.0;
    const auto support = EnumerateSupport(
        Bank(), state, act,
        IsSilent(intent) ? 1 : static_cast<int>(Bank().ForIntent(intent).size()),
        GenerationMode::kStochastic);
    for (auto [utterance, p] : support) {
      CHECK(Parse(utterance, Bank()) == act);
      // The text route recovers the same act at whole-currency precision.
      const auto from_text = ParseText(utterance.text, state.scenario(), Bank());
      REQUIRE(from_text.has_value());
      CHECK(from_text->intent == act.intent);
      if (act.price) CHECK(*from_text->price == doctest::Approx(*act.price));
      if (!utterance.silent()) {
        utterance.style_tokens = style;
        utterance.text = "great afraid " + utterance.text;
        const auto styled = ParseText(utterance.text, state.scenario(), Bank());
        REQUIRE(styled.has_value());
        CHECK(styled->intent == act.intent);
      }
    }
  }
}

TEST_CASE("parse examples") {
  const Scenario scenario = PercentScenario();
  const auto greet = ParseText("Hello I am interested in buying.", scenario, Bank());
  REQUIRE(greet.has_value());
  CHECK(greet->intent == Intent::kGreet);

  const auto offer = ParseText("OFFER($65)", scenario, Bank());
  REQUIRE(offer.has_value());
  CHECK(offer->intent == Intent::kOffer);
  CHECK(*offer->price == doctest::Approx(0.65));

  const DialogState state(scenario);
  Rng rng(0);
  Utterance u = Generate(Bank(), state, DialogAct::Of(Intent::kInform), {},
                         GenerationMode::kDeterministic, rng);
  u.template_id = 9999;
  CHECK_FALSE(Parse(u, Bank()).has_value());
  u.template_id = Bank().ForIntent(Intent::kGreet)[0].id;
  CHECK_FALSE(Parse(u, Bank()).has_value());
  CHECK_FALSE(ParseText("completely unrelated words", scenario, Bank()));
}

TEST_CASE("style features") {
  Utterance u;
  u.template_id = 0;
  u.style_tokens = {{"unfortunately", Valence::kCompetitive},
                    {"afraid", Valence::kCompetitive}};
  StyleFeatureVector f = StyleFeatures(u, 5, 20);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 2.0);
  CHECK(f[2] == doctest::Approx(0.25));

  u.style_tokens = {{"great", Valence::kCooperative},
                    {"afraid", Valence::kCompetitive}};
  f = StyleFeatures(u, 5, 20);
  CHECK(f[0] == 1.0);
  CHECK(f[1] == 1.0);
  std::swap(u.style_tokens[0], u.style_tokens[1]);
  CHECK(StyleFeatures(u, 5, 20) == f);

  Utterance offer;
  offer.intent = Intent::kOffer;
  offer.rendered_price = 0.5;
  CHECK(StyleFeatures(offer, 5, 20).isZero());
}

}  // namespace
}  // namespace tomneg
