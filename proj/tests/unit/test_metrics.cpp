// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/errors.hpp"
#include "ibsynth/metrics.hpp"

using namespace ibsynth;

TEST_CASE("accuracy counts label hits") {
  std::vector<LabeledResponse> r{{"1", "A Blue Jay.", "Blue Jay"},
                                 {"2", "A jay.", "Blue Jay"},
                                 {"3", "A Pug.", "Pug"},
                                 {"4", "A dog.", "Pug"}};
  CHECK(accuracy(r) == 0.5);
  CHECK(accuracy({{"1", "nothing", "Pug"}}) == 0.0);
  CHECK_THROWS(accuracy({}));
}

TEST_CASE("selection precision") {
  CHECK(selection_precision({"a", "b", "c", "x"}, {"a", "b", "c", "d"}, 4) == 0.75);
  CHECK(selection_precision({"a", "b"}, {"a", "b"}, 2) == 1.0);
  CHECK_THROWS_AS(selection_precision({"a"}, {"a"}, 2), NumericError);
}

TEST_CASE("judge prompts and reply parsing") {
  const auto ee = render_ee_prompt("It is a Pug.");
  CHECK(ee.find("It is a Pug.") != std::string::npos);
  CHECK(ee.find("Contains an explanation?") != std::string::npos);
  const auto cs = render_cs_prompt({"red plumage", "crest"}, "It is red.");
  CHECK(cs.find("- red plumage") != std::string::npos);
  CHECK(cs.find("Consistency Score:") != std::string::npos);

  CHECK(parse_ee_reply("true") == true);
  CHECK(parse_ee_reply(" 'False'. ") == false);
  CHECK_FALSE(parse_ee_reply("maybe").has_value());
  CHECK(parse_cs_reply("0.8") == 0.8);
  CHECK(parse_cs_reply(" 1 ") == 1.0);
  CHECK_FALSE(parse_cs_reply("1.2").has_value());
  CHECK_FALSE(parse_cs_reply("0.5 0.6").has_value());
  CHECK_FALSE(parse_cs_reply("score: high").has_value());
}

TEST_CASE("constant judges reproduce their constants") {
  std::vector<JudgeItem> items{{"A Blue Jay with a crest.", "Blue Jay", {"blue crest"}},
                               {"A jay.", "Blue Jay", {"blue crest"}},
                               {"A Pug.", "Pug", {"flat face"}}};
  MockLmm yes("judge", {}, "true");
  const auto ee = judge_metric(items, yes, JudgeMetric::EE);
  CHECK(ee.available);
  CHECK(*ee.value == 1.0);
  CHECK(ee.evaluated == 3);
  MockLmm point8("judge", {}, "0.8");
  const auto cs = judge_metric(items, point8, JudgeMetric::CS);
  CHECK(*cs.value == 0.8);
  CHECK(cs.evaluated == 2);  // only correct answers are scored
}

TEST_CASE("unparseable replies are retried once then excluded") {
  auto judge = MockLmm::from_script("judge", R"({"contains":"A jay.","response":"no idea"}
{"fallback":"false"})");
  std::vector<JudgeItem> items{{"A Blue Jay.", "Blue Jay", {}}, {"A jay.", "Blue Jay", {}}};
  const auto r = judge_metric(items, judge, JudgeMetric::EE);
  CHECK(r.available);
  CHECK(r.missing == 1);
  CHECK(r.evaluated == 1);
  CHECK(*r.value == 0.0);
  CHECK(judge.calls() == 3);
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("unreachable judge makes the metric unavailable") {
  auto judge = MockLmm::from_script("judge", R"({"error":"connection refused"})");
  const auto r = judge_metric({{"A Pug.", "Pug", {}}}, judge, JudgeMetric::EE, {1, std::chrono::milliseconds(0)});
  CHECK_FALSE(r.available);
  CHECK_FALSE(r.value.has_value());
}
