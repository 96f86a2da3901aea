// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/errors.hpp"
#include "ibsynth/pipeline.hpp"
#include "ibsynth/synthesizer.hpp"
#include "ibsynth/text.hpp"

#include "support/mock_world.hpp"

using namespace ibsynth;
namespace ts = testing_support;

namespace {

std::size_t lines(const fs::path& p) {
  std::size_t n = 0;
  for (const auto& l : split_lines(read_existing_file(p))) n += trim(l).empty() ? 0 : 1;
  return n;
}

Pipeline open(const ts::MockWorld& w) {
  const auto c = load_run_config(w.config);
  return Pipeline(c, make_providers(c));
}

}  // namespace

TEST_CASE("round 0 on a clean mock corpus") {
  const auto w = ts::make_mock_world(ts::fresh_dir("p-round0"));
  auto p = open(w);
  const auto r = p.build_round0();
  CHECK(r.counts().at("emitted") == 10);
  CHECK_FALSE(r.has_failures());
  const auto ex = parse_examples(read_existing_file(w.output / "rounds/0/train.jsonl"));
  REQUIRE(ex.size() == 10);
  for (const auto& e : ex) {
    CHECK(e.source == ExampleSource::rewrite);
    CHECK(e.round == 0);
  }
  CHECK(fs::exists(w.output / "descriptions/cub_001.jsonl"));
  CHECK(fs::exists(w.output / "selection/cub_001.json"));
  CHECK(lines(w.output / "ledger.jsonl") == 10);
  CHECK(p.provider_calls() == 10 * 6 + 10);
}

TEST_CASE("rerun is idempotent and call-free") {
  const auto w = ts::make_mock_world(ts::fresh_dir("p-idem"));
  open(w).build_round0();
  const auto before = ts::tree_digest(w.output);
  auto again = open(w);
  again.build_round0();
  CHECK(again.provider_calls() == 0);
  CHECK(ts::tree_digest(w.output) == before);
}

TEST_CASE("one failing image is isolated") {
  ts::MockWorldOptions o;
  o.broken_image = true;
  const auto w = ts::make_mock_world(ts::fresh_dir("p-broken"), o);
  auto p = open(w);
  const auto r = p.build_round0();
  CHECK(r.has_failures());
  CHECK(r.counts().at("provider_shortfall") == 1);
  CHECK(lines(w.output / "rounds/0/train.jsonl") == 9);
  const auto r1 = p.run_round(1);
  CHECK(r1.counts().at("provider_shortfall") == 1);
  CHECK(r1.entries.size() == 10);
}

TEST_CASE("always-labelled round models grow the dataset by the corpus size") {
  ts::MockWorldOptions o;
  o.round1 = ts::CandidateMode::always_label;
  o.rounds = 3;
  const auto w = ts::make_mock_world(ts::fresh_dir("p-union"), o);
  auto p = open(w);
  p.build_round0();
  for (int t = 1; t <= 3; ++t) {
    const auto r = p.run_round(t);
    CHECK(r.new_examples == 10);
    CHECK(r.cumulative_examples == static_cast<std::size_t>(10 * (t + 1)));
  }
  const auto ex = parse_examples(read_existing_file(w.output / "rounds/3/train.jsonl"));
  for (const auto& e : ex) {
    if (e.source != ExampleSource::rejection_sampling) continue;
    const auto rec = std::find_if(w.records.begin(), w.records.end(), [&](const auto& r) { return r.id == e.image_id; });
    CHECK(label_contains(e.answer, rec->label));
  }
  CHECK(lines(w.output / "rounds/2/decisions.jsonl") == 10);
  CHECK(fs::exists(w.output / "rounds/2/candidates/cub_004.jsonl"));
}

TEST_CASE("never-labelled round models discard everything") {
  ts::MockWorldOptions o;
  o.round1 = ts::CandidateMode::never_label;
  const auto w = ts::make_mock_world(ts::fresh_dir("p-discard"), o);
  auto p = open(w);
  p.build_round0();
  const auto r = p.run_round(1);
  CHECK(r.counts().at("discarded") == 10);
  CHECK(r.new_examples == 0);
  CHECK(read_existing_file(w.output / "rounds/1/train.jsonl") == read_existing_file(w.output / "rounds/0/train.jsonl"));
}

TEST_CASE("round preconditions") {
  const auto w = ts::make_mock_world(ts::fresh_dir("p-pre"));
  auto p = open(w);
  CHECK_THROWS_AS(p.run_round(1), ConfigError);  // round 0 missing
  p.build_round0();
  CHECK_THROWS_AS(p.run_round(3), ConfigError);  // beyond max rounds (2)
  CHECK_THROWS_AS(p.run_round(0), ConfigError);
  CHECK_THROWS_AS(p.emit_finetune_dataset(1), ConfigError);

  auto c = load_run_config(w.config);
  c.mock_lmm_script.reset();
  c.base_lmm.kind = "mock";
  c.base_lmm.script = w.dir / "mock.jsonl";
  const auto providers = make_providers(c);
  CHECK_THROWS_AS(providers.round_model(1), ConfigError);  // no endpoint for round 1
}

TEST_CASE("output directory is guarded by the config fingerprint") {
  const auto w = ts::make_mock_world(ts::fresh_dir("p-guard"));
  open(w).build_round0();
  auto c = load_run_config(w.config);
  c.policy = FilterPolicy::label_first;
  Pipeline other(c, make_providers(c));
  CHECK_THROWS_AS(other.build_round0(), ConfigError);
  CHECK_THROWS_AS(other.run_round(1), ConfigError);
}

TEST_CASE("emitted conversations") {
  const auto w = ts::make_mock_world(ts::fresh_dir("p-emit"));
  auto p = open(w);
  p.build_round0();
  p.run_round(1);
  atomic_write(w.dir / "general.jsonl", "{\"id\":\"g1\",\"conversations\":[]}\n\n");
  const auto f0 = p.emit_finetune_dataset(0);
  const auto f1 = p.emit_finetune_dataset(1, w.dir / "general.jsonl");
  const auto first = nlohmann::ordered_json::parse(split_lines(read_existing_file(f0)).front());
  std::vector<std::string> keys;
  for (auto it = first.begin(); it != first.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"id", "image", "conversations"});
  CHECK(first["id"] == "cub_001_r0");
  REQUIRE(first["conversations"].size() == 2);
  CHECK(first["conversations"][0]["from"] == "human");
  CHECK(first["conversations"][0]["value"].get<std::string>().rfind("<image>\n", 0) == 0);
  CHECK(first["conversations"][1]["from"] == "gpt");
  const auto all1 = split_lines(read_existing_file(f1));
  CHECK(trim(all1.back()) == "{\"id\":\"g1\",\"conversations\":[]}");

  atomic_write(w.dir / "bad.jsonl", "{oops\n");
  CHECK_THROWS_AS(p.emit_finetune_dataset(1, w.dir / "bad.jsonl"), ParseError);
}

TEST_CASE("to_conversation shape") {
  const TrainingExample e{"cub_9", "img/9.jpg", "What is the bird name? Provide your reason.", "A Blue Jay.", 2,
                          ExampleSource::rejection_sampling};
  CHECK(to_conversation(e).dump() ==
        R"({"id":"cub_9_r2","image":"img/9.jpg","conversations":[{"from":"human","value":"<image>\nWhat is the bird name? Provide your reason."},{"from":"gpt","value":"A Blue Jay."}]})");
}
