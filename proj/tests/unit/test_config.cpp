// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/config.hpp"
#include "ibsynth/errors.hpp"

using namespace ibsynth;

namespace {
const char* kMinimal = R"(
manifest = "data/manifest.jsonl"
concepts = "data/concepts.json"
)";
}

TEST_CASE("defaults and path resolution") {
  const auto c = parse_run_config(kMinimal, "/runs/a");
  CHECK(c.manifest == fs::path("/runs/a/data/manifest.jsonl"));
  CHECK(c.output_root == fs::path("/runs/a/out"));
  CHECK(c.effective_cache_root() == fs::path("/runs/a/out/cache"));
  CHECK(c.num_descriptions == 25);
  CHECK(c.num_candidates == 8);
  CHECK(c.tau == 0.07);
  CHECK(c.effective_answer_tau() == 0.07);
  CHECK(c.beta_hat == 1.0);
  CHECK(c.negatives == 32);
  CHECK(c.max_rounds == 4);
  CHECK(c.policy == FilterPolicy::paper_literal);
  CHECK(c.description_temperature == 0.7);
  CHECK(c.candidate_temperature == 0.9);
  CHECK(c.embedder.kind == "deterministic");
}

TEST_CASE("sections override knobs") {
  const auto c = parse_run_config(std::string(kMinimal) + R"(
seed = 11
family = "cub-200"
[selection]
num_descriptions = 5
tau = 0.5
beta = 0.25
negatives = 8
[rejection]
num_candidates = 3
tau = 0.2
policy = "label_first"
rounds = 2
[runtime]
workers = 2
retry_attempts = 5
[lmm.base]
kind = "remote"
base_url = "http://localhost:9000"
model = "llava-base"
[lmm.rounds.1]
model = "llava-r1"
[embedder]
kind = "deterministic"
dim = 64
)",
                                  "/x");
  CHECK(c.seed == 11);
  CHECK(c.num_descriptions == 5);
  CHECK(c.tau == 0.5);
  CHECK(c.effective_answer_tau() == 0.2);
  CHECK(c.beta_hat == 0.25);
  CHECK(c.negatives == 8);
  CHECK(c.policy == FilterPolicy::label_first);
  CHECK(c.max_rounds == 2);
  CHECK(c.workers == 2);
  CHECK(c.retry.max_attempts == 5);
  CHECK(c.base_lmm.model == "llava-base");
  REQUIRE(c.round_models.count(1) == 1);
  CHECK(c.round_models.at(1).model == "llava-r1");
  CHECK(c.round_models.at(1).base_url == "http://localhost:9000");
  CHECK(c.embedder.dim == 64);
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimal) + "[rejection]\nrounds = 0\n", "/x").validate(), ConfigError);
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimal) + "[selection]\ntau = 0\n", "/x").validate(), ConfigError);
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimal) + "bogus = 1\n", "/x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimal) + "[selection]\nnegatives = \"many\"\n", "/x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("manifest = [", "/x"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(std::string(kMinimal) + "[rejection]\npolicy = \"best\"\n", "/x"), std::exception);
  CHECK_THROWS_AS(parse_run_config("", "/x").validate(), ConfigError);
}

TEST_CASE("fingerprint tracks output-shaping knobs only") {
  auto a = parse_run_config(kMinimal, "/x");
  auto b = a;
  CHECK(a.fingerprint() == b.fingerprint());
  b.workers = 16;
  b.max_rounds = 3;
  CHECK(a.fingerprint() == b.fingerprint());
  b.policy = FilterPolicy::label_first;
  CHECK(a.fingerprint() != b.fingerprint());
  auto c = a;
  c.seed = 1;
  CHECK(a.fingerprint() != c.fingerprint());
}
