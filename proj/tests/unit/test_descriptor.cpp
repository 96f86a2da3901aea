// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/descriptor.hpp"
#include "ibsynth/errors.hpp"

#include <map>
#include <set>

using namespace ibsynth;

namespace {
const ImageRecord kBird{"cub_001", "img/001.jpg", "Northern Cardinal", "bird", std::nullopt};

DescribeOptions opts(int n) {
  DescribeOptions o;
  o.n = n;
  o.retry = {1, std::chrono::milliseconds(0)};
  return o;
}
}  // namespace

TEST_CASE("bird bank ships the three bird prompts") {
  const auto bank = builtin_prompt_bank("cub-200");
  REQUIRE(bank.size() == 3);
  CHECK(bank.prompts[0].text.rfind("Focus solely on the bird shown in the image.", 0) == 0);
  for (const auto& p : bank.prompts) CHECK(p.text.find("bird") != std::string::npos);
  bank.validate();
  const auto generic = builtin_prompt_bank("generic");
  bool has_plain = false;
  for (const auto& p : generic.prompts) has_plain = has_plain || p.text == "Please describe the image.";
  CHECK(has_plain);
}

TEST_CASE("prompt bank validation") {
  CHECK_THROWS_AS((PromptBank{"x", {}}.validate()), ConfigError);
  CHECK_THROWS_AS((PromptBank{"x", {{"a", "t"}, {"a", "u"}}}.validate()), ConfigError);
  CHECK_THROWS_AS((PromptBank{"x", {{"a", " "}}}.validate()), ConfigError);
}

TEST_CASE("cycling n=25 over three prompts uses 9/8/8") {
  CHECK(prompt_usage_counts(25, 3) == std::vector<int>{9, 8, 8});
  CHECK(prompt_usage_counts(2, 3) == std::vector<int>{1, 1, 0});
}

TEST_CASE("descriptions cycle the bank and respect n") {
  auto lmm = MockLmm::from_script("base", R"({"fallback":"{sample_index} {attempt} {prompt}"})");
  const auto bank = builtin_prompt_bank("cub-200");
  const auto out = generate_descriptions(kBird, bank, lmm, opts(7));
  REQUIRE(out.set.entries.size() == 7);
  CHECK(out.shortfall == 0);
  CHECK_FALSE(out.low_diversity);
  std::map<std::string, int> used;
  for (std::size_t i = 0; i < out.set.entries.size(); ++i) {
    CHECK(out.set.entries[i].sample_index == static_cast<int>(i));
    CHECK(out.set.entries[i].prompt_id == bank.prompts[i % 3].prompt_id);
    ++used[out.set.entries[i].prompt_id];
  }
  CHECK(used.size() == 3);
  CHECK_THROWS(generate_descriptions(kBird, bank, lmm, opts(0)));
}

TEST_CASE("fixed replies are deduplicated then kept and flagged") {
  auto lmm = MockLmm::from_script("base", R"({"fallback":"always the same"})");
  auto o = opts(5);
  o.dedup_retry_budget = 2;
  const auto out = generate_descriptions(kBird, builtin_prompt_bank("cub-200"), lmm, o);
  CHECK(out.set.entries.size() == 5);
  CHECK(out.unique_texts == 1);
  CHECK(out.low_diversity);
  CHECK(lmm.calls() == 1 + 4 * 3);  // every duplicate slot spends its full budget
}

TEST_CASE("provider failures leave a partial set with a shortfall") {
  auto lmm = MockLmm::from_script("base", R"({"sample_index":1,"error":"boom"}
{"fallback":"text {sample_index}"})");
  const auto out = generate_descriptions(kBird, builtin_prompt_bank("cub-200"), lmm, opts(4));
  CHECK(out.set.entries.size() == 3);
  CHECK(out.shortfall == 1);
  CHECK(out.errors.size() == 1);
}

TEST_CASE("cached descriptions cost no provider calls on rerun") {
  const fs::path root = fs::temp_directory_path() / "ibsynth-unit-desc";
  fs::remove_all(root);
  ContentCache cache(root);
  auto o = opts(6);
  o.cache = &cache;
  auto lmm = MockLmm::from_script("base", R"({"fallback":"d {sample_index}"})");
  std::atomic<std::size_t> calls{0};
  const auto a = generate_descriptions(kBird, builtin_prompt_bank("cub-200"), lmm, o, &calls);
  CHECK(calls == 6);
  const auto b = generate_descriptions(kBird, builtin_prompt_bank("cub-200"), lmm, o, &calls);
  CHECK(calls == 6);
  CHECK(serialize_descriptions(a.set) == serialize_descriptions(b.set));
  fs::remove_all(root);
}
