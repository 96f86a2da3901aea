// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/fs.hpp"

#include "support/mock_world.hpp"

#include <sys/wait.h>

#include <cstdlib>

using namespace ibsynth;
namespace ts = testing_support;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(IBSYNTH_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("cli happy path across rounds") {
  const auto w = ts::make_mock_world(ts::fresh_dir("cli-happy"));
  const std::string cfg = "--config " + w.config.string();
  CHECK(run("synthesize --round 0 " + cfg) == 0);
  CHECK(fs::exists(w.output / "rounds/0/train.jsonl"));
  CHECK(run("synthesize --round 1 " + cfg) == 0);
  CHECK(run("emit --round 1 " + cfg) == 0);
  CHECK(fs::exists(w.output / "rounds/1/conversations.jsonl"));
}

TEST_CASE("cli exit codes") {
  const auto w = ts::make_mock_world(ts::fresh_dir("cli-codes"));
  const std::string cfg = "--config " + w.config.string();
  CHECK(run("synthesize --round 0 --rounds 0 " + cfg) == 1);
  CHECK(run("synthesize --round 0 --no-such-flag " + cfg) == 1);
  CHECK(run("") == 1);
  CHECK(run("--help") == 0);
  CHECK(run("synthesize --round 0 --config /nonexistent/run.toml") == 1);

  CHECK(run("synthesize --round 0 --policy label_first " + cfg) == 0);
  CHECK(run("synthesize --round 0 --policy paper_literal " + cfg) == 1);  // fingerprint guard

  ts::MockWorldOptions o;
  o.broken_image = true;
  const auto b = ts::make_mock_world(ts::fresh_dir("cli-broken"), o);
  CHECK(run("synthesize --round 0 --config " + b.config.string()) == 2);
  CHECK(fs::exists(b.output / "rounds/0/train.jsonl"));
}

TEST_CASE("cli simulate and eval") {
  const auto dir = ts::fresh_dir("cli-sim");
  CHECK(run("simulate --trials 20 --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "precision_curve.json"));
  CHECK(fs::exists(dir / "theorem1.json"));

  atomic_write(dir / "responses.jsonl",
               "{\"image_id\":\"a\",\"answer\":\"A Blue Jay.\",\"label\":\"Blue_Jay\"}\n"
               "{\"image_id\":\"b\",\"answer\":\"A jay.\",\"label\":\"Blue Jay\"}\n");
  CHECK(run("eval --responses " + (dir / "responses.jsonl").string() + " --out " + (dir / "m.json").string()) == 0);
  const auto m = nlohmann::json::parse(read_existing_file(dir / "m.json"));
  CHECK(m["accuracy"] == 0.5);
  CHECK(run("eval --responses " + (dir / "missing.jsonl").string()) == 2);
}
