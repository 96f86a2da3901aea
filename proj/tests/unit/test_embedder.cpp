// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "http_fixture.hpp"

#include "ibsynth/cache.hpp"
#include "ibsynth/embedder.hpp"
#include "ibsynth/errors.hpp"

#include "support/oracles.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>

using namespace ibsynth;

TEST_CASE("cosine similarity matches the direct formula") {
  // (1,2,3) . (4,5,6) / (|a||b|) = 32 / sqrt(14 * 77)
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.974632).epsilon(1e-6));
  CHECK(cosine_similarity(a, b) == doctest::Approx(oracle::cosine(a, b)).epsilon(1e-12));
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  const std::vector<double> z{0, 0, 0};
  CHECK_THROWS_AS(cosine_similarity(a, z), NumericError);
  CHECK_THROWS_AS(cosine_similarity(a, std::vector<double>{1, 2}), NumericError);
  CHECK_THROWS_AS(cosine_similarity(EmbeddingVector{a, "m1"}, EmbeddingVector{b, "m2"}), NumericError);
}

TEST_CASE("tokenizer lowercases ASCII and splits on punctuation") {
  CHECK(hash_tokens("Bright-RED plumage, 2 wings!") ==
        std::vector<std::string>{"bright", "red", "plumage", "2", "wings"});
  CHECK(hash_tokens("caf\xC3\xA9 ok") == std::vector<std::string>{"caf\xC3\xA9", "ok"});
  CHECK(hash_tokens(" ,.; ").empty());
}

TEST_CASE("deterministic embedder is stable, normalized and bag-of-words") {
  DeterministicEmbedder emb(64);
  CHECK(emb.model_id() == "deterministic-bow-64");
  const auto v = emb.embed("red crest red");
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0));
  CHECK(emb.embed("red crest red") == v);
  CHECK(emb.embed("crest, RED red") == v);  // order and case do not matter
  CHECK(cosine_similarity(emb.embed("blue wings"), emb.embed("blue wings")) == doctest::Approx(1.0));
  CHECK_THROWS_AS(emb.embed("!!!"), NumericError);
  CHECK_THROWS_AS(DeterministicEmbedder(4), ConfigError);
}

TEST_CASE("embedding payload round-trips") {
  const EmbeddingVector v{{0.6, 0.8}, "m"};
  CHECK(parse_embedding(serialize_embedding(v)) == v);
}

namespace {

nlohmann::json fake_embeddings(const nlohmann::json& input, std::size_t dim) {
  nlohmann::json data = nlohmann::json::array();
  std::size_t i = 0;
  for (const auto& t : input) {
    std::vector<double> v(dim, 0.0);
    v[t.get<std::string>().size() % dim] = 3.0;  // not unit length on purpose
    v[(t.get<std::string>().size() + 1) % dim] = 4.0;
    data.push_back({{"index", i++}, {"embedding", v}});
  }
  return {{"data", data}};
}

}  // namespace

TEST_CASE("remote embedder batches, normalizes and caches") {
  LocalServer srv;
  std::atomic<int> requests{0};
  std::atomic<int> texts{0};
  std::string auth;
  srv.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    ++requests;
    auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    texts += static_cast<int>(body["input"].size());
    CHECK(body["model"] == "emb-small");
    res.set_content(fake_embeddings(body["input"], 8).dump(), "application/json");
  });

  RemoteEmbedderOptions opts;
  opts.endpoint.base_url = srv.url();
  opts.endpoint.api_key = "secret";
  opts.model = "emb-small";
  opts.batch_size = 3;
  opts.max_in_flight = 2;
  opts.retry = {1, std::chrono::milliseconds(0)};
  auto remote = std::make_shared<RemoteEmbedder>(opts);

  std::vector<std::string> inputs;
  for (int i = 0; i < 7; ++i) inputs.push_back(std::string(static_cast<std::size_t>(i + 1), 'a'));
  const auto out = remote->embed_texts(inputs);
  REQUIRE(out.size() == 7);
  CHECK(requests == 3);
  CHECK(auth == "Bearer secret");
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].model_id == "emb-small");
    CHECK(out[i].values[(i + 1) % 8] == doctest::Approx(0.6));
  }

  const fs::path root = fs::temp_directory_path() / "ibsynth-unit-embcache";
  fs::remove_all(root);
  auto cache = std::make_shared<ContentCache>(root);
  CachingEmbedder cached(remote, cache);
  texts = 0;
  cached.embed_texts({"x", "yy", "x"});
  CHECK(texts == 2);
  CHECK(cached.upstream_texts() == 2);
  CachingEmbedder again(remote, cache);  // fresh memo, warm disk cache
  again.embed_texts({"x", "yy"});
  CHECK(texts == 2);
  CHECK(again.upstream_texts() == 0);
  fs::remove_all(root);
}

TEST_CASE("remote embedder rejects malformed replies") {
  LocalServer srv;
  std::atomic<int> mode{0};
  srv.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    if (mode == 0) {
      auto reply = fake_embeddings(body["input"], 8);
      reply["data"].erase(0);
      res.set_content(reply.dump(), "application/json");
    } else if (mode == 1) {
      res.status = 503;
      res.set_content("busy", "text/plain");
    } else {
      res.status = 400;
      res.set_content("bad", "text/plain");
    }
  });
  RemoteEmbedderOptions opts;
  opts.endpoint.base_url = srv.url();
  opts.model = "m";
  opts.retry = {2, std::chrono::milliseconds(0)};
  RemoteEmbedder emb(opts);
  CHECK_THROWS_AS(emb.embed_texts({"a", "b"}), ProviderError);
  mode = 1;
  try {
    emb.embed_texts({"a"});
    FAIL("expected failure");
  } catch (const ProviderError& e) {
    CHECK(e.retryable());
  }
  mode = 2;
  try {
    emb.embed_texts({"a"});
    FAIL("expected failure");
  } catch (const ProviderError& e) {
    CHECK_FALSE(e.retryable());
  }
}

TEST_CASE("unreachable endpoint is a retryable provider error") {
  RemoteEmbedderOptions opts;
  opts.endpoint.base_url = "http://127.0.0.1:1";
  opts.endpoint.timeout = std::chrono::seconds(2);
  opts.model = "m";
  opts.retry = {1, std::chrono::milliseconds(0)};
  RemoteEmbedder emb(opts);
  CHECK_THROWS_AS(emb.embed_texts({"a"}), ProviderError);
}
