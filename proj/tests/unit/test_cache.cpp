// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "ibsynth/cache.hpp"
#include "ibsynth/fs.hpp"

#include <nlohmann/json.hpp>

using namespace ibsynth;

namespace {
fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / "ibsynth-unit-cache" / name;
  fs::remove_all(p);
  return p;
}
}  // namespace

TEST_CASE("cache keys canonicalize text") {
  const auto a = make_cache_key(CacheKind::description, "m", {"  caf\x65\xCC\x81 ", "x"});
  const auto b = make_cache_key(CacheKind::description, "m", {"caf\xC3\xA9", "x"});
  CHECK(a == b);
  CHECK(make_cache_key(CacheKind::description, "m", {"ab", "c"}) != make_cache_key(CacheKind::description, "m", {"a", "bc"}));
  CHECK(make_cache_key(CacheKind::embedding, "m", {"x"}) != make_cache_key(CacheKind::description, "m", {"x"}));
}

TEST_CASE("cache put/get and layout") {
  ContentCache cache(scratch("basic"));
  const auto key = make_cache_key(CacheKind::candidate, "round-1", {"hello"});
  CHECK_FALSE(cache.get(key).has_value());
  cache.put(key, "payload text");
  REQUIRE(cache.get(key).has_value());
  CHECK(*cache.get(key) == "payload text");
  const auto p = cache.path_for(key);
  CHECK(p.parent_path().filename() == key.content_hash.substr(0, 2));
  CHECK(p.filename() == key.content_hash + ".json");
}

TEST_CASE("tampered cache entries are misses") {
  ContentCache cache(scratch("tamper"));
  const auto key = make_cache_key(CacheKind::description, "m", {"t"});
  cache.put(key, "original");
  auto j = nlohmann::json::parse(read_existing_file(cache.path_for(key)));
  j["payload"] = "edited";
  atomic_write(cache.path_for(key), j.dump());
  CHECK_FALSE(cache.get(key).has_value());
  atomic_write(cache.path_for(key), "not json");
  CHECK_FALSE(cache.get(key).has_value());
}
