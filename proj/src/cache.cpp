// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/cache.hpp"

#include "ibsynth/text.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace ibsynth {

std::string to_string(CacheKind kind) {
  switch (kind) {
    case CacheKind::description:
      return "description";
    case CacheKind::embedding:
      return "embedding";
    case CacheKind::candidate:
      return "candidate";
  }
  return "unknown";
}

CacheKey make_cache_key(CacheKind kind, std::string_view model_id, const std::vector<std::string>& parts) {
  std::string joined = to_string(kind);
  joined.push_back('\x1f');
  joined += canonicalize(model_id);
  for (const auto& p : parts) {
    joined.push_back('\x1f');
    joined += canonicalize(p);
  }
  return CacheKey{kind, sha256_hex(joined), canonicalize(model_id)};
}

fs::path ContentCache::path_for(const CacheKey& key) const {
  return root_ / to_string(key.kind) / path_component(key.model_id) / key.content_hash.substr(0, 2) /
         (key.content_hash + ".json");
}

std::optional<std::string> ContentCache::get(const CacheKey& key) const {
  const fs::path path = path_for(key);
  auto text = read_file(path);
  if (!text) return std::nullopt;
  try {
    auto j = nlohmann::json::parse(*text);
    std::string payload = j.at("payload").get<std::string>();
    if (j.at("payload_sha256").get<std::string>() != sha256_hex(payload) ||
        j.at("key").get<std::string>() != key.content_hash) {
      spdlog::warn("cache entry {} failed its integrity check; treating as miss", path.string());
      return std::nullopt;
    }
    return payload;
  } catch (const nlohmann::json::exception&) {
    spdlog::warn("cache entry {} is unreadable; treating as miss", path.string());
    return std::nullopt;
  }
}

void ContentCache::put(const CacheKey& key, std::string_view payload) const {
  nlohmann::ordered_json j;
  j["key"] = key.content_hash;
  j["kind"] = to_string(key.kind);
  j["model_id"] = key.model_id;
  j["payload_sha256"] = sha256_hex(payload);
  j["payload"] = std::string(payload);
  atomic_write(path_for(key), j.dump());
}

}  // namespace ibsynth
