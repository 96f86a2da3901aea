// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/fs.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ibsynth {

enum class CacheKind { description, embedding, candidate };

std::string to_string(CacheKind kind);

struct CacheKey {
  CacheKind kind = CacheKind::description;
  std::string content_hash;
  std::string model_id;

  bool operator==(const CacheKey&) const = default;
};

/// Builds a key from logical input parts. Each part is trimmed and
/// NFC-normalized, then the parts are joined with U+001F before hashing.
CacheKey make_cache_key(CacheKind kind, std::string_view model_id, const std::vector<std::string>& parts);

/// Content-addressed file cache:
/// `<root>/<kind>/<model_id>/<first 2 hex>/<hash>.json`.
///
/// Each entry records the SHA-256 of its payload. A mismatch on read is
/// reported as a miss with a warning. Writes go through atomic rename, so
/// concurrent writers of one key are idempotent.
class ContentCache {
 public:
  explicit ContentCache(fs::path root) : root_(std::move(root)) {}

  std::optional<std::string> get(const CacheKey& key) const;
  void put(const CacheKey& key, std::string_view payload) const;

  fs::path path_for(const CacheKey& key) const;
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
};

}  // namespace ibsynth
