// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/cache.hpp"
#include "ibsynth/provider.hpp"

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ibsynth {

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Cosine similarity clamped to [-1, 1]. Throws NumericError on a zero-norm
/// input or a dimension mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// As above, additionally requiring matching model ids.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Rescales to unit L2 norm. Throws NumericError on zero or non-finite input.
void l2_normalize(std::vector<double>& v);

inline constexpr std::uint64_t kDeterministicEmbedSeed = 0x9E3779B97F4A7C15ULL;

/// Bag-of-words hashing embedding: ASCII-lowercased tokens split on
/// non-alphanumeric ASCII (bytes >= 0x80 stay inside tokens), each token
/// counted at FNV-1a-64(token, seed) mod dim, then L2-normalized.
EmbeddingVector deterministic_embed(std::string_view text, int dim);

std::vector<std::string> hash_tokens(std::string_view text);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string model_id() const = 0;
  /// One unit-norm vector per input, in input order.
  virtual std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) = 0;

  EmbeddingVector embed(const std::string& text) { return embed_texts({text}).front(); }
};

class DeterministicEmbedder final : public Embedder {
 public:
  explicit DeterministicEmbedder(int dim = 256);
  std::string model_id() const override;
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;
  int dim() const { return dim_; }

 private:
  int dim_;
};

struct RemoteEmbedderOptions {
  HttpEndpoint endpoint;
  std::string model;
  std::size_t batch_size = 64;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
};

/// Client for `POST {base_url}/v1/embeddings`.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(RemoteEmbedderOptions options);
  std::string model_id() const override { return options_.model; }
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;

 private:
  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& batch) const;

  RemoteEmbedderOptions options_;
  mutable std::mutex dim_mutex_;
  std::size_t dim_ = 0;
};

/// Memoizes another embedder by (model_id, text), in memory and optionally
/// in a ContentCache as `{model_id, dim, values[]}`.
class CachingEmbedder final : public Embedder {
 public:
  CachingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<const ContentCache> cache);
  std::string model_id() const override { return inner_->model_id(); }
  std::vector<EmbeddingVector> embed_texts(const std::vector<std::string>& texts) override;

  std::size_t upstream_texts() const;

 private:
  std::shared_ptr<Embedder> inner_;
  std::shared_ptr<const ContentCache> cache_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> memo_;
  std::size_t upstream_texts_ = 0;
};

std::string serialize_embedding(const EmbeddingVector& v);
EmbeddingVector parse_embedding(std::string_view payload);

}  // namespace ibsynth
