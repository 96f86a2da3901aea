// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/embedder.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace ibsynth {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw NumericError("cosine_similarity: dimension mismatch " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine_similarity: zero-norm vector");
  double s = dot / (std::sqrt(na) * std::sqrt(nb));
  if (!std::isfinite(s)) throw NumericError("cosine_similarity: non-finite result");
  return std::clamp(s, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.model_id != b.model_id) {
    throw NumericError("cosine_similarity: model mismatch '" + a.model_id + "' vs '" + b.model_id + "'");
  }
  return cosine_similarity(std::span<const double>(a.values), std::span<const double>(b.values));
}

void l2_normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError("embedding has a non-finite component");
    sq += x * x;
  }
  if (sq == 0.0) throw NumericError("embedding has zero norm");
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
}

std::vector<std::string> hash_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    bool ascii_alnum = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (ascii_alnum || c >= 0x80) {
      cur.push_back(static_cast<char>((c >= 'A' && c <= 'Z') ? c - 'A' + 'a' : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

EmbeddingVector deterministic_embed(std::string_view text, int dim) {
  if (dim < 8) throw NumericError("deterministic_embed: dim must be >= 8");
  auto tokens = hash_tokens(text);
  if (tokens.empty()) throw NumericError("deterministic_embed: cannot embed text without tokens");
  EmbeddingVector v;
  v.values.assign(static_cast<std::size_t>(dim), 0.0);
  for (const auto& t : tokens) {
    v.values[fnv1a64(t, kDeterministicEmbedSeed) % static_cast<std::uint64_t>(dim)] += 1.0;
  }
  l2_normalize(v.values);
  v.model_id = "deterministic-bow-" + std::to_string(dim);
  return v;
}

DeterministicEmbedder::DeterministicEmbedder(int dim) : dim_(dim) {
  if (dim < 8) throw ConfigError("deterministic embedder dim must be >= 8");
}

std::string DeterministicEmbedder::model_id() const { return "deterministic-bow-" + std::to_string(dim_); }

std::vector<EmbeddingVector> DeterministicEmbedder::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) throw NumericError("embed_texts: empty input");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(deterministic_embed(t, dim_));
  return out;
}

RemoteEmbedder::RemoteEmbedder(RemoteEmbedderOptions options) : options_(std::move(options)) {
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(const std::vector<std::string>& batch) const {
  nlohmann::json body = {{"model", options_.model}, {"input", batch}};
  nlohmann::json reply = with_retries(options_.retry, [&] { return post_json(options_.endpoint, "/v1/embeddings", body); });

  const auto data = reply.find("data");
  if (data == reply.end() || !data->is_array()) throw ProviderError("embeddings reply lacks a 'data' array", false);
  if (data->size() != batch.size()) {
    throw ProviderError("embeddings batch shape mismatch: sent " + std::to_string(batch.size()) + " texts, got " +
                            std::to_string(data->size()) + " vectors",
                        false);
  }
  std::vector<EmbeddingVector> out(batch.size());
  std::vector<bool> filled(batch.size(), false);
  for (std::size_t i = 0; i < data->size(); ++i) {
    const auto& item = (*data)[i];
    std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : i;
    if (idx >= batch.size() || filled[idx]) throw ProviderError("embeddings reply has a bad index", false);
    filled[idx] = true;
    try {
      out[idx].values = item.at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("embeddings reply item malformed: ") + e.what(), false);
    }
    l2_normalize(out[idx].values);
    out[idx].model_id = options_.model;
  }
  return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) throw NumericError("embed_texts: empty input");
  std::vector<std::vector<std::string>> batches;
  for (std::size_t i = 0; i < texts.size(); i += options_.batch_size) {
    auto end = std::min(texts.size(), i + options_.batch_size);
    batches.emplace_back(texts.begin() + static_cast<std::ptrdiff_t>(i), texts.begin() + static_cast<std::ptrdiff_t>(end));
  }

  std::vector<std::vector<EmbeddingVector>> results(batches.size());
  for (std::size_t start = 0; start < batches.size(); start += options_.max_in_flight) {
    std::vector<std::future<std::vector<EmbeddingVector>>> wave;
    const std::size_t stop = std::min(batches.size(), start + options_.max_in_flight);
    for (std::size_t b = start; b < stop; ++b) {
      wave.push_back(std::async(std::launch::async, [this, &batches, b] { return embed_batch(batches[b]); }));
    }
    for (std::size_t b = start; b < stop; ++b) results[b] = wave[b - start].get();
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& r : results) {
    for (auto& v : r) out.push_back(std::move(v));
  }
  std::lock_guard lock(dim_mutex_);
  for (const auto& v : out) {
    if (dim_ == 0) dim_ = v.dim();
    if (v.dim() != dim_) {
      throw ProviderError("embedding dimension drift: expected " + std::to_string(dim_) + ", got " +
                              std::to_string(v.dim()),
                          false);
    }
  }
  return out;
}

CachingEmbedder::CachingEmbedder(std::shared_ptr<Embedder> inner, std::shared_ptr<const ContentCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::size_t CachingEmbedder::upstream_texts() const {
  std::lock_guard lock(mutex_);
  return upstream_texts_;
}

std::vector<EmbeddingVector> CachingEmbedder::embed_texts(const std::vector<std::string>& texts) {
  if (texts.empty()) throw NumericError("embed_texts: empty input");
  const std::string model = inner_->model_id();
  std::vector<std::optional<EmbeddingVector>> found(texts.size());
  std::vector<std::string> missing;
  std::vector<CacheKey> missing_keys;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (auto it = memo_.find(texts[i]); it != memo_.end()) found[i] = it->second;
    }
  }
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (found[i]) continue;
    CacheKey key = make_cache_key(CacheKind::embedding, model, {texts[i]});
    if (cache_) {
      if (auto payload = cache_->get(key)) {
        try {
          found[i] = parse_embedding(*payload);
          continue;
        } catch (const std::exception&) {
          // unreadable vector: fall through and refetch
        }
      }
    }
    if (std::find(missing.begin(), missing.end(), texts[i]) == missing.end()) {
      missing.push_back(texts[i]);
      missing_keys.push_back(key);
    }
  }

  if (!missing.empty()) {
    auto fresh = inner_->embed_texts(missing);
    if (fresh.size() != missing.size()) throw ProviderError("embedder returned wrong number of vectors", false);
    std::lock_guard lock(mutex_);
    upstream_texts_ += missing.size();
    for (std::size_t m = 0; m < missing.size(); ++m) {
      if (cache_) cache_->put(missing_keys[m], serialize_embedding(fresh[m]));
      memo_.emplace(missing[m], fresh[m]);
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (found[i]) {
      memo_.emplace(texts[i], *found[i]);
      out.push_back(std::move(*found[i]));
    } else {
      out.push_back(memo_.at(texts[i]));
    }
  }
  return out;
}

std::string serialize_embedding(const EmbeddingVector& v) {
  nlohmann::ordered_json j;
  j["model_id"] = v.model_id;
  j["dim"] = v.dim();
  j["values"] = v.values;
  return j.dump();
}

EmbeddingVector parse_embedding(std::string_view payload) {
  auto j = nlohmann::json::parse(payload);
  EmbeddingVector v;
  v.model_id = j.at("model_id").get<std::string>();
  v.values = j.at("values").get<std::vector<double>>();
  if (v.values.size() != j.at("dim").get<std::size_t>()) throw ParseError("cached embedding dim mismatch");
  return v;
}

}  // namespace ibsynth
