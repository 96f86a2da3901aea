// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/cache.hpp"
#include "ibsynth/fs.hpp"
#include "ibsynth/provider.hpp"

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ibsynth {

/// One chat completion. `image_ref` is forwarded opaquely; text-only when empty.
struct ChatRequest {
  std::string purpose;  // "describe", "rewrite", "candidate", "judge"
  std::string prompt;
  std::optional<std::string> image_ref;
  double temperature = 0.7;
  int max_tokens = 512;
  int sample_index = 0;
  int attempt = 0;
};

class LmmProvider {
 public:
  virtual ~LmmProvider() = default;
  virtual std::string model_id() const = 0;
  /// Returns the assistant text or throws ProviderError.
  virtual std::string complete(const ChatRequest& request) = 0;
};

/// Stable hash of (model, purpose, image_ref, prompt, sample_index, attempt).
std::string request_fingerprint(std::string_view model_id, const ChatRequest& request);

struct RemoteLmmOptions {
  HttpEndpoint endpoint;
  std::string model;
  fs::path image_root;  // relative image_refs resolve against this
  RetryPolicy retry;
};

/// Client for `POST {base_url}/v1/chat/completions`. Local images are sent
/// as base64 data URLs in an `image_url` content part; http(s) and data
/// URIs pass through unchanged.
class RemoteLmm final : public LmmProvider {
 public:
  explicit RemoteLmm(RemoteLmmOptions options) : options_(std::move(options)) {}
  std::string model_id() const override { return options_.model; }
  std::string complete(const ChatRequest& request) override;

  /// Request body as sent on the wire (exposed for tests).
  nlohmann::json build_body(const ChatRequest& request) const;

 private:
  std::string image_url(const std::string& image_ref) const;
  RemoteLmmOptions options_;
};

/// Scripted provider backing the offline test suite.
///
/// Script is JSONL; rules are tried in file order and the first match wins.
/// Match fields (all optional): `fingerprint`, `model`, `purpose`, `image`,
/// `contains` (substring of the prompt), `sample_index`, `attempt`.
/// Outcome fields: `response` (template), `responses` (cycled by
/// sample_index + attempt), `echo: true` (returns the prompt) or `error`
/// (always fails). A line `{"fallback": "<template>"}` sets the reply for
/// unmatched requests; without one, unmatched requests fail.
/// Templates may use {prompt} {image} {sample_index} {attempt} {model} {purpose}.
class MockLmm final : public LmmProvider {
 public:
  struct Rule {
    std::optional<std::string> fingerprint;
    std::optional<std::string> model;
    std::optional<std::string> purpose;
    std::optional<std::string> image;
    std::optional<std::string> contains;
    std::optional<int> sample_index;
    std::optional<int> attempt;
    std::vector<std::string> responses;
    bool echo = false;
    std::optional<std::string> error;
  };

  MockLmm(std::string model_id, std::vector<Rule> rules, std::optional<std::string> fallback = std::nullopt);

  MockLmm(MockLmm&& other) noexcept
      : model_id_(std::move(other.model_id_)),
        rules_(std::move(other.rules_)),
        fallback_(std::move(other.fallback_)),
        calls_(other.calls_.load()) {}

  static MockLmm from_script(std::string model_id, std::string_view jsonl);
  static MockLmm from_file(std::string model_id, const fs::path& path);

  std::string model_id() const override { return model_id_; }
  std::string complete(const ChatRequest& request) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  std::string model_id_;
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  std::atomic<std::size_t> calls_{0};
};

/// Cached completion: returns the cached text for `key` or calls the
/// provider with retries and stores the reply. `provider_calls` is bumped
/// once per upstream attempt.
std::string cached_complete(LmmProvider& lmm, const ContentCache* cache, const CacheKey& key,
                            const ChatRequest& request, const RetryPolicy& retry,
                            std::atomic<std::size_t>* provider_calls = nullptr);

}  // namespace ibsynth
