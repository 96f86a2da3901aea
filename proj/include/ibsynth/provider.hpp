// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/errors.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <string>
#include <thread>

namespace ibsynth {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
};

/// Calls `fn` until it succeeds, a non-retryable ProviderError is thrown, or
/// `max_attempts` is exhausted. Backoff doubles after every failure.
template <class Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto delay = policy.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const ProviderError& e) {
      if (!e.retryable() || attempt >= policy.max_attempts) throw;
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

/// An OpenAI-compatible HTTP endpoint.
struct HttpEndpoint {
  std::string base_url;  // e.g. "http://127.0.0.1:8000" or "https://host/prefix"
  std::string api_key;   // empty: no Authorization header
  std::chrono::seconds timeout{120};
};

/// POSTs a JSON body to `{base_url}{path}`. Transport errors, 429 and 5xx
/// raise a retryable ProviderError; other non-2xx statuses and malformed
/// JSON replies raise a non-retryable one.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body);

/// Reads an API key from the environment; empty when unset.
std::string api_key_from_env(const char* var);

}  // namespace ibsynth
