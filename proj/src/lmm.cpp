// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/lmm.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <algorithm>
#include <cctype>

namespace ibsynth {

using json = nlohmann::json;

std::string request_fingerprint(std::string_view model_id, const ChatRequest& request) {
  std::string s;
  s += model_id;
  s += '\x1f';
  s += request.purpose;
  s += '\x1f';
  s += request.image_ref.value_or("");
  s += '\x1f';
  s += request.prompt;
  s += '\x1f';
  s += std::to_string(request.sample_index);
  s += '\x1f';
  s += std::to_string(request.attempt);
  return sha256_hex(s);
}

namespace {

std::string mime_for(const std::string& ref) {
  std::string ext = fs::path(ref).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".bmp") return "image/bmp";
  return "image/jpeg";
}

}  // namespace

std::string RemoteLmm::image_url(const std::string& image_ref) const {
  if (image_ref.starts_with("http://") || image_ref.starts_with("https://") || image_ref.starts_with("data:")) {
    return image_ref;
  }
  fs::path p(image_ref);
  if (p.is_relative()) p = options_.image_root / p;
  auto bytes = read_file(p);
  if (!bytes) throw ProviderError("cannot read image " + p.string(), false);
  return "data:" + mime_for(image_ref) + ";base64," + base64_encode(*bytes);
}

json RemoteLmm::build_body(const ChatRequest& request) const {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  if (request.image_ref) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(*request.image_ref)}}}});
  }
  json body = {
      {"model", options_.model},
      {"messages", json::array({{{"role", "user"}, {"content", content}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
      {"seed", request.sample_index * 1009 + request.attempt},
  };
  return body;
}

std::string RemoteLmm::complete(const ChatRequest& request) {
  json reply = post_json(options_.endpoint, "/v1/chat/completions", build_body(request));
  try {
    const auto& msg = reply.at("choices").at(0).at("message").at("content");
    if (msg.is_string()) return msg.get<std::string>();
    // Some servers return content parts.
    std::string text;
    for (const auto& part : msg) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("chat completion reply malformed: ") + e.what(), false);
  }
}

MockLmm::MockLmm(std::string model_id, std::vector<Rule> rules, std::optional<std::string> fallback)
    : model_id_(std::move(model_id)), rules_(std::move(rules)), fallback_(std::move(fallback)) {}

MockLmm MockLmm::from_script(std::string model_id, std::string_view jsonl) {
  std::vector<Rule> rules;
  std::optional<std::string> fallback;
  std::size_t line_no = 0;
  for (const auto& line : split_lines(jsonl)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      if (j.contains("fallback")) {
        fallback = j["fallback"].get<std::string>();
        continue;
      }
      Rule r;
      auto opt_str = [&](const char* k) -> std::optional<std::string> {
        if (j.contains(k)) return j[k].get<std::string>();
        return std::nullopt;
      };
      auto opt_int = [&](const char* k) -> std::optional<int> {
        if (j.contains(k)) return j[k].get<int>();
        return std::nullopt;
      };
      r.fingerprint = opt_str("fingerprint");
      r.model = opt_str("model");
      r.purpose = opt_str("purpose");
      r.image = opt_str("image");
      r.contains = opt_str("contains");
      r.sample_index = opt_int("sample_index");
      r.attempt = opt_int("attempt");
      r.error = opt_str("error");
      r.echo = j.value("echo", false);
      if (j.contains("response")) r.responses.push_back(j["response"].get<std::string>());
      if (j.contains("responses")) {
        for (const auto& s : j["responses"]) r.responses.push_back(s.get<std::string>());
      }
      if (r.responses.empty() && !r.echo && !r.error) {
        throw ParseError("rule needs one of response, responses, echo, error");
      }
      rules.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError("mock script line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("mock script line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return MockLmm(std::move(model_id), std::move(rules), std::move(fallback));
}

MockLmm MockLmm::from_file(std::string model_id, const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw ConfigError("mock script not found: " + path.string());
  return from_script(std::move(model_id), *text);
}

std::string MockLmm::complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  const std::string image = request.image_ref.value_or("");
  auto render = [&](const std::string& tmpl) {
    const std::string si = std::to_string(request.sample_index);
    const std::string at = std::to_string(request.attempt);
    return fill_template(tmpl, {{"prompt", request.prompt},
                                {"image", image},
                                {"sample_index", si},
                                {"attempt", at},
                                {"model", model_id_},
                                {"purpose", request.purpose}});
  };
  std::string fp;
  for (const auto& r : rules_) {
    if (r.fingerprint) {
      if (fp.empty()) fp = request_fingerprint(model_id_, request);
      if (*r.fingerprint != fp) continue;
    }
    if (r.model && *r.model != model_id_) continue;
    if (r.purpose && *r.purpose != request.purpose) continue;
    if (r.image && *r.image != image) continue;
    if (r.contains && request.prompt.find(*r.contains) == std::string::npos) continue;
    if (r.sample_index && *r.sample_index != request.sample_index) continue;
    if (r.attempt && *r.attempt != request.attempt) continue;

    if (r.error) throw ProviderError("mock: " + *r.error);
    if (r.echo) return request.prompt;
    const auto idx = static_cast<std::size_t>(request.sample_index + request.attempt) % r.responses.size();
    return render(r.responses[idx]);
  }
  if (fallback_) return render(*fallback_);
  throw ProviderError("mock: no scripted response for " + request.purpose + " request", false);
}

std::string cached_complete(LmmProvider& lmm, const ContentCache* cache, const CacheKey& key,
                            const ChatRequest& request, const RetryPolicy& retry,
                            std::atomic<std::size_t>* provider_calls) {
  if (cache) {
    if (auto hit = cache->get(key)) return *hit;
  }
  std::string text = with_retries(retry, [&] {
    if (provider_calls) provider_calls->fetch_add(1);
    return lmm.complete(request);
  });
  if (cache) cache->put(key, text);
  return text;
}

}  // namespace ibsynth
