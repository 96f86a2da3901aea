// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/provider.hpp"

#include <httplib.h>

#include <cstdlib>

namespace ibsynth {
namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string prefix;
};

SplitUrl split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
  auto path_start = base_url.find('/', scheme_end + 3);
  SplitUrl out;
  if (path_start == std::string::npos) {
    out.scheme_host_port = base_url;
  } else {
    out.scheme_host_port = base_url.substr(0, path_start);
    out.prefix = base_url.substr(path_start);
  }
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace

nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body) {
  const SplitUrl url = split_base_url(endpoint.base_url);
  httplib::Client client(url.scheme_host_port);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(endpoint.timeout);
  client.set_write_timeout(endpoint.timeout);

  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  auto res = client.Post(url.prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    throw ProviderError("POST " + endpoint.base_url + path + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status == 429 || res->status >= 500) {
    throw ProviderError("POST " + path + " returned HTTP " + std::to_string(res->status));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body,
                        false);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ProviderError("POST " + path + " returned malformed JSON: " + e.what(), false);
  }
}

std::string api_key_from_env(const char* var) {
  const char* v = std::getenv(var);
  return v ? std::string(v) : std::string();
}

}  // namespace ibsynth
