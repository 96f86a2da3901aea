// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/config.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <toml.hpp>

#include <cmath>
#include <set>

namespace ibsynth {
namespace {

void reject_unknown(const toml::table& t, const std::set<std::string>& allowed, const std::string& where) {
  for (auto&& [k, v] : t) {
    if (!allowed.count(std::string(k.str()))) {
      throw ConfigError("unknown key '" + std::string(k.str()) + "' in " + where);
    }
  }
}

const toml::table* section(const toml::table& root, const char* name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) throw ConfigError(std::string("[") + name + "] must be a table");
  return n->as_table();
}

template <class T>
std::optional<T> get(const toml::table& t, const char* key, const std::string& where) {
  const toml::node* n = t.get(key);
  if (!n) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = n->value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = n->value<std::string>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = n->value<bool>()) return *v;
  } else {
    if (auto v = n->value<std::int64_t>()) return static_cast<T>(*v);
  }
  throw ConfigError("key '" + std::string(key) + "' in " + where + " has the wrong type");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

EndpointSpec parse_endpoint(const toml::table& t, EndpointSpec defaults, const fs::path& base,
                            const std::string& where) {
  reject_unknown(t, {"kind", "base_url", "model", "api_key_env", "script", "dim"}, where);
  EndpointSpec e = std::move(defaults);
  if (auto v = get<std::string>(t, "kind", where)) e.kind = *v;
  if (auto v = get<std::string>(t, "base_url", where)) e.base_url = *v;
  if (auto v = get<std::string>(t, "model", where)) e.model = *v;
  if (auto v = get<std::string>(t, "api_key_env", where)) e.api_key_env = *v;
  if (auto v = get<std::string>(t, "script", where)) e.script = resolve(base, *v);
  if (auto v = get<int>(t, "dim", where)) e.dim = *v;
  return e;
}

EmptyNegativePolicy empty_policy_from_string(const std::string& s) {
  if (s == "reject") return EmptyNegativePolicy::reject;
  if (s == "zero_sum") return EmptyNegativePolicy::zero_sum;
  throw ConfigError("empty_negatives must be 'reject' or 'zero_sum'");
}

void validate_chat_endpoint(const EndpointSpec& e, const std::string& where, bool mock_override) {
  if (mock_override) return;
  if (e.kind == "mock") {
    if (e.script.empty()) throw ConfigError(where + ": mock endpoint needs a script (or pass --mock-lmm)");
  } else if (e.kind == "remote") {
    if (e.base_url.empty() || e.model.empty()) throw ConfigError(where + ": remote endpoint needs base_url and model");
  } else {
    throw ConfigError(where + ": kind must be 'remote' or 'mock'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (manifest.empty()) throw ConfigError("manifest path is not set");
  if (concepts.empty()) throw ConfigError("concepts path is not set");
  if (output_root.empty()) throw ConfigError("output root is not set");
  if (num_descriptions < 1) throw ConfigError("num_descriptions must be >= 1");
  if (num_candidates < 1) throw ConfigError("num_candidates must be >= 1");
  if (dedup_retry_budget < 0) throw ConfigError("dedup_retry_budget must be >= 0");
  if (max_rounds < 1) throw ConfigError("rounds (max iterations) must be >= 1");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
  if (answer_tau && (!(*answer_tau > 0.0) || !std::isfinite(*answer_tau))) throw ConfigError("answer tau must be > 0");
  if (!std::isfinite(beta_hat)) throw ConfigError("beta must be finite");
  if (negatives < 1) throw ConfigError("negatives must be >= 1");
  if (!(description_temperature > 0.0)) throw ConfigError("description temperature must be > 0");
  if (!(candidate_temperature > 0.0)) throw ConfigError("candidate temperature must be > 0");
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (retry.max_attempts < 1) throw ConfigError("retry attempts must be >= 1");
  const bool mock = mock_lmm_script.has_value();
  validate_chat_endpoint(base_lmm, "[lmm.base]", mock);
  for (const auto& [round, ep] : round_models) {
    if (round < 1) throw ConfigError("[lmm.rounds] keys must be >= 1");
    validate_chat_endpoint(ep, "[lmm.rounds." + std::to_string(round) + "]", mock);
  }
  if (judge) validate_chat_endpoint(*judge, "[judge]", mock);
  if (embedder.kind == "deterministic") {
    if (embedder.dim < 8) throw ConfigError("[embedder] dim must be >= 8");
  } else if (embedder.kind == "remote") {
    if (embedder.base_url.empty() || embedder.model.empty()) {
      throw ConfigError("[embedder] remote embedder needs base_url and model");
    }
  } else {
    throw ConfigError("[embedder] kind must be 'deterministic' or 'remote'");
  }
}

nlohmann::ordered_json RunConfig::fingerprint_fields() const {
  nlohmann::ordered_json j;
  // Inputs are identified by content so a moved checkout keeps its fingerprint.
  auto content_id = [](const fs::path& p) {
    auto text = read_file(p);
    return text ? "sha256:" + sha256_hex(*text) : "missing:" + p.lexically_normal().string();
  };
  j["manifest"] = content_id(manifest);
  j["concepts"] = content_id(concepts);
  j["family"] = family;
  j["prompt_bank"] = prompt_bank ? content_id(*prompt_bank) : "builtin";
  j["base_lmm"] = mock_lmm_script ? "mock:" + base_lmm.model : base_lmm.kind + ":" + base_lmm.model;
  j["embedder"] = embedder.kind == "deterministic" ? "deterministic:" + std::to_string(embedder.dim)
                                                   : "remote:" + embedder.model;
  j["num_descriptions"] = num_descriptions;
  j["description_temperature"] = description_temperature;
  j["dedup_retry_budget"] = dedup_retry_budget;
  j["num_candidates"] = num_candidates;
  j["candidate_temperature"] = candidate_temperature;
  j["rewrite_temperature"] = rewrite_temperature;
  j["max_tokens"] = max_tokens;
  j["tau"] = tau;
  j["answer_tau"] = effective_answer_tau();
  j["beta_hat"] = beta_hat;
  j["negatives"] = negatives;
  j["policy"] = to_string(policy);
  j["seed"] = seed;
  j["empty_negatives"] = empty_negatives == EmptyNegativePolicy::reject ? "reject" : "zero_sum";
  return j;
}

std::string RunConfig::fingerprint() const { return sha256_hex(fingerprint_fields().dump()); }

RunConfig parse_run_config(std::string_view toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("run config: ") + std::string(e.description()) + " at line " +
                      std::to_string(e.source().begin.line));
  }
  reject_unknown(root,
                 {"manifest", "concepts", "output", "cache", "image_root", "prompt_bank", "family", "seed",
                  "mock_lmm", "selection", "rejection", "runtime", "lmm", "embedder", "judge"},
                 "top level");

  RunConfig c;
  const std::string top = "top level";
  if (auto v = get<std::string>(root, "manifest", top)) c.manifest = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "concepts", top)) c.concepts = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "output", top)) c.output_root = resolve(base_dir, *v);
  else c.output_root = base_dir / "out";
  if (auto v = get<std::string>(root, "cache", top)) c.cache_root = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "image_root", top)) c.image_root = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "prompt_bank", top)) c.prompt_bank = resolve(base_dir, *v);
  if (auto v = get<std::string>(root, "family", top)) c.family = *v;
  if (auto v = get<std::int64_t>(root, "seed", top)) c.seed = static_cast<std::uint64_t>(*v);
  if (auto v = get<std::string>(root, "mock_lmm", top)) c.mock_lmm_script = resolve(base_dir, *v);

  if (const auto* s = section(root, "selection")) {
    const std::string w = "[selection]";
    reject_unknown(*s,
                   {"num_descriptions", "description_temperature", "dedup_retry_budget", "tau", "beta", "negatives",
                    "empty_negatives"},
                   w);
    if (auto v = get<int>(*s, "num_descriptions", w)) c.num_descriptions = *v;
    if (auto v = get<double>(*s, "description_temperature", w)) c.description_temperature = *v;
    if (auto v = get<int>(*s, "dedup_retry_budget", w)) c.dedup_retry_budget = *v;
    if (auto v = get<double>(*s, "tau", w)) c.tau = *v;
    if (auto v = get<double>(*s, "beta", w)) c.beta_hat = *v;
    if (auto v = get<std::int64_t>(*s, "negatives", w)) {
      if (*v < 1) throw ConfigError("negatives must be >= 1");
      c.negatives = static_cast<std::size_t>(*v);
    }
    if (auto v = get<std::string>(*s, "empty_negatives", w)) c.empty_negatives = empty_policy_from_string(*v);
  }
  if (const auto* s = section(root, "rejection")) {
    const std::string w = "[rejection]";
    reject_unknown(*s, {"num_candidates", "temperature", "tau", "policy", "rounds"}, w);
    if (auto v = get<int>(*s, "num_candidates", w)) c.num_candidates = *v;
    if (auto v = get<double>(*s, "temperature", w)) c.candidate_temperature = *v;
    if (auto v = get<double>(*s, "tau", w)) c.answer_tau = *v;
    if (auto v = get<std::string>(*s, "policy", w)) c.policy = filter_policy_from_string(*v);
    if (auto v = get<int>(*s, "rounds", w)) c.max_rounds = *v;
  }
  if (const auto* s = section(root, "runtime")) {
    const std::string w = "[runtime]";
    reject_unknown(*s,
                   {"workers", "max_tokens", "retry_attempts", "retry_base_ms", "embed_batch_size", "embed_in_flight",
                    "rewrite_temperature"},
                   w);
    if (auto v = get<std::int64_t>(*s, "workers", w)) {
      if (*v < 1) throw ConfigError("workers must be >= 1");
      c.workers = static_cast<unsigned>(*v);
    }
    if (auto v = get<int>(*s, "max_tokens", w)) c.max_tokens = *v;
    if (auto v = get<int>(*s, "retry_attempts", w)) c.retry.max_attempts = *v;
    if (auto v = get<std::int64_t>(*s, "retry_base_ms", w)) c.retry.base_delay = std::chrono::milliseconds(*v);
    if (auto v = get<std::int64_t>(*s, "embed_batch_size", w)) c.embed_batch_size = static_cast<std::size_t>(*v);
    if (auto v = get<std::int64_t>(*s, "embed_in_flight", w)) c.embed_in_flight = static_cast<std::size_t>(*v);
    if (auto v = get<double>(*s, "rewrite_temperature", w)) c.rewrite_temperature = *v;
  }
  if (const auto* lmm = section(root, "lmm")) {
    reject_unknown(*lmm, {"base", "rounds"}, "[lmm]");
    if (const auto* b = section(*lmm, "base")) c.base_lmm = parse_endpoint(*b, c.base_lmm, base_dir, "[lmm.base]");
    if (const auto* r = section(*lmm, "rounds")) {
      for (auto&& [k, v] : *r) {
        const std::string key(k.str());
        int round = 0;
        try {
          std::size_t used = 0;
          round = std::stoi(key, &used);
          if (used != key.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
          throw ConfigError("[lmm.rounds] keys must be round numbers, got '" + key + "'");
        }
        if (!v.is_table()) throw ConfigError("[lmm.rounds." + key + "] must be a table");
        EndpointSpec defaults{"remote", c.base_lmm.base_url, "", c.base_lmm.api_key_env, {}, 256};
        c.round_models[round] = parse_endpoint(*v.as_table(), defaults, base_dir, "[lmm.rounds." + key + "]");
      }
    }
  }
  if (const auto* e = section(root, "embedder")) c.embedder = parse_endpoint(*e, c.embedder, base_dir, "[embedder]");
  if (const auto* j = section(root, "judge")) {
    c.judge = parse_endpoint(*j, EndpointSpec{"remote", "", "", "IBSYNTH_JUDGE_API_KEY", {}, 256}, base_dir, "[judge]");
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw ConfigError("config not found: " + path.string());
  return parse_run_config(*text, path.parent_path());
}

}  // namespace ibsynth
