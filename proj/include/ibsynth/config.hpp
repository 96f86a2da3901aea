// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/concept_selector.hpp"
#include "ibsynth/fs.hpp"
#include "ibsynth/provider.hpp"
#include "ibsynth/synthesizer.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace ibsynth {

/// Where one model lives. kind: "remote" or "mock" for chat models,
/// "remote" or "deterministic" for embedders.
struct EndpointSpec {
  std::string kind;
  std::string base_url;
  std::string model;
  std::string api_key_env;
  fs::path script;  // mock script
  int dim = 256;    // deterministic embedder
};

struct RunConfig {
  fs::path manifest;
  fs::path concepts;
  fs::path output_root = "out";
  fs::path cache_root;  // empty: <output_root>/cache
  fs::path image_root;  // empty: manifest directory
  std::optional<fs::path> prompt_bank;
  std::string family = "generic";

  EndpointSpec base_lmm{"mock", "", "base", "IBSYNTH_LMM_API_KEY", {}, 256};
  std::map<int, EndpointSpec> round_models;
  EndpointSpec embedder{"deterministic", "", "", "IBSYNTH_EMBED_API_KEY", {}, 256};
  std::optional<EndpointSpec> judge;
  std::optional<fs::path> mock_lmm_script;  // replaces every chat endpoint with this script

  int num_descriptions = 25;
  double description_temperature = 0.7;
  int dedup_retry_budget = 2;
  int num_candidates = 8;
  double candidate_temperature = 0.9;
  double rewrite_temperature = 0.2;
  int max_tokens = 512;
  double tau = 0.07;
  std::optional<double> answer_tau;  // defaults to tau
  double beta_hat = 1.0;
  std::size_t negatives = 32;
  int max_rounds = 4;
  FilterPolicy policy = FilterPolicy::paper_literal;
  std::uint64_t seed = 0;
  EmptyNegativePolicy empty_negatives = EmptyNegativePolicy::reject;
  unsigned workers = 4;
  std::size_t embed_batch_size = 64;
  std::size_t embed_in_flight = 4;
  RetryPolicy retry;

  double effective_answer_tau() const { return answer_tau.value_or(tau); }
  fs::path effective_cache_root() const { return cache_root.empty() ? output_root / "cache" : cache_root; }
  fs::path effective_image_root() const { return image_root.empty() ? manifest.parent_path() : image_root; }

  /// Throws ConfigError naming the offending knob.
  void validate() const;

  /// SHA-256 over every knob that shapes the outputs. Per-round endpoints,
  /// max_rounds, workers and retry settings are excluded: they may change
  /// between rounds of one run.
  std::string fingerprint() const;
  nlohmann::ordered_json fingerprint_fields() const;
};

/// Parses run.toml. Relative paths resolve against the file's directory.
RunConfig load_run_config(const fs::path& path);
RunConfig parse_run_config(std::string_view toml_text, const fs::path& base_dir);

}  // namespace ibsynth
