// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/config.hpp"
#include "ibsynth/corpus.hpp"
#include "ibsynth/descriptor.hpp"
#include "ibsynth/embedder.hpp"
#include "ibsynth/lmm.hpp"

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ibsynth {

enum class ImageStatus { emitted, discarded, fallback, provider_shortfall, failed };

std::string to_string(ImageStatus s);

struct LedgerEntry {
  int round = 0;
  std::string image_id;
  ImageStatus status = ImageStatus::emitted;
  std::string detail;
};

struct RoundReport {
  int round = 0;
  std::vector<LedgerEntry> entries;  // manifest order
  std::size_t new_examples = 0;
  std::size_t cumulative_examples = 0;
  fs::path dataset;

  std::map<std::string, std::size_t> counts() const;
  /// True when some image ended in provider_shortfall or failed.
  bool has_failures() const;
};

/// Chat and embedding backends for one run. Round models are resolved
/// lazily so a run can stop after round T and resume once the externally
/// trained round-(T+1) model is configured.
struct Providers {
  std::shared_ptr<LmmProvider> base;
  std::function<std::shared_ptr<LmmProvider>(int round)> round_model;
  std::shared_ptr<Embedder> embedder;  // wrapped in a CachingEmbedder by the pipeline
};

/// Builds providers from the config (remote clients, mock scripts or the
/// deterministic embedder).
Providers make_providers(const RunConfig& config);
std::shared_ptr<LmmProvider> make_chat_provider(const RunConfig& config, const EndpointSpec& spec,
                                                const std::string& default_model);

/// Iterative synthesis driver. Output layout under the output root:
///   run.json                 config fingerprint of the run owning the directory
///   descriptions/<id>.jsonl  sampled descriptions
///   selection/<id>.json      concept scores and Z*
///   rounds/<T>/train.jsonl   cumulative training examples after round T
///   rounds/<T>/candidates/<id>.jsonl, rounds/<T>/decisions.jsonl (T >= 1)
///   rounds/<T>/conversations.jsonl (emit)
///   ledger.jsonl             one status line per (round, image)
class Pipeline {
 public:
  Pipeline(RunConfig config, Providers providers);

  /// Samples descriptions for every image. Returns per-image outcomes in
  /// manifest order (missing entries: the image failed outright).
  std::vector<std::optional<DescriptionOutcome>> describe();

  /// describe() plus concept scoring and selection for every image.
  void score_concepts();

  RoundReport build_round0();
  RoundReport run_round(int round);

  /// Writes rounds/<round>/conversations.jsonl; lines of `mix_with` are
  /// appended verbatim after validation.
  fs::path emit_finetune_dataset(int round, const std::optional<fs::path>& mix_with = std::nullopt) const;

  std::size_t provider_calls() const { return provider_calls_.load(); }
  const std::vector<ImageRecord>& records() const { return records_; }
  const RunConfig& config() const { return config_; }

  fs::path round_dir(int round) const;

 private:
  struct ImageState;

  void claim_output_directory() const;
  std::vector<ImageState> run_step1();
  void write_ledger(int round, const std::vector<LedgerEntry>& entries) const;
  PromptBank prompt_bank() const;

  RunConfig config_;
  Providers providers_;
  std::shared_ptr<const ContentCache> cache_;
  std::shared_ptr<CachingEmbedder> embedder_;
  std::vector<ImageRecord> records_;
  ConceptLibrary concepts_;
  DatasetFamily family_;
  std::atomic<std::size_t> provider_calls_{0};
};

/// Emitted conversation record for one training example (key order: id,
/// image, conversations).
nlohmann::ordered_json to_conversation(const TrainingExample& example);

}  // namespace ibsynth
