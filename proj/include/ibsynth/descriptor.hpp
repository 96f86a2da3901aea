// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/corpus.hpp"
#include "ibsynth/lmm.hpp"

#include <atomic>
#include <string>
#include <vector>

namespace ibsynth {

struct PromptTemplate {
  std::string prompt_id;
  std::string text;  // may contain an {item} slot
};

/// Ordered description prompts for one dataset family.
struct PromptBank {
  std::string domain;
  std::vector<PromptTemplate> prompts;

  /// Throws ConfigError on an empty bank, duplicate ids or empty templates.
  void validate() const;
  std::size_t size() const { return prompts.size(); }
};

/// Built-in bank for a dataset family ("cub-200", "stanford_dogs", "fgvc",
/// "pld", "generic"). Unknown families get the generic bank.
PromptBank builtin_prompt_bank(const std::string& family);

/// Loads `{"domain": "...", "prompts": [{"prompt_id": "...", "template": "..."}]}`.
PromptBank load_prompt_bank(const fs::path& path);

/// How many times each prompt is used when `n` samples cycle the bank.
std::vector<int> prompt_usage_counts(int n, std::size_t bank_size);

struct DescribeOptions {
  int n = 25;
  double temperature = 0.7;
  int max_tokens = 512;
  /// Extra samples drawn per slot when a reply duplicates an earlier one.
  int dedup_retry_budget = 2;
  RetryPolicy retry;
  const ContentCache* cache = nullptr;
};

struct DescriptionOutcome {
  DescriptionSet set;
  int shortfall = 0;  // requested minus collected
  std::vector<std::string> errors;
  std::size_t unique_texts = 0;
  bool low_diversity = false;  // unique / collected < 0.5
};

/// Samples n descriptions of one image, cycling the prompt bank (slot i uses
/// prompt i mod |bank|). Exact duplicates (after trimming) are resampled up
/// to the retry budget and then kept. Provider failures shrink the set and
/// are reported as a shortfall.
DescriptionOutcome generate_descriptions(const ImageRecord& record, const PromptBank& bank, LmmProvider& lmm,
                                         const DescribeOptions& options,
                                         std::atomic<std::size_t>* provider_calls = nullptr);

}  // namespace ibsynth
