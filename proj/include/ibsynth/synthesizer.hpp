// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/concept_selector.hpp"
#include "ibsynth/corpus.hpp"
#include "ibsynth/lmm.hpp"

#include <atomic>
#include <optional>
#include <string>
#include <vector>

namespace ibsynth {

/// Lowercase, NFC, hyphens/underscores to spaces, whitespace collapsed, then
/// substring containment of the label in the answer.
bool label_contains(std::string_view answer, std::string_view label);

struct QueryTemplate {
  std::string query_id;
  std::string text;  // {item} slot
};

/// Per-family query bank, rewrite prompt and description prompts live
/// together so one name selects the whole dataset convention.
struct DatasetFamily {
  std::string name;
  std::vector<QueryTemplate> queries;
  std::string rewrite_template;  // {label} {concepts_str} {query}
};

DatasetFamily builtin_family(const std::string& name);

/// Query for one image: bank entry fnv1a64(image_id) mod |bank|, {item}
/// filled with the coarse label.
std::string assign_query(const DatasetFamily& family, const ImageRecord& record);

/// Rewrite prompt with concepts joined by "; ".
std::string render_rewrite_prompt(const DatasetFamily& family, const std::string& label,
                                  const std::vector<std::string>& concepts, const std::string& query);

/// "This is a {label}. Key visual features: {concepts}."
std::string local_template_answer(const std::string& label, const std::vector<std::string>& concepts);

struct RewriteOptions {
  int max_tokens = 512;
  double temperature = 0.2;
  RetryPolicy retry;
  const ContentCache* cache = nullptr;
};

struct RewriteOutcome {
  TrainingExample example;
  bool fallback = false;
  std::string note;
};

/// Round-0 answer: the base LMM rewrites Z* into an explanation (text-only
/// request). One retry when the reply lacks the label; after that, or on
/// provider failure, the local template is used and `fallback` is set.
RewriteOutcome rewrite_answer(const ImageRecord& record, const SelectionResult& selection, const std::string& query,
                              const DatasetFamily& family, LmmProvider& lmm, const RewriteOptions& options,
                              std::atomic<std::size_t>* provider_calls = nullptr);

struct CandidateAnswer {
  std::string text;
  double score = 0.0;
  bool contains_label = false;
  int sample_index = 0;
};

struct CandidateOptions {
  int m = 8;
  double temperature = 0.9;
  int max_tokens = 512;
  RetryPolicy retry;
  const ContentCache* cache = nullptr;
};

struct CandidateBatch {
  std::vector<CandidateAnswer> candidates;
  int shortfall = 0;
  std::vector<std::string> errors;
};

/// Samples m answers from the round's model; cached by
/// (model, image, query, sample_index).
CandidateBatch generate_candidates(const ImageRecord& record, const std::string& query, LmmProvider& lmm,
                                   const CandidateOptions& options,
                                   std::atomic<std::size_t>* provider_calls = nullptr);

/// Answer InfoNCE score s'_i: positives are the answer's similarities to Z*,
/// negatives its similarities to Z \ Z*. No negatives gives 0.
double infonce_answer_score(const EmbeddingVector& answer, std::span<const EmbeddingVector> selected,
                            std::span<const EmbeddingVector> rejected, double tau);

/// Fills `score` for every candidate.
void score_candidates(std::vector<CandidateAnswer>& candidates, const SelectionResult& selection,
                      const ConceptSet& full_set, double tau, Embedder& embedder);

enum class FilterPolicy { paper_literal, label_first };

std::string to_string(FilterPolicy p);
FilterPolicy filter_policy_from_string(const std::string& s);

struct FilterDecision {
  std::string image_id;
  std::optional<CandidateAnswer> chosen;
  int discarded_count = 0;
  FilterPolicy policy = FilterPolicy::paper_literal;
};

/// Picks y* from already-scored candidates. paper_literal: argmax over all
/// candidates, dropped when it lacks the label. label_first: argmax over
/// label-bearing candidates. Ties go to the lowest sample_index.
FilterDecision decide(const std::vector<CandidateAnswer>& candidates, FilterPolicy policy);

/// Recomputes label containment, scores against Z* / Z \ Z*, then decides.
FilterDecision select_best_answer(std::vector<CandidateAnswer> candidates, const SelectionResult& selection,
                                  const ConceptSet& full_set, const std::string& label, FilterPolicy policy,
                                  double tau, Embedder& embedder);

nlohmann::ordered_json to_json(const CandidateAnswer& c);
nlohmann::ordered_json to_json(const FilterDecision& d);

}  // namespace ibsynth
