// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/corpus.hpp"
#include "ibsynth/embedder.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ibsynth {

/// Sum over positives of log( e^{p/tau} / (e^{p/tau} + sum_k e^{n_k/tau}) ),
/// evaluated with max subtraction. With no negatives every term is exactly 0.
/// Throws NumericError on tau <= 0, no positives or a NaN similarity.
double infonce_log_ratio_sum(std::span<const double> positive_sims, std::span<const double> negative_sims,
                             double tau);

struct NegativeEntry {
  std::string source_image_id;
  EmbeddingVector embedding;
};

/// Descriptions of other images used as contrastive negatives for one target image.
struct NegativePool {
  std::vector<NegativeEntry> entries;
  std::uint64_t sampling_seed = 0;
};

enum class EmptyNegativePolicy {
  reject,    // empty pool is an error
  zero_sum,  // empty pool contributes nothing: every term is 0
};

/// Concept InfoNCE score s_j of one concept against the description set.
double infonce_concept_score(std::span<const EmbeddingVector> positives, const EmbeddingVector& concept_vec,
                             const NegativePool& negatives, double tau,
                             EmptyNegativePolicy policy = EmptyNegativePolicy::reject);

/// A candidate negative text drawn from another image's descriptions.
struct PoolCandidate {
  std::string source_image_id;
  std::string text;
};

/// Per-image sampling seed derived from the run seed.
std::uint64_t image_seed(std::uint64_t run_seed, std::string_view image_id);

/// Indices of up to k candidates whose source differs from `target_image_id`,
/// drawn uniformly without replacement by a seeded mt19937_64. Returned in
/// ascending order.
std::vector<std::size_t> sample_negative_indices(const std::vector<PoolCandidate>& candidates,
                                                 std::string_view target_image_id, std::size_t k,
                                                 std::uint64_t seed);

NegativePool build_negative_pool(const std::vector<PoolCandidate>& candidates, std::string_view target_image_id,
                                 std::size_t k, std::uint64_t seed, Embedder& embedder);

struct ScoredConcept {
  std::string text;
  double score = 0.0;
  int rank = 0;  // 1 = best; ties keep the original concept order
};

/// Scores every concept; output follows the concept set order with ranks
/// filled in.
std::vector<ScoredConcept> score_all_concepts(const DescriptionSet& descriptions, const ConceptSet& concepts,
                                              const NegativePool& negatives, double tau, Embedder& embedder,
                                              EmptyNegativePolicy policy = EmptyNegativePolicy::reject);

/// Assigns ranks in place: descending score, ties by position.
void assign_ranks(std::vector<ScoredConcept>& scored);

struct SelectionResult {
  std::string image_id;
  std::vector<ScoredConcept> selected;  // Z*, by rank
  std::vector<ScoredConcept> all;       // every concept, concept-set order
  double mu = 0.0;
  double sigma = 0.0;
  double beta_hat = 1.0;
  double approx_mi = 0.0;  // sum of selected scores
  bool fallback_used = false;
  double tau = 0.07;
  std::uint64_t negative_seed = 0;

  std::vector<std::string> selected_concepts() const;
};

/// Keeps concepts with score > mu + beta_hat * sigma (population moments).
/// An empty result falls back to the rank-1 concept.
SelectionResult select_concepts(const std::vector<ScoredConcept>& scored, double beta_hat);

nlohmann::ordered_json to_json(const SelectionResult& r);
SelectionResult parse_selection(const nlohmann::json& j);

}  // namespace ibsynth
