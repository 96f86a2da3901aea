// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/concept_selector.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ibsynth {

double infonce_log_ratio_sum(std::span<const double> positive_sims, std::span<const double> negative_sims,
                             double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw NumericError("InfoNCE: tau must be a positive finite number");
  if (positive_sims.empty()) throw NumericError("InfoNCE: no positives");

  // Negatives are shared by every positive term: reduce them once as
  // neg_sum * e^{neg_max} = sum_k e^{n_k / tau}.
  double neg_max = -std::numeric_limits<double>::infinity();
  for (double s : negative_sims) {
    if (std::isnan(s)) throw NumericError("InfoNCE: NaN similarity");
    neg_max = std::max(neg_max, s / tau);
  }
  double neg_sum = 0.0;
  for (double s : negative_sims) neg_sum += std::exp(s / tau - neg_max);

  double total = 0.0;
  for (double s : positive_sims) {
    if (std::isnan(s)) throw NumericError("InfoNCE: NaN similarity");
    if (negative_sims.empty()) continue;
    const double p = s / tau;
    const double m = std::max(p, neg_max);
    const double lse = m + std::log(std::exp(p - m) + neg_sum * std::exp(neg_max - m));
    total += p - lse;
  }
  if (!std::isfinite(total)) throw NumericError("InfoNCE: non-finite score");
  return total;
}

double infonce_concept_score(std::span<const EmbeddingVector> positives, const EmbeddingVector& concept_vec,
                             const NegativePool& negatives, double tau, EmptyNegativePolicy policy) {
  if (negatives.entries.empty() && policy == EmptyNegativePolicy::reject) {
    throw NumericError(
        "InfoNCE: empty negative pool; supply descriptions of other images or select the zero_sum policy");
  }
  std::vector<double> pos;
  pos.reserve(positives.size());
  for (const auto& d : positives) pos.push_back(cosine_similarity(d, concept_vec));
  std::vector<double> neg;
  neg.reserve(negatives.entries.size());
  for (const auto& n : negatives.entries) neg.push_back(cosine_similarity(n.embedding, concept_vec));
  return infonce_log_ratio_sum(pos, neg, tau);
}

std::uint64_t image_seed(std::uint64_t run_seed, std::string_view image_id) {
  return run_seed ^ fnv1a64(image_id);
}

std::vector<std::size_t> sample_negative_indices(const std::vector<PoolCandidate>& candidates,
                                                 std::string_view target_image_id, std::size_t k,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].source_image_id != target_image_id) eligible.push_back(i);
  }
  k = std::min(k, eligible.size());
  // Partial Fisher-Yates. Index draws use rejection on the raw 64-bit output
  // so the sequence does not depend on the standard library's distributions.
  std::mt19937_64 rng(seed);
  auto bounded = [&rng](std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = rng();
    } while (x >= limit);
    return x % n;
  };
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(bounded(eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(k);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

NegativePool build_negative_pool(const std::vector<PoolCandidate>& candidates, std::string_view target_image_id,
                                 std::size_t k, std::uint64_t seed, Embedder& embedder) {
  NegativePool pool;
  pool.sampling_seed = seed;
  auto idx = sample_negative_indices(candidates, target_image_id, k, seed);
  if (idx.empty()) return pool;
  std::vector<std::string> texts;
  texts.reserve(idx.size());
  for (auto i : idx) texts.push_back(candidates[i].text);
  auto vecs = embedder.embed_texts(texts);
  for (std::size_t m = 0; m < idx.size(); ++m) {
    pool.entries.push_back({candidates[idx[m]].source_image_id, std::move(vecs[m])});
  }
  return pool;
}

void assign_ranks(std::vector<ScoredConcept>& scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });
  for (std::size_t r = 0; r < order.size(); ++r) scored[order[r]].rank = static_cast<int>(r) + 1;
}

std::vector<ScoredConcept> score_all_concepts(const DescriptionSet& descriptions, const ConceptSet& concepts,
                                              const NegativePool& negatives, double tau, Embedder& embedder,
                                              EmptyNegativePolicy policy) {
  if (descriptions.entries.empty()) throw NumericError("score_all_concepts: empty description set");
  if (concepts.concepts.empty()) throw NumericError("score_all_concepts: empty concept set");

  std::vector<std::string> desc_texts;
  desc_texts.reserve(descriptions.entries.size());
  for (const auto& e : descriptions.entries) desc_texts.push_back(e.text);
  const auto positives = embedder.embed_texts(desc_texts);
  const auto concept_vecs = embedder.embed_texts(concepts.concepts);

  std::vector<ScoredConcept> out;
  out.reserve(concepts.size());
  for (std::size_t j = 0; j < concepts.size(); ++j) {
    out.push_back({concepts.concepts[j], infonce_concept_score(positives, concept_vecs[j], negatives, tau, policy), 0});
  }
  assign_ranks(out);
  return out;
}

std::vector<std::string> SelectionResult::selected_concepts() const {
  std::vector<std::string> out;
  out.reserve(selected.size());
  for (const auto& s : selected) out.push_back(s.text);
  return out;
}

SelectionResult select_concepts(const std::vector<ScoredConcept>& input, double beta_hat) {
  if (input.empty()) throw NumericError("select_concepts: no scores");
  std::vector<ScoredConcept> scored = input;
  assign_ranks(scored);
  SelectionResult r;
  r.all = scored;
  r.beta_hat = beta_hat;

  const auto [lo, hi] = std::minmax_element(scored.begin(), scored.end(),
                                            [](const auto& a, const auto& b) { return a.score < b.score; });
  const double n = static_cast<double>(scored.size());
  if (lo->score == hi->score) {
    r.mu = lo->score;
    r.sigma = 0.0;
  } else {
    double sum = 0.0;
    for (const auto& s : scored) sum += s.score;
    r.mu = sum / n;
    double sq = 0.0;
    for (const auto& s : scored) sq += (s.score - r.mu) * (s.score - r.mu);
    r.sigma = std::sqrt(sq / n);
  }

  const double threshold = r.mu + beta_hat * r.sigma;
  for (const auto& s : scored) {
    if (s.score > threshold) r.selected.push_back(s);
  }
  if (r.selected.empty()) {
    r.selected.push_back(*std::find_if(scored.begin(), scored.end(), [](const auto& s) { return s.rank == 1; }));
    r.fallback_used = true;
  }
  std::sort(r.selected.begin(), r.selected.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
  for (const auto& s : r.selected) r.approx_mi += s.score;
  return r;
}

nlohmann::ordered_json to_json(const SelectionResult& r) {
  auto concept_json = [](const ScoredConcept& s) {
    nlohmann::ordered_json j;
    j["concept"] = s.text;
    j["score"] = s.score;
    j["rank"] = s.rank;
    return j;
  };
  nlohmann::ordered_json j;
  j["image_id"] = r.image_id;
  j["selected"] = nlohmann::ordered_json::array();
  for (const auto& s : r.selected) j["selected"].push_back(concept_json(s));
  j["scores"] = nlohmann::ordered_json::array();
  for (const auto& s : r.all) j["scores"].push_back(concept_json(s));
  j["mu"] = r.mu;
  j["sigma"] = r.sigma;
  j["beta_hat"] = r.beta_hat;
  j["tau"] = r.tau;
  j["approx_mi"] = r.approx_mi;
  j["fallback_used"] = r.fallback_used;
  j["negative_seed"] = r.negative_seed;
  return j;
}

SelectionResult parse_selection(const nlohmann::json& j) {
  auto concept_from = [](const nlohmann::json& c) {
    return ScoredConcept{c.at("concept").get<std::string>(), c.at("score").get<double>(), c.at("rank").get<int>()};
  };
  SelectionResult r;
  try {
    r.image_id = j.at("image_id").get<std::string>();
    for (const auto& c : j.at("selected")) r.selected.push_back(concept_from(c));
    for (const auto& c : j.at("scores")) r.all.push_back(concept_from(c));
    r.mu = j.at("mu").get<double>();
    r.sigma = j.at("sigma").get<double>();
    r.beta_hat = j.at("beta_hat").get<double>();
    r.tau = j.at("tau").get<double>();
    r.approx_mi = j.at("approx_mi").get<double>();
    r.fallback_used = j.at("fallback_used").get<bool>();
    r.negative_seed = j.at("negative_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("selection record: ") + e.what());
  }
  return r;
}

}  // namespace ibsynth
