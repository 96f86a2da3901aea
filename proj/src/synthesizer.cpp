// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/synthesizer.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace ibsynth {

bool label_contains(std::string_view answer, std::string_view label) {
  const std::string l = normalize_for_match(label);
  if (l.empty()) return false;
  return normalize_for_match(answer).find(l) != std::string::npos;
}

namespace {

constexpr const char* kRewriteWithArticle =
    "This is a picture of a {label} with the following visual features: {concepts_str}. Based on the information "
    "provided, please answer the following question. Question: '{query}'";
constexpr const char* kRewriteNoArticle =
    "This is a picture of {label} with the following visual features: {concepts_str}. Based on the information "
    "provided, please answer the following question. Question: '{query}'";

}  // namespace

DatasetFamily builtin_family(const std::string& name) {
  DatasetFamily f;
  f.name = name;
  f.queries = {
      {"q_reasoning", "What is the {item} in this image? Please provide your reasoning."},
      {"q_specific", "Based on the visual content, what is the specific name of this {item}? Provide an explanation."},
      {"q_identify", "Identify this {item}. What features led to your conclusion?"},
      {"q_name", "What is the {item} name? Provide your reason."},
  };
  f.rewrite_template = (name == "pld" || name == "fgvc") ? kRewriteNoArticle : kRewriteWithArticle;
  return f;
}

std::string assign_query(const DatasetFamily& family, const ImageRecord& record) {
  if (family.queries.empty()) throw ConfigError("family '" + family.name + "' has no query templates");
  const auto& q = family.queries[fnv1a64(record.id) % family.queries.size()];
  return fill_template(q.text, {{"item", record.coarse_label}});
}

std::string render_rewrite_prompt(const DatasetFamily& family, const std::string& label,
                                  const std::vector<std::string>& concepts, const std::string& query) {
  const std::string joined = join(concepts, "; ");
  return fill_template(family.rewrite_template, {{"label", label}, {"concepts_str", joined}, {"query", query}});
}

std::string local_template_answer(const std::string& label, const std::vector<std::string>& concepts) {
  return "This is a " + label + ". Key visual features: " + join(concepts, "; ") + ".";
}

RewriteOutcome rewrite_answer(const ImageRecord& record, const SelectionResult& selection, const std::string& query,
                              const DatasetFamily& family, LmmProvider& lmm, const RewriteOptions& options,
                              std::atomic<std::size_t>* provider_calls) {
  if (selection.selected.empty()) throw NumericError("rewrite_answer: empty concept selection");
  const auto concepts = selection.selected_concepts();
  const std::string prompt = render_rewrite_prompt(family, record.label, concepts, query);

  RewriteOutcome out;
  out.example.image_id = record.id;
  out.example.image_ref = record.image_ref;
  out.example.query = query;
  out.example.round = 0;
  out.example.source = ExampleSource::rewrite;

  for (int attempt = 0; attempt < 2; ++attempt) {
    ChatRequest req;
    req.purpose = "rewrite";
    req.prompt = prompt;
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    req.attempt = attempt;
    const CacheKey key = make_cache_key(CacheKind::candidate, lmm.model_id(),
                                        {"rewrite", record.image_ref, prompt, std::to_string(attempt)});
    try {
      std::string answer = trim(cached_complete(lmm, options.cache, key, req, options.retry, provider_calls));
      if (!answer.empty() && label_contains(answer, record.label)) {
        out.example.answer = std::move(answer);
        return out;
      }
      out.note = "rewrite reply lacked the label";
    } catch (const ProviderError& e) {
      out.note = std::string("rewrite provider failure: ") + e.what();
      break;
    }
  }
  out.example.answer = local_template_answer(record.label, concepts);
  out.fallback = true;
  return out;
}

CandidateBatch generate_candidates(const ImageRecord& record, const std::string& query, LmmProvider& lmm,
                                   const CandidateOptions& options, std::atomic<std::size_t>* provider_calls) {
  if (options.m < 1) throw ConfigError("number of candidates must be >= 1");
  CandidateBatch batch;
  for (int i = 0; i < options.m; ++i) {
    ChatRequest req;
    req.purpose = "candidate";
    req.prompt = query;
    req.image_ref = record.image_ref;
    req.temperature = options.temperature;
    req.max_tokens = options.max_tokens;
    req.sample_index = i;
    const CacheKey key =
        make_cache_key(CacheKind::candidate, lmm.model_id(), {"answer", record.image_ref, query, std::to_string(i)});
    try {
      std::string text = trim(cached_complete(lmm, options.cache, key, req, options.retry, provider_calls));
      if (text.empty()) {
        batch.errors.push_back("sample " + std::to_string(i) + ": empty answer");
        continue;
      }
      CandidateAnswer c;
      c.contains_label = label_contains(text, record.label);
      c.text = std::move(text);
      c.sample_index = i;
      batch.candidates.push_back(std::move(c));
    } catch (const ProviderError& e) {
      batch.errors.push_back("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  batch.shortfall = options.m - static_cast<int>(batch.candidates.size());
  return batch;
}

double infonce_answer_score(const EmbeddingVector& answer, std::span<const EmbeddingVector> selected,
                            std::span<const EmbeddingVector> rejected, double tau) {
  if (selected.empty()) throw NumericError("infonce_answer_score: empty concept selection");
  std::vector<double> pos;
  pos.reserve(selected.size());
  for (const auto& z : selected) pos.push_back(cosine_similarity(answer, z));
  std::vector<double> neg;
  neg.reserve(rejected.size());
  for (const auto& z : rejected) neg.push_back(cosine_similarity(answer, z));
  return infonce_log_ratio_sum(pos, neg, tau);
}

void score_candidates(std::vector<CandidateAnswer>& candidates, const SelectionResult& selection,
                      const ConceptSet& full_set, double tau, Embedder& embedder) {
  if (candidates.empty()) return;
  std::set<std::string> chosen;
  for (const auto& s : selection.selected) chosen.insert(s.text);
  std::vector<std::string> rejected_texts;
  for (const auto& c : full_set.concepts) {
    if (!chosen.count(c)) rejected_texts.push_back(c);
  }
  const auto selected_vecs = embedder.embed_texts(selection.selected_concepts());
  std::vector<EmbeddingVector> rejected_vecs;
  if (!rejected_texts.empty()) rejected_vecs = embedder.embed_texts(rejected_texts);

  std::vector<std::string> answers;
  answers.reserve(candidates.size());
  for (const auto& c : candidates) answers.push_back(c.text);
  const auto answer_vecs = embedder.embed_texts(answers);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    candidates[i].score = infonce_answer_score(answer_vecs[i], selected_vecs, rejected_vecs, tau);
  }
}

std::string to_string(FilterPolicy p) { return p == FilterPolicy::paper_literal ? "paper_literal" : "label_first"; }

FilterPolicy filter_policy_from_string(const std::string& s) {
  if (s == "paper_literal") return FilterPolicy::paper_literal;
  if (s == "label_first") return FilterPolicy::label_first;
  throw ConfigError("unknown policy '" + s + "' (expected paper_literal or label_first)");
}

FilterDecision decide(const std::vector<CandidateAnswer>& candidates, FilterPolicy policy) {
  if (candidates.empty()) throw NumericError("select_best_answer: no candidates");
  FilterDecision d;
  d.policy = policy;
  const CandidateAnswer* best = nullptr;
  auto better = [](const CandidateAnswer& a, const CandidateAnswer& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_index < b.sample_index;
  };
  for (const auto& c : candidates) {
    if (std::isnan(c.score)) throw NumericError("select_best_answer: unscored candidate");
    if (policy == FilterPolicy::label_first && !c.contains_label) continue;
    if (!best || better(c, *best)) best = &c;
  }
  if (best && (policy == FilterPolicy::label_first || best->contains_label)) {
    d.chosen = *best;
    d.discarded_count = static_cast<int>(candidates.size()) - 1;
  } else {
    d.discarded_count = static_cast<int>(candidates.size());
  }
  return d;
}

FilterDecision select_best_answer(std::vector<CandidateAnswer> candidates, const SelectionResult& selection,
                                  const ConceptSet& full_set, const std::string& label, FilterPolicy policy,
                                  double tau, Embedder& embedder) {
  for (auto& c : candidates) c.contains_label = label_contains(c.text, label);
  score_candidates(candidates, selection, full_set, tau, embedder);
  FilterDecision d = decide(candidates, policy);
  d.image_id = selection.image_id;
  return d;
}

nlohmann::ordered_json to_json(const CandidateAnswer& c) {
  nlohmann::ordered_json j;
  j["sample_index"] = c.sample_index;
  j["text"] = c.text;
  j["score"] = c.score;
  j["contains_label"] = c.contains_label;
  return j;
}

nlohmann::ordered_json to_json(const FilterDecision& d) {
  nlohmann::ordered_json j;
  j["image_id"] = d.image_id;
  j["chosen"] = d.chosen ? to_json(*d.chosen) : nlohmann::ordered_json(nullptr);
  j["discarded_count"] = d.discarded_count;
  j["policy"] = to_string(d.policy);
  return j;
}

}  // namespace ibsynth
