// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/pipeline.hpp"

#include "ibsynth/concept_selector.hpp"
#include "ibsynth/errors.hpp"
#include "ibsynth/parallel.hpp"
#include "ibsynth/synthesizer.hpp"
#include "ibsynth/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace ibsynth {

using ordered_json = nlohmann::ordered_json;

std::string to_string(ImageStatus s) {
  switch (s) {
    case ImageStatus::emitted:
      return "emitted";
    case ImageStatus::discarded:
      return "discarded";
    case ImageStatus::fallback:
      return "fallback";
    case ImageStatus::provider_shortfall:
      return "provider_shortfall";
    case ImageStatus::failed:
      return "failed";
  }
  return "unknown";
}

std::map<std::string, std::size_t> RoundReport::counts() const {
  std::map<std::string, std::size_t> out;
  for (auto s : {ImageStatus::emitted, ImageStatus::discarded, ImageStatus::fallback, ImageStatus::provider_shortfall,
                 ImageStatus::failed}) {
    out[to_string(s)] = 0;
  }
  for (const auto& e : entries) ++out[to_string(e.status)];
  return out;
}

bool RoundReport::has_failures() const {
  return std::any_of(entries.begin(), entries.end(), [](const LedgerEntry& e) {
    return e.status == ImageStatus::provider_shortfall || e.status == ImageStatus::failed;
  });
}

std::shared_ptr<LmmProvider> make_chat_provider(const RunConfig& config, const EndpointSpec& spec,
                                                const std::string& default_model) {
  const std::string model = spec.model.empty() ? default_model : spec.model;
  if (config.mock_lmm_script) return std::make_shared<MockLmm>(MockLmm::from_file(model, *config.mock_lmm_script));
  if (spec.kind == "mock") return std::make_shared<MockLmm>(MockLmm::from_file(model, spec.script));
  if (spec.kind == "remote") {
    RemoteLmmOptions opts;
    opts.endpoint.base_url = spec.base_url;
    opts.endpoint.api_key = api_key_from_env(spec.api_key_env.empty() ? "IBSYNTH_LMM_API_KEY" : spec.api_key_env.c_str());
    opts.model = model;
    opts.image_root = config.effective_image_root();
    opts.retry = RetryPolicy{1, std::chrono::milliseconds(0)};  // callers retry
    return std::make_shared<RemoteLmm>(std::move(opts));
  }
  throw ConfigError("unsupported chat endpoint kind '" + spec.kind + "'");
}

Providers make_providers(const RunConfig& config) {
  Providers p;
  p.base = make_chat_provider(config, config.base_lmm, "base");
  p.round_model = [config](int round) -> std::shared_ptr<LmmProvider> {
    auto it = config.round_models.find(round);
    if (it != config.round_models.end()) return make_chat_provider(config, it->second, "round-" + std::to_string(round));
    if (config.mock_lmm_script) return make_chat_provider(config, EndpointSpec{}, "round-" + std::to_string(round));
    throw ConfigError("no model endpoint configured for round " + std::to_string(round) +
                      "; fine-tune on the previous round's dataset and add [lmm.rounds." + std::to_string(round) + "]");
  };
  if (config.embedder.kind == "remote") {
    RemoteEmbedderOptions opts;
    opts.endpoint.base_url = config.embedder.base_url;
    opts.endpoint.api_key =
        api_key_from_env(config.embedder.api_key_env.empty() ? "IBSYNTH_EMBED_API_KEY" : config.embedder.api_key_env.c_str());
    opts.model = config.embedder.model;
    opts.batch_size = config.embed_batch_size;
    opts.max_in_flight = config.embed_in_flight;
    opts.retry = config.retry;
    p.embedder = std::make_shared<RemoteEmbedder>(std::move(opts));
  } else {
    p.embedder = std::make_shared<DeterministicEmbedder>(config.embedder.dim);
  }
  return p;
}

ordered_json to_conversation(const TrainingExample& e) {
  ordered_json j;
  j["id"] = e.image_id + "_r" + std::to_string(e.round);
  j["image"] = e.image_ref;
  j["conversations"] = ordered_json::array();
  ordered_json human;
  human["from"] = "human";
  human["value"] = "<image>\n" + e.query;
  ordered_json gpt;
  gpt["from"] = "gpt";
  gpt["value"] = e.answer;
  j["conversations"].push_back(std::move(human));
  j["conversations"].push_back(std::move(gpt));
  return j;
}

struct Pipeline::ImageState {
  std::optional<DescriptionOutcome> descriptions;
  std::optional<SelectionResult> selection;
  std::optional<ImageStatus> status;  // set once the image dropped out
  std::string detail;
};

Pipeline::Pipeline(RunConfig config, Providers providers)
    : config_(std::move(config)), providers_(std::move(providers)) {
  config_.validate();
  if (!providers_.base || !providers_.embedder) throw ConfigError("pipeline needs a base LMM and an embedder");
  cache_ = std::make_shared<ContentCache>(config_.effective_cache_root());
  embedder_ = std::make_shared<CachingEmbedder>(providers_.embedder, cache_);
  records_ = load_manifest(config_.manifest);
  if (records_.empty()) throw ConfigError("manifest " + config_.manifest.string() + " has no records");
  concepts_ = load_concept_sets(config_.concepts);
  for (const auto& r : records_) concepts_.at(r.label);  // fail fast on unknown labels
  family_ = builtin_family(config_.family);
  prompt_bank().validate();
}

PromptBank Pipeline::prompt_bank() const {
  return config_.prompt_bank ? load_prompt_bank(*config_.prompt_bank) : builtin_prompt_bank(config_.family);
}

fs::path Pipeline::round_dir(int round) const { return config_.output_root / "rounds" / std::to_string(round); }

void Pipeline::claim_output_directory() const {
  const fs::path marker = config_.output_root / "run.json";
  const std::string fp = config_.fingerprint();
  if (auto existing = read_file(marker)) {
    std::string theirs;
    try {
      theirs = nlohmann::json::parse(*existing).at("config_fingerprint").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(marker.string() + " is unreadable; refusing to reuse the output directory");
    }
    if (theirs != fp) {
      throw ConfigError("output directory " + config_.output_root.string() +
                        " belongs to a run with config fingerprint " + theirs + "; this configuration is " + fp +
                        ". Use a fresh output directory.");
    }
    return;
  }
  ordered_json j;
  j["config_fingerprint"] = fp;
  j["config"] = config_.fingerprint_fields();
  atomic_write(marker, j.dump(2) + "\n");
}

std::vector<Pipeline::ImageState> Pipeline::run_step1() {
  std::vector<ImageState> states(records_.size());
  const PromptBank bank = prompt_bank();
  DescribeOptions opts;
  opts.n = config_.num_descriptions;
  opts.temperature = config_.description_temperature;
  opts.max_tokens = config_.max_tokens;
  opts.dedup_retry_budget = config_.dedup_retry_budget;
  opts.retry = config_.retry;
  opts.cache = cache_.get();

  parallel_for(records_.size(), config_.workers, [&](std::size_t i) {
    const auto& rec = records_[i];
    auto& st = states[i];
    st.descriptions = generate_descriptions(rec, bank, *providers_.base, opts, &provider_calls_);
    const auto& d = *st.descriptions;
    if (d.set.entries.empty()) {
      st.status = ImageStatus::provider_shortfall;
      st.detail = "no descriptions collected" + (d.errors.empty() ? std::string() : ": " + d.errors.front());
      return;
    }
    atomic_write(config_.output_root / "descriptions" / (path_component(rec.id) + ".jsonl"),
                 serialize_descriptions(d.set));
    if (d.low_diversity) spdlog::warn("image {}: low description diversity ({} unique of {})", rec.id, d.unique_texts, d.set.entries.size());
  });
  return states;
}

std::vector<std::optional<DescriptionOutcome>> Pipeline::describe() {
  claim_output_directory();
  auto states = run_step1();
  std::vector<std::optional<DescriptionOutcome>> out;
  out.reserve(states.size());
  for (auto& s : states) out.push_back(std::move(s.descriptions));
  return out;
}

namespace {

/// Scores one image against the shared pool and persists the selection.
SelectionResult select_for_image(const ImageRecord& rec, const DescriptionSet& set, const ConceptSet& concepts,
                                 const std::vector<PoolCandidate>& pool_candidates, const RunConfig& cfg,
                                 Embedder& embedder) {
  const std::uint64_t seed = image_seed(cfg.seed, rec.id);
  const NegativePool pool = build_negative_pool(pool_candidates, rec.id, cfg.negatives, seed, embedder);
  auto scored = score_all_concepts(set, concepts, pool, cfg.tau, embedder, cfg.empty_negatives);
  SelectionResult sel = select_concepts(scored, cfg.beta_hat);
  sel.image_id = rec.id;
  sel.tau = cfg.tau;
  sel.negative_seed = seed;
  atomic_write(cfg.output_root / "selection" / (path_component(rec.id) + ".json"), to_json(sel).dump(2) + "\n");
  return sel;
}

}  // namespace

void Pipeline::score_concepts() {
  claim_output_directory();
  auto states = run_step1();
  std::vector<PoolCandidate> pool;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!states[i].descriptions) continue;
    for (const auto& e : states[i].descriptions->set.entries) pool.push_back({records_[i].id, e.text});
  }
  parallel_for(records_.size(), config_.workers, [&](std::size_t i) {
    auto& st = states[i];
    if (st.status) return;
    try {
      st.selection = select_for_image(records_[i], st.descriptions->set, concepts_.at(records_[i].label), pool,
                                      config_, *embedder_);
    } catch (const ProviderError& e) {
      st.status = ImageStatus::provider_shortfall;
      st.detail = e.what();
    } catch (const NumericError& e) {
      st.status = ImageStatus::failed;
      st.detail = e.what();
    }
  });
}

RoundReport Pipeline::build_round0() {
  claim_output_directory();
  auto states = run_step1();

  std::vector<PoolCandidate> pool;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!states[i].descriptions) continue;
    for (const auto& e : states[i].descriptions->set.entries) pool.push_back({records_[i].id, e.text});
  }

  RewriteOptions ropts;
  ropts.max_tokens = config_.max_tokens;
  ropts.temperature = config_.rewrite_temperature;
  ropts.retry = config_.retry;
  ropts.cache = cache_.get();

  std::vector<std::optional<TrainingExample>> examples(records_.size());
  parallel_for(records_.size(), config_.workers, [&](std::size_t i) {
    const auto& rec = records_[i];
    auto& st = states[i];
    if (st.status) return;
    try {
      st.selection = select_for_image(rec, st.descriptions->set, concepts_.at(rec.label), pool, config_, *embedder_);
    } catch (const ProviderError& e) {
      st.status = ImageStatus::provider_shortfall;
      st.detail = std::string("embedding failed: ") + e.what();
      return;
    } catch (const NumericError& e) {
      st.status = ImageStatus::failed;
      st.detail = e.what();
      return;
    }
    const std::string query = assign_query(family_, rec);
    RewriteOutcome rw = rewrite_answer(rec, *st.selection, query, family_, *providers_.base, ropts, &provider_calls_);
    examples[i] = rw.example;
    if (rw.fallback) {
      st.status = ImageStatus::fallback;
      st.detail = rw.note;
    } else {
      st.status = ImageStatus::emitted;
      const int shortfall = st.descriptions->shortfall;
      if (shortfall > 0) st.detail = std::to_string(shortfall) + " description(s) short";
    }
  });

  RoundReport report;
  report.round = 0;
  std::vector<TrainingExample> dataset;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    report.entries.push_back({0, records_[i].id, *states[i].status, states[i].detail});
    if (examples[i]) dataset.push_back(*examples[i]);
  }
  report.new_examples = dataset.size();
  report.cumulative_examples = dataset.size();
  report.dataset = round_dir(0) / "train.jsonl";
  atomic_write(report.dataset, serialize_examples(dataset));
  write_ledger(0, report.entries);

  ordered_json summary;
  summary["round"] = 0;
  summary["config_fingerprint"] = config_.fingerprint();
  summary["counts"] = report.counts();
  summary["new_examples"] = report.new_examples;
  summary["cumulative_examples"] = report.cumulative_examples;
  atomic_write(round_dir(0) / "summary.json", summary.dump(2) + "\n");
  return report;
}

RoundReport Pipeline::run_round(int round) {
  if (round < 1) throw ConfigError("rejection-sampling rounds start at 1");
  if (round > config_.max_rounds) {
    throw ConfigError("round " + std::to_string(round) + " exceeds the configured maximum of " +
                      std::to_string(config_.max_rounds));
  }
  claim_output_directory();
  const fs::path prev_path = round_dir(round - 1) / "train.jsonl";
  auto prev_text = read_file(prev_path);
  if (!prev_text) throw ConfigError("round " + std::to_string(round - 1) + " has not been built (" + prev_path.string() + " missing)");
  std::vector<TrainingExample> dataset = parse_examples(*prev_text);
  const std::size_t prior = dataset.size();

  std::shared_ptr<LmmProvider> model = providers_.round_model(round);
  CandidateOptions copts;
  copts.m = config_.num_candidates;
  copts.temperature = config_.candidate_temperature;
  copts.max_tokens = config_.max_tokens;
  copts.retry = config_.retry;
  copts.cache = cache_.get();

  struct Outcome {
    LedgerEntry entry;
    std::optional<FilterDecision> decision;
    std::optional<TrainingExample> example;
  };
  std::vector<Outcome> outcomes(records_.size());
  const fs::path dir = round_dir(round);

  parallel_for(records_.size(), config_.workers, [&](std::size_t i) {
    const auto& rec = records_[i];
    auto& out = outcomes[i];
    out.entry = {round, rec.id, ImageStatus::provider_shortfall, ""};
    auto sel_text = read_file(config_.output_root / "selection" / (path_component(rec.id) + ".json"));
    if (!sel_text) {
      out.entry.detail = "no concept selection from round 0";
      return;
    }
    SelectionResult selection = parse_selection(nlohmann::json::parse(*sel_text));
    const std::string query = assign_query(family_, rec);
    CandidateBatch batch = generate_candidates(rec, query, *model, copts, &provider_calls_);
    if (batch.candidates.empty()) {
      out.entry.detail = "no candidates" + (batch.errors.empty() ? std::string() : ": " + batch.errors.front());
      FilterDecision empty;
      empty.image_id = rec.id;
      empty.policy = config_.policy;
      out.decision = empty;
      return;
    }
    FilterDecision decision;
    try {
      decision = select_best_answer(batch.candidates, selection, concepts_.at(rec.label), rec.label, config_.policy,
                                    config_.effective_answer_tau(), *embedder_);
    } catch (const ProviderError& e) {
      out.entry.detail = std::string("embedding failed: ") + e.what();
      return;
    } catch (const NumericError& e) {
      out.entry.status = ImageStatus::failed;
      out.entry.detail = e.what();
      return;
    }
    // Persist the scored candidates in sample order.
    std::vector<CandidateAnswer> scored = batch.candidates;
    for (auto& c : scored) c.contains_label = label_contains(c.text, rec.label);
    score_candidates(scored, selection, concepts_.at(rec.label), config_.effective_answer_tau(), *embedder_);
    std::string lines;
    for (const auto& c : scored) lines += to_json(c).dump() + "\n";
    atomic_write(dir / "candidates" / (path_component(rec.id) + ".jsonl"), lines);

    out.decision = decision;
    if (decision.chosen) {
      out.entry.status = ImageStatus::emitted;
      TrainingExample ex;
      ex.image_id = rec.id;
      ex.image_ref = rec.image_ref;
      ex.query = query;
      ex.answer = decision.chosen->text;
      ex.round = round;
      ex.source = ExampleSource::rejection_sampling;
      out.example = std::move(ex);
    } else {
      out.entry.status = ImageStatus::discarded;
      out.entry.detail = std::to_string(decision.discarded_count) + " candidate(s) discarded";
    }
    if (batch.shortfall > 0) {
      out.entry.detail += (out.entry.detail.empty() ? "" : "; ") + std::to_string(batch.shortfall) + " candidate(s) short";
    }
  });

  RoundReport report;
  report.round = round;
  std::string decisions;
  for (auto& o : outcomes) {
    report.entries.push_back(o.entry);
    if (o.decision) decisions += to_json(*o.decision).dump() + "\n";
    if (o.example) dataset.push_back(std::move(*o.example));
  }
  report.new_examples = dataset.size() - prior;
  report.cumulative_examples = dataset.size();
  report.dataset = dir / "train.jsonl";
  atomic_write(dir / "decisions.jsonl", decisions);
  atomic_write(report.dataset, serialize_examples(dataset));
  write_ledger(round, report.entries);

  ordered_json summary;
  summary["round"] = round;
  summary["model"] = model->model_id();
  summary["config_fingerprint"] = config_.fingerprint();
  summary["counts"] = report.counts();
  summary["new_examples"] = report.new_examples;
  summary["cumulative_examples"] = report.cumulative_examples;
  atomic_write(dir / "summary.json", summary.dump(2) + "\n");
  return report;
}

void Pipeline::write_ledger(int round, const std::vector<LedgerEntry>& entries) const {
  const fs::path path = config_.output_root / "ledger.jsonl";
  std::vector<std::pair<int, std::string>> lines;
  if (auto existing = read_file(path)) {
    for (const auto& line : split_lines(*existing)) {
      if (trim(line).empty()) continue;
      const int r = nlohmann::json::parse(line).at("round").get<int>();
      if (r != round) lines.emplace_back(r, line);
    }
  }
  const std::string fp = config_.fingerprint();
  for (const auto& e : entries) {
    ordered_json j;
    j["round"] = e.round;
    j["image_id"] = e.image_id;
    j["status"] = to_string(e.status);
    j["detail"] = e.detail;
    j["config_fingerprint"] = fp;
    lines.emplace_back(round, j.dump());
  }
  std::stable_sort(lines.begin(), lines.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string text;
  for (const auto& [r, line] : lines) text += line + "\n";
  atomic_write(path, text);
}

fs::path Pipeline::emit_finetune_dataset(int round, const std::optional<fs::path>& mix_with) const {
  const fs::path src = round_dir(round) / "train.jsonl";
  auto text = read_file(src);
  if (!text) throw ConfigError("round " + std::to_string(round) + " dataset not found: " + src.string());
  std::string out;
  for (const auto& ex : parse_examples(*text)) out += to_conversation(ex).dump() + "\n";
  if (mix_with) {
    auto extra = read_file(*mix_with);
    if (!extra) throw ConfigError("--mix-with file not found: " + mix_with->string());
    std::size_t line_no = 0;
    for (const auto& line : split_lines(*extra)) {
      ++line_no;
      const std::string t = trim(line);
      if (t.empty()) continue;
      if (!nlohmann::json::accept(t)) throw ParseError("--mix-with line " + std::to_string(line_no) + ": not valid JSON");
      out += t + "\n";
    }
  }
  const fs::path dst = round_dir(round) / "conversations.jsonl";
  atomic_write(dst, out);
  return dst;
}

}  // namespace ibsynth
