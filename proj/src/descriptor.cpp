// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/descriptor.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <set>
#include <unordered_set>

namespace ibsynth {

namespace {

constexpr const char* kBirdPrompt1 =
    "Focus solely on the bird shown in the image. Describe the bird's appearance in detail, emphasizing its most "
    "prominent physical features. Avoid mentioning the background or other elements not related to the bird.";
constexpr const char* kBirdPrompt2 =
    "Provide a focused analysis of the bird in this image, detailing its distinctive physical features. Concentrate "
    "exclusively on the bird and describe its appearance without referencing the surroundings or any extraneous "
    "details.";
constexpr const char* kBirdPrompt3 =
    "Directly observe the bird depicted and offer a precise description of its visual attributes. Ensure your "
    "description is limited to the bird itself, detailing its primary features and omitting any unrelated "
    "background elements.";

std::string itemize(std::string s) {
  std::string out;
  const std::string needle = "bird";
  std::size_t pos = 0;
  while (true) {
    std::size_t hit = s.find(needle, pos);
    if (hit == std::string::npos) break;
    out.append(s, pos, hit - pos);
    out += "{item}";
    pos = hit + needle.size();
  }
  out.append(s, pos);
  return out;
}

}  // namespace

void PromptBank::validate() const {
  if (prompts.empty()) throw ConfigError("prompt bank '" + domain + "' is empty");
  std::set<std::string> ids;
  for (const auto& p : prompts) {
    if (trim(p.text).empty()) throw ConfigError("prompt '" + p.prompt_id + "' has an empty template");
    if (!ids.insert(p.prompt_id).second) throw ConfigError("duplicate prompt id '" + p.prompt_id + "'");
  }
}

PromptBank builtin_prompt_bank(const std::string& family) {
  if (family == "cub-200") {
    return {family, {{"cub_p1", kBirdPrompt1}, {"cub_p2", kBirdPrompt2}, {"cub_p3", kBirdPrompt3}}};
  }
  PromptBank bank{family == "stanford_dogs" || family == "fgvc" || family == "pld" ? family : "generic",
                  {{"item_p1", itemize(kBirdPrompt1)},
                   {"item_p2", itemize(kBirdPrompt2)},
                   {"item_p3", itemize(kBirdPrompt3)}}};
  if (bank.domain == "generic") bank.prompts.push_back({"describe", "Please describe the image."});
  return bank;
}

PromptBank load_prompt_bank(const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw ConfigError("prompt bank not found: " + path.string());
  PromptBank bank;
  try {
    auto j = nlohmann::json::parse(*text);
    bank.domain = j.value("domain", path.stem().string());
    for (const auto& p : j.at("prompts")) {
      bank.prompts.push_back({p.at("prompt_id").get<std::string>(), p.at("template").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("prompt bank " + path.string() + ": " + e.what());
  }
  bank.validate();
  return bank;
}

std::vector<int> prompt_usage_counts(int n, std::size_t bank_size) {
  std::vector<int> counts(bank_size, 0);
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(i) % bank_size];
  return counts;
}

DescriptionOutcome generate_descriptions(const ImageRecord& record, const PromptBank& bank, LmmProvider& lmm,
                                         const DescribeOptions& options,
                                         std::atomic<std::size_t>* provider_calls) {
  if (options.n < 1) throw ConfigError("number of descriptions must be >= 1");
  bank.validate();

  DescriptionOutcome out;
  out.set.image_id = record.id;
  out.set.provider_id = lmm.model_id();
  std::unordered_set<std::string> seen;

  for (int i = 0; i < options.n; ++i) {
    const PromptTemplate& pt = bank.prompts[static_cast<std::size_t>(i) % bank.size()];
    const std::string prompt = fill_template(pt.text, {{"item", record.coarse_label}});

    std::optional<std::string> kept;
    for (int attempt = 0; attempt <= options.dedup_retry_budget; ++attempt) {
      ChatRequest req;
      req.purpose = "describe";
      req.prompt = prompt;
      req.image_ref = record.image_ref;
      req.temperature = options.temperature;
      req.max_tokens = options.max_tokens;
      req.sample_index = i;
      req.attempt = attempt;
      const CacheKey key = make_cache_key(
          CacheKind::description, lmm.model_id(),
          {record.image_ref, pt.prompt_id, prompt, std::to_string(i), std::to_string(attempt)});
      std::string text;
      try {
        text = trim(cached_complete(lmm, options.cache, key, req, options.retry, provider_calls));
      } catch (const ProviderError& e) {
        out.errors.push_back("sample " + std::to_string(i) + ": " + e.what());
        break;
      }
      if (text.empty()) continue;
      kept = text;
      if (!seen.count(text)) break;
    }
    if (!kept) continue;
    seen.insert(*kept);
    out.set.entries.push_back({pt.prompt_id, i, *kept});
  }

  out.shortfall = options.n - static_cast<int>(out.set.entries.size());
  out.unique_texts = seen.size();
  out.low_diversity = !out.set.entries.empty() &&
                      static_cast<double>(out.unique_texts) / static_cast<double>(out.set.entries.size()) < 0.5;
  return out;
}

}  // namespace ibsynth
