// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/metrics.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/synthesizer.hpp"
#include "ibsynth/text.hpp"

#include <charconv>
#include <spdlog/spdlog.h>

namespace ibsynth {

double accuracy(const std::vector<LabeledResponse>& responses) {
  if (responses.empty()) throw NumericError("accuracy: no responses");
  std::size_t hits = 0;
  for (const auto& r : responses) {
    if (label_contains(r.answer, r.label)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(responses.size());
}

double selection_precision(const std::vector<std::string>& selected_topk, const std::set<std::string>& ground_truth,
                           std::size_t k) {
  if (k == 0 || selected_topk.size() != k) {
    throw NumericError("selection_precision: expected " + std::to_string(k) + " selected concepts, got " +
                       std::to_string(selected_topk.size()));
  }
  std::set<std::string> unique(selected_topk.begin(), selected_topk.end());
  std::size_t hits = 0;
  for (const auto& s : unique) hits += ground_truth.count(s);
  return static_cast<double>(hits) / static_cast<double>(k);
}

std::string render_ee_prompt(const std::string& answer) {
  return "Determine whether the following answer contains a valid explanation supporting its conclusion. Respond "
         "with only 'true' or 'false'.\n\nAnswer: " +
         answer + "\n\nContains an explanation?";
}

std::string render_cs_prompt(const std::vector<std::string>& concepts, const std::string& explanation) {
  std::string formatted;
  for (const auto& c : concepts) formatted += "\n- " + c;
  return "Evaluate the coherence and logical alignment of the following explanation with the provided concepts. "
         "Please note: the explanation does not need to fully encompass all concepts.\n\nAssign a consistency score "
         "between 0 and 1, where 1 indicates the explanation contains no irrelevant information to the listed "
         "concepts, and 0 indicates complete misalignment with entirely irrelevant information. Only give the "
         "score.\n\nConcepts:" +
         formatted + "\nExplanation: " + explanation + "\n\nConsistency Score:";
}

namespace {

std::string strip_decoration(std::string_view reply) {
  std::string s = trim(reply);
  auto junk = [](char c) { return c == '\'' || c == '"' || c == '.' || c == '`' || c == '*' || c == ' '; };
  while (!s.empty() && junk(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && junk(s[b])) ++b;
  return s.substr(b);
}

}  // namespace

std::optional<bool> parse_ee_reply(std::string_view reply) {
  std::string s = strip_decoration(reply);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "true") return true;
  if (s == "false") return false;
  return std::nullopt;
}

std::optional<double> parse_cs_reply(std::string_view reply) {
  std::string s = trim(reply);
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s.empty()) return std::nullopt;
  for (char c : s) {
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.')) return std::nullopt;
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  if (v < 0.0 || v > 1.0) return std::nullopt;
  return v;
}

JudgeResult judge_metric(const std::vector<JudgeItem>& items, LmmProvider& judge, JudgeMetric metric,
                         const RetryPolicy& retry) {
  if (items.empty()) throw NumericError("judge_metric: no answers");
  JudgeResult result;
  double mean = 0.0;  // running mean: a constant judge reproduces its constant exactly
  std::size_t index = 0;
  for (const auto& item : items) {
    ++index;
    if (metric == JudgeMetric::CS && !label_contains(item.answer, item.label)) continue;
    ChatRequest req;
    req.purpose = "judge";
    req.temperature = 0.0;
    req.max_tokens = 16;
    req.prompt = metric == JudgeMetric::EE ? render_ee_prompt(item.answer) : render_cs_prompt(item.concepts, item.answer);

    std::optional<double> value;
    for (int attempt = 0; attempt < 2 && !value; ++attempt) {
      req.attempt = attempt;
      std::string reply;
      try {
        reply = with_retries(retry, [&] { return judge.complete(req); });
      } catch (const ProviderError& e) {
        result.available = false;
        result.value.reset();
        result.warnings.push_back(std::string("judge unavailable: ") + e.what());
        return result;
      }
      if (metric == JudgeMetric::EE) {
        if (auto b = parse_ee_reply(reply)) value = *b ? 1.0 : 0.0;
      } else {
        value = parse_cs_reply(reply);
      }
    }
    if (!value) {
      ++result.missing;
      result.warnings.push_back("unparseable judge reply for item " + std::to_string(index));
      spdlog::warn("judge reply for item {} unparseable after retry; excluded", index);
      continue;
    }
    ++result.evaluated;
    mean += (*value - mean) / static_cast<double>(result.evaluated);
  }
  result.available = true;
  if (result.evaluated > 0) result.value = mean;
  return result;
}

}  // namespace ibsynth
