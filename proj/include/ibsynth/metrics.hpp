// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/lmm.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ibsynth {

struct LabeledResponse {
  std::string image_id;
  std::string answer;
  std::string label;
};

/// Fraction of responses whose answer contains their label.
double accuracy(const std::vector<LabeledResponse>& responses);

/// |selected ∩ ground_truth| / k. Throws NumericError when |selected| != k.
double selection_precision(const std::vector<std::string>& selected_topk, const std::set<std::string>& ground_truth,
                           std::size_t k);

enum class JudgeMetric { EE, CS };

std::string render_ee_prompt(const std::string& answer);
std::string render_cs_prompt(const std::vector<std::string>& concepts, const std::string& explanation);

/// "true" / "false" (case-insensitive, surrounding quotes and punctuation ignored).
std::optional<bool> parse_ee_reply(std::string_view reply);
/// A single decimal in [0, 1].
std::optional<double> parse_cs_reply(std::string_view reply);

struct JudgeItem {
  std::string answer;
  std::string label;
  std::vector<std::string> concepts;  // label-level concept list Z
};

struct JudgeResult {
  bool available = false;
  std::optional<double> value;
  std::size_t evaluated = 0;
  std::size_t missing = 0;
  std::vector<std::string> warnings;
};

/// EE averages over every answer; CS averages over correct answers only.
/// An unparseable reply is retried once and then excluded. A provider
/// failure marks the metric unavailable.
JudgeResult judge_metric(const std::vector<JudgeItem>& items, LmmProvider& judge, JudgeMetric metric,
                         const RetryPolicy& retry = {});

}  // namespace ibsynth
