// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "ibsynth/fs.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ibsynth {

/// One corpus item. `label` is the fine class with CUB-style underscores
/// mapped to spaces; the original spelling is kept in `raw_label` when it
/// differed.
struct ImageRecord {
  std::string id;
  std::string image_ref;
  std::string label;
  std::string coarse_label;
  std::optional<std::string> raw_label;

  bool operator==(const ImageRecord&) const = default;
};

/// Expert concept list Z for one label.
struct ConceptSet {
  std::string label;
  std::vector<std::string> concepts;

  std::size_t size() const { return concepts.size(); }
};

struct DescriptionEntry {
  std::string prompt_id;
  int sample_index = 0;
  std::string text;
};

/// Sampled descriptions D for one image.
struct DescriptionSet {
  std::string image_id;
  std::vector<DescriptionEntry> entries;
  std::string provider_id;
};

enum class ExampleSource { rewrite, rejection_sampling };

std::string to_string(ExampleSource s);
ExampleSource example_source_from_string(const std::string& s);

/// One (image, query, answer) fine-tuning triple.
struct TrainingExample {
  std::string image_id;
  std::string image_ref;
  std::string query;
  std::string answer;
  int round = 0;
  ExampleSource source = ExampleSource::rewrite;

  bool operator==(const TrainingExample&) const = default;
};

/// Maps "Yellow_breasted_Chat" to "Yellow breasted Chat".
std::string normalize_label(std::string_view raw);

ImageRecord parse_image_record(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ImageRecord& r);
nlohmann::ordered_json to_json(const TrainingExample& e);
TrainingExample parse_training_example(const nlohmann::json& j);

std::vector<ImageRecord> parse_manifest(std::string_view text);
std::vector<ImageRecord> load_manifest(const fs::path& path);
std::string serialize_manifest(const std::vector<ImageRecord>& records);

/// Concept sets keyed by normalized label.
class ConceptLibrary {
 public:
  ConceptLibrary() = default;
  explicit ConceptLibrary(std::map<std::string, ConceptSet> sets) : sets_(std::move(sets)) {}

  /// Throws ConfigError naming the label when absent.
  const ConceptSet& at(const std::string& label) const;
  bool contains(const std::string& label) const { return sets_.count(label) != 0; }
  std::size_t size() const { return sets_.size(); }
  const std::map<std::string, ConceptSet>& sets() const { return sets_; }

 private:
  std::map<std::string, ConceptSet> sets_;
};

ConceptLibrary parse_concept_sets(std::string_view text);
ConceptLibrary load_concept_sets(const fs::path& path);

/// Write and read `descriptions/<image_id>.jsonl`.
std::string serialize_descriptions(const DescriptionSet& set);
DescriptionSet parse_descriptions(std::string_view image_id, std::string_view text);

std::string serialize_examples(const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> parse_examples(std::string_view text);

}  // namespace ibsynth
