// SPDX-License-Identifier: Apache-2.0
#include "ibsynth/corpus.hpp"

#include "ibsynth/errors.hpp"
#include "ibsynth/text.hpp"

#include <set>
#include <unordered_map>

namespace ibsynth {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string required_string(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(std::string("missing field '") + field + "'");
  if (!it->is_string()) throw ParseError(std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::string to_string(ExampleSource s) {
  return s == ExampleSource::rewrite ? "rewrite" : "rejection_sampling";
}

ExampleSource example_source_from_string(const std::string& s) {
  if (s == "rewrite") return ExampleSource::rewrite;
  if (s == "rejection_sampling") return ExampleSource::rejection_sampling;
  throw ParseError("unknown example source '" + s + "'");
}

std::string normalize_label(std::string_view raw) {
  std::string s(raw);
  for (char& c : s) {
    if (c == '_') c = ' ';
  }
  return collapse_whitespace(s);
}

ImageRecord parse_image_record(const json& j) {
  if (!j.is_object()) throw ParseError("record must be a JSON object");
  ImageRecord r;
  r.id = required_string(j, "id");
  r.image_ref = required_string(j, "image_ref");
  std::string label = required_string(j, "label");
  r.coarse_label = trim(required_string(j, "coarse_label"));
  if (trim(r.id).empty()) throw ParseError("field 'id' is empty");
  if (trim(r.image_ref).empty()) throw ParseError("field 'image_ref' is empty");
  if (r.coarse_label.empty()) throw ParseError("field 'coarse_label' is empty");

  r.label = normalize_label(label);
  if (r.label.empty()) throw ParseError("field 'label' is empty");
  if (auto it = j.find("raw_label"); it != j.end() && it->is_string()) {
    r.raw_label = it->get<std::string>();
  } else if (r.label != label) {
    r.raw_label = label;
  }
  return r;
}

ordered_json to_json(const ImageRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["image_ref"] = r.image_ref;
  j["label"] = r.label;
  j["coarse_label"] = r.coarse_label;
  if (r.raw_label) j["raw_label"] = *r.raw_label;
  return j;
}

ordered_json to_json(const TrainingExample& e) {
  ordered_json j;
  j["image_id"] = e.image_id;
  j["image_ref"] = e.image_ref;
  j["query"] = e.query;
  j["answer"] = e.answer;
  j["round"] = e.round;
  j["source"] = to_string(e.source);
  return j;
}

TrainingExample parse_training_example(const json& j) {
  TrainingExample e;
  e.image_id = required_string(j, "image_id");
  e.image_ref = required_string(j, "image_ref");
  e.query = required_string(j, "query");
  e.answer = required_string(j, "answer");
  if (!j.contains("round") || !j["round"].is_number_integer()) throw ParseError("missing integer field 'round'");
  e.round = j["round"].get<int>();
  e.source = example_source_from_string(required_string(j, "source"));
  return e;
}

std::vector<ImageRecord> parse_manifest(std::string_view text) {
  std::vector<ImageRecord> records;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  for (const std::string& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    ImageRecord r;
    try {
      r = parse_image_record(j);
    } catch (const ParseError& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, inserted] = first_line.emplace(r.id, line_no);
    if (!inserted) {
      throw ParseError("duplicate id '" + r.id + "' on lines " + std::to_string(it->second) + " and " +
                       std::to_string(line_no));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ImageRecord> load_manifest(const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw ConfigError("manifest not found: " + path.string());
  return parse_manifest(*text);
}

std::string serialize_manifest(const std::vector<ImageRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

const ConceptSet& ConceptLibrary::at(const std::string& label) const {
  auto it = sets_.find(label);
  if (it == sets_.end()) it = sets_.find(normalize_label(label));
  if (it == sets_.end()) throw ConfigError("no concept set for label '" + label + "'");
  return it->second;
}

ConceptLibrary parse_concept_sets(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("concepts: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("concepts: top level must be an object of label -> [concept]");
  std::map<std::string, ConceptSet> sets;
  for (const auto& [raw_label, arr] : j.items()) {
    if (!arr.is_array()) throw ParseError("concepts: value for '" + raw_label + "' must be an array");
    ConceptSet cs;
    cs.label = normalize_label(raw_label);
    std::set<std::string> seen;
    for (const auto& item : arr) {
      if (!item.is_string()) throw ParseError("concepts: non-string concept under '" + raw_label + "'");
      std::string c = collapse_whitespace(item.get<std::string>());
      if (c.empty()) throw ParseError("concepts: empty concept string under '" + raw_label + "'");
      if (seen.insert(nfc(c)).second) cs.concepts.push_back(c);
    }
    if (cs.concepts.empty()) throw ParseError("concepts: empty concept list for '" + raw_label + "'");
    if (!sets.emplace(cs.label, cs).second) {
      throw ParseError("concepts: label '" + cs.label + "' defined twice after normalization");
    }
  }
  return ConceptLibrary(std::move(sets));
}

ConceptLibrary load_concept_sets(const fs::path& path) {
  auto text = read_file(path);
  if (!text) throw ConfigError("concepts file not found: " + path.string());
  return parse_concept_sets(*text);
}

std::string serialize_descriptions(const DescriptionSet& set) {
  std::string out;
  for (const auto& e : set.entries) {
    ordered_json j;
    j["prompt_id"] = e.prompt_id;
    j["sample_index"] = e.sample_index;
    j["text"] = e.text;
    out += j.dump();
    out += '\n';
  }
  return out;
}

DescriptionSet parse_descriptions(std::string_view image_id, std::string_view text) {
  DescriptionSet set;
  set.image_id = std::string(image_id);
  std::size_t line_no = 0;
  for (const std::string& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      DescriptionEntry e;
      e.prompt_id = required_string(j, "prompt_id");
      e.sample_index = j.at("sample_index").get<int>();
      e.text = required_string(j, "text");
      set.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw ParseError("descriptions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

std::string serialize_examples(const std::vector<TrainingExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

std::vector<TrainingExample> parse_examples(std::string_view text) {
  std::vector<TrainingExample> out;
  std::size_t line_no = 0;
  for (const std::string& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(parse_training_example(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ibsynth
