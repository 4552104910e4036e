#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/types.hpp"

namespace kfmt {

// Which rung of the repair ladder produced the object.
enum class RepairStep { exact, fence_strip, brace_scan, quote_normalization };

std::string_view to_string(RepairStep step);

struct ObjectMember {
  std::string key;
  json value;  // scalar, or null when the member held a nested array/object
  bool nested = false;
};

struct ExtractedObject {
  std::vector<ObjectMember> members;  // document order, duplicates kept
  RepairStep step = RepairStep::exact;
};

// Runs the repair ladder over raw model output:
//   1. exact parse of the trimmed text
//   2. contents of ``` fences, last fence first
//   3. balanced-brace spans, last span first
//   4. single-quote / control-character / trailing-comma normalization of the
//      candidates from steps 1-3, in the same order
// Returns the first object found, or nullopt.
std::optional<ExtractedObject> extract_object(std::string_view raw);

// Rewrites a Python-style dict literal as JSON. Exposed for testing.
std::string normalize_quotes(std::string_view text);

// Balanced top-level {...} spans, ignoring braces inside double-quoted strings.
std::vector<std::string_view> brace_spans(std::string_view text);

// "#1", "1", " #01 " -> 1. nullopt for anything that is not a sentence number.
std::optional<SentenceIndex> normalize_index_key(std::string_view key);

struct ParsedTranslationMap {
  std::map<SentenceIndex, std::string> segments;
  std::set<SentenceIndex> missing;
  // Keys that did not map into 1..N: out-of-range numbers in canonical decimal
  // form, anything else verbatim.
  std::set<std::string> extraneous;
  RepairStep step = RepairStep::exact;
};

// Throws Error(unparseable) when no object survives the ladder.
ParsedTranslationMap parse_translation_map(std::string_view raw, std::size_t expected_n);

// Object members in order; empty sides dropped; first source term wins.
std::vector<EntityPair> parse_entity_pairs(std::string_view raw);

struct ParsedSummary {
  std::string text;
  bool fallback = false;  // raw text used because no summarization object was found
};

// Throws Error(empty_input) for blank input.
ParsedSummary parse_summary(std::string_view raw);

// Integer under "score", 0..100. Throws unparseable / out_of_range.
int parse_gpt_score(std::string_view raw);

}  // namespace kfmt
