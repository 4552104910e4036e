#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace kfmt {

using json = nlohmann::json;

// Sentence positions are 1-based throughout, mirroring the "#i" markers the
// translation prompt puts in front of every sentence.
using SentenceIndex = std::size_t;

// Ordered, validated source document.
class IndexedDocument {
 public:
  IndexedDocument(std::string doc_id, std::string src_lang, std::string tgt_lang,
                  std::vector<std::string> sentences,
                  std::optional<std::vector<std::string>> references = std::nullopt);

  const std::string& doc_id() const noexcept { return doc_id_; }
  const std::string& src_lang() const noexcept { return src_lang_; }
  const std::string& tgt_lang() const noexcept { return tgt_lang_; }
  const std::vector<std::string>& sentences() const noexcept { return sentences_; }
  const std::optional<std::vector<std::string>>& references() const noexcept {
    return references_;
  }

  std::size_t size() const noexcept { return sentences_.size(); }
  bool has_references() const noexcept { return references_.has_value(); }

  // 1-based accessors; throw Error(invalid_argument) when out of range.
  const std::string& sentence(SentenceIndex index) const;
  const std::string& reference(SentenceIndex index) const;

  bool operator==(const IndexedDocument&) const = default;

 private:
  std::string doc_id_;
  std::string src_lang_;
  std::string tgt_lang_;
  std::vector<std::string> sentences_;
  std::optional<std::vector<std::string>> references_;
};

struct EntityPair {
  std::string source_term;
  std::string target_term;

  bool operator==(const EntityPair&) const = default;
};

// Where a piece of generated knowledge or translation came from.
struct Provenance {
  std::string task;  // "summary", "entities", "translation", ...
  std::string backend_id;
  std::string model;
  std::string prompt_sha256;
  std::string timestamp;  // ISO-8601 UTC, time the response was first produced
  std::optional<long long> seed;

  bool operator==(const Provenance&) const = default;
};

// Removes pairs with an empty side and keeps the first pair per source term.
std::vector<EntityPair> dedup_entity_pairs(std::vector<EntityPair> pairs);

class KnowledgeBundle {
 public:
  KnowledgeBundle() = default;
  // Throws invalid_argument on an empty term; duplicates on source_term are
  // collapsed with the first occurrence kept.
  KnowledgeBundle(std::optional<std::string> summary, std::vector<EntityPair> entities,
                  std::vector<Provenance> provenance = {});

  const std::optional<std::string>& summary() const noexcept { return summary_; }
  const std::vector<EntityPair>& entities() const noexcept { return entities_; }
  const std::vector<Provenance>& provenance() const noexcept { return provenance_; }

  bool has_summary() const noexcept { return summary_.has_value() && !summary_->empty(); }
  bool has_entities() const noexcept { return !entities_.empty(); }

  bool operator==(const KnowledgeBundle&) const = default;

 private:
  std::optional<std::string> summary_;
  std::vector<EntityPair> entities_;
  std::vector<Provenance> provenance_;
};

// Which system produced a candidate. Ordering is the default tie policy:
// baseline < summarization < entity < rerank samples by index.
struct CandidateLabel {
  enum class Kind { baseline, summarization, entity, rerank_sample };

  Kind kind = Kind::baseline;
  int sample = 0;  // 1..k for rerank_sample, 0 otherwise

  static CandidateLabel baseline() { return {Kind::baseline, 0}; }
  static CandidateLabel summarization() { return {Kind::summarization, 0}; }
  static CandidateLabel entity() { return {Kind::entity, 0}; }
  static CandidateLabel rerank_sample(int k) { return {Kind::rerank_sample, k}; }

  // "baseline", "summarization", "entity", "rerank_sample(k)"
  std::string str() const;
  static CandidateLabel parse(std::string_view text);

  auto operator<=>(const CandidateLabel&) const = default;
};

enum class RepairReason { missing_from_output, fallback_to_baseline, fallback_to_source_copy };

std::string_view to_string(RepairReason reason);
RepairReason parse_repair_reason(std::string_view text);

struct CandidateTranslation {
  std::string doc_id;
  CandidateLabel label;
  std::map<SentenceIndex, std::string> segments;
  std::map<SentenceIndex, std::vector<RepairReason>> repair_flags;
  std::string raw_response;
  bool failed = false;  // whole response was unusable
  std::optional<Provenance> provenance;

  // True when segment keys are exactly {1..n} and every segment is non-empty.
  bool covers(std::size_t n) const;

  bool operator==(const CandidateTranslation&) const = default;
};

struct SelectionTrace {
  CandidateLabel chosen_label;
  std::map<CandidateLabel, double> scores;

  bool operator==(const SelectionTrace&) const = default;
};

struct FusionResult {
  std::map<SentenceIndex, std::string> fused;
  std::map<SentenceIndex, SelectionTrace> trace;
  std::vector<CandidateLabel> candidate_set;

  bool operator==(const FusionResult&) const = default;
};

class ScoreRequest {
 public:
  ScoreRequest(std::string source, std::string hypothesis,
               std::optional<std::string> reference = std::nullopt,
               std::optional<std::string> context = std::nullopt);

  const std::string& source() const noexcept { return source_; }
  const std::string& hypothesis() const noexcept { return hypothesis_; }
  const std::optional<std::string>& reference() const noexcept { return reference_; }
  const std::optional<std::string>& context() const noexcept { return context_; }

  bool operator==(const ScoreRequest&) const = default;

 private:
  std::string source_;
  std::string hypothesis_;
  std::optional<std::string> reference_;
  std::optional<std::string> context_;
};

// Convex combination weights for token-level fusion.
class EnsembleWeights {
 public:
  explicit EnsembleWeights(std::vector<double> lambdas);

  // (0.4, 0.3, 0.3) for baseline, summary, entity members.
  static EnsembleWeights defaults();

  const std::vector<double>& lambdas() const noexcept { return lambdas_; }
  std::size_t size() const noexcept { return lambdas_.size(); }

  bool operator==(const EnsembleWeights&) const = default;

 private:
  std::vector<double> lambdas_;
};

// ---- canonical JSON ---------------------------------------------------------

void to_json(json& j, const IndexedDocument& doc);
void to_json(json& j, const EntityPair& pair);
void from_json(const json& j, EntityPair& pair);
void to_json(json& j, const Provenance& p);
void from_json(const json& j, Provenance& p);
void to_json(json& j, const KnowledgeBundle& bundle);
void to_json(json& j, const CandidateLabel& label);
void from_json(const json& j, CandidateLabel& label);
void to_json(json& j, const CandidateTranslation& c);
void from_json(const json& j, CandidateTranslation& c);
void to_json(json& j, const SelectionTrace& t);
void from_json(const json& j, SelectionTrace& t);
void to_json(json& j, const FusionResult& r);
void from_json(const json& j, FusionResult& r);
void to_json(json& j, const ScoreRequest& r);
void to_json(json& j, const EnsembleWeights& w);

}  // namespace kfmt

// Validated types have no default constructor, so they deserialize through
// adl_serializer specialisations.
namespace nlohmann {

template <>
struct adl_serializer<kfmt::IndexedDocument> {
  static kfmt::IndexedDocument from_json(const json& j);
  static void to_json(json& j, const kfmt::IndexedDocument& doc) { kfmt::to_json(j, doc); }
};

template <>
struct adl_serializer<kfmt::KnowledgeBundle> {
  static kfmt::KnowledgeBundle from_json(const json& j);
  static void to_json(json& j, const kfmt::KnowledgeBundle& b) { kfmt::to_json(j, b); }
};

template <>
struct adl_serializer<kfmt::ScoreRequest> {
  static kfmt::ScoreRequest from_json(const json& j);
  static void to_json(json& j, const kfmt::ScoreRequest& r) { kfmt::to_json(j, r); }
};

template <>
struct adl_serializer<kfmt::EnsembleWeights> {
  static kfmt::EnsembleWeights from_json(const json& j);
  static void to_json(json& j, const kfmt::EnsembleWeights& w) { kfmt::to_json(j, w); }
};

}  // namespace nlohmann
