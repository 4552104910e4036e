#include "kfmt/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::schema_violation: return "schema_violation";
    case ErrorCode::missing_file: return "missing_file";
    case ErrorCode::config_invalid: return "config_invalid";
    case ErrorCode::backend_unreachable: return "backend_unreachable";
    case ErrorCode::backend_rejected: return "backend_rejected";
    case ErrorCode::backend_not_registered: return "backend_not_registered";
    case ErrorCode::cache_io_error: return "cache_io_error";
    case ErrorCode::unparseable: return "unparseable";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::scorer_unavailable: return "scorer_unavailable";
    case ErrorCode::candidate_coverage_gap: return "candidate_coverage_gap";
    case ErrorCode::missing_references: return "missing_references";
    case ErrorCode::empty_candidate_set: return "empty_candidate_set";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::invalid_weights: return "invalid_weights";
    case ErrorCode::vocab_mismatch: return "vocab_mismatch";
    case ErrorCode::zero_probability: return "zero_probability";
    case ErrorCode::zero_vector: return "zero_vector";
  }
  return "unknown";
}

// ---- IndexedDocument --------------------------------------------------------

IndexedDocument::IndexedDocument(std::string doc_id, std::string src_lang, std::string tgt_lang,
                                 std::vector<std::string> sentences,
                                 std::optional<std::vector<std::string>> references)
    : doc_id_(std::move(doc_id)),
      src_lang_(std::move(src_lang)),
      tgt_lang_(std::move(tgt_lang)),
      sentences_(std::move(sentences)),
      references_(std::move(references)) {
  if (sentences_.empty()) {
    throw Error(ErrorCode::invalid_argument, "document '" + doc_id_ + "' has no sentences");
  }
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    if (is_blank(sentences_[i])) {
      throw Error(ErrorCode::invalid_argument, "document '" + doc_id_ + "' sentence #" +
                                                   std::to_string(i + 1) + " is empty");
    }
  }
  if (references_ && references_->size() != sentences_.size()) {
    throw Error(ErrorCode::invalid_argument,
                "document '" + doc_id_ + "' has " + std::to_string(references_->size()) +
                    " references for " + std::to_string(sentences_.size()) + " sentences");
  }
}

const std::string& IndexedDocument::sentence(SentenceIndex index) const {
  if (index < 1 || index > sentences_.size()) {
    throw Error(ErrorCode::invalid_argument, "sentence index " + std::to_string(index) +
                                                 " outside 1.." +
                                                 std::to_string(sentences_.size()));
  }
  return sentences_[index - 1];
}

const std::string& IndexedDocument::reference(SentenceIndex index) const {
  if (!references_) {
    throw Error(ErrorCode::missing_references, "document '" + doc_id_ + "' has no references");
  }
  if (index < 1 || index > references_->size()) {
    throw Error(ErrorCode::invalid_argument, "reference index " + std::to_string(index) +
                                                 " out of range");
  }
  return (*references_)[index - 1];
}

// ---- knowledge --------------------------------------------------------------

std::vector<EntityPair> dedup_entity_pairs(std::vector<EntityPair> pairs) {
  std::vector<EntityPair> out;
  std::set<std::string> seen;
  for (auto& p : pairs) {
    if (is_blank(p.source_term) || is_blank(p.target_term)) continue;
    if (!seen.insert(p.source_term).second) continue;
    out.push_back(std::move(p));
  }
  return out;
}

KnowledgeBundle::KnowledgeBundle(std::optional<std::string> summary,
                                 std::vector<EntityPair> entities,
                                 std::vector<Provenance> provenance)
    : summary_(std::move(summary)), provenance_(std::move(provenance)) {
  for (const auto& p : entities) {
    if (p.source_term.empty() || p.target_term.empty()) {
      throw Error(ErrorCode::invalid_argument, "entity pair with an empty term");
    }
  }
  entities_ = dedup_entity_pairs(std::move(entities));
}

// ---- labels -----------------------------------------------------------------

std::string CandidateLabel::str() const {
  switch (kind) {
    case Kind::baseline: return "baseline";
    case Kind::summarization: return "summarization";
    case Kind::entity: return "entity";
    case Kind::rerank_sample: return "rerank_sample(" + std::to_string(sample) + ")";
  }
  return "unknown";
}

CandidateLabel CandidateLabel::parse(std::string_view text) {
  if (text == "baseline" || text == "b") return baseline();
  if (text == "summarization" || text == "s") return summarization();
  if (text == "entity" || text == "e") return entity();
  constexpr std::string_view prefix = "rerank_sample(";
  if (text.starts_with(prefix) && text.ends_with(")")) {
    auto digits = text.substr(prefix.size(), text.size() - prefix.size() - 1);
    int k = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') {
        throw Error(ErrorCode::schema_violation, "bad candidate label: " + std::string(text));
      }
      k = k * 10 + (c - '0');
    }
    if (!digits.empty() && k >= 1) return rerank_sample(k);
  }
  throw Error(ErrorCode::schema_violation, "bad candidate label: " + std::string(text));
}

std::string_view to_string(RepairReason reason) {
  switch (reason) {
    case RepairReason::missing_from_output: return "missing_from_output";
    case RepairReason::fallback_to_baseline: return "fallback_to_baseline";
    case RepairReason::fallback_to_source_copy: return "fallback_to_source_copy";
  }
  return "unknown";
}

RepairReason parse_repair_reason(std::string_view text) {
  if (text == "missing_from_output") return RepairReason::missing_from_output;
  if (text == "fallback_to_baseline") return RepairReason::fallback_to_baseline;
  if (text == "fallback_to_source_copy") return RepairReason::fallback_to_source_copy;
  throw Error(ErrorCode::schema_violation, "bad repair reason: " + std::string(text));
}

bool CandidateTranslation::covers(std::size_t n) const {
  if (segments.size() != n) return false;
  SentenceIndex expected = 1;
  for (const auto& [index, text] : segments) {
    if (index != expected++ || is_blank(text)) return false;
  }
  return true;
}

// ---- ScoreRequest / EnsembleWeights ------------------------------------------

ScoreRequest::ScoreRequest(std::string source, std::string hypothesis,
                           std::optional<std::string> reference,
                           std::optional<std::string> context)
    : source_(std::move(source)),
      hypothesis_(std::move(hypothesis)),
      reference_(std::move(reference)),
      context_(std::move(context)) {
  if (source_.empty() || hypothesis_.empty()) {
    throw Error(ErrorCode::invalid_argument, "score request needs source and hypothesis");
  }
}

EnsembleWeights::EnsembleWeights(std::vector<double> lambdas) : lambdas_(std::move(lambdas)) {
  if (lambdas_.empty()) throw Error(ErrorCode::invalid_weights, "no ensemble weights");
  for (double l : lambdas_) {
    if (!std::isfinite(l) || l < 0.0) {
      throw Error(ErrorCode::invalid_weights, "ensemble weight must be finite and >= 0");
    }
  }
  double sum = std::accumulate(lambdas_.begin(), lambdas_.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::invalid_weights,
                "ensemble weights sum to " + std::to_string(sum) + ", expected 1");
  }
}

EnsembleWeights EnsembleWeights::defaults() { return EnsembleWeights({0.4, 0.3, 0.3}); }

// ---- JSON -------------------------------------------------------------------

namespace {

template <typename T>
json index_map_to_json(const std::map<SentenceIndex, T>& m) {
  json j = json::object();
  for (const auto& [index, value] : m) j[std::to_string(index)] = value;
  return j;
}

SentenceIndex parse_index_key(const std::string& key) {
  if (key.empty() || key.size() > 9 ||
      !std::all_of(key.begin(), key.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error(ErrorCode::schema_violation, "bad sentence index key: " + key);
  }
  return static_cast<SentenceIndex>(std::stoul(key));
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

void to_json(json& j, const IndexedDocument& doc) {
  j = json{{"doc_id", doc.doc_id()},
           {"src_lang", doc.src_lang()},
           {"tgt_lang", doc.tgt_lang()},
           {"sentences", doc.sentences()}};
  if (doc.references()) j["references"] = *doc.references();
}

void to_json(json& j, const EntityPair& pair) {
  j = json{{"source_term", pair.source_term}, {"target_term", pair.target_term}};
}

void from_json(const json& j, EntityPair& pair) {
  pair.source_term = j.at("source_term").get<std::string>();
  pair.target_term = j.at("target_term").get<std::string>();
}

void to_json(json& j, const Provenance& p) {
  j = json{{"task", p.task},
           {"backend_id", p.backend_id},
           {"model", p.model},
           {"prompt_sha256", p.prompt_sha256},
           {"timestamp", p.timestamp}};
  if (p.seed) j["seed"] = *p.seed;
}

void from_json(const json& j, Provenance& p) {
  p.task = j.value("task", "");
  p.backend_id = j.at("backend_id").get<std::string>();
  p.model = j.value("model", "");
  p.prompt_sha256 = j.at("prompt_sha256").get<std::string>();
  p.timestamp = j.value("timestamp", "");
  p.seed = optional_field<long long>(j, "seed");
}

void to_json(json& j, const KnowledgeBundle& bundle) {
  j = json{{"summary", bundle.summary() ? json(*bundle.summary()) : json(nullptr)},
           {"entities", bundle.entities()},
           {"provenance", bundle.provenance()}};
}

void to_json(json& j, const CandidateLabel& label) { j = label.str(); }

void from_json(const json& j, CandidateLabel& label) {
  label = CandidateLabel::parse(j.get<std::string>());
}

void to_json(json& j, const CandidateTranslation& c) {
  json flags = json::object();
  for (const auto& [index, reasons] : c.repair_flags) {
    json arr = json::array();
    for (auto r : reasons) arr.push_back(std::string(to_string(r)));
    flags[std::to_string(index)] = std::move(arr);
  }
  j = json{{"doc_id", c.doc_id},
           {"label", c.label},
           {"segments", index_map_to_json(c.segments)},
           {"repair_flags", std::move(flags)},
           {"raw_response", c.raw_response},
           {"failed", c.failed}};
  if (c.provenance) j["provenance"] = *c.provenance;
}

void from_json(const json& j, CandidateTranslation& c) {
  c = CandidateTranslation{};
  c.doc_id = j.value("doc_id", "");
  c.label = j.at("label").get<CandidateLabel>();
  for (const auto& [key, value] : j.at("segments").items()) {
    c.segments[parse_index_key(key)] = value.get<std::string>();
  }
  if (auto it = j.find("repair_flags"); it != j.end()) {
    for (const auto& [key, value] : it->items()) {
      auto& reasons = c.repair_flags[parse_index_key(key)];
      for (const auto& r : value) reasons.push_back(parse_repair_reason(r.get<std::string>()));
    }
  }
  c.raw_response = j.value("raw_response", "");
  c.failed = j.value("failed", false);
  c.provenance = optional_field<Provenance>(j, "provenance");
}

void to_json(json& j, const SelectionTrace& t) {
  json scores = json::object();
  for (const auto& [label, score] : t.scores) scores[label.str()] = score;
  j = json{{"chosen_label", t.chosen_label}, {"scores", std::move(scores)}};
}

void from_json(const json& j, SelectionTrace& t) {
  t.chosen_label = j.at("chosen_label").get<CandidateLabel>();
  t.scores.clear();
  for (const auto& [key, value] : j.at("scores").items()) {
    t.scores[CandidateLabel::parse(key)] = value.get<double>();
  }
}

void to_json(json& j, const FusionResult& r) {
  j = json{{"fused", index_map_to_json(r.fused)},
           {"trace", index_map_to_json(r.trace)},
           {"candidate_set", r.candidate_set}};
}

void from_json(const json& j, FusionResult& r) {
  r = FusionResult{};
  for (const auto& [key, value] : j.at("fused").items()) {
    r.fused[parse_index_key(key)] = value.get<std::string>();
  }
  for (const auto& [key, value] : j.at("trace").items()) {
    r.trace[parse_index_key(key)] = value.get<SelectionTrace>();
  }
  r.candidate_set = j.at("candidate_set").get<std::vector<CandidateLabel>>();
}

void to_json(json& j, const ScoreRequest& r) {
  j = json{{"source", r.source()}, {"hypothesis", r.hypothesis()}};
  if (r.reference()) j["reference"] = *r.reference();
  if (r.context()) j["context"] = *r.context();
}

void to_json(json& j, const EnsembleWeights& w) { j = json{{"lambdas", w.lambdas()}}; }

}  // namespace kfmt

namespace nlohmann {

kfmt::IndexedDocument adl_serializer<kfmt::IndexedDocument>::from_json(const json& j) {
  std::optional<std::vector<std::string>> refs;
  if (auto it = j.find("references"); it != j.end() && !it->is_null()) {
    refs = it->get<std::vector<std::string>>();
  }
  return kfmt::IndexedDocument(j.at("doc_id").get<std::string>(),
                               j.at("src_lang").get<std::string>(),
                               j.at("tgt_lang").get<std::string>(),
                               j.at("sentences").get<std::vector<std::string>>(), std::move(refs));
}

kfmt::KnowledgeBundle adl_serializer<kfmt::KnowledgeBundle>::from_json(const json& j) {
  std::optional<std::string> summary;
  if (auto it = j.find("summary"); it != j.end() && !it->is_null()) {
    summary = it->get<std::string>();
  }
  std::vector<kfmt::Provenance> prov;
  if (auto it = j.find("provenance"); it != j.end()) {
    prov = it->get<std::vector<kfmt::Provenance>>();
  }
  return kfmt::KnowledgeBundle(std::move(summary),
                               j.at("entities").get<std::vector<kfmt::EntityPair>>(),
                               std::move(prov));
}

kfmt::ScoreRequest adl_serializer<kfmt::ScoreRequest>::from_json(const json& j) {
  auto opt = [&](const char* name) -> std::optional<std::string> {
    auto it = j.find(name);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
  };
  return kfmt::ScoreRequest(j.at("source").get<std::string>(),
                            j.at("hypothesis").get<std::string>(), opt("reference"),
                            opt("context"));
}

kfmt::EnsembleWeights adl_serializer<kfmt::EnsembleWeights>::from_json(const json& j) {
  return kfmt::EnsembleWeights(j.at("lambdas").get<std::vector<double>>());
}

}  // namespace nlohmann
