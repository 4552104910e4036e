#include "kfmt/candidates.hpp"

#include "kfmt/error.hpp"
#include "kfmt/parsing.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

CandidateLabel label_for(const KnowledgeMode& mode) {
  if (std::holds_alternative<SummaryKnowledge>(mode)) return CandidateLabel::summarization();
  if (std::holds_alternative<EntityKnowledge>(mode)) return CandidateLabel::entity();
  return CandidateLabel::baseline();
}

std::vector<KnowledgeMode> available_modes(const KnowledgeBundle& bundle) {
  std::vector<KnowledgeMode> modes{NoKnowledge{}};
  if (bundle.has_summary()) modes.emplace_back(SummaryKnowledge{*bundle.summary()});
  if (bundle.has_entities()) modes.emplace_back(EntityKnowledge{bundle.entities()});
  return modes;
}

CandidateTranslation complete_candidate(const IndexedDocument& doc, CandidateLabel label,
                                        const std::string& raw_response,
                                        const CandidateTranslation* baseline) {
  CandidateTranslation cand;
  cand.doc_id = doc.doc_id();
  cand.label = label;
  cand.raw_response = raw_response;

  std::optional<ParsedTranslationMap> parsed;
  try {
    parsed = parse_translation_map(raw_response, doc.size());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::unparseable) throw;
  }

  if (!parsed) {
    cand.failed = true;
    for (SentenceIndex i = 1; i <= doc.size(); ++i) {
      cand.segments[i] = doc.sentence(i);
      cand.repair_flags[i] = {RepairReason::missing_from_output,
                              RepairReason::fallback_to_source_copy};
    }
    return cand;
  }

  cand.segments = std::move(parsed->segments);
  for (SentenceIndex i : parsed->missing) {
    const std::string* from_baseline = nullptr;
    if (baseline) {
      auto it = baseline->segments.find(i);
      if (it != baseline->segments.end() && !is_blank(it->second)) from_baseline = &it->second;
    }
    if (from_baseline) {
      cand.segments[i] = *from_baseline;
      cand.repair_flags[i] = {RepairReason::missing_from_output,
                              RepairReason::fallback_to_baseline};
    } else {
      cand.segments[i] = doc.sentence(i);
      cand.repair_flags[i] = {RepairReason::missing_from_output,
                              RepairReason::fallback_to_source_copy};
    }
  }
  return cand;
}

namespace {

CandidateTranslation generate(LlmGateway& gateway, const GenerationSettings& settings,
                              const IndexedDocument& doc, const KnowledgeMode& mode,
                              CandidateLabel label, double temperature,
                              std::optional<long long> seed,
                              const CandidateTranslation* baseline) {
  auto prompt = render_translate(doc, mode);
  CompletionResponse resp;
  try {
    resp = gateway.complete(
        {settings.backend_id, settings.model, prompt, temperature, seed, settings.max_tokens});
  } catch (const GatewayError& e) {
    throw GatewayError(e.code(), "doc '" + doc.doc_id() + "' " + label.str() + ": " + e.message(),
                       e.attempts());
  }
  auto cand = complete_candidate(doc, label, resp.content, baseline);
  cand.provenance = Provenance{"translation:" + label.str(), settings.backend_id,
                               settings.model, sha256_hex(prompt.text), resp.created_at, seed};
  return cand;
}

}  // namespace

CandidateTranslation translate_document(LlmGateway& gateway, const GenerationSettings& settings,
                                        const IndexedDocument& doc, const KnowledgeMode& mode,
                                        const CandidateTranslation* baseline) {
  return generate(gateway, settings, doc, mode, label_for(mode), settings.temperature,
                  std::nullopt, baseline);
}

std::vector<CandidateTranslation> sample_rerank_candidates(
    LlmGateway& gateway, const GenerationSettings& settings, const IndexedDocument& doc, int k,
    double temperature, const CandidateTranslation* baseline) {
  if (k < 2) {
    throw Error(ErrorCode::invalid_argument, "reranking needs at least 2 candidates");
  }
  if (temperature < 0.0 || (temperature == 0.0 && !gateway.supports_seed(settings.backend_id))) {
    throw Error(ErrorCode::invalid_argument,
                "reranking needs temperature > 0 or a backend that honours seeds");
  }
  std::vector<CandidateTranslation> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int s = 1; s <= k; ++s) {
    out.push_back(generate(gateway, settings, doc, NoKnowledge{},
                           CandidateLabel::rerank_sample(s), temperature, s, baseline));
  }
  return out;
}

}  // namespace kfmt
