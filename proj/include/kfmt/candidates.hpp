#pragma once

#include <optional>
#include <vector>

#include "kfmt/gateway.hpp"
#include "kfmt/knowledge.hpp"
#include "kfmt/prompts.hpp"
#include "kfmt/types.hpp"

namespace kfmt {

CandidateLabel label_for(const KnowledgeMode& mode);

// Knowledge modes a bundle supports, baseline first. A document with an empty
// lexicon gets no entity mode; one without a summary gets no summary mode.
std::vector<KnowledgeMode> available_modes(const KnowledgeBundle& bundle);

// Fills every index in 1..N. Missing segments take the baseline's segment
// when `baseline` is given, else a verbatim source copy; each filled index
// is flagged. An unusable response yields a failed candidate made of source
// copies.
CandidateTranslation complete_candidate(const IndexedDocument& doc, CandidateLabel label,
                                        const std::string& raw_response,
                                        const CandidateTranslation* baseline);

// One document translation at settings.temperature (0 by default). Gateway
// errors propagate.
CandidateTranslation translate_document(LlmGateway& gateway, const GenerationSettings& settings,
                                        const IndexedDocument& doc, const KnowledgeMode& mode,
                                        const CandidateTranslation* baseline = nullptr);

inline constexpr int kDefaultRerankCandidates = 3;
inline constexpr double kDefaultRerankTemperature = 0.7;

// k plain-prompt samples labelled rerank_sample(1..k) with seeds 1..k.
// Requires k >= 2 and either temperature > 0 or a backend that honours seeds.
std::vector<CandidateTranslation> sample_rerank_candidates(
    LlmGateway& gateway, const GenerationSettings& settings, const IndexedDocument& doc,
    int k = kDefaultRerankCandidates, double temperature = kDefaultRerankTemperature,
    const CandidateTranslation* baseline = nullptr);

}  // namespace kfmt
