#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kfmt/gateway.hpp"
#include "kfmt/prompts.hpp"
#include "kfmt/types.hpp"

namespace kfmt {

// Which backend/model a generation step talks to and how.
struct GenerationSettings {
  std::string backend_id;
  std::string model;
  double temperature = 0.0;
  std::optional<int> max_tokens;
  std::string summary_lang = "English";
};

struct SummaryResult {
  std::string text;
  bool fallback = false;  // whole response used as the summary
  std::string raw_response;
  Provenance provenance;
};

struct EntityResult {
  std::vector<EntityPair> pairs;
  std::string raw_response;
  Provenance provenance;
};

// Prompt actually sent for each acquisition task (body + format instruction).
PromptText summary_request_prompt(const IndexedDocument& doc, std::string_view summary_lang);
PromptText entity_request_prompt(const IndexedDocument& doc);

// Gateway and parse errors propagate with the doc_id prepended to the message.
SummaryResult acquire_summary(LlmGateway& gateway, const GenerationSettings& settings,
                              const IndexedDocument& doc);
EntityResult acquire_entities(LlmGateway& gateway, const GenerationSettings& settings,
                              const IndexedDocument& doc);

struct KnowledgeRecord {
  std::string doc_id;
  KnowledgeBundle bundle;
  bool summary_fallback = false;
};

// Summary and entities are requested concurrently and joined.
KnowledgeRecord acquire_knowledge(LlmGateway& gateway, const GenerationSettings& settings,
                                  const IndexedDocument& doc);

// One summary-quality prompt when the bundle has a summary, one entity-quality
// prompt when it has entities. Throws invalid_argument for an empty bundle.
std::vector<PromptText> build_knowledge_eval_requests(const IndexedDocument& doc,
                                                      const KnowledgeBundle& bundle);

void to_json(json& j, const KnowledgeRecord& r);
KnowledgeRecord knowledge_record_from_json(const json& j);

}  // namespace kfmt
