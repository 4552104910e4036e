#include "kfmt/knowledge.hpp"

#include <future>

#include "kfmt/error.hpp"
#include "kfmt/parsing.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace {

template <typename Fn>
auto with_doc_context(const IndexedDocument& doc, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const GatewayError& e) {
    throw GatewayError(e.code(), "doc '" + doc.doc_id() + "': " + e.message(), e.attempts());
  } catch (const Error& e) {
    throw Error(e.code(), "doc '" + doc.doc_id() + "': " + e.message());
  }
}

Provenance make_provenance(const char* task, const GenerationSettings& settings,
                           const PromptText& prompt, const CompletionResponse& resp) {
  return Provenance{task, settings.backend_id, settings.model, sha256_hex(prompt.text),
                    resp.created_at, std::nullopt};
}

}  // namespace

PromptText summary_request_prompt(const IndexedDocument& doc, std::string_view summary_lang) {
  return with_format_suffix(render_summarize(doc, summary_lang), FormatTask::summary);
}

PromptText entity_request_prompt(const IndexedDocument& doc) {
  return with_format_suffix(render_extract_entities(doc), FormatTask::entities);
}

SummaryResult acquire_summary(LlmGateway& gateway, const GenerationSettings& settings,
                              const IndexedDocument& doc) {
  return with_doc_context(doc, [&] {
    auto prompt = summary_request_prompt(doc, settings.summary_lang);
    auto resp = gateway.complete({settings.backend_id, settings.model, prompt,
                                  settings.temperature, std::nullopt, settings.max_tokens});
    auto parsed = parse_summary(resp.content);
    return SummaryResult{std::move(parsed.text), parsed.fallback, resp.content,
                         make_provenance("summary", settings, prompt, resp)};
  });
}

EntityResult acquire_entities(LlmGateway& gateway, const GenerationSettings& settings,
                              const IndexedDocument& doc) {
  return with_doc_context(doc, [&] {
    auto prompt = entity_request_prompt(doc);
    auto resp = gateway.complete({settings.backend_id, settings.model, prompt,
                                  settings.temperature, std::nullopt, settings.max_tokens});
    return EntityResult{parse_entity_pairs(resp.content), resp.content,
                        make_provenance("entities", settings, prompt, resp)};
  });
}

KnowledgeRecord acquire_knowledge(LlmGateway& gateway, const GenerationSettings& settings,
                                  const IndexedDocument& doc) {
  auto entities = std::async(std::launch::async,
                             [&] { return acquire_entities(gateway, settings, doc); });
  SummaryResult summary;
  try {
    summary = acquire_summary(gateway, settings, doc);
  } catch (...) {
    entities.wait();
    throw;
  }
  auto ents = entities.get();
  return KnowledgeRecord{
      doc.doc_id(),
      KnowledgeBundle(summary.text, std::move(ents.pairs), {summary.provenance, ents.provenance}),
      summary.fallback};
}

std::vector<PromptText> build_knowledge_eval_requests(const IndexedDocument& doc,
                                                      const KnowledgeBundle& bundle) {
  if (!bundle.has_summary() && !bundle.has_entities()) {
    throw Error(ErrorCode::invalid_argument,
                "doc '" + doc.doc_id() + "': knowledge bundle is empty");
  }
  std::vector<PromptText> prompts;
  const auto original = document_text(doc);
  if (bundle.has_summary()) prompts.push_back(render_summary_eval(original, *bundle.summary()));
  if (bundle.has_entities()) {
    prompts.push_back(render_entity_eval(doc.tgt_lang(), original, bundle.entities()));
  }
  return prompts;
}

void to_json(json& j, const KnowledgeRecord& r) {
  j = r.bundle;
  j["doc_id"] = r.doc_id;
  j["summary_fallback"] = r.summary_fallback;
}

KnowledgeRecord knowledge_record_from_json(const json& j) {
  return KnowledgeRecord{j.at("doc_id").get<std::string>(), j.get<KnowledgeBundle>(),
                         j.value("summary_fallback", false)};
}

}  // namespace kfmt
