#pragma once

#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "kfmt/types.hpp"

namespace kfmt {

enum class TemplateId {
  summarize,
  extract_entities,
  translate_plain,
  translate_with_summary,
  translate_with_entities,
  fmt_summary,
  fmt_entities,
  fmt_translation,
  eval_summary,
  eval_entities,
  gpt_eval,
};

inline constexpr TemplateId kAllTemplates[] = {
    TemplateId::summarize,        TemplateId::extract_entities,
    TemplateId::translate_plain,  TemplateId::translate_with_summary,
    TemplateId::translate_with_entities, TemplateId::fmt_summary,
    TemplateId::fmt_entities,     TemplateId::fmt_translation,
    TemplateId::eval_summary,     TemplateId::eval_entities,
    TemplateId::gpt_eval,
};

std::string_view to_string(TemplateId id);

struct PromptText {
  std::string text;
  TemplateId template_id;

  bool operator==(const PromptText&) const = default;
};

// Raw template text with `${name}` placeholders, embedded at build time from
// resources/templates/<id>.txt.
std::string_view template_source(TemplateId id);

// Single left-to-right pass: substituted values are never rescanned, so
// braces or `${...}` inside user text survive verbatim. Throws
// invalid_argument for a placeholder without a value.
std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values);

// Sentences joined by single spaces.
std::string document_text(const IndexedDocument& doc);
// "#1 <s1> #2 <s2> ..."
std::string numbered_sentences(const IndexedDocument& doc);
// "<src> = <tgt> , <src> = <tgt>"
std::string entity_pair_list(const std::vector<EntityPair>& pairs);

struct NoKnowledge {
  bool operator==(const NoKnowledge&) const = default;
};
struct SummaryKnowledge {
  std::string summary;
  bool operator==(const SummaryKnowledge&) const = default;
};
struct EntityKnowledge {
  std::vector<EntityPair> pairs;
  bool operator==(const EntityKnowledge&) const = default;
};
using KnowledgeMode = std::variant<NoKnowledge, SummaryKnowledge, EntityKnowledge>;

enum class FormatTask { summary, entities, translation };

PromptText render_summarize(const IndexedDocument& doc, std::string_view summary_lang = "English");
PromptText render_extract_entities(const IndexedDocument& doc);

// Translation prompt for the given knowledge mode with the translation format
// instruction appended after one blank line. Throws invalid_argument for an
// empty summary or an empty pair list.
PromptText render_translate(const IndexedDocument& doc, const KnowledgeMode& mode);

PromptText render_format_suffix(FormatTask task);

// body + "\n\n" + format instruction; keeps the body's template id.
PromptText with_format_suffix(PromptText body, FormatTask task);

PromptText render_gpt_eval(std::string_view src_lang, std::string_view tgt_lang,
                           std::string_view src_seg, std::string_view ref_seg,
                           std::string_view tgt_seg);

PromptText render_summary_eval(std::string_view original_text, std::string_view summarization);
PromptText render_entity_eval(std::string_view translation_lang, std::string_view original_text,
                              const std::vector<EntityPair>& pairs);

}  // namespace kfmt
