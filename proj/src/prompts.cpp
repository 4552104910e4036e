#include "kfmt/prompts.hpp"

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace {

struct EmbeddedTemplate {
  std::string_view id;
  std::string_view text;
};

constexpr EmbeddedTemplate kEmbedded[] = {
#include "kfmt_templates.inc"
};

void require_text(std::string_view value, const char* what) {
  if (is_blank(value)) {
    throw Error(ErrorCode::invalid_argument, std::string(what) + " must not be empty");
  }
}

PromptText render(TemplateId id, const std::map<std::string, std::string>& values) {
  return PromptText{render_template(template_source(id), values), id};
}

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::summarize: return "summarize";
    case TemplateId::extract_entities: return "extract_entities";
    case TemplateId::translate_plain: return "translate_plain";
    case TemplateId::translate_with_summary: return "translate_with_summary";
    case TemplateId::translate_with_entities: return "translate_with_entities";
    case TemplateId::fmt_summary: return "fmt_summary";
    case TemplateId::fmt_entities: return "fmt_entities";
    case TemplateId::fmt_translation: return "fmt_translation";
    case TemplateId::eval_summary: return "eval_summary";
    case TemplateId::eval_entities: return "eval_entities";
    case TemplateId::gpt_eval: return "gpt_eval";
  }
  return "unknown";
}

std::string_view template_source(TemplateId id) {
  auto name = to_string(id);
  for (const auto& t : kEmbedded) {
    if (t.id == name) return t.text;
  }
  throw Error(ErrorCode::invalid_argument, "no embedded template " + std::string(name));
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size() + 256);
  std::size_t i = 0;
  while (i < tpl.size()) {
    auto open = tpl.find("${", i);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(i));
      break;
    }
    auto close = tpl.find('}', open + 2);
    if (close == std::string_view::npos) {
      out.append(tpl.substr(i));
      break;
    }
    out.append(tpl.substr(i, open - i));
    std::string name(tpl.substr(open + 2, close - open - 2));
    auto it = values.find(name);
    if (it == values.end()) {
      throw Error(ErrorCode::invalid_argument, "no value for placeholder ${" + name + "}");
    }
    out.append(it->second);
    i = close + 1;
  }
  return out;
}

std::string document_text(const IndexedDocument& doc) { return join(doc.sentences(), " "); }

std::string numbered_sentences(const IndexedDocument& doc) {
  std::string out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    if (i) out += ' ';
    out += '#';
    out += std::to_string(i + 1);
    out += ' ';
    out += doc.sentences()[i];
  }
  return out;
}

std::string entity_pair_list(const std::vector<EntityPair>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += " , ";
    out += pairs[i].source_term;
    out += " = ";
    out += pairs[i].target_term;
  }
  return out;
}

PromptText render_summarize(const IndexedDocument& doc, std::string_view summary_lang) {
  require_text(summary_lang, "summary language");
  return render(TemplateId::summarize,
                {{"summary_lang", std::string(summary_lang)}, {"document", document_text(doc)}});
}

PromptText render_extract_entities(const IndexedDocument& doc) {
  return render(TemplateId::extract_entities, {{"src_lang", doc.src_lang()},
                                               {"tgt_lang", doc.tgt_lang()},
                                               {"document", document_text(doc)}});
}

PromptText render_translate(const IndexedDocument& doc, const KnowledgeMode& mode) {
  std::map<std::string, std::string> values{{"src_lang", doc.src_lang()},
                                            {"tgt_lang", doc.tgt_lang()},
                                            {"numbered_sentences", numbered_sentences(doc)}};
  TemplateId id = TemplateId::translate_plain;
  if (const auto* s = std::get_if<SummaryKnowledge>(&mode)) {
    require_text(s->summary, "summary");
    values["summary"] = s->summary;
    id = TemplateId::translate_with_summary;
  } else if (const auto* e = std::get_if<EntityKnowledge>(&mode)) {
    if (e->pairs.empty()) {
      throw Error(ErrorCode::invalid_argument, "entity mode needs at least one pair");
    }
    values["entity_pairs"] = entity_pair_list(e->pairs);
    id = TemplateId::translate_with_entities;
  }
  return with_format_suffix(render(id, values), FormatTask::translation);
}

PromptText render_format_suffix(FormatTask task) {
  switch (task) {
    case FormatTask::summary: return render(TemplateId::fmt_summary, {});
    case FormatTask::entities: return render(TemplateId::fmt_entities, {});
    case FormatTask::translation: return render(TemplateId::fmt_translation, {});
  }
  throw Error(ErrorCode::invalid_argument, "unknown format task");
}

PromptText with_format_suffix(PromptText body, FormatTask task) {
  body.text += "\n\n";
  body.text += render_format_suffix(task).text;
  return body;
}

PromptText render_gpt_eval(std::string_view src_lang, std::string_view tgt_lang,
                           std::string_view src_seg, std::string_view ref_seg,
                           std::string_view tgt_seg) {
  require_text(src_lang, "src_lang");
  require_text(tgt_lang, "tgt_lang");
  require_text(src_seg, "src_seg");
  require_text(ref_seg, "ref_seg");
  require_text(tgt_seg, "tgt_seg");
  return render(TemplateId::gpt_eval, {{"src_lang", std::string(src_lang)},
                                       {"tgt_lang", std::string(tgt_lang)},
                                       {"src_seg", std::string(src_seg)},
                                       {"ref_seg", std::string(ref_seg)},
                                       {"tgt_seg", std::string(tgt_seg)}});
}

PromptText render_summary_eval(std::string_view original_text, std::string_view summarization) {
  require_text(original_text, "original text");
  require_text(summarization, "summarization");
  return render(TemplateId::eval_summary, {{"original_text", std::string(original_text)},
                                           {"summarization", std::string(summarization)}});
}

PromptText render_entity_eval(std::string_view translation_lang, std::string_view original_text,
                              const std::vector<EntityPair>& pairs) {
  require_text(translation_lang, "translation language");
  require_text(original_text, "original text");
  if (pairs.empty()) throw Error(ErrorCode::invalid_argument, "no entity pairs to evaluate");
  std::vector<std::string> originals;
  std::vector<std::string> translated;
  for (const auto& p : pairs) {
    originals.push_back(p.source_term);
    translated.push_back(p.target_term);
  }
  return render(TemplateId::eval_entities, {{"translation_lang", std::string(translation_lang)},
                                            {"original_text", std::string(original_text)},
                                            {"entities_original", join(originals, ", ")},
                                            {"entities_translated", join(translated, ", ")}});
}

}  // namespace kfmt
