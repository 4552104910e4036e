#include "kfmt/corpus.hpp"

#include <fstream>
#include <set>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace fs = std::filesystem;

namespace {

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::schema_violation, std::string("missing \"") + key + "\"");
  if (!j[key].is_string()) {
    throw Error(ErrorCode::schema_violation, std::string("\"") + key + "\" must be a string");
  }
  return j[key].get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key) {
  if (!j[key].is_array()) {
    throw Error(ErrorCode::schema_violation, std::string("\"") + key + "\" must be an array");
  }
  std::vector<std::string> out;
  for (const auto& item : j[key]) {
    if (!item.is_string()) {
      throw Error(ErrorCode::schema_violation,
                  std::string("\"") + key + "\" must contain only strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::ifstream open_corpus(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "corpus not found: " + path.string());
  return in;
}

}  // namespace

IndexedDocument parse_document_line(std::string_view line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::schema_violation, "line is not valid JSON");
  if (!j.is_object()) throw Error(ErrorCode::schema_violation, "line is not a JSON object");
  auto doc_id = required_string(j, "doc_id");
  auto src = required_string(j, "src_lang");
  auto tgt = required_string(j, "tgt_lang");
  if (!j.contains("sentences")) throw Error(ErrorCode::schema_violation, "missing \"sentences\"");
  auto sentences = string_list(j, "sentences");
  std::optional<std::vector<std::string>> references;
  if (j.contains("references") && !j["references"].is_null()) {
    references = string_list(j, "references");
  }
  try {
    return IndexedDocument(std::move(doc_id), std::move(src), std::move(tgt),
                           std::move(sentences), std::move(references));
  } catch (const Error& e) {
    throw Error(ErrorCode::schema_violation, e.message());
  }
}

LoadedCorpus load_corpus_lenient(const fs::path& path) {
  auto in = open_corpus(path);
  LoadedCorpus out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    try {
      auto doc = parse_document_line(line);
      if (!seen.insert(doc.doc_id()).second) {
        throw Error(ErrorCode::schema_violation, "duplicate doc_id '" + doc.doc_id() + "'");
      }
      out.documents.push_back(std::move(doc));
    } catch (const Error& e) {
      CorpusIssue issue{line_no, {}, e.message()};
      json j = json::parse(line, nullptr, false);
      if (j.is_object() && j.contains("doc_id") && j["doc_id"].is_string()) {
        issue.doc_id = j["doc_id"].get<std::string>();
      }
      out.issues.push_back(std::move(issue));
    }
  }
  return out;
}

std::vector<IndexedDocument> load_corpus(const fs::path& path) {
  auto loaded = load_corpus_lenient(path);
  if (!loaded.issues.empty()) {
    const auto& first = loaded.issues.front();
    throw Error(ErrorCode::schema_violation,
                path.string() + ":" + std::to_string(first.line) + ": " + first.message);
  }
  return std::move(loaded.documents);
}

}  // namespace kfmt
