#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/types.hpp"

namespace kfmt {

// One JSONL line {doc_id, src_lang, tgt_lang, sentences, references?}.
// Throws schema_violation.
IndexedDocument parse_document_line(std::string_view line);

// Every line must be a valid document with a unique doc_id. Errors carry
// "path:line:". Throws missing_file or schema_violation.
std::vector<IndexedDocument> load_corpus(const std::filesystem::path& path);

struct CorpusIssue {
  std::size_t line = 0;
  std::string doc_id;  // empty when the line has none
  std::string message;
};

struct LoadedCorpus {
  std::vector<IndexedDocument> documents;
  std::vector<CorpusIssue> issues;
};

// Like load_corpus but bad lines are reported instead of thrown.
// Still throws missing_file.
LoadedCorpus load_corpus_lenient(const std::filesystem::path& path);

}  // namespace kfmt
