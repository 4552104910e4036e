// Writes the end-to-end corpus and scripted mock responses.
//
//   make_e2e_fixtures <dir>          write corpus.jsonl, corpus_malformed.jsonl, mock.jsonl
//   make_e2e_fixtures --check <dir>  exit 1 if the files on disk differ

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kfmt/candidates.hpp"
#include "kfmt/knowledge.hpp"
#include "kfmt/parsing.hpp"
#include "kfmt/prompts.hpp"
#include "kfmt/text.hpp"

namespace fs = std::filesystem;
using kfmt::IndexedDocument;
using kfmt::json;

namespace {

struct Script {
  IndexedDocument doc;
  std::string summary;
  std::string entities;
  std::string baseline;
  std::string with_summary;
  std::string with_entities;
  std::vector<std::string> rerank;  // seeds 1..k
};

std::vector<Script> scripts() {
  std::vector<Script> out;
  out.push_back(
      {IndexedDocument("d1", "English", "German",
                       {"The cat sat on the mat.", "Anna fed the cat in Berlin.",
                        "The mat was red."},
                       std::vector<std::string>{"Die Katze saß auf der Matte.",
                                                "Anna fütterte die Katze in Berlin.",
                                                "Die Matte war rot."}),
       R"({"summarization": "Anna feeds a cat that sits on a red mat in Berlin."})",
       R"({"cat": "Katze", "mat": "Matte", "Anna": "Anna", "Berlin": "Berlin"})",
       R"({"#1": "Die Katze sass auf dem Teppich.", "#2": "Anna gab der Katze in Berlin Futter.", "#3": "Der Teppich war rot."})",
       R"({"#1": "Die Katze saß auf der Decke.", "#2": "Anna fütterte die Katze in Berlin.", "#3": "Die Decke war rot."})",
       "Here is the translation:\n```json\n"
       R"({"#1": "Die Katze saß auf der Matte.", "#2": "Anna fütterte die Katze in Berlin.", "#3": "Die Matte war rot."})"
       "\n```",
       {R"({"#1": "Eine Katze saß auf der Matte.", "#2": "Anna fütterte Katzen in Berlin.", "#3": "Rot war die Matte."})",
        R"({"#1": "Die Katze lag auf der Matte.", "#2": "Anna hat die Katze in Berlin gefüttert.", "#3": "Die Matte war rötlich."})",
        R"({"#1": "Die Katze saß auf dem Vorleger.", "#2": "In Berlin fütterte Anna die Katze.", "#3": "Der Vorleger war rot."})"}});
  out.push_back(
      {IndexedDocument("d2", "English", "German",
                       {"Paris is the capital of France.", "The river Seine flows through it.",
                        "Many tourists visit the city."},
                       std::vector<std::string>{"Paris ist die Hauptstadt Frankreichs.",
                                                "Die Seine fließt durch die Stadt.",
                                                "Viele Touristen besuchen die Stadt."}),
       "```json\n{\"summarization\": \"Paris, the French capital on the Seine, draws many tourists.\"}\n```",
       R"({"Paris": "Paris", "capital": "Hauptstadt", "France": "Frankreich", "Seine": "Seine"})",
       R"({"#1": "Paris ist die Hauptstadt von Frankreich.", "#2": "Der Fluss Seine fließt hindurch.", "#3": "Viele Touristen besuchen die Stadt."})",
       // Sentence 2 omitted: filled from the baseline.
       R"({"#1": "Paris ist die Hauptstadt Frankreichs.", "#3": "Viele Touristen besuchen die Stadt."})",
       R"({'#1': 'Paris ist die Hauptstadt Frankreichs.', '#2': 'Die Seine fließt durch die Stadt.', '#3': 'Viele Touristen besichtigen die Stadt.',})",
       {R"({"#1": "Paris ist Frankreichs Hauptstadt.", "#2": "Die Seine fließt durch Paris.", "#3": "Viele Touristen kommen in die Stadt."})",
        R"({"#1": "Die Hauptstadt Frankreichs ist Paris.", "#2": "Durch sie fließt die Seine.", "#3": "Zahlreiche Touristen besuchen die Stadt."})",
        R"({"#1": "Paris ist die Hauptstadt Frankreichs.", "#2": "Der Fluss Seine fließt durch sie.", "#3": "Viele Reisende besuchen die Stadt."})"}});
  out.push_back(
      {IndexedDocument("d3", "English", "French",
                       {"The library opens at nine.", "Students read in the garden.",
                        "The librarian is called Marie."},
                       std::vector<std::string>{"La bibliothèque ouvre à neuf heures.",
                                                "Les étudiants lisent dans le jardin.",
                                                "La bibliothécaire s'appelle Marie."}),
       "The library opens at nine and students read in its garden; Marie runs it.",
       R"({"library": "bibliothèque", "garden": "jardin", "Marie": "Marie", "librarian": "bibliothécaire"})",
       R"({"#1": "La librairie ouvre à neuf heures.", "#2": "Les étudiants lisent au jardin.", "#3": "Le bibliothécaire s'appelle Marie."})",
       R"({"#1": "La bibliothèque ouvre à neuf heures.", "#2": "Les étudiants lisent au jardin.", "#3": "Le bibliothécaire s'appelle Marie."})",
       R"({"#1": "La bibliothèque ouvre à neuf heures.", "#2": "Les étudiants lisent dans le jardin.", "#3": "La bibliothécaire s'appelle Marie.", "#4": "Fin."})",
       {R"({"#1": "La bibliothèque ouvre à 9 heures.", "#2": "Des étudiants lisent dans le jardin.", "#3": "La bibliothécaire se nomme Marie."})",
        R"({"#1": "La bibliothèque est ouverte dès neuf heures.", "#2": "Les étudiants lisent dans le jardin.", "#3": "Marie est la bibliothécaire."})",
        R"({"#1": "La librairie ouvre à neuf heures.", "#2": "Les élèves lisent dans le jardin.", "#3": "La bibliothécaire s'appelle Marie."})"}});
  return out;
}

constexpr const char* kSummaryLang = "English";
constexpr const char* kMalformedLine =
    R"({"doc_id":"d4","src_lang":"English","tgt_lang":"German","sentences":[]})";

std::string record(const kfmt::PromptText& prompt, const std::string& content,
                   std::optional<long long> seed, const std::string& note) {
  json r = {{"prompt_sha256", kfmt::sha256_hex(prompt.text)}, {"content", content}};
  if (seed) r["seed"] = *seed;
  r["note"] = note;
  return r.dump() + "\n";
}

std::map<std::string, std::string> build() {
  std::string corpus, mock;
  for (const auto& s : scripts()) {
    const auto& doc = s.doc;
    corpus += json(doc).dump() + "\n";
    const auto id = doc.doc_id();
    mock += record(kfmt::summary_request_prompt(doc, kSummaryLang), s.summary, std::nullopt,
                   id + " summary");
    mock += record(kfmt::entity_request_prompt(doc), s.entities, std::nullopt, id + " entities");
    mock += record(kfmt::render_translate(doc, kfmt::NoKnowledge{}), s.baseline, std::nullopt,
                   id + " baseline");
    auto summary = kfmt::parse_summary(s.summary).text;
    mock += record(kfmt::render_translate(doc, kfmt::SummaryKnowledge{summary}), s.with_summary,
                   std::nullopt, id + " summary translation");
    auto pairs = kfmt::parse_entity_pairs(s.entities);
    mock += record(kfmt::render_translate(doc, kfmt::EntityKnowledge{pairs}), s.with_entities,
                   std::nullopt, id + " entity translation");
    for (std::size_t k = 0; k < s.rerank.size(); ++k) {
      mock += record(kfmt::render_translate(doc, kfmt::NoKnowledge{}), s.rerank[k],
                     static_cast<long long>(k + 1), id + " rerank sample " + std::to_string(k + 1));
    }
  }
  return {{"corpus.jsonl", corpus},
          {"corpus_malformed.jsonl", corpus + kMalformedLine + "\n"},
          {"mock.jsonl", mock}};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  bool check = !args.empty() && args.front() == "--check";
  if (check) args.erase(args.begin());
  if (args.size() != 1) {
    std::cerr << "usage: make_e2e_fixtures [--check] <dir>\n";
    return 2;
  }
  const fs::path dir = args.front();
  int stale = 0;
  for (const auto& [name, text] : build()) {
    if (check) {
      if (slurp(dir / name) != text) {
        std::cerr << "stale fixture: " << (dir / name).string() << "\n";
        ++stale;
      }
      continue;
    }
    fs::create_directories(dir);
    std::ofstream(dir / name, std::ios::binary | std::ios::trunc) << text;
  }
  return stale == 0 ? 0 : 1;
}
