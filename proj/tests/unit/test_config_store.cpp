#include "doctest.h"
#include "kfmt/config.hpp"
#include "kfmt/corpus.hpp"
#include "kfmt/error.hpp"
#include "kfmt/run_store.hpp"
#include "test_support.hpp"

using namespace kfmt;
using kfmt_test::read_file;
using kfmt_test::TempDir;
using kfmt_test::write_file;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::zero_vector;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.message();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
  auto c = make_config({}, {});
  CHECK(c.backend == "mock");
  CHECK(c.effective_backend_id() == "mock");
  CHECK(c.rerank_k == 3);
  CHECK(c.rerank_temperature == 0.7);
  CHECK(c.weights == std::vector<double>{0.4, 0.3, 0.3});
  CHECK(c.tie_threshold == 0.08);
  CHECK(c.candidates.size() == 3);
  CHECK(c.effective_cache_dir() == std::filesystem::path("runs") / "cache");
}

TEST_CASE("parse_config_text handles comments, quotes and dashes") {
  auto v = parse_config_text("# comment\n\ncorpus = \"docs.jsonl\"\nrerank-k= 5\n  model=gpt  \n");
  CHECK(v.size() == 3);
  CHECK(v.at("corpus") == "docs.jsonl");
  CHECK(v.at("rerank_k") == "5");
  CHECK(v.at("model") == "gpt");
}

TEST_CASE("parse_config_text errors name the line") {
  CHECK(code_of([] { parse_config_text("corpus = a\nnonsense\n"); }) == ErrorCode::config_invalid);
  CHECK(message_of([] { parse_config_text("corpus = a\nnonsense\n"); }).find("line 2") == 0);
  CHECK(message_of([] { parse_config_text("a = 1\na = 2\n"); }).find("duplicate") !=
        std::string::npos);
  CHECK(code_of([] { parse_config_text(" = 1\n"); }) == ErrorCode::config_invalid);
}

TEST_CASE("command line overrides the file") {
  auto c = make_config({{"model", "file-model"}, {"rerank_k", "4"}}, {{"model", "cli-model"}});
  CHECK(c.model == "cli-model");
  CHECK(c.rerank_k == 4);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK(code_of([] { make_config({{"colour", "red"}}, {}); }) == ErrorCode::config_invalid);
  CHECK(message_of([] { make_config({}, {{"colour", "red"}}); }).find("colour") !=
        std::string::npos);
  for (auto [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"rerank_k", "1"},
           {"rerank_k", "-2"},
           {"rerank_k", "two"},
           {"rerank_temperature", "-0.1"},
           {"weights", "0.5,0.5,0.5"},
           {"weights", "0.5,0.5"},
           {"weights", "0.5,x,0.5"},
           {"tie_threshold", "-1"},
           {"candidates", "b,q"},
           {"candidates", "b,r2"},
           {"candidates", ","},
           {"tfmt", "maybe"},
           {"max_inflight", "0"},
           {"retry_limit", "0"},
           {"max_tokens", "0"},
       }) {
    CAPTURE(k);
    CAPTURE(v);
    CHECK(code_of([&] { make_config({}, {{k, v}}); }) == ErrorCode::config_invalid);
  }
}

TEST_CASE("candidates are deduplicated and ordered") {
  auto c = make_config({}, {{"candidates", "e, b ,e"}});
  REQUIRE(c.candidates.size() == 2);
  CHECK(c.candidates[0] == CandidateLabel::baseline());
  CHECK(c.candidates[1] == CandidateLabel::entity());
}

TEST_CASE("validate_config cross-field checks") {
  RunConfig c;
  CHECK(code_of([&] { validate_config(c); }) == ErrorCode::config_invalid);
  c.corpus = "docs.jsonl";
  CHECK(message_of([&] { validate_config(c); }).find("mock_fixtures") != std::string::npos);
  c.mock_fixtures = "mock.jsonl";
  validate_config(c);
  c.scorer = "http";
  CHECK(message_of([&] { validate_config(c); }).find("scorer_url") != std::string::npos);
  c.scorer_url = "http://127.0.0.1:1";
  validate_config(c);
  c.scorer = "bertscore";
  CHECK(code_of([&] { validate_config(c); }) == ErrorCode::config_invalid);
  c.scorer = "builtin-lexical";
  c.backend = "claude";
  CHECK(code_of([&] { validate_config(c); }) == ErrorCode::config_invalid);
}

TEST_CASE("config_to_json without locations ignores where a run writes") {
  auto a = make_config({}, {{"corpus", "/x/docs.jsonl"}, {"run_dir", "/tmp/a"}});
  auto b = make_config({}, {{"corpus", "/y/docs.jsonl"}, {"runs_root", "/tmp/b"}});
  CHECK(config_to_json(a, false) == config_to_json(b, false));
  CHECK(config_to_json(a, true) != config_to_json(b, true));
  CHECK(config_to_json(a, false)["corpus"] == "docs.jsonl");
  CHECK(config_to_json(a, true)["corpus"] == "/x/docs.jsonl");
}

TEST_CASE("every documented key is known") {
  CHECK(config_keys().size() == 28);
  for (const auto& key : config_keys()) {
    CAPTURE(key);
    CHECK(message_of([&] { make_config({}, {{key, "x"}}); }).find("unknown key") ==
          std::string::npos);
  }
  CHECK(message_of([] { make_config({}, {{"x", "x"}}); }).find("unknown key") == 0);
}

}  // TEST_SUITE

TEST_SUITE("run_store") {

TEST_CASE("stage outputs are sealed") {
  TempDir tmp;
  RunStore store(tmp / "run");
  CHECK_FALSE(store.stage_done("acquire"));
  store.write_jsonl("acquire", "knowledge.jsonl", {json{{"a", 1}}, json{{"b", 2}}});
  store.mark_done("acquire", {{"failures", 0}});
  CHECK(store.stage_done("acquire"));
  CHECK(read_file(store.path("knowledge.jsonl")) == "{\"a\":1}\n{\"b\":2}\n");
  CHECK(code_of([&] { store.write_jsonl("acquire", "knowledge.jsonl", {}); }) ==
        ErrorCode::invalid_argument);
  CHECK(code_of([&] { store.write_text("acquire", "x.txt", "x"); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { store.mark_done("acquire"); }) == ErrorCode::invalid_argument);
  CHECK(read_file(store.path("knowledge.jsonl")) == "{\"a\":1}\n{\"b\":2}\n");
  // Another stage is still writable.
  store.write_text("translate", "candidates.jsonl", "");
}

TEST_CASE("seal survives reopening") {
  TempDir tmp;
  {
    RunStore store(tmp / "run");
    store.mark_done("fuse");
  }
  RunStore again(tmp / "run");
  CHECK(again.stage_done("fuse"));
  CHECK_FALSE(again.stage_done("evaluate"));
}

TEST_CASE("read_jsonl reports the bad line") {
  TempDir tmp;
  RunStore store(tmp / "run");
  write_file(store.path("x.jsonl"), "{\"a\":1}\n\n{oops\n");
  CHECK(code_of([&] { store.read_jsonl("x.jsonl"); }) == ErrorCode::schema_violation);
  CHECK(message_of([&] { store.read_jsonl("x.jsonl"); }).find("x.jsonl:3") == 0);
  CHECK(code_of([&] { store.read_text("absent"); }) == ErrorCode::missing_file);
}

TEST_CASE("run_name") {
  CHECK(RunStore::run_name("/data/wmt news.jsonl", "openai/gpt", "2026-10-15T09:30:00Z") ==
        "wmt_news-openai_gpt-20261015T093000Z");
}

TEST_CASE("create_unique never reuses a directory") {
  TempDir tmp;
  auto a = RunStore::create_unique(tmp.path(), "run");
  auto b = RunStore::create_unique(tmp.path(), "run");
  auto c = RunStore::create_unique(tmp.path(), "run");
  CHECK(a.filename() == "run");
  CHECK(b.filename() == "run-2");
  CHECK(c.filename() == "run-3");
}

TEST_CASE("latest pointer") {
  TempDir tmp;
  CHECK_FALSE(RunStore::read_latest(tmp.path()));
  RunStore::write_latest(tmp.path(), tmp / "run-7");
  auto latest = RunStore::read_latest(tmp.path());
  REQUIRE(latest);
  CHECK(*latest == tmp / "run-7");
}

TEST_CASE("write_file_atomic leaves no temporary behind") {
  TempDir tmp;
  write_file_atomic(tmp / "a/b.txt", "hello");
  write_file_atomic(tmp / "a/b.txt", "again");
  CHECK(read_file(tmp / "a/b.txt") == "again");
  CHECK_FALSE(std::filesystem::exists(tmp / "a/b.txt.tmp"));
}

}  // TEST_SUITE

TEST_SUITE("corpus") {

TEST_CASE("parse_document_line") {
  auto d = parse_document_line(
      R"({"doc_id":"d1","src_lang":"English","tgt_lang":"German","sentences":["A.","B."],"references":["a.","b."]})");
  CHECK(d.doc_id() == "d1");
  CHECK(d.size() == 2);
  CHECK(d.sentence(2) == "B.");
  CHECK(d.has_references());
  auto no_refs = parse_document_line(
      R"({"doc_id":"d2","src_lang":"English","tgt_lang":"German","sentences":["A."],"references":null})");
  CHECK_FALSE(no_refs.has_references());
}

TEST_CASE("schema violations") {
  for (const char* line : {
           "not json",
           "[1,2]",
           R"({"src_lang":"English","tgt_lang":"German","sentences":["A."]})",
           R"({"doc_id":7,"src_lang":"English","tgt_lang":"German","sentences":["A."]})",
           R"({"doc_id":"d","src_lang":"English","tgt_lang":"German"})",
           R"({"doc_id":"d","src_lang":"English","tgt_lang":"German","sentences":"A."})",
           R"({"doc_id":"d","src_lang":"English","tgt_lang":"German","sentences":["A.",3]})",
           R"({"doc_id":"d","src_lang":"English","tgt_lang":"German","sentences":[]})",
           R"({"doc_id":"d","src_lang":"English","tgt_lang":"German","sentences":["A."],"references":["a.","b."]})",
       }) {
    CAPTURE(line);
    CHECK(code_of([&] { parse_document_line(line); }) == ErrorCode::schema_violation);
  }
}

TEST_CASE("strict loading names path and line") {
  TempDir tmp;
  write_file(tmp / "c.jsonl",
             "{\"doc_id\":\"a\",\"src_lang\":\"English\",\"tgt_lang\":\"German\",\"sentences\":[\"A.\"]}\n"
             "\n"
             "{\"doc_id\":\"a\",\"src_lang\":\"English\",\"tgt_lang\":\"German\",\"sentences\":[\"B.\"]}\n");
  CHECK(code_of([&] { load_corpus(tmp / "c.jsonl"); }) == ErrorCode::schema_violation);
  auto msg = message_of([&] { load_corpus(tmp / "c.jsonl"); });
  CHECK(msg.find((tmp / "c.jsonl").string() + ":3:") == 0);
  CHECK(msg.find("duplicate") != std::string::npos);
  CHECK(code_of([&] { load_corpus(tmp / "absent.jsonl"); }) == ErrorCode::missing_file);
}

TEST_CASE("lenient loading keeps the good documents") {
  TempDir tmp;
  write_file(tmp / "c.jsonl",
             "{\"doc_id\":\"a\",\"src_lang\":\"English\",\"tgt_lang\":\"German\",\"sentences\":[\"A.\"]}\n"
             "{\"doc_id\":\"bad\",\"src_lang\":\"English\",\"tgt_lang\":\"German\",\"sentences\":[]}\n"
             "garbage\n"
             "{\"doc_id\":\"c\",\"src_lang\":\"English\",\"tgt_lang\":\"German\",\"sentences\":[\"C.\"]}\n");
  auto loaded = load_corpus_lenient(tmp / "c.jsonl");
  REQUIRE(loaded.documents.size() == 2);
  CHECK(loaded.documents[0].doc_id() == "a");
  CHECK(loaded.documents[1].doc_id() == "c");
  REQUIRE(loaded.issues.size() == 2);
  CHECK(loaded.issues[0].line == 2);
  CHECK(loaded.issues[0].doc_id == "bad");
  CHECK(loaded.issues[1].line == 3);
  CHECK(loaded.issues[1].doc_id.empty());
}

}  // TEST_SUITE
