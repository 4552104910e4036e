#include "kfmt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "kfmt/candidates.hpp"
#include "kfmt/corpus.hpp"
#include "kfmt/error.hpp"
#include "kfmt/fusion.hpp"
#include "kfmt/knowledge.hpp"
#include "kfmt/metrics.hpp"
#include "kfmt/parsing.hpp"
#include "kfmt/prompts.hpp"
#include "kfmt/run_store.hpp"
#include "kfmt/text.hpp"
#include "kfmt/token_ensemble.hpp"

namespace kfmt {

namespace fs = std::filesystem;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::acquire: return "acquire";
    case Stage::translate: return "translate";
    case Stage::tfmt: return "tfmt";
    case Stage::fuse: return "fuse";
    case Stage::evaluate: return "evaluate";
  }
  return "unknown";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : {Stage::acquire, Stage::translate, Stage::tfmt, Stage::fuse, Stage::evaluate}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::invalid_argument, "unknown stage '" + std::string(text) + "'");
}

void to_json(json& j, const DocFailure& f) {
  j = json{{"doc_id", f.doc_id}, {"stage", f.stage}, {"code", f.code}, {"message", f.message}};
}

void from_json(const json& j, DocFailure& f) {
  f.doc_id = j.at("doc_id").get<std::string>();
  f.stage = j.at("stage").get<std::string>();
  f.code = j.at("code").get<std::string>();
  f.message = j.at("message").get<std::string>();
}

json summary_to_json(const RunSummary& s) {
  std::vector<std::string> failed;
  for (const auto& f : s.failures) {
    if (std::find(failed.begin(), failed.end(), f.doc_id) == failed.end()) failed.push_back(f.doc_id);
  }
  return json{{"run_dir", s.run_dir.string()},
              {"documents", s.documents},
              {"completed", s.completed},
              {"failed_doc_ids", failed},
              {"failures", s.failures},
              {"backend_calls", s.gateway.backend_calls},
              {"cache_hits", s.gateway.cache_hits},
              {"completions", s.gateway.completions},
              {"stages_run", s.stages_run},
              {"stages_resumed", s.stages_resumed},
              {"exit_code", s.exit_code()}};
}

fs::path resolve_existing_run(const RunConfig& config) {
  if (!config.run_dir.empty()) return config.run_dir;
  auto latest = RunStore::read_latest(config.runs_root);
  if (!latest) {
    throw Error(ErrorCode::config_invalid, "no previous run under " + config.runs_root);
  }
  return *latest;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. fn must not throw.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) fn(i);
  };
  std::vector<std::thread> pool;
  const std::size_t extra = std::min(workers, n) > 0 ? std::min(workers, n) - 1 : 0;
  for (std::size_t k = 0; k < extra; ++k) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

DocFailure failure_from(const std::string& doc_id, Stage stage, const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return {doc_id, std::string(to_string(stage)), std::string(to_string(err->code())),
            err->message()};
  }
  return {doc_id, std::string(to_string(stage)), "internal", e.what()};
}

const std::string kQe = "qe";
const std::string kReference = "reference";

struct DocScores {
  ScoreTable qe;
  std::optional<ScoreTable> reference;
};

struct FusedRecord {
  std::string system;
  FusionResult result;
};

class Pipeline {
 public:
  Pipeline(const RunConfig& config, const PipelineOverrides& overrides)
      : config_(config), overrides_(overrides) {}

  RunSummary run(Stage until);

 private:
  // setup
  fs::path open_run_dir();
  void build_gateway();
  void build_scorers();
  void load_documents();

  // stage bookkeeping
  bool wanted(Stage s, Stage until) const;
  void load_stage_failures(Stage s);
  void seal(Stage s, const std::vector<DocFailure>& stage_failures, const json& info = {});
  std::vector<const IndexedDocument*> active_documents() const;

  // stages
  void acquire();
  void translate();
  void tfmt();
  void fuse();
  void evaluate();

  // loaders
  std::map<std::string, KnowledgeRecord> load_knowledge() const;
  std::map<std::string, std::vector<CandidateTranslation>> load_candidates() const;
  std::map<std::string, DocScores> load_scores() const;
  std::map<std::string, std::vector<FusedRecord>> load_fused() const;

  bool needs_knowledge() const;
  bool wants(CandidateLabel label) const;
  GenerationSettings settings() const;

  const RunConfig& config_;
  const PipelineOverrides& overrides_;
  std::optional<RunStore> store_;
  std::unique_ptr<LlmGateway> gateway_;
  std::shared_ptr<Scorer> scorer_;
  std::shared_ptr<Scorer> oracle_scorer_;
  std::shared_ptr<Embedder> embedder_;

  std::vector<IndexedDocument> docs_;
  std::size_t corpus_entries_ = 0;
  std::vector<DocFailure> failures_;
  std::set<std::string> failed_;
  std::vector<std::string> stages_run_, stages_resumed_;
};

bool Pipeline::needs_knowledge() const {
  return wants(CandidateLabel::summarization()) || wants(CandidateLabel::entity()) || config_.tfmt;
}

bool Pipeline::wants(CandidateLabel label) const {
  return std::find(config_.candidates.begin(), config_.candidates.end(), label) !=
         config_.candidates.end();
}

GenerationSettings Pipeline::settings() const {
  GenerationSettings s;
  s.backend_id = config_.effective_backend_id();
  s.model = config_.model;
  s.temperature = 0.0;
  s.max_tokens = config_.max_tokens;
  s.summary_lang = config_.summary_lang;
  return s;
}

fs::path Pipeline::open_run_dir() {
  if (!config_.run_dir.empty()) return config_.run_dir;
  if (config_.resume) return resolve_existing_run(config_);
  auto name = RunStore::run_name(config_.corpus, config_.effective_backend_id(), utc_timestamp());
  return RunStore::create_unique(config_.runs_root, name);
}

void Pipeline::build_gateway() {
  GatewayOptions options;
  options.retry.max_attempts = config_.retry_limit;
  options.retry.base_delay = std::chrono::milliseconds(config_.retry_base_ms);
  options.max_inflight = config_.max_inflight;
  options.cache_dir = config_.effective_cache_dir();
  gateway_ = std::make_unique<LlmGateway>(options);

  std::shared_ptr<ChatBackend> backend = overrides_.backend;
  if (!backend) {
    if (config_.backend == "mock") {
      try {
        backend = MockChatBackend::from_jsonl(config_.mock_fixtures);
      } catch (const Error& e) {
        throw Error(ErrorCode::config_invalid, e.message());
      }
    } else {
      HttpBackendOptions http;
      http.base_url = config_.backend_url;
      http.api_key = api_key_from_env();
      backend = std::make_shared<HttpChatBackend>(http);
    }
  }
  gateway_->register_backend(config_.effective_backend_id(), backend);
}

void Pipeline::build_scorers() {
  if (overrides_.scorer) {
    scorer_ = overrides_.scorer;
  } else if (config_.scorer == "builtin-lexical") {
    scorer_ = std::make_shared<LexicalQeScorer>();
  } else if (config_.scorer == "builtin-chrf-oracle") {
    scorer_ = std::make_shared<ChrfOracleScorer>();
  } else {
    scorer_ = std::make_shared<HttpScorer>(config_.scorer_url);
  }
  if (overrides_.oracle_scorer) {
    oracle_scorer_ = overrides_.oracle_scorer;
  } else if (config_.scorer == "http") {
    oracle_scorer_ = std::make_shared<HttpScorer>(config_.scorer_url, true);
  } else {
    oracle_scorer_ = std::make_shared<ChrfOracleScorer>();
  }
  if (overrides_.embedder) {
    embedder_ = overrides_.embedder;
  } else if (!config_.embed_url.empty()) {
    embedder_ = std::make_shared<HttpEmbedder>(config_.embed_url);
  } else {
    embedder_ = std::make_shared<HashEmbedder>();
  }
}

void Pipeline::load_documents() {
  LoadedCorpus loaded;
  try {
    loaded = load_corpus_lenient(config_.corpus);
  } catch (const Error& e) {
    throw Error(ErrorCode::config_invalid, e.message());
  }
  corpus_entries_ = loaded.documents.size() + loaded.issues.size();
  for (const auto& issue : loaded.issues) {
    auto id = issue.doc_id.empty() ? "line:" + std::to_string(issue.line) : issue.doc_id;
    failures_.push_back({id, "load", "schema_violation",
                         "line " + std::to_string(issue.line) + ": " + issue.message});
  }
  docs_ = std::move(loaded.documents);
}

bool Pipeline::wanted(Stage s, Stage until) const {
  if (s == Stage::tfmt && !config_.tfmt) return false;
  return static_cast<int>(s) <= static_cast<int>(until);
}

void Pipeline::load_stage_failures(Stage s) {
  auto name = "stages/" + std::string(to_string(s)) + ".failures.jsonl";
  if (!store_->exists(name)) return;
  for (const auto& j : store_->read_jsonl(name)) {
    auto f = j.get<DocFailure>();
    failed_.insert(f.doc_id);
    failures_.push_back(std::move(f));
  }
}

void Pipeline::seal(Stage s, const std::vector<DocFailure>& stage_failures, const json& info) {
  const auto stage = std::string(to_string(s));
  std::vector<json> records(stage_failures.begin(), stage_failures.end());
  store_->write_jsonl(stage, "stages/" + stage + ".failures.jsonl", records);
  json marker = info.is_null() ? json::object() : info;
  marker["failures"] = stage_failures.size();
  store_->mark_done(stage, marker);
  for (const auto& f : stage_failures) {
    failed_.insert(f.doc_id);
    failures_.push_back(f);
  }
}

std::vector<const IndexedDocument*> Pipeline::active_documents() const {
  std::vector<const IndexedDocument*> out;
  for (const auto& d : docs_) {
    if (!failed_.contains(d.doc_id())) out.push_back(&d);
  }
  return out;
}

// ---- loaders ----------------------------------------------------------------

std::map<std::string, KnowledgeRecord> Pipeline::load_knowledge() const {
  std::map<std::string, KnowledgeRecord> out;
  for (const auto& j : store_->read_jsonl("knowledge.jsonl")) {
    auto rec = knowledge_record_from_json(j);
    out.emplace(rec.doc_id, std::move(rec));
  }
  return out;
}

std::map<std::string, std::vector<CandidateTranslation>> Pipeline::load_candidates() const {
  std::map<std::string, std::vector<CandidateTranslation>> out;
  for (const auto& j : store_->read_jsonl("candidates.jsonl")) {
    auto c = j.get<CandidateTranslation>();
    out[c.doc_id].push_back(std::move(c));
  }
  return out;
}

std::map<std::string, DocScores> Pipeline::load_scores() const {
  std::map<std::string, DocScores> out;
  for (const auto& j : store_->read_jsonl("scores.jsonl")) {
    auto& doc = out[j.at("doc_id").get<std::string>()];
    auto label = j.at("label").get<CandidateLabel>();
    auto index = j.at("index").get<std::size_t>();
    auto kind = j.at("kind").get<std::string>();
    ScoreTable& table = kind == kQe ? doc.qe : (doc.reference ? *doc.reference : doc.reference.emplace());
    auto& row = table[label];
    if (row.size() < index) row.resize(index, 0.0);
    row[index - 1] = j.at("score").get<double>();
  }
  return out;
}

std::map<std::string, std::vector<FusedRecord>> Pipeline::load_fused() const {
  std::map<std::string, std::vector<FusedRecord>> out;
  for (const auto& j : store_->read_jsonl("fused.jsonl")) {
    json r = {{"fused", j.at("fused_segments")},
              {"trace", j.at("trace")},
              {"candidate_set", j.at("candidate_set")}};
    out[j.at("doc_id").get<std::string>()].push_back(
        {j.at("system").get<std::string>(), r.get<FusionResult>()});
  }
  return out;
}

// ---- stages -----------------------------------------------------------------

void Pipeline::acquire() {
  auto docs = active_documents();
  std::vector<std::optional<KnowledgeRecord>> results(docs.size());
  std::vector<std::optional<DocFailure>> errors(docs.size());
  if (needs_knowledge()) {
    const auto gen = settings();
    parallel_for(docs.size(), config_.workers, [&](std::size_t i) {
      try {
        results[i] = acquire_knowledge(*gateway_, gen, *docs[i]);
      } catch (const std::exception& e) {
        errors[i] = failure_from(docs[i]->doc_id(), Stage::acquire, e);
      }
    });
  }
  std::vector<json> records;
  std::vector<DocFailure> stage_failures;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (results[i]) records.push_back(*results[i]);
    if (errors[i]) stage_failures.push_back(*errors[i]);
  }
  store_->write_jsonl("acquire", "knowledge.jsonl", records);
  seal(Stage::acquire, stage_failures, {{"records", records.size()}});
}

void Pipeline::translate() {
  auto docs = active_documents();
  auto knowledge = load_knowledge();
  const auto gen = settings();
  std::vector<std::vector<CandidateTranslation>> results(docs.size());
  std::vector<std::optional<DocFailure>> errors(docs.size());

  parallel_for(docs.size(), config_.workers, [&](std::size_t i) {
    const auto& doc = *docs[i];
    try {
      std::vector<CandidateTranslation> out;
      out.push_back(translate_document(*gateway_, gen, doc, NoKnowledge{}));
      const CandidateTranslation baseline = out.front();
      auto it = knowledge.find(doc.doc_id());
      if (it != knowledge.end()) {
        const auto& bundle = it->second.bundle;
        if (wants(CandidateLabel::summarization()) && bundle.has_summary()) {
          out.push_back(translate_document(*gateway_, gen, doc,
                                           SummaryKnowledge{*bundle.summary()}, &baseline));
        }
        if (wants(CandidateLabel::entity()) && bundle.has_entities()) {
          out.push_back(translate_document(*gateway_, gen, doc,
                                           EntityKnowledge{bundle.entities()}, &baseline));
        }
      }
      if (config_.rerank_k >= 2) {
        auto samples = sample_rerank_candidates(*gateway_, gen, doc, config_.rerank_k,
                                                config_.rerank_temperature, &baseline);
        for (auto& s : samples) out.push_back(std::move(s));
      }
      results[i] = std::move(out);
    } catch (const std::exception& e) {
      errors[i] = failure_from(doc.doc_id(), Stage::translate, e);
    }
  });

  std::vector<json> records;
  std::vector<DocFailure> stage_failures;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (errors[i]) {
      stage_failures.push_back(*errors[i]);
      continue;
    }
    for (const auto& c : results[i]) records.push_back(c);
  }
  store_->write_jsonl("translate", "candidates.jsonl", records);
  seal(Stage::translate, stage_failures, {{"records", records.size()}});
}

void Pipeline::tfmt() {
  auto docs = active_documents();
  auto knowledge = load_knowledge();
  auto members = toy_backends();
  std::vector<const TokenDistributionBackend*> backends;
  for (const auto& m : members) backends.push_back(m.get());
  const EnsembleWeights weights(config_.weights);
  if (backends.size() != weights.size()) {
    throw Error(ErrorCode::config_invalid, "token ensemble needs one weight per toy system");
  }

  std::vector<json> records;
  std::vector<DocFailure> stage_failures;
  for (const auto* doc : docs) {
    try {
      std::vector<std::string> prompts(3, render_translate(*doc, NoKnowledge{}).text);
      auto it = knowledge.find(doc->doc_id());
      if (it != knowledge.end()) {
        const auto& bundle = it->second.bundle;
        if (bundle.has_summary()) {
          prompts[1] = render_translate(*doc, SummaryKnowledge{*bundle.summary()}).text;
        }
        if (bundle.has_entities()) {
          prompts[2] = render_translate(*doc, EntityKnowledge{bundle.entities()}).text;
        }
      }
      std::vector<DecodeStep> trace;
      auto tokens = greedy_ensemble_decode(backends, prompts, weights, config_.tfmt_max_len,
                                           kToyBoundary, &trace);
      json steps = json::array();
      for (const auto& s : trace) steps.push_back(decode_step_json(s, toy_vocab()));
      records.push_back({{"doc_id", doc->doc_id()},
                         {"output", detokenize(toy_vocab(), tokens)},
                         {"trace", std::move(steps)}});
    } catch (const std::exception& e) {
      stage_failures.push_back(failure_from(doc->doc_id(), Stage::tfmt, e));
    }
  }
  store_->write_jsonl("tfmt", "tfmt.jsonl", records);
  seal(Stage::tfmt, stage_failures, {{"records", records.size()}});
}

void Pipeline::fuse() {
  auto docs = active_documents();
  auto candidates = load_candidates();

  struct Outcome {
    DocScores scores;
    std::vector<FusedRecord> fused;
  };
  std::vector<std::optional<Outcome>> results(docs.size());
  std::vector<std::optional<DocFailure>> errors(docs.size());
  std::mutex scorer_mu;  // scorers are not required to be thread-safe

  parallel_for(docs.size(), config_.workers, [&](std::size_t i) {
    const auto& doc = *docs[i];
    try {
      auto it = candidates.find(doc.doc_id());
      if (it == candidates.end()) {
        throw Error(ErrorCode::empty_candidate_set, "no candidates were generated");
      }
      const auto& all = it->second;
      Outcome out;
      ScoringOptions qe_options;
      qe_options.include_context = config_.scorer_context;
      {
        std::lock_guard lock(scorer_mu);
        out.scores.qe = score_candidates(all, doc, *scorer_, qe_options);
        if (doc.has_references()) {
          ScoringOptions ref_options;
          ref_options.with_reference = true;
          ref_options.include_context = config_.scorer_context;
          out.scores.reference = score_candidates(all, doc, *oracle_scorer_, ref_options);
        }
      }

      std::vector<CandidateTranslation> fusion_set, rerank_set;
      for (const auto& c : all) {
        if (c.label.kind == CandidateLabel::Kind::rerank_sample) rerank_set.push_back(c);
        else if (wants(c.label)) fusion_set.push_back(c);
      }
      if (fusion_set.empty()) {
        throw Error(ErrorCode::empty_candidate_set, "no requested candidate is available");
      }
      out.fused.push_back({kSystemFusion, select_best(fusion_set, out.scores.qe)});
      auto ablation = [&](CandidateLabel drop, const char* system) {
        if (!wants(drop)) return;
        std::vector<CandidateTranslation> kept;
        for (const auto& c : fusion_set) {
          if (c.label != drop) kept.push_back(c);
        }
        if (!kept.empty()) out.fused.push_back({system, select_best(kept, out.scores.qe)});
      };
      ablation(CandidateLabel::summarization(), kSystemNoSummary);
      ablation(CandidateLabel::entity(), kSystemNoEntity);
      if (!rerank_set.empty()) {
        out.fused.push_back({kSystemReranking, select_best(rerank_set, out.scores.qe)});
      }
      if (out.scores.reference) {
        out.fused.push_back({kSystemOracle, select_best(fusion_set, *out.scores.reference)});
      }
      results[i] = std::move(out);
    } catch (const std::exception& e) {
      errors[i] = failure_from(doc.doc_id(), Stage::fuse, e);
    }
  });

  std::vector<json> score_records, fused_records;
  std::vector<DocFailure> stage_failures;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (errors[i]) {
      stage_failures.push_back(*errors[i]);
      continue;
    }
    const auto& doc_id = docs[i]->doc_id();
    auto emit = [&](const ScoreTable& table, const std::string& kind) {
      for (const auto& [label, row] : table) {
        for (std::size_t k = 0; k < row.size(); ++k) {
          score_records.push_back({{"doc_id", doc_id},
                                   {"index", k + 1},
                                   {"label", label},
                                   {"score", row[k]},
                                   {"kind", kind}});
        }
      }
    };
    emit(results[i]->scores.qe, kQe);
    if (results[i]->scores.reference) emit(*results[i]->scores.reference, kReference);
    for (const auto& rec : results[i]->fused) {
      json r = rec.result;
      fused_records.push_back({{"doc_id", doc_id},
                               {"system", rec.system},
                               {"fused_segments", r["fused"]},
                               {"trace", r["trace"]},
                               {"candidate_set", r["candidate_set"]}});
    }
  }
  store_->write_jsonl("fuse", "scores.jsonl", score_records);
  store_->write_jsonl("fuse", "fused.jsonl", fused_records);
  seal(Stage::fuse, stage_failures,
       {{"scorer", scorer_->name()}, {"oracle_scorer", oracle_scorer_->name()}});
}

// ---- evaluation ---------------------------------------------------------------

// One system's output for one document: the candidate chosen per sentence.
struct SystemDoc {
  std::vector<CandidateLabel> chosen;  // index i-1 for sentence i
  std::vector<std::string> text;
};

std::string direction_of(const IndexedDocument& doc) {
  return doc.src_lang() + "→" + doc.tgt_lang();
}

void Pipeline::evaluate() {
  auto docs = active_documents();
  auto knowledge = load_knowledge();
  auto candidates = load_candidates();
  auto scores = load_scores();
  auto fused = load_fused();

  std::vector<std::string> systems = {kSystemBaseline};
  if (config_.rerank_k >= 2) systems.push_back(kSystemReranking);
  if (wants(CandidateLabel::summarization())) systems.push_back(kSystemSummary);
  if (wants(CandidateLabel::entity())) systems.push_back(kSystemEntity);
  systems.push_back(kSystemFusion);
  if (wants(CandidateLabel::summarization())) systems.push_back(kSystemNoSummary);
  if (wants(CandidateLabel::entity())) systems.push_back(kSystemNoEntity);
  bool any_reference = false;
  for (const auto* d : docs) any_reference = any_reference || d->has_references();
  if (any_reference) systems.push_back(kSystemOracle);

  std::vector<std::string> directions;
  for (const auto* d : docs) {
    auto dir = direction_of(*d);
    if (std::find(directions.begin(), directions.end(), dir) == directions.end()) {
      directions.push_back(dir);
    }
  }

  // system -> doc index -> output
  std::map<std::string, std::map<std::size_t, SystemDoc>> outputs;
  for (std::size_t di = 0; di < docs.size(); ++di) {
    const auto& doc = *docs[di];
    const auto& cands = candidates.at(doc.doc_id());
    auto by_label = [&](CandidateLabel label) -> const CandidateTranslation* {
      for (const auto& c : cands) {
        if (c.label == label) return &c;
      }
      return nullptr;
    };
    const auto* baseline = by_label(CandidateLabel::baseline());
    auto single = [&](const CandidateTranslation* c) {
      SystemDoc out;
      for (SentenceIndex i = 1; i <= doc.size(); ++i) {
        out.chosen.push_back(c->label);
        out.text.push_back(c->segments.at(i));
      }
      return out;
    };
    outputs[kSystemBaseline][di] = single(baseline);
    // A missing knowledge candidate degrades to the baseline translation.
    if (wants(CandidateLabel::summarization())) {
      const auto* s = by_label(CandidateLabel::summarization());
      outputs[kSystemSummary][di] = single(s ? s : baseline);
    }
    if (wants(CandidateLabel::entity())) {
      const auto* e = by_label(CandidateLabel::entity());
      outputs[kSystemEntity][di] = single(e ? e : baseline);
    }
    auto fit = fused.find(doc.doc_id());
    if (fit == fused.end()) continue;
    for (const auto& rec : fit->second) {
      SystemDoc out;
      for (const auto& [i, t] : rec.result.trace) {
        out.chosen.push_back(t.chosen_label);
        out.text.push_back(rec.result.fused.at(i));
      }
      outputs[rec.system][di] = std::move(out);
    }
    // Without a summary or entity candidate the ablation equals KFMT.
    for (const char* name : {kSystemNoSummary, kSystemNoEntity}) {
      if (std::find(systems.begin(), systems.end(), name) != systems.end() &&
          !outputs[name].contains(di)) {
        outputs[name][di] = outputs[kSystemFusion].at(di);
      }
    }
  }

  // metric -> rows
  std::map<std::string, std::vector<ReportRow>> tables;
  const std::vector<std::pair<std::string, std::string>> metric_titles = {
      {"qe", "Reference-free score (" + scorer_->name() + ", x100)"},
      {"reference", "Reference-based score (" + oracle_scorer_->name() + ", x100)"},
      {"bleu", "BLEU"},
      {"coherence", "Coherence (x100)"},
      {"ltcr", "LTCR (x100)"},
      {"gpt_eval", "GPT-eval"},
  };
  std::vector<DocFailure> stage_failures;
  std::map<std::string, std::map<std::string, std::vector<int>>> gpt_scores;

  for (const auto& system : systems) {
    std::map<std::string, ReportRow> rows;
    for (const auto& [metric, _] : metric_titles) rows[metric].system = system;
    for (const auto& dir : directions) {
      std::vector<double> qe, ref;
      std::vector<std::string> hyps, refs;
      std::vector<std::vector<std::string>> coherence_docs;
      LtcrCounts ltcr_total;
      for (std::size_t di = 0; di < docs.size(); ++di) {
        const auto& doc = *docs[di];
        if (direction_of(doc) != dir) continue;
        auto oit = outputs[system].find(di);
        if (oit == outputs[system].end()) continue;
        const auto& out = oit->second;
        const auto& sc = scores.at(doc.doc_id());
        for (std::size_t k = 0; k < out.chosen.size(); ++k) {
          qe.push_back(sc.qe.at(out.chosen[k])[k]);
          if (sc.reference) ref.push_back(sc.reference->at(out.chosen[k])[k]);
        }
        if (doc.has_references()) {
          for (std::size_t k = 0; k < out.text.size(); ++k) {
            hyps.push_back(out.text[k]);
            refs.push_back(doc.reference(k + 1));
          }
        }
        coherence_docs.push_back(out.text);
        auto kit = knowledge.find(doc.doc_id());
        if (kit != knowledge.end() && kit->second.bundle.has_entities()) {
          ltcr_total += ltcr_counts(doc.sentences(), out.text, kit->second.bundle.entities());
        }
        if (config_.gpt_eval && doc.has_references()) {
          for (std::size_t k = 0; k < out.text.size(); ++k) {
            try {
              auto prompt = render_gpt_eval(doc.src_lang(), doc.tgt_lang(), doc.sentence(k + 1),
                                            doc.reference(k + 1), out.text[k]);
              auto resp = gateway_->complete({config_.effective_backend_id(), config_.model,
                                              prompt, 0.0, std::nullopt, config_.max_tokens});
              gpt_scores[system][dir].push_back(parse_gpt_score(resp.content));
            } catch (const std::exception& e) {
              stage_failures.push_back(failure_from(doc.doc_id(), Stage::evaluate, e));
            }
          }
        }
      }
      if (!qe.empty()) rows["qe"].values[dir] = 100.0 * mean(qe);
      if (!ref.empty()) rows["reference"].values[dir] = 100.0 * mean(ref);
      if (!hyps.empty()) rows["bleu"].values[dir] = corpus_bleu(hyps, refs);
      try {
        rows["coherence"].values[dir] = 100.0 * corpus_coherence(coherence_docs, *embedder_);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::empty_input) throw;
      }
      if (auto r = ltcr_total.ratio()) rows["ltcr"].values[dir] = 100.0 * *r;
      auto git = gpt_scores[system].find(dir);
      if (git != gpt_scores[system].end() && !git->second.empty()) {
        rows["gpt_eval"].values[dir] = gpt_eval_aggregate(git->second);
      }
    }
    for (auto& [metric, row] : rows) tables[metric].push_back(std::move(row));
  }

  json report;
  report["config"] = config_to_json(config_, false);
  std::vector<std::string> failed_ids;
  for (const auto& f : failures_) {
    if (std::find(failed_ids.begin(), failed_ids.end(), f.doc_id) == failed_ids.end()) {
      failed_ids.push_back(f.doc_id);
    }
  }
  report["documents"] = {{"total", corpus_entries_},
                         {"completed", docs.size()},
                         {"failed", failed_ids}};
  report["systems"] = systems;
  report["directions"] = directions;

  std::string text;
  json metrics = json::object();
  for (const auto& [metric, title] : metric_titles) {
    const auto& rows = tables[metric];
    bool any = std::any_of(rows.begin(), rows.end(),
                           [](const ReportRow& r) { return !r.values.empty(); });
    if (!any) continue;
    json m = {{"title", title}, {"rows", json::array()}};
    for (const auto& row : rows) {
      json values = json::object();
      for (const auto& [dir, v] : row.values) values[dir] = v;
      m["rows"].push_back({{"system", row.system},
                           {"values", std::move(values)},
                           {"average", row.values.empty() ? json(nullptr)
                                                          : json(row_average(row.values))}});
    }
    metrics[metric] = std::move(m);
    text += title + "\n" + format_report_table(directions, rows) + "\n";
  }
  report["metrics"] = std::move(metrics);

  // Selection proportions per fused system, pooled over documents.
  json proportions = json::object();
  text += "Selection proportions\n";
  for (const auto& system : systems) {
    if (system == kSystemBaseline || system == kSystemSummary || system == kSystemEntity) continue;
    std::vector<SelectionTrace> traces;
    for (const auto& [doc_id, recs] : fused) {
      if (failed_.contains(doc_id)) continue;
      for (const auto& rec : recs) {
        if (rec.system != system) continue;
        for (const auto& [_, t] : rec.result.trace) traces.push_back(t);
      }
    }
    if (traces.empty()) continue;
    json p = json::object();
    std::string line = "  " + system + ":";
    for (const auto& [label, frac] : selection_proportions(traces)) {
      p[label.str()] = frac;
      line += " " + label.str() + "=" + format_fixed(100.0 * frac) + "%";
    }
    proportions[system] = std::move(p);
    text += line + "\n";
  }
  report["selection_proportions"] = std::move(proportions);

  // Sentence-level tie analysis against the baseline.
  json ties = json::array();
  text += "\nTie analysis vs Baseline (threshold " + format_fixed(config_.tie_threshold, 2) + ")\n";
  for (const auto& system : systems) {
    if (system == kSystemBaseline) continue;
    for (const auto& kind : {kQe, kReference}) {
      std::vector<double> a, b;
      for (std::size_t di = 0; di < docs.size(); ++di) {
        const auto& sc = scores.at(docs[di]->doc_id());
        const ScoreTable* table = kind == kQe ? &sc.qe : (sc.reference ? &*sc.reference : nullptr);
        if (!table) continue;
        auto sit = outputs[system].find(di);
        if (sit == outputs[system].end()) continue;
        const auto& base = outputs[kSystemBaseline].at(di);
        for (std::size_t k = 0; k < sit->second.chosen.size(); ++k) {
          a.push_back(table->at(sit->second.chosen[k])[k]);
          b.push_back(table->at(base.chosen[k])[k]);
        }
      }
      if (a.empty()) continue;
      auto counts = tie_compare(a, b, config_.tie_threshold);
      ties.push_back({{"system", system},
                      {"against", kSystemBaseline},
                      {"score", kind},
                      {"threshold", config_.tie_threshold},
                      {"wins", counts.wins_a},
                      {"losses", counts.wins_b},
                      {"ties", counts.ties}});
      text += "  " + system + " [" + kind + "]: win " + std::to_string(counts.wins_a) +
              ", tie " + std::to_string(counts.ties) + ", lose " +
              std::to_string(counts.wins_b) + "\n";
    }
  }
  report["tie_comparisons"] = std::move(ties);

  if (config_.tfmt && store_->exists("tfmt.jsonl")) {
    report["tfmt"] = {{"documents", store_->read_jsonl("tfmt.jsonl").size()},
                      {"weights", config_.weights}};
  }

  // Failures known at this point, evaluation ones included.
  std::vector<json> all_failures(failures_.begin(), failures_.end());
  for (const auto& f : stage_failures) all_failures.push_back(f);
  store_->write_jsonl("evaluate", "failures.jsonl", all_failures);
  store_->write_text("evaluate", "report.json", report.dump(2) + "\n");
  store_->write_text("evaluate", "report.txt", text);
  // Evaluation failures do not remove documents from the report.
  store_->mark_done("evaluate", {{"failures", stage_failures.size()}});
  for (const auto& f : stage_failures) failures_.push_back(f);
}

RunSummary Pipeline::run(Stage until) {
  validate_config(config_);
  load_documents();
  store_.emplace(open_run_dir());
  if (!store_->exists("config.json")) {
    write_file_atomic(store_->path("config.json"), config_to_json(config_, true).dump(2) + "\n");
  }
  if (config_.run_dir.empty() && !config_.resume) {
    RunStore::write_latest(config_.runs_root, store_->dir());
  }
  build_gateway();
  build_scorers();

  const std::vector<std::pair<Stage, void (Pipeline::*)()>> stages = {
      {Stage::acquire, &Pipeline::acquire}, {Stage::translate, &Pipeline::translate},
      {Stage::tfmt, &Pipeline::tfmt},       {Stage::fuse, &Pipeline::fuse},
      {Stage::evaluate, &Pipeline::evaluate}};
  for (const auto& [stage, fn] : stages) {
    if (!wanted(stage, until)) continue;
    const auto name = std::string(to_string(stage));
    if (store_->stage_done(name)) {
      if (stage != Stage::evaluate) load_stage_failures(stage);
      stages_resumed_.push_back(name);
      continue;
    }
    (this->*fn)();
    stages_run_.push_back(name);
  }
  if (store_->stage_done("evaluate") &&
      std::find(stages_resumed_.begin(), stages_resumed_.end(), "evaluate") !=
          stages_resumed_.end()) {
    // Resumed evaluation: its own failures live in failures.jsonl.
    for (const auto& j : store_->read_jsonl("failures.jsonl")) {
      auto f = j.get<DocFailure>();
      if (f.stage == "evaluate") failures_.push_back(std::move(f));
    }
  }

  RunSummary summary;
  summary.run_dir = store_->dir();
  summary.documents = corpus_entries_;
  summary.completed = active_documents().size();
  summary.failures = failures_;
  summary.gateway = gateway_->stats();
  summary.stages_run = stages_run_;
  summary.stages_resumed = stages_resumed_;
  write_file_atomic(store_->path("summary.json"), summary_to_json(summary).dump(2) + "\n");
  return summary;
}

}  // namespace

RunSummary run_experiment(const RunConfig& config, Stage until,
                          const PipelineOverrides& overrides) {
  Pipeline pipeline(config, overrides);
  return pipeline.run(until);
}

}  // namespace kfmt
