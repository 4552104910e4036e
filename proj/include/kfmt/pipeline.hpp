#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/config.hpp"
#include "kfmt/gateway.hpp"
#include "kfmt/scoring.hpp"
#include "kfmt/types.hpp"

namespace kfmt {

// Stages in execution order. tfmt runs only when enabled in the config.
enum class Stage { acquire, translate, tfmt, fuse, evaluate };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct DocFailure {
  std::string doc_id;
  std::string stage;  // "load" for corpus lines that never became documents
  std::string code;
  std::string message;

  bool operator==(const DocFailure&) const = default;
};

void to_json(json& j, const DocFailure& f);
void from_json(const json& j, DocFailure& f);

struct RunSummary {
  std::filesystem::path run_dir;
  std::size_t documents = 0;  // corpus entries, malformed ones included
  std::size_t completed = 0;  // documents that went through every stage run
  std::vector<DocFailure> failures;
  GatewayStats gateway;
  std::vector<std::string> stages_run;
  std::vector<std::string> stages_resumed;

  // 0 success, 1 when any document failed.
  int exit_code() const { return failures.empty() ? 0 : 1; }
};

json summary_to_json(const RunSummary& s);

// Test seams: each non-null member replaces what the config would build.
struct PipelineOverrides {
  std::shared_ptr<ChatBackend> backend;
  std::shared_ptr<Scorer> scorer;
  std::shared_ptr<Scorer> oracle_scorer;
  std::shared_ptr<Embedder> embedder;
};

// Runs every stage up to and including `until`, resuming sealed stages
// from the run store. Per-document failures are collected, never thrown.
// Throws config_invalid for an unusable configuration.
RunSummary run_experiment(const RunConfig& config, Stage until = Stage::evaluate,
                          const PipelineOverrides& overrides = {});

// Run directory the config resolves to: run_dir, else with resume the
// `latest` pointer under runs_root.
std::filesystem::path resolve_existing_run(const RunConfig& config);

// Canonical system names in report order.
inline constexpr const char* kSystemBaseline = "Baseline";
inline constexpr const char* kSystemReranking = "Reranking";
inline constexpr const char* kSystemSummary = "SuMT";
inline constexpr const char* kSystemEntity = "EnMT";
inline constexpr const char* kSystemFusion = "KFMT";
inline constexpr const char* kSystemNoSummary = "KFMT w/o Sum.";
inline constexpr const char* kSystemNoEntity = "KFMT w/o Enti.";
inline constexpr const char* kSystemOracle = "KFMT_Oracle";

}  // namespace kfmt
