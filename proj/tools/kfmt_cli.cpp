#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "kfmt/config.hpp"
#include "kfmt/error.hpp"
#include "kfmt/pipeline.hpp"
#include "kfmt/run_store.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfigError = 2;

struct Option {
  std::string key;
  std::string flag;
  std::string help;
  bool is_flag = false;
};

const std::vector<Option>& pipeline_options() {
  static const std::vector<Option> options = {
      {"corpus", "--corpus", "JSONL corpus of documents"},
      {"backend", "--backend", "mock or openai"},
      {"backend_id", "--backend-id", "backend identity used in cache keys"},
      {"backend_url", "--backend-url", "OpenAI-compatible base URL (implies --backend openai)"},
      {"model", "--model", "model name sent to the backend"},
      {"mock_fixtures", "--mock-fixtures", "JSONL fixtures for the mock backend"},
      {"max_tokens", "--max-tokens", "completion token limit"},
      {"summary_lang", "--summary-lang", "language of the generated summary"},
      {"scorer", "--scorer", "builtin-lexical, builtin-chrf-oracle or http"},
      {"scorer_url", "--scorer-url", "scoring service base URL (implies --scorer http)"},
      {"scorer_context", "--scorer-context", "send the previous target sentence as context", true},
      {"embed_url", "--embed-url", "embedding service base URL for coherence"},
      {"candidates", "--candidates", "fusion candidates, e.g. b,s,e"},
      {"rerank_k", "--rerank-k", "rerank samples per document (0 disables)"},
      {"rerank_temperature", "--rerank-temperature", "sampling temperature for rerank samples"},
      {"tfmt", "--tfmt", "also run token-level fusion with the toy models", true},
      {"tfmt_max_len", "--tfmt-max-len", "token-level fusion decode length"},
      {"weights", "--weights", "token fusion weights, e.g. 0.4,0.3,0.3"},
      {"tie_threshold", "--tie-threshold", "score difference counted as a tie"},
      {"gpt_eval", "--gpt-eval", "score fused outputs with the GPT-eval prompt", true},
      {"run_dir", "--run-dir", "run directory to create or continue"},
      {"runs_root", "--runs-root", "parent directory for new runs"},
      {"cache_dir", "--cache-dir", "response cache directory"},
      {"resume", "--resume", "continue the latest run", true},
      {"max_inflight", "--max-inflight", "concurrent backend requests"},
      {"workers", "--workers", "documents processed in parallel"},
      {"retry_limit", "--retry-limit", "attempts per backend request"},
      {"retry_base_ms", "--retry-base-ms", "first retry delay in milliseconds"},
  };
  return options;
}

struct PipelineCommand {
  CLI::App* app = nullptr;
  kfmt::Stage until = kfmt::Stage::evaluate;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
};

void add_pipeline_options(PipelineCommand& cmd) {
  cmd.app->add_option("--config", cmd.config_file, "flat key = value config file");
  for (const auto& opt : pipeline_options()) {
    if (opt.is_flag) {
      cmd.app->add_flag(opt.flag, cmd.flags[opt.key], opt.help);
    } else {
      cmd.app->add_option(opt.flag, cmd.values[opt.key], opt.help);
    }
  }
}

kfmt::ConfigValues cli_values(const PipelineCommand& cmd) {
  kfmt::ConfigValues out;
  for (const auto& opt : pipeline_options()) {
    if (cmd.app->count(opt.flag) == 0) continue;
    out[opt.key] = opt.is_flag ? "true" : cmd.values.at(opt.key);
  }
  if (out.contains("backend_url") && !out.contains("backend")) out["backend"] = "openai";
  if (out.contains("scorer_url") && !out.contains("scorer")) out["scorer"] = "http";
  return out;
}

int run_pipeline(const PipelineCommand& cmd) {
  kfmt::ConfigValues file;
  if (!cmd.config_file.empty()) file = kfmt::read_config_file(cmd.config_file);
  auto config = kfmt::make_config(file, cli_values(cmd));
  auto summary = kfmt::run_experiment(config, cmd.until);
  std::cout << kfmt::summary_to_json(summary).dump(2) << "\n";
  for (const auto& f : summary.failures) {
    std::cerr << "failed: " << f.doc_id << " [" << f.stage << "] " << f.code << ": " << f.message
              << "\n";
  }
  return summary.exit_code();
}

int show_report(const std::string& run_dir, const std::string& runs_root, bool as_json) {
  kfmt::RunConfig config;
  config.run_dir = run_dir;
  config.runs_root = runs_root;
  kfmt::RunStore store(kfmt::resolve_existing_run(config));
  if (!store.stage_done("evaluate")) {
    throw kfmt::Error(kfmt::ErrorCode::config_invalid,
                      "run " + store.dir().string() + " has no completed evaluation");
  }
  std::cout << store.read_text(as_json ? "report.json" : "report.txt");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-knowledge fusion for document-level translation with LLMs"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<PipelineCommand>> commands;
  const std::vector<std::tuple<std::string, kfmt::Stage, std::string>> stages = {
      {"acquire", kfmt::Stage::acquire, "acquire summaries and entity lexicons"},
      {"translate", kfmt::Stage::translate, "generate candidate translations"},
      {"fuse", kfmt::Stage::fuse, "score candidates and fuse per sentence"},
      {"evaluate", kfmt::Stage::evaluate, "compute metrics and write the report"},
      {"run", kfmt::Stage::evaluate, "run the full pipeline"},
  };
  for (const auto& [name, stage, help] : stages) {
    auto cmd = std::make_unique<PipelineCommand>();
    cmd->app = app.add_subcommand(name, help);
    cmd->until = stage;
    add_pipeline_options(*cmd);
    commands.push_back(std::move(cmd));
  }

  std::string report_run_dir, report_root = "runs";
  bool report_json = false;
  auto* report = app.add_subcommand("report", "print the report of a finished run");
  report->add_option("--run-dir", report_run_dir, "run directory (default: latest)");
  report->add_option("--runs-root", report_root, "parent directory of runs");
  report->add_flag("--json", report_json, "print report.json instead of the table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    if (report->parsed()) return show_report(report_run_dir, report_root, report_json);
    for (const auto& cmd : commands) {
      if (cmd->app->parsed()) return run_pipeline(*cmd);
    }
  } catch (const kfmt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitConfigError;
}
