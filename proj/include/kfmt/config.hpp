#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/types.hpp"

namespace kfmt {

struct RunConfig {
  std::string corpus;

  std::string backend = "mock";  // "mock" or "openai"
  std::string backend_id;        // defaults to `backend`; part of every cache key
  std::string backend_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string mock_fixtures;
  std::optional<int> max_tokens;
  std::string summary_lang = "English";

  std::string scorer = "builtin-lexical";  // builtin-lexical | builtin-chrf-oracle | http
  std::string scorer_url;
  bool scorer_context = false;
  std::string embed_url;  // empty: builtin hashed embedder

  std::vector<CandidateLabel> candidates = {CandidateLabel::baseline(),
                                            CandidateLabel::summarization(),
                                            CandidateLabel::entity()};
  int rerank_k = 3;  // 0 disables the reranking system
  double rerank_temperature = 0.7;
  bool tfmt = false;
  std::size_t tfmt_max_len = 30;
  std::vector<double> weights = {0.4, 0.3, 0.3};
  double tie_threshold = 0.08;
  bool gpt_eval = false;

  std::string run_dir;  // explicit run directory
  std::string runs_root = "runs";
  std::string cache_dir;  // defaults to <runs_root>/cache
  bool resume = false;
  std::size_t max_inflight = 4;
  std::size_t workers = 4;
  int retry_limit = 3;
  int retry_base_ms = 500;

  std::string effective_backend_id() const { return backend_id.empty() ? backend : backend_id; }
  std::filesystem::path effective_cache_dir() const;
};

using ConfigValues = std::map<std::string, std::string>;

// Flat "key = value" lines. '#' starts a comment line; values may be wrapped
// in double quotes. Throws config_invalid naming the offending line.
ConfigValues parse_config_text(std::string_view text);
ConfigValues read_config_file(const std::filesystem::path& path);

// Defaults overlaid by `file` then `cli`. Keys use underscores; dashes are
// accepted. Unknown keys and bad values throw config_invalid.
RunConfig make_config(const ConfigValues& file, const ConfigValues& cli);

// Cross-field checks (backend needs fixtures or URL, scorer URL present...).
void validate_config(const RunConfig& config);

// Every field. With include_locations=false the run and cache paths are
// left out, so runs that differ only in where they write compare equal.
json config_to_json(const RunConfig& config, bool include_locations = true);

// Known configuration keys, in documentation order.
const std::vector<std::string>& config_keys();

}  // namespace kfmt
