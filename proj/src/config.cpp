#include "kfmt/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace fs = std::filesystem;

fs::path RunConfig::effective_cache_dir() const {
  return cache_dir.empty() ? fs::path(runs_root) / "cache" : fs::path(cache_dir);
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& why) {
  throw Error(ErrorCode::config_invalid, key + " = '" + value + "': " + why);
}

bool parse_bool(const std::string& key, const std::string& v) {
  auto s = to_lower_ascii(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, v, "expected true or false");
}

long long parse_int(const std::string& key, const std::string& v, long long lo, long long hi) {
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "expected an integer");
  if (out < lo || out > hi) {
    bad_value(key, v, "must be in " + std::to_string(lo) + ".." + std::to_string(hi));
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    bad_value(key, v, "expected a number");
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& v)>;

Setter text(std::string RunConfig::*field) {
  return [field](RunConfig& c, const std::string&, const std::string& v) { c.*field = v; };
}
Setter flag(bool RunConfig::*field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) {
    c.*field = parse_bool(k, v);
  };
}
Setter count(std::size_t RunConfig::*field, long long lo) {
  return [field, lo](RunConfig& c, const std::string& k, const std::string& v) {
    c.*field = static_cast<std::size_t>(parse_int(k, v, lo, 1'000'000));
  };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"corpus", text(&RunConfig::corpus)},
      {"backend", text(&RunConfig::backend)},
      {"backend_id", text(&RunConfig::backend_id)},
      {"backend_url", text(&RunConfig::backend_url)},
      {"model", text(&RunConfig::model)},
      {"mock_fixtures", text(&RunConfig::mock_fixtures)},
      {"max_tokens",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v.empty()) c.max_tokens.reset();
         else c.max_tokens = static_cast<int>(parse_int(k, v, 1, 1'000'000));
       }},
      {"summary_lang", text(&RunConfig::summary_lang)},
      {"scorer", text(&RunConfig::scorer)},
      {"scorer_url", text(&RunConfig::scorer_url)},
      {"scorer_context", flag(&RunConfig::scorer_context)},
      {"embed_url", text(&RunConfig::embed_url)},
      {"candidates",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         std::vector<CandidateLabel> labels;
         for (const auto& part : split(v, ',')) {
           auto name = trim(part);
           if (name.empty()) continue;
           CandidateLabel label;
           try {
             label = CandidateLabel::parse(name);
           } catch (const Error&) {
             bad_value(k, v, "unknown candidate '" + name + "'");
           }
           if (label.kind == CandidateLabel::Kind::rerank_sample) {
             bad_value(k, v, "rerank samples are controlled by rerank_k");
           }
           if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
             labels.push_back(label);
           }
         }
         if (labels.empty()) bad_value(k, v, "at least one candidate is required");
         std::sort(labels.begin(), labels.end());
         c.candidates = std::move(labels);
       }},
      {"rerank_k",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.rerank_k = static_cast<int>(parse_int(k, v, 0, 64));
         if (c.rerank_k == 1) bad_value(k, v, "reranking needs at least 2 samples (0 disables)");
       }},
      {"rerank_temperature",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.rerank_temperature = parse_double(k, v);
         if (c.rerank_temperature < 0.0) bad_value(k, v, "must be >= 0");
       }},
      {"tfmt", flag(&RunConfig::tfmt)},
      {"tfmt_max_len", count(&RunConfig::tfmt_max_len, 1)},
      {"weights",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         std::vector<double> w;
         for (const auto& part : split(v, ',')) w.push_back(parse_double(k, trim(part)));
         try {
           EnsembleWeights check(w);
         } catch (const Error& e) {
           bad_value(k, v, e.message());
         }
         if (w.size() != 3) bad_value(k, v, "one weight per system (baseline, summary, entity)");
         c.weights = std::move(w);
       }},
      {"tie_threshold",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.tie_threshold = parse_double(k, v);
         if (!(c.tie_threshold >= 0.0)) bad_value(k, v, "must be >= 0");
       }},
      {"gpt_eval", flag(&RunConfig::gpt_eval)},
      {"run_dir", text(&RunConfig::run_dir)},
      {"runs_root", text(&RunConfig::runs_root)},
      {"cache_dir", text(&RunConfig::cache_dir)},
      {"resume", flag(&RunConfig::resume)},
      {"max_inflight", count(&RunConfig::max_inflight, 1)},
      {"workers", count(&RunConfig::workers, 1)},
      {"retry_limit",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.retry_limit = static_cast<int>(parse_int(k, v, 1, 100));
       }},
      {"retry_base_ms",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.retry_base_ms = static_cast<int>(parse_int(k, v, 0, 600'000));
       }},
  };
  return table;
}

std::string canonical_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

void apply(RunConfig& config, const ConfigValues& values) {
  for (const auto& [raw_key, value] : values) {
    auto key = canonical_key(raw_key);
    const auto& table = setters();
    auto it = std::find_if(table.begin(), table.end(),
                           [&](const auto& entry) { return entry.first == key; });
    if (it == table.end()) throw Error(ErrorCode::config_invalid, "unknown key '" + raw_key + "'");
    it->second(config, key, value);
  }
}

std::string labels_text(const std::vector<CandidateLabel>& labels) {
  std::vector<std::string> names;
  for (const auto& l : labels) names.push_back(l.str());
  return join(names, ",");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, _] : setters()) out.push_back(k);
    return out;
  }();
  return keys;
}

ConfigValues parse_config_text(std::string_view text) {
  ConfigValues out;
  std::size_t line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config_invalid,
                  "line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = canonical_key(trim(line.substr(0, eq)));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::config_invalid, "line " + std::to_string(line_no) + ": empty key");
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (out.contains(key)) {
      throw Error(ErrorCode::config_invalid,
                  "line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

ConfigValues read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::config_invalid, "config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

RunConfig make_config(const ConfigValues& file, const ConfigValues& cli) {
  RunConfig config;
  apply(config, file);
  apply(config, cli);
  return config;
}

void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::config_invalid, why); };
  if (c.corpus.empty()) fail("corpus is required");
  if (c.backend == "mock") {
    if (c.mock_fixtures.empty()) fail("the mock backend needs mock_fixtures");
  } else if (c.backend == "openai") {
    if (c.backend_url.empty()) fail("the openai backend needs backend_url");
  } else {
    fail("backend must be 'mock' or 'openai', got '" + c.backend + "'");
  }
  if (c.model.empty()) fail("model is required");
  if (c.scorer == "http") {
    if (c.scorer_url.empty()) fail("scorer = http needs scorer_url");
  } else if (c.scorer != "builtin-lexical" && c.scorer != "builtin-chrf-oracle") {
    fail("scorer must be builtin-lexical, builtin-chrf-oracle or http");
  }
  if (c.candidates.empty()) fail("at least one candidate is required");
  if (c.rerank_k == 1 || c.rerank_k < 0) fail("rerank_k must be 0 or >= 2");
  if (c.runs_root.empty() && c.run_dir.empty()) fail("runs_root or run_dir is required");
}

json config_to_json(const RunConfig& c, bool include_locations) {
  json j = {
      {"corpus", fs::path(c.corpus).filename().string()},
      {"backend", c.backend},
      {"backend_id", c.effective_backend_id()},
      {"backend_url", c.backend == "openai" ? json(c.backend_url) : json(nullptr)},
      {"model", c.model},
      {"mock_fixtures",
       c.mock_fixtures.empty() ? json(nullptr) : json(fs::path(c.mock_fixtures).filename().string())},
      {"max_tokens", c.max_tokens ? json(*c.max_tokens) : json(nullptr)},
      {"summary_lang", c.summary_lang},
      {"scorer", c.scorer},
      {"scorer_url", c.scorer_url.empty() ? json(nullptr) : json(c.scorer_url)},
      {"scorer_context", c.scorer_context},
      {"embed_url", c.embed_url.empty() ? json(nullptr) : json(c.embed_url)},
      {"candidates", labels_text(c.candidates)},
      {"rerank_k", c.rerank_k},
      {"rerank_temperature", c.rerank_temperature},
      {"tfmt", c.tfmt},
      {"tfmt_max_len", c.tfmt_max_len},
      {"weights", c.weights},
      {"tie_threshold", c.tie_threshold},
      {"gpt_eval", c.gpt_eval},
      {"max_inflight", c.max_inflight},
      {"workers", c.workers},
      {"retry_limit", c.retry_limit},
      {"retry_base_ms", c.retry_base_ms},
  };
  if (include_locations) {
    j["corpus"] = c.corpus;
    j["mock_fixtures"] = c.mock_fixtures.empty() ? json(nullptr) : json(c.mock_fixtures);
    j["run_dir"] = c.run_dir;
    j["runs_root"] = c.runs_root;
    j["cache_dir"] = c.effective_cache_dir().string();
    j["resume"] = c.resume;
  }
  return j;
}

}  // namespace kfmt
