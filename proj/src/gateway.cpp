#include "kfmt/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "kfmt/text.hpp"

namespace kfmt {

namespace fs = std::filesystem;

std::string cache_key(const CompletionRequest& req) {
  json canonical = {
      {"backend_id", req.backend_id},
      {"model", req.model},
      {"prompt", req.prompt.text},
      {"temperature", req.temperature},
      {"seed", req.seed ? json(*req.seed) : json(nullptr)},
      {"max_tokens", req.max_tokens ? json(*req.max_tokens) : json(nullptr)},
  };
  return sha256_hex(canonical.dump());
}

// ---- HTTP backend -----------------------------------------------------------

std::string api_key_from_env() {
  for (const char* name : {"KFMT_API_KEY", "OPENAI_API_KEY"}) {
    if (const char* v = std::getenv(name); v && *v) return v;
  }
  return {};
}

HttpChatBackend::HttpChatBackend(HttpBackendOptions options)
    : options_(std::move(options)), client_(options_.base_url, options_.timeout) {}

std::string HttpChatBackend::request_body(const ChatCall& call) {
  json body = {
      {"model", call.model},
      {"messages", json::array({{{"role", "user"}, {"content", call.prompt}}})},
      {"temperature", call.temperature},
  };
  if (call.seed) body["seed"] = *call.seed;
  if (call.max_tokens) body["max_tokens"] = *call.max_tokens;
  return body.dump();
}

std::string HttpChatBackend::extract_content(const std::string& body) {
  json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded()) throw BackendFailure(false, "response is not JSON");
  try {
    const auto& content = parsed.at("choices").at(0).at("message").at("content");
    if (content.is_null()) return {};
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw BackendFailure(false, std::string("malformed chat response: ") + e.what());
  }
}

std::string HttpChatBackend::complete(const ChatCall& call) {
  HttpHeaders headers;
  if (!options_.api_key.empty()) {
    headers.emplace_back("Authorization", "Bearer " + options_.api_key);
  }
  auto res = client_.post("/chat/completions", request_body(call), headers);
  if (res.status == 0) {
    throw BackendFailure(true, "transport error: " + res.transport_error);
  }
  if (!res.ok()) {
    bool transient = res.status == 408 || res.status == 409 || res.status == 429 ||
                     res.status >= 500;
    throw BackendFailure(transient, "HTTP " + std::to_string(res.status) + ": " +
                                        res.body.substr(0, 300));
  }
  return extract_content(res.body);
}

// ---- mock -------------------------------------------------------------------

std::shared_ptr<MockChatBackend> MockChatBackend::from_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::missing_file, "mock fixture not found: " + path.string());
  auto mock = std::make_shared<MockChatBackend>();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || !rec.contains("prompt_sha256") ||
        !rec.contains("content")) {
      throw Error(ErrorCode::schema_violation,
                  path.string() + ":" + std::to_string(line_no) + ": bad mock fixture record");
    }
    std::optional<long long> seed;
    if (rec.contains("seed") && !rec["seed"].is_null()) seed = rec["seed"].get<long long>();
    mock->add(rec["prompt_sha256"].get<std::string>(), rec["content"].get<std::string>(), seed);
  }
  return mock;
}

void MockChatBackend::add(std::string prompt_sha256, std::string content,
                          std::optional<long long> seed) {
  std::lock_guard lock(mu_);
  table_.insert_or_assign({std::move(prompt_sha256), seed}, std::move(content));
}

void MockChatBackend::add_for_prompt(std::string_view prompt, std::string content,
                                     std::optional<long long> seed) {
  add(sha256_hex(prompt), std::move(content), seed);
}

void MockChatBackend::fail_next(int n) {
  std::lock_guard lock(mu_);
  fail_next_ = n;
}

void MockChatBackend::fail_always(bool transient) {
  std::lock_guard lock(mu_);
  fail_always_ = transient;
}

std::string MockChatBackend::complete(const ChatCall& call) {
  ++calls_;
  auto now = ++inflight_;
  auto prev = max_inflight_.load();
  while (now > prev && !max_inflight_.compare_exchange_weak(prev, now)) {
  }
  struct Leave {
    std::atomic<std::size_t>& n;
    ~Leave() { --n; }
  } leave{inflight_};

  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  std::lock_guard lock(mu_);
  if (fail_always_) throw BackendFailure(*fail_always_, "mock configured to fail");
  if (fail_next_ > 0) {
    --fail_next_;
    throw BackendFailure(true, "mock transient failure");
  }
  auto hash = sha256_hex(call.prompt);
  auto it = table_.find({hash, call.seed});
  if (it == table_.end() && call.seed) it = table_.find({hash, std::nullopt});
  if (it == table_.end()) {
    throw BackendFailure(false, "mock has no fixture for prompt sha256 " + hash);
  }
  return it->second;
}

// ---- cache ------------------------------------------------------------------

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(ErrorCode::cache_io_error, "cannot create cache dir " + root_.string());
}

fs::path ResponseCache::path_for(const std::string& key) const {
  return root_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::get(const std::string& key) const {
  auto path = path_for(key);
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::cache_io_error, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded() || !j.contains("content") || j.value("key", "") != key) {
    throw Error(ErrorCode::cache_io_error, "corrupt cache entry " + path.string());
  }
  return CacheEntry{j["content"].get<std::string>(), j.value("created_at", ""),
                    j.value("request", json::object())};
}

void ResponseCache::put(const std::string& key, const CacheEntry& entry) const {
  auto path = path_for(key);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw Error(ErrorCode::cache_io_error, "cannot create " + path.parent_path().string());

  thread_local std::mt19937_64 rng{std::random_device{}()};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rng());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::cache_io_error, "cannot write " + tmp.string());
    json j = {{"key", key},
              {"content", entry.content},
              {"created_at", entry.created_at},
              {"request", entry.request}};
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::cache_io_error, "short write " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::cache_io_error, "cannot rename into " + path.string());
  }
}

// ---- gateway ----------------------------------------------------------------

InflightLimiter::InflightLimiter(std::size_t limit) : limit_(std::max<std::size_t>(1, limit)) {}

void InflightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return used_ < limit_; });
  ++used_;
}

void InflightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --used_;
  }
  cv_.notify_one();
}

LlmGateway::LlmGateway(GatewayOptions options)
    : options_(std::move(options)), limiter_(options_.max_inflight) {
  if (options_.retry.max_attempts < 1) {
    throw Error(ErrorCode::config_invalid, "retry limit must be >= 1");
  }
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
}

void LlmGateway::register_backend(std::string id, std::shared_ptr<ChatBackend> backend) {
  std::lock_guard lock(mu_);
  backends_[std::move(id)] = std::move(backend);
}

bool LlmGateway::has_backend(const std::string& id) const {
  std::lock_guard lock(mu_);
  return backends_.contains(id);
}

bool LlmGateway::supports_seed(const std::string& id) const {
  return backend_for(id)->supports_seed();
}

std::shared_ptr<ChatBackend> LlmGateway::backend_for(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = backends_.find(id);
  if (it == backends_.end()) {
    throw GatewayError(ErrorCode::backend_not_registered, "no backend '" + id + "'", 0);
  }
  return it->second;
}

CompletionResponse LlmGateway::complete(const CompletionRequest& req) {
  if (req.temperature < 0.0) {
    throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
  }
  auto backend = backend_for(req.backend_id);
  ++completions_;
  const auto key = cache_key(req);
  const bool seed_honored = !req.seed || backend->supports_seed();

  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++cache_hits_;
      return CompletionResponse{hit->content, true, 1, hit->created_at, seed_honored};
    }
  }

  ChatCall call{req.model, req.prompt.text, req.temperature,
                seed_honored ? req.seed : std::nullopt, req.max_tokens};

  auto delay = options_.retry.base_delay;
  std::string last_error;
  for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
    std::string content;
    try {
      limiter_.acquire();
      struct Release {
        InflightLimiter& l;
        ~Release() { l.release(); }
      } release{limiter_};
      ++backend_calls_;
      content = backend->complete(call);
    } catch (const BackendFailure& f) {
      if (!f.transient()) {
        throw GatewayError(ErrorCode::backend_rejected, f.what(), attempt);
      }
      last_error = f.what();
      if (attempt == options_.retry.max_attempts) break;
      if (delay.count() > 0) std::this_thread::sleep_for(delay);
      delay = std::min(options_.retry.max_delay,
                       std::chrono::milliseconds(static_cast<long long>(
                           static_cast<double>(delay.count()) * options_.retry.multiplier)));
      continue;
    }

    CompletionResponse resp{std::move(content), false, attempt, utc_timestamp(), seed_honored};
    if (cache_) {
      json meta = {{"backend_id", req.backend_id},
                   {"model", req.model},
                   {"template_id", std::string(to_string(req.prompt.template_id))},
                   {"prompt_sha256", sha256_hex(req.prompt.text)},
                   {"temperature", req.temperature},
                   {"seed", req.seed ? json(*req.seed) : json(nullptr)},
                   {"max_tokens", req.max_tokens ? json(*req.max_tokens) : json(nullptr)}};
      cache_->put(key, CacheEntry{resp.content, resp.created_at, std::move(meta)});
    }
    return resp;
  }
  throw GatewayError(ErrorCode::backend_unreachable,
                     "backend '" + req.backend_id + "' failed after " +
                         std::to_string(options_.retry.max_attempts) +
                         " attempts: " + last_error,
                     options_.retry.max_attempts);
}

GatewayStats LlmGateway::stats() const {
  return GatewayStats{backend_calls_.load(), cache_hits_.load(), completions_.load()};
}

}  // namespace kfmt
