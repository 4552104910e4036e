#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kfmt/error.hpp"
#include "kfmt/http.hpp"
#include "kfmt/prompts.hpp"

namespace kfmt {

struct CompletionRequest {
  std::string backend_id;
  std::string model;
  PromptText prompt;
  double temperature = 0.0;
  std::optional<long long> seed;
  std::optional<int> max_tokens;
};

struct CompletionResponse {
  std::string content;
  bool cached = false;
  int attempts = 1;
  std::string created_at;    // when the content was produced by the backend
  bool seed_honored = true;  // false when a seed was requested but the backend ignores seeds
};

// Stable hex digest over every field that can change a completion.
std::string cache_key(const CompletionRequest& req);

// What a backend sees: the request minus routing and cache concerns.
struct ChatCall {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  std::optional<long long> seed;
  std::optional<int> max_tokens;
};

// Thrown by backends. Transient failures are retried by the gateway.
class BackendFailure : public std::runtime_error {
 public:
  BackendFailure(bool transient, const std::string& what)
      : std::runtime_error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const ChatCall& call) = 0;
  virtual bool supports_seed() const { return false; }
};

// ---- OpenAI-compatible HTTP backend -----------------------------------------

struct HttpBackendOptions {
  std::string base_url;  // e.g. "https://api.openai.com/v1"
  std::string api_key;   // sent as a bearer token when non-empty
  bool supports_seed = true;
  std::chrono::seconds timeout{120};
};

// API key from KFMT_API_KEY, falling back to OPENAI_API_KEY.
std::string api_key_from_env();

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendOptions options);

  std::string complete(const ChatCall& call) override;
  bool supports_seed() const override { return options_.supports_seed; }

  // Request body for the chat-completions endpoint.
  static std::string request_body(const ChatCall& call);
  // choices[0].message.content, or BackendFailure(non-transient).
  static std::string extract_content(const std::string& body);

 private:
  HttpBackendOptions options_;
  HttpJsonClient client_;
};

// ---- scripted mock ----------------------------------------------------------

// Answers from a fixture table keyed by the SHA-256 of the prompt text and,
// optionally, the seed. A seeded lookup falls back to the unseeded entry.
class MockChatBackend : public ChatBackend {
 public:
  MockChatBackend() = default;

  // JSONL of {"prompt_sha256": ..., "content": ..., "seed"?: int}.
  static std::shared_ptr<MockChatBackend> from_jsonl(const std::filesystem::path& path);

  void add(std::string prompt_sha256, std::string content,
           std::optional<long long> seed = std::nullopt);
  void add_for_prompt(std::string_view prompt, std::string content,
                      std::optional<long long> seed = std::nullopt);

  // The next `n` calls throw a transient failure before consulting fixtures.
  void fail_next(int n);
  void fail_always(bool transient = true);
  // Artificial latency per call, for in-flight instrumentation.
  void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

  std::string complete(const ChatCall& call) override;
  bool supports_seed() const override { return true; }

  std::size_t calls() const noexcept { return calls_.load(); }
  std::size_t max_inflight_observed() const noexcept { return max_inflight_.load(); }

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::optional<long long>>, std::string> table_;
  int fail_next_ = 0;
  std::optional<bool> fail_always_;
  std::chrono::milliseconds latency_{0};
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> inflight_{0};
  std::atomic<std::size_t> max_inflight_{0};
};

// ---- cache ------------------------------------------------------------------

struct CacheEntry {
  std::string content;
  std::string created_at;
  json request;  // metadata only, never consulted for lookup
};

// One file per key under `root/<k0k1>/<key>.json`; writes go to a temporary
// file that is renamed into place.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  std::optional<CacheEntry> get(const std::string& key) const;
  void put(const std::string& key, const CacheEntry& entry) const;

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path root_;
};

// ---- gateway ----------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};
};

struct GatewayOptions {
  RetryPolicy retry;
  std::size_t max_inflight = 4;
  std::optional<std::filesystem::path> cache_dir;
};

class GatewayError : public Error {
 public:
  GatewayError(ErrorCode code, const std::string& message, int attempts)
      : Error(code, message), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

// Counting semaphore with a runtime bound.
class InflightLimiter {
 public:
  explicit InflightLimiter(std::size_t limit);
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t limit_;
  std::size_t used_ = 0;
};

struct GatewayStats {
  std::size_t backend_calls = 0;  // attempts that reached a backend
  std::size_t cache_hits = 0;
  std::size_t completions = 0;
};

class LlmGateway {
 public:
  explicit LlmGateway(GatewayOptions options = {});

  void register_backend(std::string id, std::shared_ptr<ChatBackend> backend);
  bool has_backend(const std::string& id) const;
  bool supports_seed(const std::string& id) const;

  // Thread-safe. Throws GatewayError with backend_unreachable,
  // backend_rejected, backend_not_registered or cache_io_error.
  CompletionResponse complete(const CompletionRequest& req);

  GatewayStats stats() const;

 private:
  std::shared_ptr<ChatBackend> backend_for(const std::string& id) const;

  GatewayOptions options_;
  std::optional<ResponseCache> cache_;
  InflightLimiter limiter_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<ChatBackend>> backends_;
  std::atomic<std::size_t> backend_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> completions_{0};
};

}  // namespace kfmt
