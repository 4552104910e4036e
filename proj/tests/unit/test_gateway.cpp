#include <atomic>
#include <future>
#include <thread>

#include "doctest.h"
#include "kfmt/gateway.hpp"
#include "kfmt/text.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace kfmt;
using namespace std::chrono_literals;

namespace {

CompletionRequest request(std::string prompt, std::optional<long long> seed = std::nullopt) {
  return CompletionRequest{"mock", "m", PromptText{std::move(prompt), TemplateId::summarize}, 0.0,
                           seed, std::nullopt};
}

GatewayOptions fast_options(std::optional<std::filesystem::path> cache = std::nullopt) {
  GatewayOptions o;
  o.retry.base_delay = 0ms;
  o.cache_dir = std::move(cache);
  return o;
}

ErrorCode code_of(LlmGateway& gw, const CompletionRequest& req) {
  try {
    gw.complete(req);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::zero_vector;
}

}  // namespace

TEST_SUITE("gateway") {

TEST_CASE("cache key covers every request field") {
  auto base = request("p", 1);
  base.max_tokens = 10;
  const auto k = cache_key(base);
  CHECK(k.size() == 64);
  CHECK(cache_key(base) == k);

  auto v = base;
  v.backend_id = "other";
  CHECK(cache_key(v) != k);
  v = base;
  v.model = "m2";
  CHECK(cache_key(v) != k);
  v = base;
  v.prompt.text = "p ";
  CHECK(cache_key(v) != k);
  v = base;
  v.temperature = 0.7;
  CHECK(cache_key(v) != k);
  v = base;
  v.seed = 2;
  CHECK(cache_key(v) != k);
  v = base;
  v.seed.reset();
  CHECK(cache_key(v) != k);
  v = base;
  v.max_tokens.reset();
  CHECK(cache_key(v) != k);
  v = base;
  v.prompt.template_id = TemplateId::gpt_eval;
  CHECK(cache_key(v) == k);
}

TEST_CASE("mock answers by prompt hash with seeded fallback") {
  auto mock = std::make_shared<MockChatBackend>();
  mock->add_for_prompt("hello", "plain");
  mock->add_for_prompt("hello", "seeded", 2);
  LlmGateway gw(fast_options());
  gw.register_backend("mock", mock);

  CHECK(gw.complete(request("hello")).content == "plain");
  CHECK(gw.complete(request("hello", 2)).content == "seeded");
  CHECK(gw.complete(request("hello", 3)).content == "plain");
  CHECK(code_of(gw, request("unknown")) == ErrorCode::backend_rejected);
}

TEST_CASE("mock fixture file") {
  kfmt_test::TempDir tmp;
  auto path = tmp / "mock.jsonl";
  kfmt_test::write_file(path, "{\"prompt_sha256\": \"" + sha256_hex("q") +
                                  "\", \"content\": \"a\"}\n\n{\"prompt_sha256\": \"" +
                                  sha256_hex("q") + "\", \"content\": \"b\", \"seed\": 5}\n");
  auto mock = MockChatBackend::from_jsonl(path);
  CHECK(mock->complete(ChatCall{"m", "q", 0.0, std::nullopt, std::nullopt}) == "a");
  CHECK(mock->complete(ChatCall{"m", "q", 0.7, 5, std::nullopt}) == "b");

  kfmt_test::write_file(path, "{\"content\": \"a\"}\n");
  CHECK_THROWS_AS(MockChatBackend::from_jsonl(path), Error);
  CHECK_THROWS_AS(MockChatBackend::from_jsonl(tmp / "absent.jsonl"), Error);
}

TEST_CASE("transient failures are retried up to the limit") {
  auto mock = std::make_shared<MockChatBackend>();
  mock->add_for_prompt("p", "ok");
  LlmGateway gw(fast_options());
  gw.register_backend("mock", mock);

  mock->fail_next(2);
  auto resp = gw.complete(request("p"));
  CHECK(resp.content == "ok");
  CHECK(resp.attempts == 3);
  CHECK(gw.stats().backend_calls == 3);

  mock->fail_next(3);
  try {
    gw.complete(request("p"));
    FAIL("expected failure");
  } catch (const GatewayError& e) {
    CHECK(e.code() == ErrorCode::backend_unreachable);
    CHECK(e.attempts() == 3);
  }
}

TEST_CASE("non-transient failures are not retried") {
  auto mock = std::make_shared<MockChatBackend>();
  mock->fail_always(false);
  LlmGateway gw(fast_options());
  gw.register_backend("mock", mock);
  try {
    gw.complete(request("p"));
    FAIL("expected failure");
  } catch (const GatewayError& e) {
    CHECK(e.code() == ErrorCode::backend_rejected);
    CHECK(e.attempts() == 1);
  }
  CHECK(mock->calls() == 1);
}

TEST_CASE("unknown backend and bad temperature") {
  LlmGateway gw(fast_options());
  CHECK(code_of(gw, request("p")) == ErrorCode::backend_not_registered);
  gw.register_backend("mock", std::make_shared<MockChatBackend>());
  auto req = request("p");
  req.temperature = -1;
  CHECK(code_of(gw, req) == ErrorCode::invalid_argument);
  GatewayOptions bad;
  bad.retry.max_attempts = 0;
  CHECK_THROWS_AS(LlmGateway{bad}, Error);
}

TEST_CASE("cache hit skips the backend and survives a new gateway") {
  kfmt_test::TempDir tmp;
  auto mock = std::make_shared<MockChatBackend>();
  mock->add_for_prompt("p", "first");
  {
    LlmGateway gw(fast_options(tmp.path()));
    gw.register_backend("mock", mock);
    auto a = gw.complete(request("p"));
    CHECK_FALSE(a.cached);
    auto b = gw.complete(request("p"));
    CHECK(b.cached);
    CHECK(b.content == "first");
    CHECK(b.created_at == a.created_at);
    CHECK(gw.stats().backend_calls == 1);
    CHECK(gw.stats().cache_hits == 1);
  }
  mock->add_for_prompt("p", "changed");
  LlmGateway again(fast_options(tmp.path()));
  again.register_backend("mock", mock);
  auto c = again.complete(request("p"));
  CHECK(c.cached);
  CHECK(c.content == "first");
  CHECK(again.stats().backend_calls == 0);

  auto key = cache_key(request("p"));
  ResponseCache cache(tmp.path());
  auto entry = cache.get(key);
  REQUIRE(entry);
  CHECK(entry->request["prompt_sha256"] == sha256_hex("p"));
  CHECK(entry->request["template_id"] == "summarize");
}

TEST_CASE("failures are never cached") {
  kfmt_test::TempDir tmp;
  auto mock = std::make_shared<MockChatBackend>();
  mock->add_for_prompt("p", "ok");
  mock->fail_always(false);
  LlmGateway gw(fast_options(tmp.path()));
  gw.register_backend("mock", mock);
  CHECK(code_of(gw, request("p")) == ErrorCode::backend_rejected);
  CHECK_FALSE(ResponseCache(tmp.path()).get(cache_key(request("p"))));
}

TEST_CASE("corrupt cache entry is reported") {
  kfmt_test::TempDir tmp;
  ResponseCache cache(tmp.path());
  auto key = cache_key(request("p"));
  cache.put(key, CacheEntry{"x", "t", json::object()});
  auto file = tmp.path() / key.substr(0, 2) / (key + ".json");
  REQUIRE(std::filesystem::exists(file));
  kfmt_test::write_file(file, "{not json");
  CHECK_THROWS_AS(cache.get(key), Error);
}

TEST_CASE("in-flight requests never exceed the limit") {
  auto mock = std::make_shared<MockChatBackend>();
  for (int i = 0; i < 16; ++i) mock->add_for_prompt("p" + std::to_string(i), "ok");
  mock->set_latency(20ms);
  auto opts = fast_options();
  opts.max_inflight = 2;
  LlmGateway gw(opts);
  gw.register_backend("mock", mock);

  std::vector<std::future<CompletionResponse>> futures;
  for (int i = 0; i < 16; ++i) {
    futures.push_back(std::async(std::launch::async,
                                 [&gw, i] { return gw.complete(request("p" + std::to_string(i))); }));
  }
  for (auto& f : futures) CHECK(f.get().content == "ok");
  CHECK(mock->max_inflight_observed() <= 2);
  CHECK(mock->max_inflight_observed() >= 1);
  CHECK(gw.stats().completions == 16);
}

TEST_CASE("seed is dropped for backends that ignore it") {
  struct NoSeed : ChatBackend {
    std::optional<long long> seen = -1;
    std::string complete(const ChatCall& call) override {
      seen = call.seed;
      return "x";
    }
  };
  auto backend = std::make_shared<NoSeed>();
  LlmGateway gw(fast_options());
  gw.register_backend("mock", backend);
  auto resp = gw.complete(request("p", 4));
  CHECK_FALSE(resp.seed_honored);
  CHECK_FALSE(backend->seen.has_value());
  CHECK_FALSE(gw.supports_seed("mock"));
}

TEST_CASE("chat request body and response extraction") {
  auto body = json::parse(HttpChatBackend::request_body(ChatCall{"gpt", "hi", 0.7, 3, 50}));
  CHECK(body["model"] == "gpt");
  CHECK(body["messages"] == json::array({{{"role", "user"}, {"content", "hi"}}}));
  CHECK(body["temperature"] == 0.7);
  CHECK(body["seed"] == 3);
  CHECK(body["max_tokens"] == 50);
  auto plain = json::parse(HttpChatBackend::request_body(ChatCall{"gpt", "hi", 0.0, {}, {}}));
  CHECK_FALSE(plain.contains("seed"));
  CHECK_FALSE(plain.contains("max_tokens"));

  CHECK(HttpChatBackend::extract_content(
            R"({"choices":[{"message":{"role":"assistant","content":"out"}}]})") == "out");
  CHECK_THROWS_AS(HttpChatBackend::extract_content("nope"), BackendFailure);
  CHECK_THROWS_AS(HttpChatBackend::extract_content(R"({"choices":[]})"), BackendFailure);
}

TEST_CASE("http chat backend against a stub server") {
  kfmt_test::StubServer stub;
  std::atomic<int> hits{0};
  std::atomic<int> fail_first{1};
  std::string seen_auth;
  std::string seen_body;
  std::mutex mu;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req,
                                                  httplib::Response& res) {
    ++hits;
    {
      std::lock_guard lock(mu);
      seen_auth = req.get_header_value("Authorization");
      seen_body = req.body;
    }
    if (fail_first-- > 0) {
      res.status = 503;
      res.set_content("busy", "text/plain");
      return;
    }
    auto in = json::parse(req.body);
    std::string prompt = in["messages"][0]["content"];
    if (prompt == "reject") {
      res.status = 400;
      res.set_content("{\"error\":\"bad\"}", "application/json");
      return;
    }
    json out = {{"choices", json::array({{{"message", {{"content", "echo:" + prompt}}}}})}};
    res.set_content(out.dump(), "application/json");
  });
  stub.start();

  auto backend = std::make_shared<HttpChatBackend>(
      HttpBackendOptions{stub.url("/v1"), "secret", true, std::chrono::seconds(5)});
  LlmGateway gw(fast_options());
  gw.register_backend("mock", backend);

  auto resp = gw.complete(request("hello", 9));
  CHECK(resp.content == "echo:hello");
  CHECK(resp.attempts == 2);
  CHECK(hits == 2);
  {
    std::lock_guard lock(mu);
    CHECK(seen_auth == "Bearer secret");
    CHECK(json::parse(seen_body)["seed"] == 9);
  }
  CHECK(code_of(gw, request("reject")) == ErrorCode::backend_rejected);
}

TEST_CASE("unreachable http backend is retried then reported") {
  kfmt_test::StubServer stub;
  stub.start();
  auto url = stub.url("/v1");
  stub.server().stop();

  auto backend = std::make_shared<HttpChatBackend>(
      HttpBackendOptions{url, "", true, std::chrono::seconds(2)});
  LlmGateway gw(fast_options());
  gw.register_backend("mock", backend);
  try {
    gw.complete(request("p"));
    FAIL("expected failure");
  } catch (const GatewayError& e) {
    CHECK(e.code() == ErrorCode::backend_unreachable);
    CHECK(e.attempts() == 3);
  }
}

}  // TEST_SUITE
