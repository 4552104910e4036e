#include "kfmt/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "kfmt/error.hpp"
#include "kfmt/metrics.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

std::vector<double> LexicalQeScorer::score(std::span<const ScoreRequest> requests) {
  std::vector<double> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    double ls = static_cast<double>(utf8_chars(r.source()).size());
    double lh = static_cast<double>(utf8_chars(r.hypothesis()).size());
    double ratio = std::min(ls, lh) / std::max(ls, lh);
    out.push_back(0.5 * ratio + 0.5 * chrf(r.hypothesis(), r.source()) / 100.0);
  }
  return out;
}

std::vector<double> ChrfOracleScorer::score(std::span<const ScoreRequest> requests) {
  std::vector<double> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    if (!r.reference() || is_blank(*r.reference())) {
      throw Error(ErrorCode::missing_references, "chrF oracle scoring needs a reference");
    }
    out.push_back(chrf(r.hypothesis(), *r.reference()) / 100.0);
  }
  return out;
}

namespace {

[[noreturn]] void throw_http_failure(const HttpResult& res, const std::string& what) {
  if (res.status == 0) {
    throw Error(ErrorCode::scorer_unavailable, what + ": " + res.transport_error);
  }
  auto code = res.status >= 500 ? ErrorCode::scorer_unavailable : ErrorCode::schema_violation;
  throw Error(code, what + ": HTTP " + std::to_string(res.status) + " " + res.body.substr(0, 300));
}

}  // namespace

HttpScorer::HttpScorer(std::string base_url, bool reference_based, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), reference_based_(reference_based),
      client_(base_url_, timeout) {}

std::string HttpScorer::request_body(std::span<const ScoreRequest> requests) {
  json pairs = json::array();
  for (const auto& r : requests) pairs.push_back(json(r));
  return json{{"pairs", std::move(pairs)}}.dump();
}

std::vector<double> HttpScorer::parse_response(const std::string& body, std::size_t expected) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("scores") || !j["scores"].is_array()) {
    throw Error(ErrorCode::schema_violation, "score response lacks a \"scores\" array");
  }
  const auto& scores = j["scores"];
  if (scores.size() != expected) {
    throw Error(ErrorCode::schema_violation, "score response has " +
                                                 std::to_string(scores.size()) + " scores for " +
                                                 std::to_string(expected) + " pairs");
  }
  std::vector<double> out;
  out.reserve(expected);
  for (const auto& s : scores) {
    if (!s.is_number() || !std::isfinite(s.get<double>())) {
      throw Error(ErrorCode::schema_violation, "non-numeric score " + s.dump());
    }
    out.push_back(s.get<double>());
  }
  return out;
}

std::vector<double> HttpScorer::score(std::span<const ScoreRequest> requests) {
  if (requests.empty()) return {};
  auto res = client_.post("/v1/score", request_body(requests));
  if (!res.ok()) throw_http_failure(res, "scorer " + base_url_);
  return parse_response(res.body, requests.size());
}

HashEmbedder::HashEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error(ErrorCode::invalid_argument, "embedding dimension must be > 0");
}

std::vector<std::vector<double>> HashEmbedder::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dim_, 0.0);
    auto chars = utf8_chars(" " + to_lower_ascii(trim(text)) + " ");
    for (std::size_t i = 0; i + 3 <= chars.size(); ++i) {
      // FNV-1a over the trigram bytes.
      std::uint64_t h = 1469598103934665603ull;
      for (std::size_t k = i; k < i + 3; ++k) {
        for (unsigned char c : chars[k]) {
          h ^= c;
          h *= 1099511628211ull;
        }
      }
      v[h % dim_] += 1.0;
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), client_(base_url_, timeout) {}

std::vector<std::vector<double>> HttpEmbedder::parse_response(const std::string& body,
                                                              std::size_t expected) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("vectors") || !j["vectors"].is_array()) {
    throw Error(ErrorCode::schema_violation, "embed response lacks a \"vectors\" array");
  }
  const auto& vectors = j["vectors"];
  if (vectors.size() != expected) {
    throw Error(ErrorCode::schema_violation, "embed response has " +
                                                 std::to_string(vectors.size()) + " vectors for " +
                                                 std::to_string(expected) + " texts");
  }
  std::vector<std::vector<double>> out;
  out.reserve(expected);
  for (const auto& v : vectors) {
    if (!v.is_array() || v.empty()) throw Error(ErrorCode::schema_violation, "empty vector");
    std::vector<double> row;
    row.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number()) throw Error(ErrorCode::schema_violation, "non-numeric vector entry");
      row.push_back(x.get<double>());
    }
    if (!out.empty() && row.size() != out.front().size()) {
      throw Error(ErrorCode::schema_violation, "vectors differ in dimension");
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::vector<double>> HttpEmbedder::embed(std::span<const std::string> texts) {
  if (texts.empty()) return {};
  json body = {{"texts", json(std::vector<std::string>(texts.begin(), texts.end()))}};
  auto res = client_.post("/v1/embed", body.dump());
  if (!res.ok()) throw_http_failure(res, "embedder " + base_url_);
  return parse_response(res.body, texts.size());
}

}  // namespace kfmt
