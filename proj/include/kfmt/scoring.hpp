#pragma once

#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "kfmt/http.hpp"
#include "kfmt/types.hpp"

namespace kfmt {

// Sentence-level scoring function. Higher is better; one score per request,
// in request order.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::vector<double> score(std::span<const ScoreRequest> requests) = 0;
  virtual std::string name() const = 0;
  // True when the scorer needs ScoreRequest::reference.
  virtual bool requires_reference() const { return false; }
};

// Reference-free lexical stand-in for a QE model:
// 0.5 * (shorter/longer character length) + 0.5 * chrF(hypothesis, source) / 100.
// Deterministic and in [0, 1].
class LexicalQeScorer : public Scorer {
 public:
  std::vector<double> score(std::span<const ScoreRequest> requests) override;
  std::string name() const override { return "builtin-lexical"; }
};

// chrF(hypothesis, reference) / 100. Throws missing_references when a
// request has no reference.
class ChrfOracleScorer : public Scorer {
 public:
  std::vector<double> score(std::span<const ScoreRequest> requests) override;
  std::string name() const override { return "builtin-chrf-oracle"; }
  bool requires_reference() const override { return true; }
};

// POST {base}/v1/score with {"pairs": [{source, hypothesis, reference?, context?}]},
// expecting {"scores": [...]} of the same length. Failures surface as
// scorer_unavailable (transport, 5xx) or schema_violation (4xx, bad body).
class HttpScorer : public Scorer {
 public:
  explicit HttpScorer(std::string base_url, bool reference_based = false,
                      std::chrono::seconds timeout = std::chrono::seconds(300));

  std::vector<double> score(std::span<const ScoreRequest> requests) override;
  std::string name() const override { return "http:" + base_url_; }
  bool requires_reference() const override { return reference_based_; }

  static std::string request_body(std::span<const ScoreRequest> requests);
  static std::vector<double> parse_response(const std::string& body, std::size_t expected);

 private:
  std::string base_url_;
  bool reference_based_;
  HttpJsonClient client_;
};

// ---- embeddings -------------------------------------------------------------

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
  virtual std::string name() const = 0;
};

// Hashed character-trigram counts, lowercased. Deterministic across platforms.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256);
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  std::string name() const override { return "builtin-hash"; }

 private:
  std::size_t dim_;
};

// POST {base}/v1/embed with {"texts": [...]}, expecting {"vectors": [[...]]}.
class HttpEmbedder : public Embedder {
 public:
  explicit HttpEmbedder(std::string base_url,
                        std::chrono::seconds timeout = std::chrono::seconds(300));
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  std::string name() const override { return "http:" + base_url_; }

  static std::vector<std::vector<double>> parse_response(const std::string& body,
                                                         std::size_t expected);

 private:
  std::string base_url_;
  HttpJsonClient client_;
};

}  // namespace kfmt
