#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/types.hpp"

namespace kfmt {

using TokenId = std::size_t;

// Next-token distribution over a fixed vocabulary, conditioned on a prompt
// and the tokens generated so far.
class TokenDistributionBackend {
 public:
  virtual ~TokenDistributionBackend() = default;
  virtual const std::vector<std::string>& vocab() const = 0;
  virtual std::vector<double> next_distribution(std::string_view prompt,
                                                std::span<const TokenId> prefix) const = 0;
};

class UniformLM : public TokenDistributionBackend {
 public:
  explicit UniformLM(std::vector<std::string> vocab);
  const std::vector<std::string>& vocab() const override { return vocab_; }
  std::vector<double> next_distribution(std::string_view prompt,
                                        std::span<const TokenId> prefix) const override;

 private:
  std::vector<std::string> vocab_;
};

// Character bigram model with add-one smoothing. Every vocabulary entry but
// the boundary token is a single ASCII character; text is lowercased and
// characters outside the vocabulary are skipped. Each corpus line is one
// training sequence delimited by the boundary token on both sides.
// The conditioning context is the last in-vocabulary character of
// prompt + decoded prefix, or the boundary token when there is none.
class BigramCharLM : public TokenDistributionBackend {
 public:
  BigramCharLM(std::vector<std::string> vocab, std::string boundary, std::string_view corpus);

  const std::vector<std::string>& vocab() const override { return vocab_; }
  std::vector<double> next_distribution(std::string_view prompt,
                                        std::span<const TokenId> prefix) const override;

  TokenId boundary() const noexcept { return boundary_; }
  // Transition count from `from` to `to` in the training corpus.
  std::size_t count(TokenId from, TokenId to) const;
  // Maps a string to token ids, skipping out-of-vocabulary characters.
  std::vector<TokenId> encode(std::string_view text) const;

 private:
  std::optional<TokenId> lookup(char c) const;

  std::vector<std::string> vocab_;
  TokenId boundary_;
  std::vector<std::vector<std::size_t>> counts_;
  std::vector<std::size_t> totals_;
};

// The 12-token character vocabulary shared by the toy models; index 0 is the
// boundary token "</s>".
const std::vector<std::string>& toy_vocab();
inline constexpr TokenId kToyBoundary = 0;

// Embedded training text: three blank-line separated sections.
std::string_view toy_corpus();
std::vector<std::string> toy_corpus_sections();

// Three bigram models trained on the three corpus sections, standing in for
// the baseline, summary and entity systems.
std::vector<std::shared_ptr<BigramCharLM>> toy_backends();

// Pointwise sum of lambda_k * dist_k. Per-token terms are summed in sorted
// order so the result does not depend on member order.
std::vector<double> ensemble_distribution(std::span<const std::vector<double>> dists,
                                          const EnsembleWeights& weights);

// Lowest index among the maxima.
TokenId argmax(std::span<const double> dist);

struct DecodeStep {
  std::size_t step = 0;
  std::vector<std::vector<std::pair<TokenId, double>>> per_backend_top5;
  std::vector<std::pair<TokenId, double>> combined_top5;
  TokenId chosen = 0;
};

// Greedy decoding under the weighted mixture. Member k sees prompts[k] plus
// the shared prefix. The stop token, when given, ends decoding and is not
// included in the output.
std::vector<TokenId> greedy_ensemble_decode(
    std::span<const TokenDistributionBackend* const> backends,
    std::span<const std::string> prompts, const EnsembleWeights& weights, std::size_t max_len,
    std::optional<TokenId> stop_token = std::nullopt, std::vector<DecodeStep>* trace = nullptr);

// Single-model greedy decoding.
std::vector<TokenId> greedy_decode(const TokenDistributionBackend& backend,
                                   std::string_view prompt, std::size_t max_len,
                                   std::optional<TokenId> stop_token = std::nullopt);

std::string detokenize(const std::vector<std::string>& vocab, std::span<const TokenId> tokens);

// {step, per_backend_top5, combined_top5, chosen}, tokens written as strings.
json decode_step_json(const DecodeStep& step, const std::vector<std::string>& vocab);

}  // namespace kfmt
