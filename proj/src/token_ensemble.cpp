#include "kfmt/token_ensemble.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace {

constexpr char kToyCorpus[] =
#include "kfmt_toy_corpus.inc"
    ;

void check_distribution(std::span<const double> dist, std::size_t vocab_size) {
  if (dist.size() != vocab_size) {
    throw Error(ErrorCode::length_mismatch, "distribution length " + std::to_string(dist.size()) +
                                                " does not match vocabulary size " +
                                                std::to_string(vocab_size));
  }
  for (double p : dist) {
    if (!std::isfinite(p) || p < 0.0) {
      throw Error(ErrorCode::invalid_argument, "probabilities must be finite and >= 0");
    }
  }
}

std::vector<std::pair<TokenId, double>> top5(std::span<const double> dist) {
  std::vector<std::pair<TokenId, double>> items;
  items.reserve(dist.size());
  for (TokenId t = 0; t < dist.size(); ++t) items.emplace_back(t, dist[t]);
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (items.size() > 5) items.resize(5);
  return items;
}

}  // namespace

UniformLM::UniformLM(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  if (vocab_.empty()) throw Error(ErrorCode::invalid_argument, "empty vocabulary");
}

std::vector<double> UniformLM::next_distribution(std::string_view,
                                                 std::span<const TokenId>) const {
  return std::vector<double>(vocab_.size(), 1.0 / static_cast<double>(vocab_.size()));
}

BigramCharLM::BigramCharLM(std::vector<std::string> vocab, std::string boundary,
                           std::string_view corpus)
    : vocab_(std::move(vocab)) {
  auto it = std::find(vocab_.begin(), vocab_.end(), boundary);
  if (it == vocab_.end()) {
    throw Error(ErrorCode::invalid_argument, "boundary token missing from vocabulary");
  }
  boundary_ = static_cast<TokenId>(it - vocab_.begin());
  for (TokenId t = 0; t < vocab_.size(); ++t) {
    if (t != boundary_ && vocab_[t].size() != 1) {
      throw Error(ErrorCode::invalid_argument, "bigram vocabulary entries must be single bytes");
    }
  }
  const std::size_t v = vocab_.size();
  counts_.assign(v, std::vector<std::size_t>(v, 0));
  totals_.assign(v, 0);
  for (const auto& line : split(corpus, '\n')) {
    if (is_blank(line)) continue;
    TokenId prev = boundary_;
    for (TokenId t : encode(line)) {
      ++counts_[prev][t];
      ++totals_[prev];
      prev = t;
    }
    ++counts_[prev][boundary_];
    ++totals_[prev];
  }
}

std::optional<TokenId> BigramCharLM::lookup(char c) const {
  char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (TokenId t = 0; t < vocab_.size(); ++t) {
    if (t != boundary_ && vocab_[t][0] == lower) return t;
  }
  return std::nullopt;
}

std::vector<TokenId> BigramCharLM::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (char c : text) {
    if (auto t = lookup(c)) out.push_back(*t);
  }
  return out;
}

std::size_t BigramCharLM::count(TokenId from, TokenId to) const {
  return counts_.at(from).at(to);
}

std::vector<double> BigramCharLM::next_distribution(std::string_view prompt,
                                                    std::span<const TokenId> prefix) const {
  TokenId context = boundary_;
  if (!prefix.empty()) {
    context = prefix.back();
    if (context >= vocab_.size()) throw Error(ErrorCode::out_of_range, "token id out of range");
  } else {
    for (auto it = prompt.rbegin(); it != prompt.rend(); ++it) {
      if (auto t = lookup(*it)) {
        context = *t;
        break;
      }
    }
  }
  const double denom = static_cast<double>(totals_[context] + vocab_.size());
  std::vector<double> dist(vocab_.size());
  for (TokenId t = 0; t < vocab_.size(); ++t) {
    dist[t] = static_cast<double>(counts_[context][t] + 1) / denom;
  }
  return dist;
}

const std::vector<std::string>& toy_vocab() {
  static const std::vector<std::string> vocab = {"</s>", " ", "a", "e", "h", "i",
                                                 "l",    "n", "o", "r", "s", "t"};
  return vocab;
}

std::string_view toy_corpus() { return kToyCorpus; }

std::vector<std::string> toy_corpus_sections() {
  std::vector<std::string> sections(1);
  for (const auto& line : split(toy_corpus(), '\n')) {
    if (is_blank(line)) {
      if (!sections.back().empty()) sections.emplace_back();
      continue;
    }
    sections.back() += line;
    sections.back() += '\n';
  }
  if (sections.back().empty()) sections.pop_back();
  return sections;
}

std::vector<std::shared_ptr<BigramCharLM>> toy_backends() {
  std::vector<std::shared_ptr<BigramCharLM>> out;
  for (const auto& section : toy_corpus_sections()) {
    out.push_back(std::make_shared<BigramCharLM>(toy_vocab(), "</s>", section));
  }
  return out;
}

std::vector<double> ensemble_distribution(std::span<const std::vector<double>> dists,
                                          const EnsembleWeights& weights) {
  if (dists.empty()) throw Error(ErrorCode::empty_input, "no distributions to combine");
  if (dists.size() != weights.size()) {
    throw Error(ErrorCode::length_mismatch, std::to_string(dists.size()) +
                                                " distributions but " +
                                                std::to_string(weights.size()) + " weights");
  }
  const std::size_t n = dists.front().size();
  for (const auto& d : dists) check_distribution(d, n);

  std::vector<double> out(n, 0.0);
  std::vector<double> terms(dists.size());
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < dists.size(); ++k) terms[k] = weights.lambdas()[k] * dists[k][t];
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (double x : terms) sum += x;
    out[t] = sum;
  }
  return out;
}

TokenId argmax(std::span<const double> dist) {
  if (dist.empty()) throw Error(ErrorCode::empty_input, "empty distribution");
  TokenId best = 0;
  for (TokenId t = 1; t < dist.size(); ++t) {
    if (dist[t] > dist[best]) best = t;
  }
  return best;
}

std::vector<TokenId> greedy_ensemble_decode(
    std::span<const TokenDistributionBackend* const> backends,
    std::span<const std::string> prompts, const EnsembleWeights& weights, std::size_t max_len,
    std::optional<TokenId> stop_token, std::vector<DecodeStep>* trace) {
  if (backends.empty()) throw Error(ErrorCode::empty_input, "no ensemble members");
  if (prompts.size() != backends.size()) {
    throw Error(ErrorCode::length_mismatch, "one prompt per ensemble member is required");
  }
  if (weights.size() != backends.size()) {
    throw Error(ErrorCode::length_mismatch, "one weight per ensemble member is required");
  }
  const auto& vocab = backends.front()->vocab();
  for (const auto* b : backends) {
    if (b->vocab() != vocab) throw Error(ErrorCode::vocab_mismatch, "members differ in vocabulary");
  }
  if (stop_token && *stop_token >= vocab.size()) {
    throw Error(ErrorCode::out_of_range, "stop token outside the vocabulary");
  }

  std::vector<TokenId> out;
  std::vector<std::vector<double>> dists(backends.size());
  for (std::size_t step = 0; step < max_len; ++step) {
    for (std::size_t k = 0; k < backends.size(); ++k) {
      dists[k] = backends[k]->next_distribution(prompts[k], out);
      check_distribution(dists[k], vocab.size());
    }
    auto combined = ensemble_distribution(dists, weights);
    TokenId chosen = argmax(combined);
    if (trace) {
      DecodeStep rec;
      rec.step = step;
      for (const auto& d : dists) rec.per_backend_top5.push_back(top5(d));
      rec.combined_top5 = top5(combined);
      rec.chosen = chosen;
      trace->push_back(std::move(rec));
    }
    if (stop_token && chosen == *stop_token) break;
    out.push_back(chosen);
  }
  return out;
}

std::vector<TokenId> greedy_decode(const TokenDistributionBackend& backend,
                                   std::string_view prompt, std::size_t max_len,
                                   std::optional<TokenId> stop_token) {
  const TokenDistributionBackend* members[] = {&backend};
  std::string prompts[] = {std::string(prompt)};
  return greedy_ensemble_decode(members, prompts, EnsembleWeights({1.0}), max_len, stop_token);
}

std::string detokenize(const std::vector<std::string>& vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (TokenId t : tokens) out += vocab.at(t);
  return out;
}

json decode_step_json(const DecodeStep& step, const std::vector<std::string>& vocab) {
  auto entries = [&](const std::vector<std::pair<TokenId, double>>& items) {
    json arr = json::array();
    for (const auto& [t, p] : items) arr.push_back({{"token", vocab.at(t)}, {"p", p}});
    return arr;
  };
  json per_backend = json::array();
  for (const auto& items : step.per_backend_top5) per_backend.push_back(entries(items));
  return json{{"step", step.step},
              {"per_backend_top5", std::move(per_backend)},
              {"combined_top5", entries(step.combined_top5)},
              {"chosen", vocab.at(step.chosen)}};
}

}  // namespace kfmt
