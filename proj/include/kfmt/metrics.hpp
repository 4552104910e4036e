#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kfmt/scoring.hpp"
#include "kfmt/token_ensemble.hpp"
#include "kfmt/types.hpp"

namespace kfmt {

// Character n-gram F-score, n = 1..6, beta = 2, whitespace removed before
// n-gram extraction. Precision and recall are averaged over the orders the
// reference actually has, then combined. Result in [0, 100].
// Throws empty_input for a blank reference.
double chrf(std::string_view hypothesis, std::string_view reference);

// Corpus BLEU over whitespace tokens: clipped n-gram precisions n = 1..4,
// geometric mean, brevity penalty, no smoothing. Result in [0, 100].
double corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references);

double cosine(std::span<const double> a, std::span<const double> b);

// Mean cosine similarity of adjacent sentences. Needs >= 2 sentences.
double coherence(std::span<const std::string> sentences, Embedder& embedder);

// Mean over every adjacent pair of every document; documents with a single
// sentence contribute nothing. Throws empty_input when no pair exists.
double corpus_coherence(std::span<const std::vector<std::string>> documents, Embedder& embedder);

// exp(-mean log p(t_i | prompt, t_<i)). Throws zero_probability.
double perplexity(std::span<const TokenId> tokens, const TokenDistributionBackend& lm,
                  std::string_view prompt = {});

struct LtcrCounts {
  std::size_t consistent = 0;
  std::size_t total = 0;

  LtcrCounts& operator+=(const LtcrCounts& o) {
    consistent += o.consistent;
    total += o.total;
    return *this;
  }
  // nullopt when no term repeats.
  std::optional<double> ratio() const;
};

// Occurrence-pair consistency for one sentence-aligned document. A term
// occurs in a source sentence when it is a case-insensitive substring. The
// realization in a target sentence is the expected target when present,
// else the first other lexicon target present, else nothing. A pair is
// consistent when both realizations exist and are equal.
LtcrCounts ltcr_counts(std::span<const std::string> source, std::span<const std::string> target,
                       std::span<const EntityPair> lexicon);

struct AlignedDocument {
  std::vector<std::string> source;
  std::vector<std::string> target;
};

std::optional<double> ltcr(std::span<const AlignedDocument> documents,
                           std::span<const EntityPair> lexicon);

// Arithmetic mean of a report row.
double row_average(const std::map<std::string, double>& row);
double round_to(double value, int decimals);
// "%.1f"-style rendering after round_to(value, decimals).
std::string format_fixed(double value, int decimals = 1);

struct ReportRow {
  std::string system;
  std::map<std::string, double> values;  // column -> score; absent columns print "-"
};

// Fixed-width table: System | columns... | Average, one decimal.
std::string format_report_table(std::span<const std::string> columns,
                                std::span<const ReportRow> rows);

// Mean of integer GPT-eval scores. Throws empty_input / out_of_range.
double gpt_eval_aggregate(std::span<const int> scores);

}  // namespace kfmt
