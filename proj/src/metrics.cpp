#include "kfmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "kfmt/error.hpp"
#include "kfmt/text.hpp"

namespace kfmt {

namespace {

std::vector<std::string> chars_without_space(std::string_view text) {
  std::vector<std::string> out;
  for (auto& c : utf8_chars(text)) {
    if (c.size() == 1 && std::isspace(static_cast<unsigned char>(c[0]))) continue;
    out.push_back(std::move(c));
  }
  return out;
}

template <typename Seq>
std::map<std::vector<typename Seq::value_type>, std::size_t> ngram_counts(const Seq& seq,
                                                                          std::size_t n) {
  std::map<std::vector<typename Seq::value_type>, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[{seq.begin() + static_cast<std::ptrdiff_t>(i),
              seq.begin() + static_cast<std::ptrdiff_t>(i + n)}];
  }
  return counts;
}

template <typename Counts>
std::size_t clipped_matches(const Counts& hyp, const Counts& ref) {
  std::size_t m = 0;
  for (const auto& [gram, c] : hyp) {
    auto it = ref.find(gram);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace

double chrf(std::string_view hypothesis, std::string_view reference) {
  constexpr std::size_t kMaxOrder = 6;
  constexpr double kBeta = 2.0;
  if (is_blank(reference)) throw Error(ErrorCode::empty_input, "chrF needs a non-empty reference");
  const auto hyp = chars_without_space(hypothesis);
  const auto ref = chars_without_space(reference);

  double p_sum = 0.0, r_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    if (ref.size() < n) break;
    auto rc = ngram_counts(ref, n);
    auto hc = ngram_counts(hyp, n);
    const double ref_total = static_cast<double>(ref.size() - n + 1);
    const double hyp_total = hyp.size() >= n ? static_cast<double>(hyp.size() - n + 1) : 0.0;
    const double m = static_cast<double>(clipped_matches(hc, rc));
    p_sum += hyp_total > 0.0 ? m / hyp_total : 0.0;
    r_sum += m / ref_total;
    ++orders;
  }
  const double p = p_sum / static_cast<double>(orders);
  const double r = r_sum / static_cast<double>(orders);
  if (p == 0.0 && r == 0.0) return 0.0;
  const double b2 = kBeta * kBeta;
  return 100.0 * (1.0 + b2) * p * r / (b2 * p + r);
}

double corpus_bleu(std::span<const std::string> hypotheses,
                   std::span<const std::string> references) {
  constexpr std::size_t kMaxOrder = 4;
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorCode::length_mismatch, "BLEU needs one reference per hypothesis");
  }
  if (hypotheses.empty()) throw Error(ErrorCode::empty_input, "BLEU needs at least one segment");

  std::size_t matches[kMaxOrder] = {};
  std::size_t totals[kMaxOrder] = {};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    auto h = split_whitespace(hypotheses[s]);
    auto r = split_whitespace(references[s]);
    hyp_len += h.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= kMaxOrder; ++n) {
      if (h.size() < n) continue;
      totals[n - 1] += h.size() - n + 1;
      matches[n - 1] += clipped_matches(ngram_counts(h, n), ngram_counts(r, n));
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxOrder; ++n) {
    if (totals[n] == 0 || matches[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matches[n]) / static_cast<double>(totals[n]));
  }
  const double bp = hyp_len >= ref_len ? 1.0
                                       : std::exp(1.0 - static_cast<double>(ref_len) /
                                                            static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_sum / static_cast<double>(kMaxOrder));
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::length_mismatch, "vector dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "zero embedding vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

namespace {

// Sum and count of adjacent cosines.
std::pair<double, std::size_t> adjacent_cosines(std::span<const std::string> sentences,
                                                Embedder& embedder) {
  if (sentences.size() < 2) return {0.0, 0};
  auto vectors = embedder.embed(sentences);
  if (vectors.size() != sentences.size()) {
    throw Error(ErrorCode::schema_violation, "embedder returned the wrong number of vectors");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < vectors.size(); ++i) sum += cosine(vectors[i], vectors[i + 1]);
  return {sum, vectors.size() - 1};
}

}  // namespace

double coherence(std::span<const std::string> sentences, Embedder& embedder) {
  if (sentences.size() < 2) {
    throw Error(ErrorCode::empty_input, "coherence needs at least two sentences");
  }
  auto [sum, n] = adjacent_cosines(sentences, embedder);
  return sum / static_cast<double>(n);
}

double corpus_coherence(std::span<const std::vector<std::string>> documents, Embedder& embedder) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& doc : documents) {
    auto [s, k] = adjacent_cosines(doc, embedder);
    sum += s;
    n += k;
  }
  if (n == 0) throw Error(ErrorCode::empty_input, "no adjacent sentence pairs");
  return sum / static_cast<double>(n);
}

double perplexity(std::span<const TokenId> tokens, const TokenDistributionBackend& lm,
                  std::string_view prompt) {
  if (tokens.empty()) throw Error(ErrorCode::empty_input, "perplexity needs at least one token");
  double nll = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto dist = lm.next_distribution(prompt, tokens.first(i));
    if (tokens[i] >= dist.size()) throw Error(ErrorCode::out_of_range, "token outside vocabulary");
    const double p = dist[tokens[i]];
    if (!(p > 0.0)) {
      throw Error(ErrorCode::zero_probability,
                  "token " + std::to_string(i) + " has zero probability");
    }
    nll -= std::log(p);
  }
  return std::exp(nll / static_cast<double>(tokens.size()));
}

std::optional<double> LtcrCounts::ratio() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(consistent) / static_cast<double>(total);
}

LtcrCounts ltcr_counts(std::span<const std::string> source, std::span<const std::string> target,
                       std::span<const EntityPair> lexicon) {
  if (lexicon.empty()) throw Error(ErrorCode::empty_input, "LTCR needs a non-empty lexicon");
  if (source.size() != target.size()) {
    throw Error(ErrorCode::length_mismatch, "LTCR needs sentence-aligned documents");
  }
  std::vector<std::string> src_lower, tgt_lower;
  for (const auto& s : source) src_lower.push_back(to_lower_ascii(s));
  for (const auto& t : target) tgt_lower.push_back(to_lower_ascii(t));

  LtcrCounts counts;
  for (const auto& entry : lexicon) {
    const auto term = to_lower_ascii(entry.source_term);
    std::vector<std::optional<std::string>> realizations;
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (src_lower[i].find(term) == std::string::npos) continue;
      std::optional<std::string> found;
      const auto expected = to_lower_ascii(entry.target_term);
      if (tgt_lower[i].find(expected) != std::string::npos) {
        found = expected;
      } else {
        for (const auto& other : lexicon) {
          auto alt = to_lower_ascii(other.target_term);
          if (tgt_lower[i].find(alt) != std::string::npos) {
            found = alt;
            break;
          }
        }
      }
      realizations.push_back(std::move(found));
    }
    for (std::size_t a = 0; a < realizations.size(); ++a) {
      for (std::size_t b = a + 1; b < realizations.size(); ++b) {
        ++counts.total;
        if (realizations[a] && realizations[b] && *realizations[a] == *realizations[b]) {
          ++counts.consistent;
        }
      }
    }
  }
  return counts;
}

std::optional<double> ltcr(std::span<const AlignedDocument> documents,
                           std::span<const EntityPair> lexicon) {
  LtcrCounts total;
  for (const auto& doc : documents) total += ltcr_counts(doc.source, doc.target, lexicon);
  return total.ratio();
}

double row_average(const std::map<std::string, double>& row) {
  if (row.empty()) throw Error(ErrorCode::empty_input, "report row has no values");
  double sum = 0.0;
  for (const auto& [_, v] : row) sum += v;
  return sum / static_cast<double>(row.size());
}

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

std::string format_fixed(double value, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << round_to(value, decimals);
  auto s = os.str();
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

std::string format_report_table(std::span<const std::string> columns,
                                std::span<const ReportRow> rows) {
  std::vector<std::string> header{"System"};
  header.insert(header.end(), columns.begin(), columns.end());
  header.push_back("Average");

  std::vector<std::vector<std::string>> cells;
  for (const auto& row : rows) {
    std::vector<std::string> line{row.system};
    for (const auto& col : columns) {
      auto it = row.values.find(col);
      line.push_back(it == row.values.end() ? "-" : format_fixed(it->second));
    }
    line.push_back(row.values.empty() ? "-" : format_fixed(row_average(row.values)));
    cells.push_back(std::move(line));
  }

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = utf8_chars(header[c]).size();
    for (const auto& line : cells) width[c] = std::max(width[c], utf8_chars(line[c]).size());
  }
  auto pad = [](const std::string& s, std::size_t w, bool left) {
    std::string fill(w - std::min(w, utf8_chars(s).size()), ' ');
    return left ? s + fill : fill + s;
  };
  auto render = [&](const std::vector<std::string>& line) {
    std::string out;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) out += "  ";
      out += pad(line[c], width[c], c == 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::size_t total = 0;
  for (auto w : width) total += w;
  total += 2 * (width.size() - 1);

  std::string out = render(header);
  out += std::string(total, '-') + "\n";
  for (const auto& line : cells) out += render(line);
  return out;
}

double gpt_eval_aggregate(std::span<const int> scores) {
  if (scores.empty()) throw Error(ErrorCode::empty_input, "no GPT-eval scores");
  double sum = 0.0;
  for (int s : scores) {
    if (s < 0 || s > 100) {
      throw Error(ErrorCode::out_of_range, "GPT-eval score " + std::to_string(s) + " outside 0..100");
    }
    sum += s;
  }
  return sum / static_cast<double>(scores.size());
}

}  // namespace kfmt
