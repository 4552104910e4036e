#include "kfmt/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kfmt/error.hpp"

namespace kfmt {

bool TiePolicy::prefers(const CandidateLabel& a, const CandidateLabel& b) const {
  auto rank = [&](const CandidateLabel& l) {
    auto it = std::find(order.begin(), order.end(), l);
    return static_cast<std::size_t>(it - order.begin());
  };
  auto ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb;
  return a < b;
}

void validate_candidates(std::span<const CandidateTranslation> candidates,
                         const IndexedDocument& doc) {
  if (candidates.empty()) throw Error(ErrorCode::empty_candidate_set, "no candidates to fuse");
  std::set<CandidateLabel> seen;
  for (const auto& c : candidates) {
    if (c.doc_id != doc.doc_id()) {
      throw Error(ErrorCode::invalid_argument,
                  "candidate for '" + c.doc_id + "' passed with doc '" + doc.doc_id() + "'");
    }
    if (!seen.insert(c.label).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate candidate label " + c.label.str());
    }
    if (!c.covers(doc.size())) {
      throw Error(ErrorCode::candidate_coverage_gap,
                  "candidate " + c.label.str() + " does not cover sentences 1.." +
                      std::to_string(doc.size()));
    }
  }
}

ScoreTable score_candidates(std::span<const CandidateTranslation> candidates,
                            const IndexedDocument& doc, Scorer& scorer,
                            const ScoringOptions& options) {
  validate_candidates(candidates, doc);
  const bool with_reference = options.with_reference || scorer.requires_reference();
  if (with_reference && !doc.has_references()) {
    throw Error(ErrorCode::missing_references, "doc '" + doc.doc_id() + "' has no references");
  }
  std::vector<ScoreRequest> requests;
  requests.reserve(candidates.size() * doc.size());
  for (const auto& c : candidates) {
    for (SentenceIndex i = 1; i <= doc.size(); ++i) {
      std::optional<std::string> reference, context;
      if (with_reference) reference = doc.reference(i);
      if (options.include_context && i > 1) context = c.segments.at(i - 1);
      requests.emplace_back(doc.sentence(i), c.segments.at(i), std::move(reference),
                            std::move(context));
    }
  }
  auto flat = scorer.score(requests);
  if (flat.size() != requests.size()) {
    throw Error(ErrorCode::scorer_unavailable, "scorer returned " + std::to_string(flat.size()) +
                                                   " scores for " +
                                                   std::to_string(requests.size()) + " requests");
  }
  ScoreTable table;
  std::size_t k = 0;
  for (const auto& c : candidates) {
    auto& row = table[c.label];
    for (SentenceIndex i = 1; i <= doc.size(); ++i, ++k) {
      if (!std::isfinite(flat[k])) {
        throw Error(ErrorCode::scorer_unavailable, "scorer returned a non-finite score");
      }
      row.push_back(flat[k]);
    }
  }
  return table;
}

FusionResult select_best(std::span<const CandidateTranslation> candidates,
                         const ScoreTable& scores, const TiePolicy& policy) {
  if (candidates.empty()) throw Error(ErrorCode::empty_candidate_set, "no candidates to fuse");
  std::vector<const CandidateTranslation*> ordered;
  for (const auto& c : candidates) ordered.push_back(&c);
  std::sort(ordered.begin(), ordered.end(),
            [&](const auto* a, const auto* b) { return policy.prefers(a->label, b->label); });

  const std::size_t n = ordered.front()->segments.size();
  FusionResult result;
  for (const auto* c : ordered) {
    auto it = scores.find(c->label);
    if (it == scores.end() || it->second.size() != n) {
      throw Error(ErrorCode::scorer_unavailable, "no scores for candidate " + c->label.str());
    }
    if (c->segments.size() != n) {
      throw Error(ErrorCode::candidate_coverage_gap, "candidates differ in sentence count");
    }
    result.candidate_set.push_back(c->label);
  }

  for (SentenceIndex i = 1; i <= n; ++i) {
    SelectionTrace trace;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* c : ordered) {
      double s = scores.at(c->label)[i - 1];
      trace.scores[c->label] = s;
      best = std::max(best, s);
    }
    for (const auto* c : ordered) {
      if (trace.scores[c->label] >= best - kScoreTieEpsilon) {
        trace.chosen_label = c->label;
        result.fused[i] = c->segments.at(i);
        break;
      }
    }
    result.trace[i] = std::move(trace);
  }
  return result;
}

FusionResult fuse(std::span<const CandidateTranslation> candidates, const IndexedDocument& doc,
                  Scorer& scorer, const TiePolicy& policy) {
  auto table = score_candidates(candidates, doc, scorer);
  return select_best(candidates, table, policy);
}

FusionResult fuse_oracle(std::span<const CandidateTranslation> candidates,
                         const IndexedDocument& doc, Scorer& ref_scorer,
                         const TiePolicy& policy) {
  if (!doc.has_references()) {
    throw Error(ErrorCode::missing_references, "doc '" + doc.doc_id() + "' has no references");
  }
  ScoringOptions options;
  options.with_reference = true;
  auto table = score_candidates(candidates, doc, ref_scorer, options);
  return select_best(candidates, table, policy);
}

std::vector<CandidateTranslation> without_labels(std::span<const CandidateTranslation> candidates,
                                                 const std::set<CandidateLabel>& drop) {
  std::vector<CandidateTranslation> kept;
  for (const auto& c : candidates) {
    if (!drop.contains(c.label)) kept.push_back(c);
  }
  if (kept.empty()) {
    throw Error(ErrorCode::empty_candidate_set, "every candidate was dropped");
  }
  return kept;
}

FusionResult ablate(std::span<const CandidateTranslation> candidates,
                    const std::set<CandidateLabel>& drop, const IndexedDocument& doc,
                    Scorer& scorer, const TiePolicy& policy) {
  auto kept = without_labels(candidates, drop);
  return fuse(kept, doc, scorer, policy);
}

std::vector<double> chosen_scores(const FusionResult& result) {
  std::vector<double> out;
  out.reserve(result.trace.size());
  for (const auto& [_, t] : result.trace) out.push_back(t.scores.at(t.chosen_label));
  return out;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::empty_input, "mean of nothing");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::map<CandidateLabel, double> selection_proportions(std::span<const SelectionTrace> traces) {
  if (traces.empty()) throw Error(ErrorCode::empty_input, "no selection traces");
  std::map<CandidateLabel, std::size_t> counts;
  for (const auto& t : traces) ++counts[t.chosen_label];
  std::map<CandidateLabel, double> out;
  for (const auto& [label, c] : counts) {
    out[label] = static_cast<double>(c) / static_cast<double>(traces.size());
  }
  return out;
}

TieCounts tie_compare(std::span<const double> a, std::span<const double> b, double threshold) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::length_mismatch, "tie comparison needs equal-length score lists");
  }
  if (a.empty()) throw Error(ErrorCode::empty_input, "tie comparison needs at least one score");
  if (!(threshold >= 0.0)) throw Error(ErrorCode::invalid_argument, "threshold must be >= 0");
  TieCounts counts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    if (std::abs(d) <= threshold + kScoreTieEpsilon) {
      ++counts.ties;
    } else if (d > 0) {
      ++counts.wins_a;
    } else {
      ++counts.wins_b;
    }
  }
  return counts;
}

}  // namespace kfmt
