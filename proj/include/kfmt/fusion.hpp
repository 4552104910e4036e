#pragma once

#include <map>
#include <set>
#include <span>
#include <vector>

#include "kfmt/scoring.hpp"
#include "kfmt/types.hpp"

namespace kfmt {

// Scores closer than this are treated as equal during selection.
inline constexpr double kScoreTieEpsilon = 1e-9;

// Preference order for equal scores. Labels listed come first in list order;
// unlisted labels follow in CandidateLabel's natural order. The empty policy
// is the natural order: baseline, summarization, entity, rerank samples.
struct TiePolicy {
  std::vector<CandidateLabel> order;

  static TiePolicy natural() { return {}; }
  bool prefers(const CandidateLabel& a, const CandidateLabel& b) const;
};

// label -> per-sentence scores, index i-1 holds sentence i.
using ScoreTable = std::map<CandidateLabel, std::vector<double>>;

struct ScoringOptions {
  // Send the candidate's previous segment as context.
  bool include_context = false;
  // Attach doc references; required by reference-based scorers.
  bool with_reference = false;
};

// Throws empty_candidate_set, invalid_argument (duplicate label or foreign
// doc_id) or candidate_coverage_gap.
void validate_candidates(std::span<const CandidateTranslation> candidates,
                         const IndexedDocument& doc);

// One batched scorer call covering every candidate segment of the document.
ScoreTable score_candidates(std::span<const CandidateTranslation> candidates,
                            const IndexedDocument& doc, Scorer& scorer,
                            const ScoringOptions& options = {});

// Per sentence: the highest score wins; scores within kScoreTieEpsilon of
// the maximum are tied and resolved by the policy. Independent of candidate
// order.
FusionResult select_best(std::span<const CandidateTranslation> candidates,
                         const ScoreTable& scores, const TiePolicy& policy = {});

FusionResult fuse(std::span<const CandidateTranslation> candidates, const IndexedDocument& doc,
                  Scorer& scorer, const TiePolicy& policy = {});

// Selection driven by a reference-based scorer. Throws missing_references.
FusionResult fuse_oracle(std::span<const CandidateTranslation> candidates,
                         const IndexedDocument& doc, Scorer& ref_scorer,
                         const TiePolicy& policy = {});

// Candidates whose label is not in `drop`. Throws empty_candidate_set.
std::vector<CandidateTranslation> without_labels(std::span<const CandidateTranslation> candidates,
                                                 const std::set<CandidateLabel>& drop);

FusionResult ablate(std::span<const CandidateTranslation> candidates,
                    const std::set<CandidateLabel>& drop, const IndexedDocument& doc,
                    Scorer& scorer, const TiePolicy& policy = {});

// Score of the chosen candidate per sentence, in sentence order.
std::vector<double> chosen_scores(const FusionResult& result);
double mean(std::span<const double> values);

// Fraction of sentences won by each label. Throws empty_input.
std::map<CandidateLabel, double> selection_proportions(std::span<const SelectionTrace> traces);

struct TieCounts {
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;
  std::size_t ties = 0;

  bool operator==(const TieCounts&) const = default;
};

inline constexpr double kDefaultTieThreshold = 0.08;

// |a_i - b_i| <= threshold is a tie, otherwise the larger side wins. The
// comparison allows kScoreTieEpsilon of floating-point slack so that decimal
// inputs such as 0.90 vs 0.82 land on the tie side of the boundary.
TieCounts tie_compare(std::span<const double> a, std::span<const double> b,
                      double threshold = kDefaultTieThreshold);

}  // namespace kfmt
