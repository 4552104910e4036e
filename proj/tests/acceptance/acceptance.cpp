// One PASS/FAIL line per acceptance criterion. Exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kfmt/fusion.hpp"
#include "kfmt/metrics.hpp"
#include "kfmt/parsing.hpp"
#include "kfmt/prompts.hpp"
#include "kfmt/scoring.hpp"
#include "kfmt/token_ensemble.hpp"
#include "parsing_cases.hpp"
#include "prompt_goldens.hpp"
#include "test_support.hpp"
#include "toy_oracle.hpp"

using namespace kfmt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first failing check.
class Checker {
 public:
  void check(bool ok, const std::string& what) {
    if (!ok && pass_) {
      pass_ = false;
      first_failure_ = what;
    }
  }
  Outcome done(const std::string& detail) const {
    return pass_ ? Outcome{true, detail} : Outcome{false, first_failure_};
  }

 private:
  bool pass_ = true;
  std::string first_failure_;
};

const std::vector<CandidateLabel> kLabels = {
    CandidateLabel::baseline(), CandidateLabel::summarization(), CandidateLabel::entity(),
    CandidateLabel::rerank_sample(1), CandidateLabel::rerank_sample(2)};

std::vector<CandidateTranslation> candidates_for(const std::vector<CandidateLabel>& labels,
                                                 std::size_t n) {
  std::vector<CandidateTranslation> out;
  for (const auto& label : labels) {
    std::vector<std::string> segments;
    for (std::size_t i = 1; i <= n; ++i) segments.push_back(label.str() + "|" + std::to_string(i));
    out.push_back(kfmt_test::make_candidate("doc", label, segments));
  }
  return out;
}

// Scores on the k/1000 grid so ties are frequent.
ScoreTable random_table(std::mt19937_64& rng, const std::vector<CandidateLabel>& labels,
                        std::size_t n) {
  std::uniform_int_distribution<int> grid(0, 1000);
  ScoreTable table;
  for (const auto& label : labels) {
    auto& row = table[label];
    for (std::size_t i = 0; i < n; ++i) row.push_back(grid(rng) / 1000.0);
  }
  return table;
}

ScoreTable restrict(const ScoreTable& table, const std::vector<CandidateLabel>& labels) {
  ScoreTable out;
  for (const auto& l : labels) out[l] = table.at(l);
  return out;
}

double fused_mean(const std::vector<CandidateLabel>& labels, const ScoreTable& table,
                  std::size_t n) {
  auto cands = candidates_for(labels, n);
  auto scores = chosen_scores(select_best(cands, restrict(table, labels)));
  return mean(scores);
}

Outcome fusion_optimality() {
  Checker c;
  std::mt19937_64 rng(20260101);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t k = 2 + rng() % 4;
    std::size_t n = 1 + rng() % 40;
    std::vector<CandidateLabel> labels(kLabels.begin(), kLabels.begin() + k);
    auto table = random_table(rng, labels, n);
    auto cands = candidates_for(labels, n);
    auto result = select_best(cands, table);
    auto chosen = chosen_scores(result);
    c.check(chosen.size() == n, "trial " + std::to_string(trial) + ": wrong length");
    for (std::size_t i = 0; i < n && i < chosen.size(); ++i) {
      double best = 0.0;
      for (const auto& [_, row] : table) best = std::max(best, row[i]);
      c.check(chosen[i] == best, "trial " + std::to_string(trial) + ": sentence " +
                                     std::to_string(i + 1) + " is not the maximum");
      const auto& label = result.trace.at(i + 1).chosen_label;
      c.check(result.fused.at(i + 1) == label.str() + "|" + std::to_string(i + 1),
              "trial " + std::to_string(trial) + ": fused text is not the chosen candidate's");
    }
    double fm = mean(chosen);
    for (const auto& [label, row] : table) {
      c.check(fm >= mean(row), "trial " + std::to_string(trial) + ": fused mean below " +
                                   label.str());
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.check(secs < 5.0, "took " + std::to_string(secs) + " s");
  std::ostringstream d;
  d << "1000 tables, " << secs << " s";
  return c.done(d.str());
}

Outcome fusion_monotonicity() {
  Checker c;
  std::mt19937_64 rng(20260202);
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t kb = 2 + rng() % 4;
    std::size_t n = 1 + rng() % 40;
    std::vector<CandidateLabel> b(kLabels.begin(), kLabels.end());
    std::shuffle(b.begin(), b.end(), rng);
    b.resize(kb);
    std::vector<CandidateLabel> a;
    for (const auto& l : b) {
      if (rng() % 2) a.push_back(l);
    }
    if (a.empty()) a.push_back(b[rng() % b.size()]);
    auto table = random_table(rng, b, n);
    c.check(fused_mean(b, table, n) >= fused_mean(a, table, n),
            "trial " + std::to_string(trial) + ": mean(B) < mean(A)");
  }
  return c.done("500 nested pairs");
}

Outcome oracle_sanity() {
  Checker c;
  std::mt19937_64 rng(20260303);
  ChrfOracleScorer scorer;
  const std::vector<std::string> words = {"Katze", "Matte", "Haus", "rot", "die", "der",
                                          "auf", "saß", "lag", "Hund", "blau", "Stadt"};
  std::size_t sentences = 0, hits = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t n = 1 + rng() % 8;
    std::size_t target = rng() % 3;
    std::vector<std::vector<std::string>> texts(3);
    std::vector<std::string> source, refs;
    for (std::size_t i = 0; i < n; ++i) {
      source.push_back("Source sentence " + std::to_string(i + 1) + ".");
      for (std::size_t k = 0; k < 3; ++k) {
        std::string s = std::to_string(k) + "-" + std::to_string(i);
        for (int w = 0; w < 5; ++w) s += " " + words[rng() % words.size()];
        texts[k].push_back(s);
      }
      refs.push_back(texts[target][i]);
    }
    auto doc = kfmt_test::make_doc("doc", source, refs);
    std::vector<CandidateTranslation> cands;
    for (std::size_t k = 0; k < 3; ++k) {
      cands.push_back(kfmt_test::make_candidate("doc", kLabels[k], texts[k]));
    }
    auto result = fuse_oracle(cands, doc, scorer);
    for (const auto& [i, t] : result.trace) {
      ++sentences;
      if (t.chosen_label == kLabels[target]) ++hits;
    }
  }
  c.check(hits == sentences, std::to_string(hits) + "/" + std::to_string(sentences) +
                                 " sentences picked the reference candidate");
  return c.done(std::to_string(hits) + "/" + std::to_string(sentences) + " sentences");
}

Outcome tie_protocol() {
  Checker c;
  auto one = [](double a, double b) {
    std::vector<double> x{a}, y{b};
    return tie_compare(x, y);
  };
  c.check(one(0.08, 0.0) == TieCounts{0, 0, 1}, "|d| = 0.08 is not a tie");
  c.check(one(0.0, 0.08) == TieCounts{0, 0, 1}, "|d| = -0.08 is not a tie");
  c.check(one(0.90, 0.82) == TieCounts{0, 0, 1}, "0.90 vs 0.82 is not a tie");
  c.check(one(0.0800001, 0.0) == TieCounts{1, 0, 0}, "|d| = 0.0800001 is not a win");
  c.check(one(0.0, 0.0800001) == TieCounts{0, 1, 0}, "|d| = 0.0800001 is not a loss");
  c.check(kDefaultTieThreshold == 0.08, "default threshold is not 0.08");
  return c.done("0.08 tie, 0.0800001 win");
}

std::vector<const TokenDistributionBackend*> raw(
    const std::vector<std::shared_ptr<BigramCharLM>>& models) {
  std::vector<const TokenDistributionBackend*> out;
  for (const auto& m : models) out.push_back(m.get());
  return out;
}

Outcome token_ensemble() {
  Checker c;
  auto models = toy_backends();
  auto backends = raw(models);
  const std::vector<std::string> prompts{"the cat sat", "a summary of", "the entity is"};

  c.check(EnsembleWeights::defaults().lambdas() == std::vector<double>{0.4, 0.3, 0.3},
          "default weights are not (0.4, 0.3, 0.3)");

  auto one_hot = greedy_ensemble_decode(backends, prompts, EnsembleWeights({1, 0, 0}), 30);
  c.check(one_hot == greedy_decode(*models[0], prompts[0], 30),
          "lambda = (1,0,0) differs from single-model greedy decode");

  std::vector<const TokenDistributionBackend*> same(3, models[1].get());
  std::vector<std::string> same_prompts(3, prompts[1]);
  c.check(greedy_ensemble_decode(same, same_prompts, EnsembleWeights::defaults(), 30) ==
              greedy_decode(*models[1], prompts[1], 30),
          "identical-member ensemble differs from the member");

  std::mt19937_64 rng(20260404);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    double a = unit(rng), b = unit(rng) * (1 - a);
    EnsembleWeights w({a, b, 1 - a - b});
    std::vector<TokenId> prefix;
    for (std::size_t k = rng() % 6; k > 0; --k) prefix.push_back(rng() % toy_vocab().size());
    std::vector<std::vector<double>> dists;
    for (std::size_t k = 0; k < 3; ++k) {
      dists.push_back(models[k]->next_distribution(prompts[k], prefix));
    }
    auto mix = ensemble_distribution(dists, w);
    worst = std::max(worst, std::abs(std::accumulate(mix.begin(), mix.end(), 0.0) - 1.0));
  }
  c.check(worst <= 1e-9, "combined distribution sums off by 1e-9 or more");

  auto oracle = kfmt_test::oracle_models();
  auto got = greedy_ensemble_decode(backends, prompts, EnsembleWeights::defaults(), 30);
  auto want = kfmt_test::oracle_decode(oracle, prompts, {0.4, 0.3, 0.3}, 30, std::nullopt);
  c.check(std::vector<int>(got.begin(), got.end()) == want,
          "30-step decode differs from the stepwise oracle");
  std::ostringstream d;
  d << "one-hot, identical members, sum-to-1 (max err " << worst << "), 30-step oracle";
  return c.done(d.str());
}

Outcome metrics() {
  Checker c;
  std::mt19937_64 rng(20260505);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz";
  for (int i = 0; i < 50; ++i) {
    std::string s;
    for (std::size_t w = 4 + rng() % 8; w > 0; --w) {
      if (!s.empty()) s += ' ';
      for (std::size_t k = 1 + rng() % 7; k > 0; --k) s += alphabet[rng() % alphabet.size()];
    }
    c.check(std::abs(chrf(s, s) - 100.0) < 1e-9, "chrf(x,x) != 100 for '" + s + "'");
    std::vector<std::string> h{s};
    c.check(std::abs(corpus_bleu(h, h) - 100.0) < 1e-9, "bleu(x,x) != 100 for '" + s + "'");
  }

  std::vector<std::string> hyp{"the cat sat on the mat", "a dog ran home today"};
  std::vector<std::string> ref{"the cat sat on a mat", "the dog ran home"};
  // Clipped n-gram matches 8/11, 5/9, 3/7, 1/5; hypothesis longer than reference.
  const double manual = 100.0 * std::pow(8.0 / 11 * 5.0 / 9 * 3.0 / 7 * 1.0 / 5, 0.25);
  c.check(std::abs(corpus_bleu(hyp, ref) - manual) < 1e-6, "BLEU fixture differs from oracle");

  UniformLM uniform(toy_vocab());
  std::vector<TokenId> tokens{1, 5, 3, 3, 9, 0, 11};
  c.check(std::abs(perplexity(tokens, uniform) - 12.0) < 1e-9, "uniform perplexity != 12");

  HashEmbedder embedder;
  std::vector<std::string> same(4, "The river flows through the old town.");
  c.check(std::abs(coherence(same, embedder) - 1.0) < 1e-12, "coherence of identical != 1");

  std::vector<EntityPair> lexicon{{"Paris", "Parigi"}, {"capital", "capitale"}};
  std::vector<std::string> src{"Paris is big.", "I saw Paris.", "Paris again."};
  std::vector<std::string> tgt{"Parigi è grande.", "Ho visto Parigi.", "Di nuovo la capitale."};
  c.check(ltcr_counts(src, tgt, lexicon).ratio() == std::optional<double>(1.0 / 3.0),
          "LTCR (t1,t1,t2) != 1/3");
  return c.done("identities, BLEU fixture, perplexity, coherence, LTCR");
}

Outcome prompt_fidelity() {
  Checker c;
  for (auto id : kAllTemplates) {
    auto name = std::string(to_string(id));
    c.check(kfmt_test::rendered(id).text == kfmt_test::golden(name), name + " differs from golden");
  }
  auto doc = kfmt_test::golden_doc();
  auto has = [](const PromptText& p, std::string_view phrase) {
    return p.text.find(phrase) != std::string::npos;
  };
  c.check(has(render_summarize(doc), "no more than 3 sentences"), "summary length limit missing");
  c.check(has(render_extract_entities(doc), "Entity Pairs:"), "\"Entity Pairs:\" missing");
  c.check(has(render_translate(doc, NoKnowledge{}), "no sentences are omitted"),
          "omission instruction missing");
  c.check(has(render_format_suffix(FormatTask::summary), "in dictionary format"),
          "summary dictionary instruction missing");
  c.check(has(render_format_suffix(FormatTask::entities), "in dictionary format"),
          "entity dictionary instruction missing");
  c.check(has(render_format_suffix(FormatTask::translation),
              "{'#1': translation result of sentence 1, '#2': translation result of sentence 2}"),
          "translation dictionary example missing");
  return c.done("11 templates byte-identical");
}

Outcome parsing_robustness() {
  Checker c;
  auto cases = kfmt_test::load_parsing_cases();
  c.check(cases.size() == 20, "expected 20 cases, found " + std::to_string(cases.size()));
  std::size_t ok = 0;
  for (const auto& tc : cases) {
    const auto name = tc["name"].get<std::string>();
    try {
      auto parsed = parse_translation_map(tc["raw"].get<std::string>(),
                                          tc["expected_n"].get<std::size_t>());
      std::map<SentenceIndex, std::string> segments;
      for (const auto& [k, v] : tc["segments"].items()) segments[std::stoul(k)] = v;
      bool match = parsed.segments == segments &&
                   parsed.missing == tc["missing"].get<std::set<SentenceIndex>>() &&
                   parsed.extraneous == tc["extraneous"].get<std::set<std::string>>() &&
                   to_string(parsed.step) == tc["step"].get<std::string>();
      c.check(match, name + ": result differs from expectation");
      if (match) ++ok;
    } catch (const std::exception& e) {
      c.check(false, name + ": " + e.what());
    }
  }
  return c.done(std::to_string(ok) + "/" + std::to_string(cases.size()) + " cases");
}

int run_cli(const std::string& args, const fs::path& out) {
  auto cmd = "'" + std::string(KFMT_CLI_PATH) + "' " + args + " >'" + out.string() + "' 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome e2e_determinism() {
  Checker c;
  kfmt_test::TempDir tmp;
  const auto args = "run --corpus '" + kfmt_test::fixture_path("e2e/corpus.jsonl").string() +
                    "' --mock-fixtures '" + kfmt_test::fixture_path("e2e/mock.jsonl").string() +
                    "' --cache-dir '" + (tmp / "cache").string() + "' --retry-base-ms 0";
  int first = run_cli(args + " --run-dir '" + (tmp / "a").string() + "'", tmp / "a.out");
  int second = run_cli(args + " --run-dir '" + (tmp / "b").string() + "'", tmp / "b.out");
  c.check(first == 0 && second == 0, "cli exit codes " + std::to_string(first) + ", " +
                                         std::to_string(second));
  if (first != 0 || second != 0) return c.done("");

  auto report_a = kfmt_test::read_file(tmp / "a/report.json");
  auto report_b = kfmt_test::read_file(tmp / "b/report.json");
  c.check(report_a == report_b, "report.json differs between runs");

  auto report = json::parse(report_a);
  double worst = 0.0;
  for (const auto& [system, props] : report["selection_proportions"].items()) {
    double sum = 0.0;
    for (const auto& [_, p] : props.items()) sum += p.get<double>();
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  c.check(!report["selection_proportions"].empty(), "no selection proportions");
  c.check(worst <= 1e-9, "proportions sum off by " + std::to_string(worst));

  auto rerun = json::parse(kfmt_test::read_file(tmp / "b/summary.json"));
  c.check(rerun["backend_calls"] == 0, "rerun made " + rerun["backend_calls"].dump() +
                                           " backend calls");
  c.check(rerun["cache_hits"].get<int>() > 0, "rerun had no cache hits");
  return c.done("identical report.json, rerun " + rerun["cache_hits"].dump() +
                " cache hits, 0 backend calls");
}

Outcome report_aggregation() {
  Checker c;
  const std::vector<std::string> dirs{"En-De", "De-En", "En-Es", "Es-En",
                                      "En-Ru", "Ru-En", "En-Fr", "Fr-En"};
  auto row = [&](std::vector<double> v) {
    std::map<std::string, double> m;
    for (std::size_t i = 0; i < dirs.size(); ++i) m[dirs[i]] = v[i];
    return m;
  };
  auto baseline = row({85.2, 88.2, 87.1, 88.8, 83.8, 83.9, 84.9, 87.0});
  auto kfmt_row = row({86.1, 88.6, 87.8, 89.0, 85.5, 84.7, 85.8, 87.6});
  auto avg = format_fixed(row_average(baseline));
  auto diff = format_fixed(row_average(kfmt_row) - row_average(baseline));
  c.check(avg == "86.1", "Baseline average " + avg);
  c.check(diff == "0.8", "KFMT - Baseline " + diff);
  return c.done("Baseline " + avg + ", KFMT - Baseline +" + diff);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"fusion optimality", fusion_optimality},
      {"fusion monotonicity", fusion_monotonicity},
      {"oracle sanity", oracle_sanity},
      {"tie protocol", tie_protocol},
      {"token ensemble", token_ensemble},
      {"metrics", metrics},
      {"prompt fidelity", prompt_fidelity},
      {"parsing robustness", parsing_robustness},
      {"end-to-end determinism", e2e_determinism},
      {"report aggregation", report_aggregation},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
