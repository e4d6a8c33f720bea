#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace ztok::metrics {

// Corpus-level BLEU-4 state: clipped modified n-gram matches and totals for
// n = 1..4 plus the brevity-penalty lengths. Sentence BLEU is the
// single-segment case. Scores are in [0,1]; callers print x100.
class BleuAccumulator {
 public:
  void add(std::span<const int> candidate,
           const std::vector<std::vector<int>>& references);
  double score() const;

 private:
  std::array<long, 4> matches_{0, 0, 0, 0};
  std::array<long, 4> totals_{0, 0, 0, 0};
  long candidate_len_ = 0;
  long reference_len_ = 0;
};

double bleu4(std::span<const int> candidate, const std::vector<std::vector<int>>& references);

struct RougeScores {
  double r1 = 0.0;
  double r2 = 0.0;
  double rl = 0.0;
};
RougeScores rouge(std::span<const int> candidate, std::span<const int> reference);

// exp(mean cross-entropy), natural-log convention.
double perplexity(std::span<const double> token_cross_entropies);

double ppl_gap(double ppl_original, double ppl_z);

// QA convention: lowercase, strip punctuation and articles, collapse
// whitespace. EM is equality of normalized strings; F1 is bag-of-tokens
// overlap with multiplicity.
std::string qa_normalize(const std::string& s);
double token_f1(const std::string& prediction, const std::string& gold);
int exact_match(const std::string& prediction, const std::string& gold);

}  // namespace ztok::metrics
