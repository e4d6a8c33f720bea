#include "ztok/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "ztok/core/error.hpp"

namespace ztok::metrics {

namespace {

using NgramCounts = std::map<std::vector<int>, long>;

NgramCounts ngram_counts(std::span<const int> toks, int n) {
  NgramCounts counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[std::vector<int>(toks.begin() + i, toks.begin() + i + n)];
  return counts;
}

long clipped_matches(const NgramCounts& cand, const NgramCounts& ref_max) {
  long m = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref_max.find(gram);
    if (it != ref_max.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace

void BleuAccumulator::add(std::span<const int> candidate,
                          const std::vector<std::vector<int>>& references) {
  ZTOK_CHECK(!candidate.empty(), input, "bleu: empty candidate");
  ZTOK_CHECK(!references.empty(), input, "bleu: empty reference list");
  for (int n = 1; n <= 4; ++n) {
    NgramCounts cand = ngram_counts(candidate, n);
    NgramCounts ref_max;
    for (const auto& ref : references) {
      ZTOK_CHECK(!ref.empty(), input, "bleu: empty reference");
      for (const auto& [gram, c] : ngram_counts(ref, n))
        ref_max[gram] = std::max(ref_max[gram], c);
    }
    matches_[n - 1] += clipped_matches(cand, ref_max);
    long total = 0;
    for (const auto& [gram, c] : cand) total += c;
    totals_[n - 1] += total;
  }
  candidate_len_ += static_cast<long>(candidate.size());
  // Effective reference length: closest to the candidate, shorter on ties.
  long best = static_cast<long>(references[0].size());
  for (const auto& ref : references) {
    long len = static_cast<long>(ref.size());
    long c = static_cast<long>(candidate.size());
    if (std::abs(len - c) < std::abs(best - c) || (std::abs(len - c) == std::abs(best - c) &&
                                                   len < best))
      best = len;
  }
  reference_len_ += best;
}

double BleuAccumulator::score() const {
  if (totals_[0] == 0 || matches_[0] == 0) return 0.0;
  double log_prec = 0.0;
  for (int n = 1; n <= 4; ++n) {
    long m = matches_[n - 1], t = totals_[n - 1];
    double p;
    if (n == 1) {
      p = static_cast<double>(m) / static_cast<double>(t);
    } else if (m == 0) {
      // Add-one smoothing, applied only when a higher-order precision is 0.
      p = 1.0 / static_cast<double>(t + 1);
    } else {
      p = static_cast<double>(m) / static_cast<double>(t);
    }
    log_prec += std::log(p);
  }
  double bp = candidate_len_ >= reference_len_
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(reference_len_) /
                                       static_cast<double>(candidate_len_));
  return bp * std::exp(log_prec / 4.0);
}

double bleu4(std::span<const int> candidate, const std::vector<std::vector<int>>& references) {
  BleuAccumulator acc;
  acc.add(candidate, references);
  return acc.score();
}

namespace {

double overlap_f1(std::span<const int> cand, std::span<const int> ref, int n) {
  NgramCounts c = ngram_counts(cand, n);
  NgramCounts r = ngram_counts(ref, n);
  long match = clipped_matches(c, r);
  long nc = 0, nr = 0;
  for (const auto& [g, k] : c) nc += k;
  for (const auto& [g, k] : r) nr += k;
  if (nc == 0 || nr == 0 || match == 0) return 0.0;
  double p = static_cast<double>(match) / nc;
  double rec = static_cast<double>(match) / nr;
  return 2.0 * p * rec / (p + rec);
}

long lcs_length(std::span<const int> a, std::span<const int> b) {
  std::vector<long> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

RougeScores rouge(std::span<const int> candidate, std::span<const int> reference) {
  ZTOK_CHECK(!candidate.empty() && !reference.empty(), input, "rouge: empty input");
  RougeScores s;
  s.r1 = overlap_f1(candidate, reference, 1);
  s.r2 = overlap_f1(candidate, reference, 2);
  long lcs = lcs_length(candidate, reference);
  if (lcs > 0) {
    double p = static_cast<double>(lcs) / candidate.size();
    double r = static_cast<double>(lcs) / reference.size();
    s.rl = 2.0 * p * r / (p + r);
  }
  return s;
}

double perplexity(std::span<const double> token_cross_entropies) {
  ZTOK_CHECK(!token_cross_entropies.empty(), input, "perplexity: empty input");
  double sum = 0.0;
  for (double ce : token_cross_entropies) {
    ZTOK_CHECK(std::isfinite(ce), input, "perplexity: non-finite cross-entropy");
    ZTOK_CHECK(ce >= 0.0, input, "perplexity: negative cross-entropy");
    sum += ce;
  }
  return std::exp(sum / static_cast<double>(token_cross_entropies.size()));
}

double ppl_gap(double ppl_original, double ppl_z) { return ppl_z - ppl_original; }

std::string qa_normalize(const std::string& s) {
  std::ostringstream out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    if (word != "a" && word != "an" && word != "the") {
      if (out.tellp() > 0) out << ' ';
      out << word;
    }
    word.clear();
  };
  for (unsigned char c : s) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      word.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      word.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      flush();
    }
  }
  flush();
  return out.str();
}

namespace {
std::vector<std::string> qa_tokens(const std::string& s) {
  std::vector<std::string> toks;
  std::istringstream in(qa_normalize(s));
  std::string w;
  while (in >> w) toks.push_back(w);
  return toks;
}
}  // namespace

double token_f1(const std::string& prediction, const std::string& gold) {
  std::vector<std::string> p = qa_tokens(prediction);
  std::vector<std::string> g = qa_tokens(gold);
  ZTOK_CHECK(!g.empty(), input, "token_f1: empty gold after normalization");
  if (p.empty()) return 0.0;
  std::map<std::string, long> pc, gc;
  for (const auto& w : p) ++pc[w];
  for (const auto& w : g) ++gc[w];
  long common = 0;
  for (const auto& [w, c] : pc) {
    auto it = gc.find(w);
    if (it != gc.end()) common += std::min(c, it->second);
  }
  if (common == 0) return 0.0;
  double prec = static_cast<double>(common) / p.size();
  double rec = static_cast<double>(common) / g.size();
  return 2.0 * prec * rec / (prec + rec);
}

int exact_match(const std::string& prediction, const std::string& gold) {
  return qa_normalize(prediction) == qa_normalize(gold) ? 1 : 0;
}

}  // namespace ztok::metrics
