#pragma once

// Independent reference implementations of BLEU-4 and ROUGE used as test
// oracles. Deliberately written with a different organization than the
// library (brute-force n-gram scans, no shared helpers) so the two paths
// can only agree by computing the same quantity.

#include <algorithm>
#include <functional>
#include <cmath>
#include <span>
#include <vector>

namespace ztok::testutil {

namespace refdetail {

inline bool same_gram(std::span<const int> a, size_t ai, std::span<const int> b, size_t bi,
                      int n) {
  for (int k = 0; k < n; ++k)
    if (a[ai + k] != b[bi + k]) return false;
  return true;
}

// Count of gram (at position ai in a) within sequence b.
inline long gram_count_in(std::span<const int> a, size_t ai, std::span<const int> b, int n) {
  if (static_cast<int>(b.size()) < n) return 0;
  long c = 0;
  for (size_t j = 0; j + n <= b.size(); ++j)
    if (same_gram(a, ai, b, j, n)) ++c;
  return c;
}

inline bool first_occurrence(std::span<const int> a, size_t ai, int n) {
  for (size_t j = 0; j < ai; ++j)
    if (same_gram(a, j, a, ai, n)) return false;
  return true;
}

}  // namespace refdetail

struct RefBleuStats {
  long match[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  long cand_len = 0;
  long ref_len = 0;
};

inline void ref_bleu_accumulate(RefBleuStats& st, std::span<const int> cand,
                                const std::vector<std::vector<int>>& refs) {
  using namespace refdetail;
  for (int n = 1; n <= 4; ++n) {
    if (static_cast<int>(cand.size()) < n) continue;
    for (size_t i = 0; i + n <= cand.size(); ++i) {
      st.total[n - 1] += 1;
      if (!first_occurrence(cand, i, n)) continue;
      long in_cand = gram_count_in(cand, i, cand, n);
      long best_ref = 0;
      for (const auto& r : refs) best_ref = std::max(best_ref, gram_count_in(cand, i, r, n));
      st.match[n - 1] += std::min(in_cand, best_ref);
    }
  }
  st.cand_len += static_cast<long>(cand.size());
  long best = static_cast<long>(refs[0].size());
  for (const auto& r : refs) {
    long len = static_cast<long>(r.size());
    long c = static_cast<long>(cand.size());
    long db = std::abs(best - c), dl = std::abs(len - c);
    if (dl < db || (dl == db && len < best)) best = len;
  }
  st.ref_len += best;
}

inline double ref_bleu_score(const RefBleuStats& st) {
  if (st.total[0] == 0 || st.match[0] == 0) return 0.0;
  double logsum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double p;
    if (n > 1 && st.match[n - 1] == 0)
      p = 1.0 / (st.total[n - 1] + 1.0);
    else
      p = static_cast<double>(st.match[n - 1]) / st.total[n - 1];
    logsum += std::log(p);
  }
  double bp = 1.0;
  if (st.cand_len < st.ref_len)
    bp = std::exp(1.0 - static_cast<double>(st.ref_len) / st.cand_len);
  return bp * std::exp(logsum / 4.0);
}

inline double ref_bleu(std::span<const int> cand, const std::vector<std::vector<int>>& refs) {
  RefBleuStats st;
  ref_bleu_accumulate(st, cand, refs);
  return ref_bleu_score(st);
}

struct RefRouge {
  double r1, r2, rl;
};

inline double ref_ngram_f1(std::span<const int> cand, std::span<const int> ref, int n) {
  using namespace refdetail;
  if (static_cast<int>(cand.size()) < n || static_cast<int>(ref.size()) < n) return 0.0;
  long match = 0;
  for (size_t i = 0; i + n <= cand.size(); ++i) {
    if (!first_occurrence(cand, i, n)) continue;
    match += std::min(gram_count_in(cand, i, cand, n), gram_count_in(cand, i, ref, n));
  }
  long nc = static_cast<long>(cand.size()) - n + 1;
  long nr = static_cast<long>(ref.size()) - n + 1;
  if (match == 0) return 0.0;
  double p = static_cast<double>(match) / nc;
  double r = static_cast<double>(match) / nr;
  return 2.0 * p * r / (p + r);
}

// Recursive-with-memo LCS, distinct from the library's iterative rolling DP.
inline long ref_lcs(std::span<const int> a, std::span<const int> b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<long(size_t, size_t)> go = [&](size_t i, size_t j) -> long {
    if (i == 0 || j == 0) return 0;
    long& m = memo[i][j];
    if (m >= 0) return m;
    if (a[i - 1] == b[j - 1]) return m = go(i - 1, j - 1) + 1;
    return m = std::max(go(i - 1, j), go(i, j - 1));
  };
  return go(a.size(), b.size());
}

inline RefRouge ref_rouge(std::span<const int> cand, std::span<const int> ref) {
  RefRouge out{ref_ngram_f1(cand, ref, 1), ref_ngram_f1(cand, ref, 2), 0.0};
  long lcs = ref_lcs(cand, ref);
  if (lcs > 0) {
    double p = static_cast<double>(lcs) / cand.size();
    double r = static_cast<double>(lcs) / ref.size();
    out.rl = 2.0 * p * r / (p + r);
  }
  return out;
}

}  // namespace ztok::testutil
