#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "support/reference_metrics.hpp"
#include "ztok/core/error.hpp"
#include "ztok/core/rng.hpp"
#include "ztok/metrics/metrics.hpp"

using namespace ztok;
using namespace ztok::metrics;

TEST_CASE("bleu trivial cases") {
  std::vector<int> cand{1, 2, 3, 4, 5, 6};
  CHECK(bleu4(cand, {cand}) == doctest::Approx(1.0));
  std::vector<int> disjoint{9, 9, 9, 9};
  CHECK(bleu4(disjoint, {cand}) == 0.0);
  CHECK_THROWS_AS(bleu4(cand, {}), Error);
  CHECK_THROWS_AS(bleu4(std::vector<int>{}, {cand}), Error);
}

TEST_CASE("bleu monotonicity spot-check: extending with a correct token") {
  // Appending a gold continuation token never lowers the clipped unigram
  // match count.
  std::vector<int> ref{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> cand{1, 2, 3, 4};
  auto unigram_matches = [&](const std::vector<int>& c) {
    long m = 0;
    std::vector<int> used;
    for (int t : c) {
      long in_c = std::count(c.begin(), c.end(), t);
      long in_r = std::count(ref.begin(), ref.end(), t);
      if (std::find(used.begin(), used.end(), t) != used.end()) continue;
      used.push_back(t);
      m += std::min(in_c, in_r);
    }
    return m;
  };
  long before = unigram_matches(cand);
  cand.push_back(5);
  CHECK(unigram_matches(cand) >= before);
}

TEST_CASE("bleu and rouge match the independent reference on a golden set") {
  // 20 deterministic pairs with varied lengths, overlaps and reference
  // counts; both implementations must agree to 1e-6.
  RngState rng(2718);
  int agreements = 0;
  for (int pair = 0; pair < 20; ++pair) {
    int vocab = 3 + static_cast<int>(rng.next_below(12));
    int clen = 3 + static_cast<int>(rng.next_below(30));
    std::vector<int> cand(static_cast<size_t>(clen));
    for (int& t : cand) t = static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab)));
    int nrefs = 1 + static_cast<int>(rng.next_below(3));
    std::vector<std::vector<int>> refs;
    for (int r = 0; r < nrefs; ++r) {
      int rlen = 3 + static_cast<int>(rng.next_below(30));
      std::vector<int> ref(static_cast<size_t>(rlen));
      for (int& t : ref) t = static_cast<int>(rng.next_below(static_cast<uint64_t>(vocab)));
      // splice in a shared chunk so overlaps are nontrivial
      for (int k = 0; k < std::min(rlen, clen) / 2; ++k) ref[static_cast<size_t>(k)] = cand[static_cast<size_t>(k)];
      refs.push_back(std::move(ref));
    }
    double mine = bleu4(cand, refs);
    double oracle = testutil::ref_bleu(cand, refs);
    CHECK(mine == doctest::Approx(oracle).epsilon(1e-6));
    auto r = rouge(cand, refs[0]);
    auto ro = testutil::ref_rouge(cand, refs[0]);
    CHECK(r.r1 == doctest::Approx(ro.r1).epsilon(1e-6));
    CHECK(r.r2 == doctest::Approx(ro.r2).epsilon(1e-6));
    CHECK(r.rl == doctest::Approx(ro.rl).epsilon(1e-6));
    ++agreements;
  }
  CHECK(agreements == 20);
}

TEST_CASE("corpus bleu accumulates across segments") {
  RngState rng(3);
  BleuAccumulator acc;
  testutil::RefBleuStats ref_st;
  for (int seg = 0; seg < 8; ++seg) {
    std::vector<int> cand(12);
    std::vector<int> ref(14);
    for (int& t : cand) t = static_cast<int>(rng.next_below(6));
    for (int& t : ref) t = static_cast<int>(rng.next_below(6));
    acc.add(cand, {ref});
    testutil::ref_bleu_accumulate(ref_st, cand, {ref});
  }
  CHECK(acc.score() == doctest::Approx(testutil::ref_bleu_score(ref_st)).epsilon(1e-9));
}

TEST_CASE("rouge trivial cases") {
  std::vector<int> a{1, 2, 3, 4};
  auto s = rouge(a, a);
  CHECK(s.r1 == doctest::Approx(1.0));
  CHECK(s.r2 == doctest::Approx(1.0));
  CHECK(s.rl == doctest::Approx(1.0));
  std::vector<int> b{7, 8, 9};
  auto d = rouge(a, b);
  CHECK(d.r1 == 0.0);
  CHECK(d.r2 == 0.0);
  CHECK(d.rl == 0.0);
  CHECK_THROWS_AS(rouge(std::vector<int>{}, a), Error);
}

TEST_CASE("perplexity") {
  std::vector<double> zeros{0.0, 0.0, 0.0};
  CHECK(perplexity(zeros) == doctest::Approx(1.0));
  // uniform model over V: every CE is ln V, perplexity V
  std::vector<double> uniform(5, std::log(37.0));
  CHECK(perplexity(uniform) == doctest::Approx(37.0).epsilon(1e-12));
  std::vector<double> half{std::log(2.0)};
  CHECK(perplexity(half) == doctest::Approx(2.0));
  CHECK_THROWS_AS(perplexity(std::vector<double>{}), Error);
  CHECK_THROWS_AS(perplexity(std::vector<double>{std::nan("")}), Error);
}

TEST_CASE("ppl gap matches reported rows") {
  CHECK(ppl_gap(29.96, 30.12) == doctest::Approx(0.16).epsilon(1e-9));
  CHECK(ppl_gap(30.42, 30.65) == doctest::Approx(0.23).epsilon(1e-9));
  CHECK(ppl_gap(5.0, 5.0) == 0.0);
}

TEST_CASE("qa f1 and exact match") {
  CHECK(token_f1("the quick fox", "The quick fox!") == doctest::Approx(1.0));
  CHECK(exact_match("the quick fox", "The QUICK fox") == 1);
  CHECK(token_f1("alpha beta", "gamma delta") == 0.0);
  CHECK(exact_match("alpha", "beta") == 0);
  // prediction covering half the gold tokens with no extras:
  // precision 1, recall 0.5, F1 = 2/3
  CHECK(token_f1("one two", "one two three four") == doctest::Approx(2.0 / 3.0));
  // articles are stripped
  CHECK(exact_match("a cat", "the cat") == 1);
  CHECK(qa_normalize("An Apple, a day!") == "apple day");
}

TEST_CASE("metric ranges and identity") {
  RngState rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> cand(1 + rng.next_below(20));
    std::vector<int> ref(1 + rng.next_below(20));
    for (int& t : cand) t = static_cast<int>(rng.next_below(5));
    for (int& t : ref) t = static_cast<int>(rng.next_below(5));
    double b = bleu4(cand, {ref});
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    CHECK(bleu4(cand, {cand}) == doctest::Approx(1.0));
    auto r = rouge(cand, ref);
    for (double v : {r.r1, r.r2, r.rl}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
