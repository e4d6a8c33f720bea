#include "ztok/data/synth.hpp"

#include <algorithm>

#include "ztok/core/rng.hpp"

namespace ztok::data {

namespace {

const char* kSyllables[] = {"ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du",
                            "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
                            "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu",
                            "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su",
                            "ta", "te", "ti", "to", "tu", "za", "ze", "zi", "zo", "zu"};
constexpr int kNumSyllables = 50;

std::string word_string(int i) {
  std::string w = kSyllables[(i / kNumSyllables) % kNumSyllables];
  w += kSyllables[i % kNumSyllables];
  if (i >= kNumSyllables * kNumSyllables)
    w += kSyllables[(i / (kNumSyllables * kNumSyllables)) % kNumSyllables];
  return w;
}

void validate(const GrammarParams& p) {
  ZTOK_CHECK(p.vocab_size >= Vocabulary::kNumSpecials + 2 * Grammar::kPhraseLen, input,
             "synth_corpus: vocab_size too small");
  ZTOK_CHECK(p.doc_len_min > 0 && p.doc_len_max >= p.doc_len_min, input,
             "synth_corpus: bad doc length range");
  ZTOK_CHECK(p.redundancy >= 0.0 && p.redundancy <= 1.0, input,
             "synth_corpus: redundancy must be in [0,1]");
  ZTOK_CHECK(p.n_docs > 0, input, "synth_corpus: n_docs must be positive");
}

}  // namespace

Grammar build_grammar(uint64_t seed, const GrammarParams& params) {
  validate(params);
  RngState rng = RngState(seed).fork(0xB00C);
  Grammar g;
  int n_words = params.vocab_size - Vocabulary::kNumSpecials;
  g.words.reserve(n_words);
  for (int i = 0; i < n_words; ++i) g.words.push_back(word_string(i));

  int n_phrases = std::clamp(n_words / Grammar::kPhraseLen, 4, 30);
  g.phrases.resize(n_phrases);
  if (n_phrases * Grammar::kPhraseLen <= n_words) {
    // Enough room for disjoint phrase vocabularies: any token identifies
    // its phrase, which keeps the corpus cleanly learnable at small scale.
    std::vector<int> order(n_words);
    for (int i = 0; i < n_words; ++i) order[i] = i;
    for (int i = n_words - 1; i > 0; --i)
      std::swap(order[i], order[rng.next_below(static_cast<uint64_t>(i + 1))]);
    for (int p = 0; p < n_phrases; ++p)
      for (int k = 0; k < Grammar::kPhraseLen; ++k)
        g.phrases[p].push_back(order[p * Grammar::kPhraseLen + k]);
  } else {
    for (int p = 0; p < n_phrases; ++p)
      for (int k = 0; k < Grammar::kPhraseLen; ++k)
        g.phrases[p].push_back(static_cast<int>(rng.next_below(n_words)));
  }

  const int n_succ = std::min(4, n_phrases - 1);
  g.successors.resize(n_phrases);
  for (int p = 0; p < n_phrases; ++p) {
    while (static_cast<int>(g.successors[p].size()) < n_succ) {
      int cand = static_cast<int>(rng.next_below(n_phrases));
      if (cand == p) continue;
      if (std::find(g.successors[p].begin(), g.successors[p].end(), cand) !=
          g.successors[p].end())
        continue;
      g.successors[p].push_back(cand);
    }
  }
  return g;
}

namespace {

// Blocks per document: an even phrase count whose token total lands in the
// requested range. Even counts keep lengths divisible by 2*kPhraseLen.
int pick_block_count(RngState& rng, const GrammarParams& p) {
  int lo = (p.doc_len_min + Grammar::kPhraseLen - 1) / Grammar::kPhraseLen;
  int hi = p.doc_len_max / Grammar::kPhraseLen;
  if (hi < lo) hi = lo;
  std::vector<int> evens;
  for (int b = lo; b <= hi; ++b)
    if (b % 2 == 0) evens.push_back(b);
  if (!evens.empty()) return evens[rng.next_below(evens.size())];
  return lo + static_cast<int>(rng.next_below(static_cast<uint64_t>(hi - lo + 1)));
}

std::string render_walk(const Grammar& g, RngState& rng, int n_blocks, double redundancy) {
  std::string text;
  int cur = static_cast<int>(rng.next_below(g.phrases.size()));
  for (int b = 0; b < n_blocks; ++b) {
    bool phrase_block = rng.next_uniform() < redundancy;
    if (phrase_block) {
      for (int w : g.phrases[cur]) {
        if (!text.empty()) text.push_back(' ');
        text += g.words[w];
      }
    } else {
      for (int k = 0; k < Grammar::kPhraseLen; ++k) {
        if (!text.empty()) text.push_back(' ');
        text += g.words[rng.next_below(g.words.size())];
      }
    }
    const auto& succ = g.successors[cur];
    cur = succ[rng.next_below(succ.size())];
  }
  return text;
}

}  // namespace

std::vector<RawDoc> synth_corpus(uint64_t seed, const GrammarParams& params) {
  validate(params);
  Grammar g = build_grammar(seed, params);
  std::vector<RawDoc> docs;
  docs.reserve(params.n_docs);
  RngState base(seed);
  for (int d = 0; d < params.n_docs; ++d) {
    RngState rng = base.fork(0xD0C, static_cast<uint64_t>(d));
    int n_blocks = pick_block_count(rng, params);
    RawDoc doc;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "doc%05d", d);
    doc.id = buf;
    doc.text = render_walk(g, rng, n_blocks, params.redundancy);
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<SentencePair> synth_sentence_pairs(uint64_t seed, const GrammarParams& params,
                                               int n_pairs) {
  validate(params);
  ZTOK_CHECK(n_pairs > 0, input, "synth_sentence_pairs: n_pairs must be positive");
  Grammar g = build_grammar(seed, params);
  RngState base(seed);
  std::vector<SentencePair> pairs;
  auto render_phrases = [&](const std::vector<int>& ps) {
    std::string text;
    for (int p : ps)
      for (int w : g.phrases[p]) {
        if (!text.empty()) text.push_back(' ');
        text += g.words[w];
      }
    return text;
  };
  for (int i = 0; i < n_pairs; ++i) {
    RngState rng = base.fork(0x9A12, static_cast<uint64_t>(i));
    bool related = (i % 2 == 0);
    SentencePair sp;
    sp.related = related;
    if (related) {
      // Same phrase multiset, benignly reordered.
      std::vector<int> walk;
      int cur = static_cast<int>(rng.next_below(g.phrases.size()));
      for (int b = 0; b < 4; ++b) {
        walk.push_back(cur);
        cur = g.successors[cur][rng.next_below(g.successors[cur].size())];
      }
      std::vector<int> reordered = {walk[1], walk[0], walk[3], walk[2]};
      sp.a = render_phrases(walk);
      sp.b = render_phrases(reordered);
    } else {
      std::vector<int> wa, wb;
      int ca = static_cast<int>(rng.next_below(g.phrases.size()));
      int cb = static_cast<int>(rng.next_below(g.phrases.size()));
      for (int b = 0; b < 4; ++b) {
        wa.push_back(ca);
        wb.push_back(cb);
        ca = g.successors[ca][rng.next_below(g.successors[ca].size())];
        cb = g.successors[cb][rng.next_below(g.successors[cb].size())];
      }
      sp.a = render_phrases(wa);
      sp.b = render_phrases(wb);
    }
    pairs.push_back(std::move(sp));
  }
  return pairs;
}

}  // namespace ztok::data
