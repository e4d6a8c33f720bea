#pragma once

#include <cstdint>
#include <vector>

#include "ztok/data/corpus.hpp"

namespace ztok::data {

// Synthetic phrase-grammar corpus: documents are Markov walks over a small
// inventory of fixed multi-token phrases, optionally interrupted by
// incompressible noise blocks. Higher redundancy means more phrase reuse
// and therefore more compressible text. Deterministic given the seed.
struct GrammarParams {
  int vocab_size = 256;  // distinct word strings + specials available
  int doc_len_min = 64;
  int doc_len_max = 128;
  double redundancy = 0.9;  // in [0,1]: probability a block is a phrase
  int n_docs = 100;
};

struct Grammar {
  static constexpr int kPhraseLen = 8;
  std::vector<std::string> words;
  std::vector<std::vector<int>> phrases;     // word indices, kPhraseLen each
  std::vector<std::vector<int>> successors;  // Markov transitions over phrases
};

Grammar build_grammar(uint64_t seed, const GrammarParams& params);

std::vector<RawDoc> synth_corpus(uint64_t seed, const GrammarParams& params);

// Paraphrase-style sentence pairs from one grammar: each pair renders the
// same phrase walk with a benign reordering; unrelated pairs come from
// independent walks. Used by the interpretability probes.
struct SentencePair {
  std::string a;
  std::string b;
  bool related = false;
};
std::vector<SentencePair> synth_sentence_pairs(uint64_t seed, const GrammarParams& params,
                                               int n_pairs);

}  // namespace ztok::data
