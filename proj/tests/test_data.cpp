#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <set>

#include "doctest.h"
#include "ztok/core/rng.hpp"
#include "ztok/data/corpus.hpp"
#include "ztok/data/synth.hpp"
#include "ztok/data/tokenizer.hpp"
#include "ztok/data/vocab.hpp"
#include "ztok/data/windows.hpp"
#include "ztok/io/files.hpp"

using namespace ztok;
using namespace ztok::data;

namespace {
std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("tokenizer basics") {
  std::vector<std::string> texts{"The cat sat, and the DOG ran!", "a cat and a dog"};
  Vocabulary vocab = build_vocabulary(texts, 64, 8);
  CHECK(tokenize("", vocab).empty());
  // unknown word maps to unk
  std::vector<int> oov = tokenize("zzzunseen", vocab);
  REQUIRE(oov.size() == 1);
  CHECK(oov[0] == Vocabulary::kUnk);
  // round trip up to normalization
  std::string s = "The cat sat, and the DOG ran!";
  CHECK(detokenize(tokenize(s, vocab), vocab) == normalize_text(s));
  CHECK(normalize_text(s) == "the cat sat , and the dog ran !");
  // every id in base range
  for (int id : tokenize(s, vocab)) CHECK(vocab.is_base(id));
}

TEST_CASE("vocabulary partition and persistence") {
  Vocabulary vocab = build_vocabulary({"alpha beta beta gamma"}, 32, 16);
  CHECK(vocab.base_size() <= 32);
  CHECK(vocab.z_size() == 16);
  CHECK(vocab.z_stop() == vocab.base_size());
  CHECK(vocab.is_base(0));
  CHECK(vocab.is_z(vocab.base_size()));
  CHECK(!vocab.is_z(vocab.base_size() - 1));
  CHECK(!vocab.is_base(vocab.base_size()));
  CHECK_THROWS_AS(vocab.require_z(0), Error);
  CHECK_THROWS_AS(vocab.require_base(vocab.z_stop()), Error);
  // frequency ranking: beta appears twice, so it outranks alpha and gamma
  CHECK(vocab.token_id("beta") < vocab.token_id("alpha"));

  std::string path = tmp_path("ztok_vocab_test.txt");
  vocab.save(path);
  Vocabulary back = Vocabulary::load(path);
  CHECK(back.hash() == vocab.hash());
  CHECK(back.base_size() == vocab.base_size());
  CHECK(back.token_id("beta") == vocab.token_id("beta"));
  // hash is sensitive to content
  Vocabulary other = build_vocabulary({"alpha beta beta gamma delta"}, 32, 16);
  CHECK(other.hash() != vocab.hash());
}

TEST_CASE("corpus jsonl round trip") {
  std::vector<RawDoc> docs{{"a", "hello world", std::nullopt},
                           {"b", "prompt text", std::string("the answer")}};
  std::string path = tmp_path("ztok_corpus_test.jsonl");
  write_corpus(path, docs);
  std::vector<RawDoc> back = read_corpus(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].text == "hello world");
  CHECK(!back[0].response);
  CHECK(back[1].response.value() == "the answer");
  io::write_file_atomic(path, "{\"id\": 3}\n");
  CHECK_THROWS_AS(read_corpus(path), Error);
}

TEST_CASE("windows: spec examples") {
  // N = 1024, W = 1024, S = 256: one exact window
  WindowSet one = make_windows(1024, 1024, 256);
  REQUIRE(one.windows.size() == 1);
  CHECK(one.windows[0].start == 0);
  CHECK(one.windows[0].end == 1024);

  // N = 1536: starts {0, 256, 512} (enumeration oracle below)
  WindowSet three = make_windows(1536, 1024, 256);
  REQUIRE(three.windows.size() == 3);
  CHECK(three.windows[0].start == 0);
  CHECK(three.windows[1].start == 256);
  CHECK(three.windows[2].start == 512);
  // consecutive overlap = W - S = 768
  for (size_t i = 0; i + 1 < three.windows.size(); ++i)
    CHECK(three.overlap(i).length() == 1024 - 256);

  CHECK_THROWS_AS(make_windows(0, 8, 4), Error);
  CHECK_THROWS_AS(make_windows(16, 4, 8), Error);
}

TEST_CASE("windows: coverage property against enumeration oracle") {
  RngState rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    int w = 2 + static_cast<int>(rng.next_below(40));
    int s = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(w)));
    int n = 1 + static_cast<int>(rng.next_below(300));
    WindowSet ws = make_windows(n, w, s);
    // oracle: brute-force membership count per token
    std::vector<int> cover(static_cast<size_t>(n), 0);
    for (const auto& win : ws.windows) {
      CHECK(win.start >= 0);
      CHECK(win.end <= n);
      CHECK(win.length() <= w);
      for (int t = win.start; t < win.end; ++t) ++cover[static_cast<size_t>(t)];
    }
    for (int t = 0; t < n; ++t) CHECK(cover[static_cast<size_t>(t)] >= 1);
    // every consecutive pair overlaps by exactly W - S except the last pair
    for (size_t i = 0; i + 2 < ws.windows.size(); ++i)
      CHECK(ws.overlap(i).length() == w - s);
    // tokens inside a pair's overlap belong to both windows of the pair
    for (size_t i = 0; i + 1 < ws.windows.size(); ++i) {
      auto ov = ws.overlap(i);
      for (int t = ov.start; t < ov.end; ++t) {
        CHECK(t >= ws.windows[i].start);
        CHECK(t < ws.windows[i].end);
        CHECK(t >= ws.windows[i + 1].start);
        CHECK(t < ws.windows[i + 1].end);
      }
    }
  }
}

TEST_CASE("synthetic corpus: determinism and bounds") {
  GrammarParams gp;
  gp.vocab_size = 64;
  gp.doc_len_min = 32;
  gp.doc_len_max = 64;
  gp.redundancy = 0.8;
  gp.n_docs = 20;
  auto a = synth_corpus(123, gp);
  auto b = synth_corpus(123, gp);
  auto c = synth_corpus(124, gp);
  REQUIRE(a.size() == 20);
  bool all_same = true, any_diff_seed = false;
  for (size_t i = 0; i < a.size(); ++i) {
    all_same = all_same && a[i].text == b[i].text;
    any_diff_seed = any_diff_seed || a[i].text != c[i].text;
  }
  CHECK(all_same);
  CHECK(any_diff_seed);

  // token ids stay within [0, vocab_size) once a vocabulary is built
  std::vector<std::string> texts;
  for (const auto& d : a) texts.push_back(d.text);
  Vocabulary vocab = build_vocabulary(texts, gp.vocab_size, 8);
  for (const auto& d : a) {
    Document doc = make_document(d, vocab);
    CHECK(static_cast<int>(doc.tokens.size()) >= gp.doc_len_min);
    CHECK(static_cast<int>(doc.tokens.size()) <= gp.doc_len_max);
    for (int id : doc.tokens) {
      CHECK(id >= 0);
      CHECK(id < gp.vocab_size);
    }
  }
}

TEST_CASE("synthetic corpus: redundancy controls phrase reuse") {
  GrammarParams gp;
  gp.vocab_size = 256;
  gp.doc_len_min = 64;
  gp.doc_len_max = 128;
  gp.n_docs = 30;
  gp.redundancy = 1.0;
  auto dense = synth_corpus(7, gp);
  gp.redundancy = 0.0;
  auto noise = synth_corpus(7, gp);
  // distinct 8-gram count is far lower in the redundant corpus
  auto distinct_blocks = [](const std::vector<RawDoc>& docs) {
    std::set<std::string> blocks;
    for (const auto& d : docs) {
      auto words = split_words(d.text);
      for (size_t i = 0; i + 8 <= words.size(); i += 8) {
        std::string key;
        for (size_t j = i; j < i + 8; ++j) key += words[j] + " ";
        blocks.insert(key);
      }
    }
    return blocks.size();
  };
  CHECK(distinct_blocks(dense) * 4 < distinct_blocks(noise));
  CHECK_THROWS_AS(synth_corpus(1, GrammarParams{256, 64, 128, 1.5, 10}), Error);
}

TEST_CASE("sentence pairs: related pairs share words, unrelated often do not") {
  GrammarParams gp;
  gp.vocab_size = 256;
  auto pairs = synth_sentence_pairs(11, gp, 20);
  REQUIRE(pairs.size() == 20);
  int related = 0;
  for (const auto& p : pairs) {
    if (!p.related) continue;
    ++related;
    auto wa = split_words(p.a);
    auto wb = split_words(p.b);
    std::multiset<std::string> sa(wa.begin(), wa.end()), sb(wb.begin(), wb.end());
    CHECK(sa == sb);  // reordering preserves the word multiset
    CHECK(p.a != p.b);
  }
  CHECK(related == 10);
}
