#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ztok/compress/compressor.hpp"
#include "ztok/data/corpus.hpp"
#include "ztok/data/synth.hpp"

namespace ztok::interpret {

// One appearance of a code in a compressed corpus: where it occurred, the
// surface tokens attributed to it (proportional attribution, widened), and
// the frozen-encoder embedding of that context.
struct OccurrenceRecord {
  int z_id = 0;
  std::string doc_id;
  int z_pos = 0;
  std::vector<int> context;
  std::vector<float> embedding;
};

// Pluggable frozen context encoder F.
using ContextEncoder = std::function<std::vector<float>(std::span<const int>)>;

// Mean of the model's frozen input-embedding rows over the context tokens.
ContextEncoder embedding_mean_encoder(const model::ModelParams<float>& params);

// All occurrence records for one compressed document.
std::vector<OccurrenceRecord> collect_document_occurrences(const compress::CompressedDoc& cd,
                                                           const data::Document& doc,
                                                           const ContextEncoder& encoder,
                                                           int widen = 8);

// Occurrences of a single code id across a compressed corpus.
std::vector<OccurrenceRecord> collect_occurrences(
    const std::vector<compress::CompressedDoc>& compressed,
    const std::vector<data::Document>& docs, int z_id, const ContextEncoder& encoder,
    int widen = 8);

// Mean pairwise cosine of the context embeddings; undefined below two
// records (empty optional, never a silent zero).
std::optional<double> consistency(std::span<const OccurrenceRecord> records);

// Gram-matrix route (sum of off-diagonal cosines / N(N-1)); must agree with
// consistency() to fp accuracy.
std::optional<double> consistency_gram(std::span<const OccurrenceRecord> records);

struct TokenConsistency {
  int z_id = 0;
  int n = 0;
  double c = 0.0;
};

struct ConsistencyReport {
  std::vector<TokenConsistency> per_token;
  double mean = 0.0;
  double stddev = 0.0;
  double random_baseline = 0.0;  // mean cosine over random occurrence pairs
  int n_rare_skipped = 0;        // codes with fewer than two occurrences
};

ConsistencyReport consistency_report(const std::vector<compress::CompressedDoc>& compressed,
                                     const std::vector<data::Document>& docs,
                                     const ContextEncoder& encoder, int widen = 8,
                                     uint64_t baseline_seed = 1, int baseline_pairs = 2000);

std::string report_to_json(const ConsistencyReport& report);

// Temperature-0 compression of both sides of each sentence pair and the
// multiset Jaccard overlap of their code ids.
struct ProbeResult {
  std::vector<double> overlap;       // per pair
  std::vector<bool> related;         // pair labels
  double mean_related = 0.0;
  double mean_unrelated = 0.0;
};
ProbeResult polysemy_probe(const model::ModelParams<float>& phi, const data::Vocabulary& vocab,
                           const std::vector<data::SentencePair>& pairs, double r_target);

double multiset_jaccard(std::span<const int> a, std::span<const int> b);

}  // namespace ztok::interpret
