#include "ztok/interpret/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "json.hpp"
#include "ztok/core/primitives.hpp"
#include "ztok/data/tokenizer.hpp"

namespace ztok::interpret {

using nlohmann::json;

ContextEncoder embedding_mean_encoder(const model::ModelParams<float>& params) {
  // Copy the embedding table so the encoder stays frozen even if training
  // continues on the source model.
  auto table = std::make_shared<Array<float>>(params.tok_emb);
  int dim = params.cfg.model_dim;
  return [table, dim](std::span<const int> ctx) {
    ZTOK_CHECK(!ctx.empty(), input, "context encoder: empty context window");
    std::vector<float> out(static_cast<size_t>(dim), 0.0f);
    for (int id : ctx) {
      ZTOK_CHECK(id >= 0 && id < table->rows(), input, "context encoder: id out of range");
      for (int c = 0; c < dim; ++c) out[static_cast<size_t>(c)] += table->at(id, c);
    }
    for (float& v : out) v /= static_cast<float>(ctx.size());
    return out;
  };
}

std::vector<OccurrenceRecord> collect_document_occurrences(const compress::CompressedDoc& cd,
                                                           const data::Document& doc,
                                                           const ContextEncoder& encoder,
                                                           int widen) {
  ZTOK_CHECK(cd.doc_id == doc.id, input, "occurrences: compressed/document id mismatch");
  ZTOK_CHECK(static_cast<int>(doc.tokens.size()) == cd.n_input_tokens, input,
             "occurrences: document length disagrees with compression record");
  std::vector<OccurrenceRecord> out;
  int k = static_cast<int>(cd.z_ids.size());
  int n = cd.n_input_tokens;
  for (int j = 0; j < k; ++j) {
    auto [lo, hi] = compress::code_attribution(j, k, 0, n);
    lo = std::max(0, lo - widen);
    hi = std::min(n, hi + widen);
    OccurrenceRecord rec;
    rec.z_id = cd.z_ids[j];
    rec.doc_id = doc.id;
    rec.z_pos = j;
    rec.context.assign(doc.tokens.begin() + lo, doc.tokens.begin() + hi);
    rec.embedding = encoder(rec.context);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<OccurrenceRecord> collect_occurrences(
    const std::vector<compress::CompressedDoc>& compressed,
    const std::vector<data::Document>& docs, int z_id, const ContextEncoder& encoder,
    int widen) {
  std::map<std::string, const data::Document*> by_id;
  for (const auto& d : docs) by_id[d.id] = &d;
  std::vector<OccurrenceRecord> out;
  for (const auto& cd : compressed) {
    auto it = by_id.find(cd.doc_id);
    ZTOK_CHECK(it != by_id.end(), input, "occurrences: no document for " + cd.doc_id);
    for (auto& rec : collect_document_occurrences(cd, *it->second, encoder, widen))
      if (rec.z_id == z_id) out.push_back(std::move(rec));
  }
  return out;
}

namespace {
double pair_cos(const OccurrenceRecord& a, const OccurrenceRecord& b) {
  return static_cast<double>(cosine_similarity<float>(a.embedding, b.embedding));
}
}  // namespace

std::optional<double> consistency(std::span<const OccurrenceRecord> records) {
  size_t n = records.size();
  if (n < 2) return std::nullopt;
  double sum = 0.0;
  for (size_t p = 0; p < n; ++p)
    for (size_t q = p + 1; q < n; ++q) sum += pair_cos(records[p], records[q]);
  return sum / (static_cast<double>(n) * (n - 1) / 2.0);
}

std::optional<double> consistency_gram(std::span<const OccurrenceRecord> records) {
  size_t n = records.size();
  if (n < 2) return std::nullopt;
  double sum = 0.0;
  for (size_t p = 0; p < n; ++p)
    for (size_t q = 0; q < n; ++q)
      if (p != q) sum += pair_cos(records[p], records[q]);
  return sum / (static_cast<double>(n) * (n - 1));
}

ConsistencyReport consistency_report(const std::vector<compress::CompressedDoc>& compressed,
                                     const std::vector<data::Document>& docs,
                                     const ContextEncoder& encoder, int widen,
                                     uint64_t baseline_seed, int baseline_pairs) {
  std::map<std::string, const data::Document*> by_id;
  for (const auto& d : docs) by_id[d.id] = &d;
  std::map<int, std::vector<OccurrenceRecord>> by_code;
  std::vector<const OccurrenceRecord*> all;
  for (const auto& cd : compressed) {
    auto it = by_id.find(cd.doc_id);
    ZTOK_CHECK(it != by_id.end(), input, "occurrences: no document for " + cd.doc_id);
    for (auto& rec : collect_document_occurrences(cd, *it->second, encoder, widen))
      by_code[rec.z_id].push_back(std::move(rec));
  }
  for (auto& [id, recs] : by_code)
    for (const auto& r : recs) all.push_back(&r);

  ConsistencyReport rep;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& [id, recs] : by_code) {
    auto c = consistency(recs);
    if (!c) {
      ++rep.n_rare_skipped;
      continue;
    }
    rep.per_token.push_back({id, static_cast<int>(recs.size()), *c});
    sum += *c;
    sum2 += *c * *c;
  }
  ZTOK_CHECK(!rep.per_token.empty(), input,
             "consistency report: no code occurs at least twice");
  double m = sum / static_cast<double>(rep.per_token.size());
  rep.mean = m;
  rep.stddev = std::sqrt(std::max(0.0, sum2 / static_cast<double>(rep.per_token.size()) - m * m));

  // Random-pair baseline over all occurrences regardless of code identity.
  ZTOK_CHECK(all.size() >= 2, input, "consistency report: not enough occurrences");
  RngState rng(baseline_seed);
  double bsum = 0.0;
  for (int i = 0; i < baseline_pairs; ++i) {
    size_t a = rng.next_below(all.size());
    size_t b = rng.next_below(all.size() - 1);
    if (b >= a) ++b;
    bsum += pair_cos(*all[a], *all[b]);
  }
  rep.random_baseline = bsum / baseline_pairs;
  return rep;
}

std::string report_to_json(const ConsistencyReport& rep) {
  json per = json::array();
  for (const auto& t : rep.per_token)
    per.push_back(json{{"z_id", t.z_id}, {"n", t.n}, {"c", t.c}});
  json j{{"per_token", per},
         {"mean", rep.mean},
         {"std", rep.stddev},
         {"random_baseline", rep.random_baseline},
         {"rare_skipped", rep.n_rare_skipped}};
  return j.dump(2);
}

double multiset_jaccard(std::span<const int> a, std::span<const int> b) {
  std::map<int, long> ca, cb;
  for (int x : a) ++ca[x];
  for (int x : b) ++cb[x];
  long inter = 0, uni = 0;
  for (const auto& [k, n] : ca) {
    auto it = cb.find(k);
    long m = it == cb.end() ? 0 : it->second;
    inter += std::min(n, m);
    uni += std::max(n, m);
  }
  for (const auto& [k, m] : cb)
    if (ca.find(k) == ca.end()) uni += m;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

ProbeResult polysemy_probe(const model::ModelParams<float>& phi, const data::Vocabulary& vocab,
                           const std::vector<data::SentencePair>& pairs, double r_target) {
  ZTOK_CHECK(!pairs.empty(), input, "polysemy probe: no sentence pairs");
  ProbeResult res;
  double sr = 0.0, su = 0.0;
  int nr = 0, nu = 0;
  for (const auto& sp : pairs) {
    std::vector<int> ta = data::tokenize(sp.a, vocab);
    std::vector<int> tb = data::tokenize(sp.b, vocab);
    ZTOK_CHECK(!ta.empty() && !tb.empty(), input, "polysemy probe: empty sentence");
    auto za = compress::compress_hard(phi, vocab, ta, r_target);
    auto zb = compress::compress_hard(phi, vocab, tb, r_target);
    double ov = multiset_jaccard(za.z.ids, zb.z.ids);
    res.overlap.push_back(ov);
    res.related.push_back(sp.related);
    if (sp.related) {
      sr += ov;
      ++nr;
    } else {
      su += ov;
      ++nu;
    }
  }
  res.mean_related = nr > 0 ? sr / nr : 0.0;
  res.mean_unrelated = nu > 0 ? su / nu : 0.0;
  return res;
}

}  // namespace ztok::interpret
