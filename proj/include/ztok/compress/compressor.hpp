#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ztok/core/ops.hpp"
#include "ztok/core/primitives.hpp"
#include "ztok/data/vocab.hpp"
#include "ztok/data/windows.hpp"
#include "ztok/model/infer_engine.hpp"
#include "ztok/model/transformer.hpp"

namespace ztok::compress {

// Variable-length discrete code sequence for one source span. ids hold
// content codes only; a sampled z_stop terminates the sequence and is not
// counted toward K.
struct ZSequence {
  std::vector<int> ids;  // absolute vocabulary ids, all in the Z range
  bool stopped_early = false;
  std::string doc_id;
  int src_start = 0;
  int src_end = 0;
  double r_target = 0.0;
  Array<float> soft;  // optional (K x z_size) relaxation snapshot

  int K() const { return static_cast<int>(ids.size()); }
};

inline int k_max_for(int n_tokens, double r_target) {
  ZTOK_CHECK(n_tokens > 0, input, "compress: empty input");
  ZTOK_CHECK(r_target > 1.0, input, "compress: budget ratio must be > 1");
  return static_cast<int>(std::ceil(static_cast<double>(n_tokens) / r_target));
}

struct WindowBreakdown {
  int start = 0;
  int end = 0;
  int k = 0;
};

struct CompressionResult {
  ZSequence z;
  int n_input_tokens = 0;
  double effective_ratio = 0.0;  // N / K
  std::vector<WindowBreakdown> per_window;
};

// Serialized form ({"doc_id","z_ids","n_input_tokens","r_target"} JSON lines).
struct CompressedDoc {
  std::string doc_id;
  std::vector<int> z_ids;
  int n_input_tokens = 0;
  double r_target = 0.0;
};
std::vector<CompressedDoc> read_compressed(const std::string& path);
void write_compressed(const std::string& path, const std::vector<CompressedDoc>& docs);

// Deterministic temperature-0 compression: argmax over the restricted code
// segment at every step, no noise. The first step may not choose z_stop
// (K >= 1 by contract); later steps stop on z_stop or at the budget cap.
CompressionResult compress_hard(const model::ModelParams<float>& phi,
                                const data::Vocabulary& vocab, std::span<const int> x,
                                double r_target);

// Sliding-window inference compression; windows are compressed
// independently and their code segments concatenated in order.
CompressionResult sliding_compress_hard(const model::ModelParams<float>& phi,
                                        const data::Vocabulary& vocab, std::span<const int> x,
                                        int W, int S, double r_target);

// Eq.-4 overlap consistency between two windows' code sequences, computed
// over stored soft relaxations: codes are attributed to input spans
// proportionally by position, codes intersecting the overlap are soft-mixed
// against the code embedding rows and mean-pooled, and the loss is
// 1 - cos(pool_a, pool_b).
double overlap_loss(const ZSequence& a, const ZSequence& b, int overlap_start, int overlap_end,
                    const Array<float>& code_embeddings);

// Input-token span attributed to code j of a K-code sequence over
// [src_start, src_end).
inline std::pair<int, int> code_attribution(int j, int k_total, int src_start, int src_end) {
  ZTOK_CHECK(k_total > 0 && j >= 0 && j < k_total, input, "code_attribution: bad index");
  long n = src_end - src_start;
  int lo = src_start + static_cast<int>(j * n / k_total);
  int hi = src_start + static_cast<int>((j + 1) * n / k_total);
  if (hi <= lo) hi = lo + 1;
  return {lo, hi};
}

// ---- training-mode compression (tape) ----

template <class Real>
struct TrainCompression {
  std::vector<int> ids;         // absolute content code ids
  std::vector<int> hard_local;  // per code, index within the Z segment
  std::vector<Var> soft;        // per code, (1 x z_size) relaxation on the tape
  bool stopped_early = false;
};

// Autoregressive soft compression on the tape: feed [x..., sep], then the
// compressor's own straight-through code embeddings, sampling each code with
// Gumbel noise at temperature tau. Gradients flow through the emission
// recurrence via the soft path. If z_stop wins the very first draw the best
// content code is taken instead (K >= 1). `replay` pins the emitted ids
// (used by finite-difference checks, which must hold the discrete choices
// fixed); `relaxed_st` swaps straight-through forwards for soft mixtures.
template <class Real>
TrainCompression<Real> compress_train(Graph<Real>& g, const model::BoundModel<Real>& phi,
                                      const data::Vocabulary& vocab, std::span<const int> x,
                                      double r_target, Real tau, RngState& rng,
                                      bool relaxed_st = false,
                                      const std::vector<int>* replay = nullptr) {
  const int n = static_cast<int>(x.size());
  const int k_max = k_max_for(n, r_target);
  const int base = vocab.base_size();
  const int zs = vocab.z_size();
  ZTOK_CHECK(n + 1 + k_max <= phi.cfg.max_seq_len, input,
             "compress: input plus code budget exceeds context window");
  ZTOK_CHECK(phi.cfg.base_size == base && phi.cfg.z_size == zs, input,
             "compress: model/vocabulary partition mismatch");

  TrainCompression<Real> out;
  model::KVCache<Real> cache;
  std::vector<int> prefix(x.begin(), x.end());
  for (int id : prefix) vocab.require_base(id);
  prefix.push_back(data::Vocabulary::kSep);
  Var hidden = feed_block(g, phi, cache, model::embed_ids<Real>(g, phi, prefix, 0));

  for (int t = 0; t < k_max; ++t) {
    Var last = g.val(hidden).rows() == 1
                   ? hidden
                   : slice_rows(g, hidden, g.val(hidden).rows() - 1, 1);
    Var logits = logits_from_hidden(g, phi, last);
    // Fixed Gumbel noise for this step, zero outside the code segment.
    Array<Real> noise = Array<Real>::zeros(1, phi.cfg.vocab_total());
    for (int i = 0; i < zs; ++i)
      noise.at(0, base + i) = static_cast<Real>(rng.next_gumbel());
    Var perturbed = add(g, logits, g.constant(noise));
    Var soft = segment_softmax_rows(g, scale(g, perturbed, Real(1) / tau), base, base + zs);

    int hard_abs;
    if (replay) {
      ZTOK_CHECK(t < static_cast<int>(replay->size()), input, "compress replay: id list too short");
      hard_abs = (*replay)[t];
    } else {
      const Array<Real>& pv = g.val(perturbed);
      hard_abs = base;
      for (int i = base; i < base + zs; ++i)
        if (pv.at(0, i) > pv.at(0, hard_abs)) hard_abs = i;
      if (hard_abs == vocab.z_stop()) {
        if (t > 0) {
          out.stopped_early = true;
          break;
        }
        // First draw: take the best content code instead.
        hard_abs = base + 1;
        for (int i = base + 1; i < base + zs; ++i)
          if (pv.at(0, i) > pv.at(0, hard_abs)) hard_abs = i;
      }
    }
    vocab.require_z(hard_abs);
    out.ids.push_back(hard_abs);
    out.hard_local.push_back(hard_abs - base);
    out.soft.push_back(soft);

    if (t + 1 == k_max) break;
    // Feed this code's straight-through embedding for the next draw.
    Var st = st_embed(g, phi.tok_emb, soft, hard_abs - base, base, zs, relaxed_st);
    int pos = cache.len;
    Var pe = gather_rows(g, phi.pos_emb, std::vector<int>{pos});
    hidden = feed_block(g, phi, cache, add(g, st, pe));
  }
  ZTOK_CHECK(!out.ids.empty(), logic, "compress: produced no codes");
  return out;
}

template <class Real>
struct SlidingTrainCompression {
  std::vector<TrainCompression<Real>> windows;
  data::WindowSet window_set;
  Var overlap_total;  // sum of consecutive-pair losses; invalid when < 2 windows
};

// Per-window training compression plus the Eq.-4 overlap term between each
// consecutive pair: pooled soft embeddings of codes attributed to the shared
// span, loss 1 - cos per pair, summed.
template <class Real>
SlidingTrainCompression<Real> sliding_compress_train(Graph<Real>& g,
                                                     const model::BoundModel<Real>& phi,
                                                     const data::Vocabulary& vocab,
                                                     std::span<const int> x, int W, int S,
                                                     double r_target, Real tau, RngState& rng,
                                                     bool relaxed_st = false) {
  SlidingTrainCompression<Real> out;
  out.window_set = data::make_windows(static_cast<int>(x.size()), W, S);
  for (const auto& w : out.window_set.windows) {
    RngState wrng = rng.fork(0x517D, static_cast<uint64_t>(w.start));
    out.windows.push_back(compress_train(g, phi, vocab,
                                         x.subspan(w.start, w.length()), r_target, tau, wrng,
                                         relaxed_st));
  }
  const int base = vocab.base_size();
  const int zs = vocab.z_size();
  auto pooled = [&](const TrainCompression<Real>& tc, const data::WindowSet::Span& win,
                    int ov_lo, int ov_hi) -> Var {
    std::vector<Var> members;
    int k = static_cast<int>(tc.ids.size());
    for (int j = 0; j < k; ++j) {
      auto [lo, hi] = code_attribution(j, k, win.start, win.end);
      if (lo < ov_hi && hi > ov_lo)
        members.push_back(soft_mix(g, phi.tok_emb, tc.soft[j], base, zs));
    }
    ZTOK_CHECK(!members.empty(), logic, "overlap pooling: no codes intersect the overlap");
    Var sum = members[0];
    for (size_t i = 1; i < members.size(); ++i) sum = add(g, sum, members[i]);
    return scale(g, sum, Real(1) / Real(members.size()));
  };
  for (size_t i = 0; i + 1 < out.windows.size(); ++i) {
    auto ov = out.window_set.overlap(i);
    if (ov.length() <= 0) continue;
    Var pa = pooled(out.windows[i], out.window_set.windows[i], ov.start, ov.end);
    Var pb = pooled(out.windows[i + 1], out.window_set.windows[i + 1], ov.start, ov.end);
    Var one = g.constant(Array<Real>::scalar(Real(1)));
    Var pair_loss = sub(g, one, cosine(g, pa, pb));
    out.overlap_total = out.overlap_total.valid() ? add(g, out.overlap_total, pair_loss)
                                                  : pair_loss;
  }
  return out;
}

}  // namespace ztok::compress
