#pragma once

#include <limits>
#include <span>
#include <vector>

#include "ztok/core/ops.hpp"
#include "ztok/model/params.hpp"

namespace ztok::model {

// Graph-side transformer: parameters lifted into a Graph as leaves, with the
// forward pass built from tape ops. Used for training and gradient checks;
// inference uses the tape-free engine in infer_engine.hpp.

template <class Real>
struct BoundLayer {
  Var ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2;
  std::vector<std::pair<Var, Var>> adapters;  // (a, b) per projection
};

template <class Real>
struct BoundModel {
  TransformerConfig cfg;
  Var tok_emb, pos_emb, lnf_g, lnf_b, head;
  std::vector<BoundLayer<Real>> layers;
  std::vector<Var> slots;       // every parameter leaf, visit order
  bool training = false;        // enables adapter dropout
  RngState* dropout_rng = nullptr;
};

// Lift parameters into the graph. With adapters enabled only the adapter
// factors are trainable (the host weights stay frozen); otherwise all
// parameters train.
template <class Real>
BoundModel<Real> bind_model(Graph<Real>& g, const ModelParams<Real>& p, bool trainable) {
  BoundModel<Real> m;
  m.cfg = p.cfg;
  std::vector<Var> slots;
  const_cast<ModelParams<Real>&>(p).visit(
      [&](const std::string&, Array<Real>& a, ParamKind kind) {
        bool req = trainable && (!p.cfg.adapters.enabled || kind == ParamKind::adapter);
        slots.push_back(g.leaf(a, req));
      });
  size_t i = 0;
  auto next = [&] { return slots[i++]; };
  m.tok_emb = next();
  m.pos_emb = next();
  for (int l = 0; l < p.cfg.n_layers; ++l) {
    BoundLayer<Real> L;
    L.ln1_g = next();
    L.ln1_b = next();
    L.wq = next();
    L.wk = next();
    L.wv = next();
    L.wo = next();
    L.ln2_g = next();
    L.ln2_b = next();
    L.w1 = next();
    L.b1 = next();
    L.w2 = next();
    L.b2 = next();
    if (p.cfg.adapters.enabled)
      for (int k = 0; k < 6; ++k) {
        Var a = next();
        Var b = next();
        L.adapters.push_back({a, b});
      }
    m.layers.push_back(L);
  }
  m.lnf_g = next();
  m.lnf_b = next();
  if (!p.cfg.tie_embeddings) m.head = next();
  ZTOK_CHECK(i == slots.size(), logic, "bind_model: parameter walk out of sync");
  m.slots = std::move(slots);
  return m;
}

namespace detail {

template <class Real>
Var proj(Graph<Real>& g, const BoundModel<Real>& m, const BoundLayer<Real>& L, int adapter_idx,
         Var x, Var w) {
  Var y = matmul(g, x, w);
  if (!L.adapters.empty()) {
    auto [a, b] = L.adapters[adapter_idx];
    Var xin = x;
    if (m.training && m.cfg.adapters.dropout > 0 && m.dropout_rng)
      xin = dropout(g, x, static_cast<Real>(m.cfg.adapters.dropout), *m.dropout_rng);
    Var u = matmul(g, xin, a, false, true);   // (L x rank)
    Var dv = matmul(g, u, b, false, true);    // (L x out)
    Real s = static_cast<Real>(m.cfg.adapters.alpha / m.cfg.adapters.rank);
    y = add(g, y, scale(g, dv, s));
  }
  return y;
}

}  // namespace detail

// Per-layer attention K/V retained across autoregressive feeds.
template <class Real>
struct KVCache {
  struct LayerKV {
    Var k, v;
  };
  std::vector<LayerKV> layers;
  int len = 0;
};

// One entry of a mixed input sequence: a vocabulary id, or an injected
// embedding row (straight-through code embeddings during training).
struct MixedEntry {
  int id = -1;
  Var emb;
  static MixedEntry token(int id) { return MixedEntry{id, Var{}}; }
  static MixedEntry embedding(Var v) { return MixedEntry{-1, v}; }
};

// Token/injected rows plus learned positional embeddings for absolute
// positions [pos0, pos0 + n).
template <class Real>
Var embed_mixed(Graph<Real>& g, const BoundModel<Real>& m, std::span<const MixedEntry> entries,
                int pos0) {
  ZTOK_CHECK(!entries.empty(), input, "embed_mixed: empty sequence");
  ZTOK_CHECK(pos0 + static_cast<int>(entries.size()) <= m.cfg.max_seq_len, input,
             "sequence length exceeds max_seq_len");
  std::vector<Var> parts;
  std::vector<int> run;
  auto flush_run = [&] {
    if (!run.empty()) {
      parts.push_back(gather_rows(g, m.tok_emb, run));
      run.clear();
    }
  };
  for (const MixedEntry& e : entries) {
    if (e.id >= 0) {
      ZTOK_CHECK(e.id < m.cfg.vocab_total(), input, "embed_mixed: id out of vocabulary");
      run.push_back(e.id);
    } else {
      flush_run();
      parts.push_back(e.emb);
    }
  }
  flush_run();
  Var x = parts.size() == 1 ? parts[0] : concat_rows(g, parts);
  std::vector<int> positions(entries.size());
  for (size_t i = 0; i < entries.size(); ++i) positions[i] = pos0 + static_cast<int>(i);
  return add(g, x, gather_rows(g, m.pos_emb, positions));
}

template <class Real>
Var embed_ids(Graph<Real>& g, const BoundModel<Real>& m, std::span<const int> ids, int pos0) {
  std::vector<MixedEntry> entries;
  entries.reserve(ids.size());
  for (int id : ids) entries.push_back(MixedEntry::token(id));
  return embed_mixed<Real>(g, m, entries, pos0);
}

// Append a block of embedded rows to the causal stream and return their
// final-layer-norm hidden states. Handles both the initial parallel pass
// (empty cache) and incremental decoding (single-row blocks): query row i of
// the block attends to every cached position plus block rows <= i.
template <class Real>
Var feed_block(Graph<Real>& g, const BoundModel<Real>& m, KVCache<Real>& cache, Var x) {
  if (cache.layers.empty()) cache.layers.resize(m.layers.size());
  int n = g.val(x).rows();
  Var h = x;
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const BoundLayer<Real>& L = m.layers[l];
    Var normed = layer_norm_rows(g, h, L.ln1_g, L.ln1_b);
    Var q = detail::proj(g, m, L, 0, normed, L.wq);
    Var k = detail::proj(g, m, L, 1, normed, L.wk);
    Var v = detail::proj(g, m, L, 2, normed, L.wv);
    auto& kv = cache.layers[l];
    if (kv.k.valid()) {
      kv.k = concat_rows(g, {kv.k, k});
      kv.v = concat_rows(g, {kv.v, v});
    } else {
      kv.k = k;
      kv.v = v;
    }
    Var att = attend_causal(g, q, kv.k, kv.v, m.cfg.n_heads);
    Var o = detail::proj(g, m, L, 3, att, L.wo);
    h = add(g, h, o);
    Var normed2 = layer_norm_rows(g, h, L.ln2_g, L.ln2_b);
    Var f1 = gelu(g, add_rowvec(g, detail::proj(g, m, L, 4, normed2, L.w1), L.b1));
    Var f2 = add_rowvec(g, detail::proj(g, m, L, 5, f1, L.w2), L.b2);
    h = add(g, h, f2);
  }
  cache.len += n;
  return layer_norm_rows(g, h, m.lnf_g, m.lnf_b);
}

// Full-vocabulary logits for hidden rows; the output head is the tied
// embedding unless the config unties it.
template <class Real>
Var logits_from_hidden(Graph<Real>& g, const BoundModel<Real>& m, Var hidden) {
  Var w = m.cfg.tie_embeddings ? m.tok_emb : m.head;
  return matmul(g, hidden, w, false, true);
}

// Convenience: single parallel causal pass over a mixed sequence.
template <class Real>
Var forward_hidden(Graph<Real>& g, const BoundModel<Real>& m, std::span<const MixedEntry> entries) {
  KVCache<Real> cache;
  Var x = embed_mixed<Real>(g, m, entries, 0);
  return feed_block(g, m, cache, x);
}

enum class Segment { base, z };

// Eq.-6-style vocabulary restriction: out-of-segment logits become -inf so
// the downstream softmax carries exactly zero mass there.
template <class Real>
void restrict_logits_inplace(std::span<Real> logits, Segment seg, int base_size) {
  const Real ninf = -std::numeric_limits<Real>::infinity();
  int lo = seg == Segment::base ? 0 : base_size;
  int hi = seg == Segment::base ? base_size : static_cast<int>(logits.size());
  for (int i = 0; i < lo; ++i) logits[i] = ninf;
  for (int i = hi; i < static_cast<int>(logits.size()); ++i) logits[i] = ninf;
}

}  // namespace ztok::model
