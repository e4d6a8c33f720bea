#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ztok/core/array.hpp"
#include "ztok/core/rng.hpp"
#include "ztok/model/config.hpp"

namespace ztok::model {

enum class ParamKind { base, adapter };

// One low-rank pair: a is (rank x in_dim), b is (out_dim x rank); the
// applied delta is (alpha / rank) * b * a. b starts at zero so a freshly
// attached adapter is a no-op.
template <class Real>
struct AdapterPair {
  Array<Real> a;
  Array<Real> b;
};

template <class Real>
struct LayerParams {
  Array<Real> ln1_g, ln1_b;
  Array<Real> wq, wk, wv, wo;  // (d x d), applied as x * W
  Array<Real> ln2_g, ln2_b;
  Array<Real> w1, b1;  // (d x ff), (1 x ff)
  Array<Real> w2, b2;  // (ff x d), (1 x d)
  std::vector<AdapterPair<Real>> adapters;  // wq,wk,wv,wo,w1,w2 order when enabled
};

template <class Real>
struct ModelParams {
  TransformerConfig cfg;
  Role role = Role::compressor;
  Array<Real> tok_emb;  // (base+z, d)
  Array<Real> pos_emb;  // (max_seq_len, d)
  std::vector<LayerParams<Real>> layers;
  Array<Real> lnf_g, lnf_b;
  Array<Real> head;  // (vocab, d); present only when not tied

  template <class Fn>
  void visit(Fn&& fn) {
    fn("tok_emb", tok_emb, ParamKind::base);
    fn("pos_emb", pos_emb, ParamKind::base);
    for (size_t l = 0; l < layers.size(); ++l) {
      std::string p = "layer" + std::to_string(l) + ".";
      LayerParams<Real>& L = layers[l];
      fn(p + "ln1_g", L.ln1_g, ParamKind::base);
      fn(p + "ln1_b", L.ln1_b, ParamKind::base);
      fn(p + "wq", L.wq, ParamKind::base);
      fn(p + "wk", L.wk, ParamKind::base);
      fn(p + "wv", L.wv, ParamKind::base);
      fn(p + "wo", L.wo, ParamKind::base);
      fn(p + "ln2_g", L.ln2_g, ParamKind::base);
      fn(p + "ln2_b", L.ln2_b, ParamKind::base);
      fn(p + "w1", L.w1, ParamKind::base);
      fn(p + "b1", L.b1, ParamKind::base);
      fn(p + "w2", L.w2, ParamKind::base);
      fn(p + "b2", L.b2, ParamKind::base);
      static const char* names[6] = {"wq", "wk", "wv", "wo", "w1", "w2"};
      for (size_t i = 0; i < L.adapters.size(); ++i) {
        fn(p + names[i] + ".lora_a", L.adapters[i].a, ParamKind::adapter);
        fn(p + names[i] + ".lora_b", L.adapters[i].b, ParamKind::adapter);
      }
    }
    fn("lnf_g", lnf_g, ParamKind::base);
    fn("lnf_b", lnf_b, ParamKind::base);
    if (!cfg.tie_embeddings) fn("head", head, ParamKind::base);
  }

  template <class Fn>
  void visit(Fn&& fn) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const std::string& n, Array<Real>& a, ParamKind k) {
          fn(n, static_cast<const Array<Real>&>(a), k);
        });
  }

  long param_count() const {
    long n = 0;
    visit([&](const std::string&, const Array<Real>& a, ParamKind) { n += a.count(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Array<Real>& a, ParamKind) { ok = ok && a.all_finite(); });
    return ok;
  }

  template <class Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.cfg = cfg;
    out.role = role;
    out.tok_emb = tok_emb.template cast<Other>();
    out.pos_emb = pos_emb.template cast<Other>();
    out.lnf_g = lnf_g.template cast<Other>();
    out.lnf_b = lnf_b.template cast<Other>();
    if (!cfg.tie_embeddings) out.head = head.template cast<Other>();
    for (const auto& L : layers) {
      LayerParams<Other> o;
      o.ln1_g = L.ln1_g.template cast<Other>();
      o.ln1_b = L.ln1_b.template cast<Other>();
      o.wq = L.wq.template cast<Other>();
      o.wk = L.wk.template cast<Other>();
      o.wv = L.wv.template cast<Other>();
      o.wo = L.wo.template cast<Other>();
      o.ln2_g = L.ln2_g.template cast<Other>();
      o.ln2_b = L.ln2_b.template cast<Other>();
      o.w1 = L.w1.template cast<Other>();
      o.b1 = L.b1.template cast<Other>();
      o.w2 = L.w2.template cast<Other>();
      o.b2 = L.b2.template cast<Other>();
      for (const auto& ap : L.adapters)
        o.adapters.push_back({ap.a.template cast<Other>(), ap.b.template cast<Other>()});
      out.layers.push_back(std::move(o));
    }
    return out;
  }
};

// Fresh parameters: N(0, 0.02) weights, residual output projections scaled
// down by sqrt(2 * n_layers), unit layer-norm gains, zero biases, adapter B
// zero. Deterministic in (cfg, seed).
template <class Real>
ModelParams<Real> init_params(const TransformerConfig& cfg, Role role, uint64_t seed) {
  cfg.validate();
  ModelParams<Real> p;
  p.cfg = cfg;
  p.role = role;
  RngState rng = RngState(seed).fork(0x1717, static_cast<uint64_t>(role));
  auto normal = [&rng](int r, int c, double std) {
    Array<Real> a = Array<Real>::zeros(r, c);
    for (long i = 0; i < a.count(); ++i) a[i] = static_cast<Real>(rng.next_normal() * std);
    return a;
  };
  auto filled = [](int r, int c, Real v) {
    Array<Real> a = Array<Real>::zeros(r, c);
    for (long i = 0; i < a.count(); ++i) a[i] = v;
    return a;
  };
  int d = cfg.model_dim, ff = cfg.ff_dim, v = cfg.vocab_total();
  double resid_std = 0.02 / std::sqrt(2.0 * cfg.n_layers);
  p.tok_emb = normal(v, d, 0.02);
  p.pos_emb = normal(cfg.max_seq_len, d, 0.01);
  for (int l = 0; l < cfg.n_layers; ++l) {
    LayerParams<Real> L;
    L.ln1_g = filled(1, d, Real(1));
    L.ln1_b = filled(1, d, Real(0));
    L.wq = normal(d, d, 0.02);
    L.wk = normal(d, d, 0.02);
    L.wv = normal(d, d, 0.02);
    L.wo = normal(d, d, resid_std);
    L.ln2_g = filled(1, d, Real(1));
    L.ln2_b = filled(1, d, Real(0));
    L.w1 = normal(d, ff, 0.02);
    L.b1 = filled(1, ff, Real(0));
    L.w2 = normal(ff, d, resid_std);
    L.b2 = filled(1, d, Real(0));
    if (cfg.adapters.enabled) {
      auto mk = [&](int in_dim, int out_dim) {
        AdapterPair<Real> ap;
        ap.a = normal(cfg.adapters.rank, in_dim, 0.02);
        ap.b = filled(out_dim, cfg.adapters.rank, Real(0));
        return ap;
      };
      L.adapters.push_back(mk(d, d));   // wq
      L.adapters.push_back(mk(d, d));   // wk
      L.adapters.push_back(mk(d, d));   // wv
      L.adapters.push_back(mk(d, d));   // wo
      L.adapters.push_back(mk(d, ff));  // w1
      L.adapters.push_back(mk(ff, d));  // w2
    }
    p.layers.push_back(std::move(L));
  }
  p.lnf_g = filled(1, d, Real(1));
  p.lnf_b = filled(1, d, Real(0));
  if (!cfg.tie_embeddings) p.head = normal(v, d, 0.02);
  return p;
}

// base + (alpha/rank) * B * A over (out_dim x in_dim) matrices.
template <class Real>
Array<Real> apply_adapter(const Array<Real>& base, const AdapterPair<Real>& ad, double alpha,
                          int rank) {
  ZTOK_CHECK(rank > 0, input, "apply_adapter: rank must be positive");
  ZTOK_CHECK(ad.a.rows() == rank && ad.b.cols() == rank, input,
             "apply_adapter: factor ranks disagree");
  ZTOK_CHECK(ad.b.rows() == base.rows() && ad.a.cols() == base.cols(), input,
             "apply_adapter: shape mismatch with base");
  Array<Real> out = Array<Real>::zeros(base.rows(), base.cols());
  out.mat().noalias() = ad.b.mat() * ad.a.mat();
  out.mat() = base.mat() + out.mat() * static_cast<Real>(alpha / rank);
  return out;
}

}  // namespace ztok::model
