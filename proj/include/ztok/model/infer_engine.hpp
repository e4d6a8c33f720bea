#pragma once

#include <span>
#include <vector>

#include "ztok/model/params.hpp"

namespace ztok::model {

// Tape-free forward engine with per-layer KV caches, for decoding, scoring
// and scheduled-sampling probes. The arithmetic mirrors the graph ops in
// transformer.hpp (unit tests pin the two paths together). Dropout never
// runs here; adapters are applied when the config enables them.
template <class Real>
class InferenceEngine {
 public:
  using EMat = typename Array<Real>::EMat;

  explicit InferenceEngine(const ModelParams<Real>& p) : p_(&p) {
    p.cfg.validate();
    k_.resize(p.cfg.n_layers);
    v_.resize(p.cfg.n_layers);
  }

  const ModelParams<Real>& params() const { return *p_; }
  int length() const { return len_; }

  void reset() {
    for (auto& k : k_) k.resize(0, 0);
    for (auto& v : v_) v.resize(0, 0);
    len_ = 0;
  }

  // Embedding rows (token + position) for ids placed at the next positions.
  EMat embed_ids(std::span<const int> ids) const {
    EMat x(static_cast<int>(ids.size()), p_->cfg.model_dim);
    for (size_t i = 0; i < ids.size(); ++i) {
      ZTOK_CHECK(ids[i] >= 0 && ids[i] < p_->cfg.vocab_total(), input,
                 "inference: id out of vocabulary");
      x.row(static_cast<int>(i)) =
          p_->tok_emb.mat().row(ids[i]) + p_->pos_emb.mat().row(len_ + static_cast<int>(i));
    }
    return x;
  }

  // Feed pre-embedded rows (position embedding already added); returns the
  // final-layer-norm hidden rows of the block.
  EMat feed_embedded(const EMat& x) {
    ZTOK_CHECK(len_ + x.rows() <= p_->cfg.max_seq_len, input,
               "sequence length exceeds max_seq_len");
    int n = static_cast<int>(x.rows());
    int d = p_->cfg.model_dim, heads = p_->cfg.n_heads, dh = d / heads;
    Real inv_sqrt = Real(1) / std::sqrt(Real(dh));
    EMat h = x;
    for (int l = 0; l < p_->cfg.n_layers; ++l) {
      const LayerParams<Real>& L = p_->layers[l];
      EMat normed = layer_norm(h, L.ln1_g, L.ln1_b);
      EMat q = project(normed, L, 0, L.wq);
      EMat k = project(normed, L, 1, L.wk);
      EMat v = project(normed, L, 2, L.wv);
      append(k_[l], k);
      append(v_[l], v);
      int kn = static_cast<int>(k_[l].rows());
      int past = kn - n;
      EMat att(n, d);
      for (int hd = 0; hd < heads; ++hd) {
        EMat scores = q.middleCols(hd * dh, dh) *
                      k_[l].middleCols(hd * dh, dh).transpose() * inv_sqrt;
        for (int i = 0; i < n; ++i) {
          int valid = past + i + 1;
          Real mx = scores(i, 0);
          for (int j = 1; j < valid; ++j) mx = std::max(mx, scores(i, j));
          Real sum = Real(0);
          for (int j = 0; j < valid; ++j) {
            Real e = std::exp(scores(i, j) - mx);
            scores(i, j) = e;
            sum += e;
          }
          for (int j = 0; j < valid; ++j) scores(i, j) /= sum;
          for (int j = valid; j < kn; ++j) scores(i, j) = Real(0);
        }
        att.middleCols(hd * dh, dh).noalias() = scores * v_[l].middleCols(hd * dh, dh);
      }
      h += project(att, L, 3, L.wo);
      EMat normed2 = layer_norm(h, L.ln2_g, L.ln2_b);
      EMat f1 = (project(normed2, L, 4, L.w1).rowwise() + L.b1.mat().row(0));
      gelu_inplace(f1);
      h += (project(f1, L, 5, L.w2).rowwise() + L.b2.mat().row(0)).eval();
    }
    len_ += n;
    return layer_norm(h, p_->lnf_g, p_->lnf_b);
  }

  EMat feed_ids(std::span<const int> ids) { return feed_embedded(embed_ids(ids)); }

  // Full-vocabulary logits for one hidden row.
  Eigen::Matrix<Real, 1, Eigen::Dynamic> logits(
      const Eigen::Ref<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>& hidden_row) const {
    const Array<Real>& w = p_->cfg.tie_embeddings ? p_->tok_emb : p_->head;
    return hidden_row * w.mat().transpose();
  }

  // Snapshot/restore for beam search.
  struct State {
    std::vector<EMat> k, v;
    int len = 0;
  };
  State save_state() const { return State{k_, v_, len_}; }
  void restore_state(const State& s) {
    k_ = s.k;
    v_ = s.v;
    len_ = s.len;
  }

 private:
  static void append(EMat& cache, const EMat& rows) {
    if (cache.rows() == 0) {
      cache = rows;
    } else {
      EMat next(cache.rows() + rows.rows(), rows.cols());
      next << cache, rows;
      cache = std::move(next);
    }
  }

  EMat layer_norm(const EMat& x, const Array<Real>& gain, const Array<Real>& bias) const {
    EMat out(x.rows(), x.cols());
    int c = static_cast<int>(x.cols());
    for (int r = 0; r < x.rows(); ++r) {
      Real mu = x.row(r).mean();
      Real var = Real(0);
      for (int j = 0; j < c; ++j) {
        Real d = x(r, j) - mu;
        var += d * d;
      }
      var /= Real(c);
      Real s = Real(1) / std::sqrt(var + Real(1e-5));
      for (int j = 0; j < c; ++j)
        out(r, j) = (x(r, j) - mu) * s * gain.at(0, j) + bias.at(0, j);
    }
    return out;
  }

  EMat project(const EMat& x, const LayerParams<Real>& L, int adapter_idx,
               const Array<Real>& w) const {
    EMat y = x * w.mat();
    if (!L.adapters.empty()) {
      const AdapterPair<Real>& ap = L.adapters[adapter_idx];
      Real s = static_cast<Real>(p_->cfg.adapters.alpha / p_->cfg.adapters.rank);
      y.noalias() += (x * ap.a.mat().transpose()) * ap.b.mat().transpose() * s;
    }
    return y;
  }

  static void gelu_inplace(EMat& x) {
    const Real k = Real(0.7978845608028654);
    const Real c = Real(0.044715);
    for (int r = 0; r < x.rows(); ++r)
      for (int j = 0; j < x.cols(); ++j) {
        Real t = std::tanh(k * (x(r, j) + c * x(r, j) * x(r, j) * x(r, j)));
        x(r, j) = Real(0.5) * x(r, j) * (Real(1) + t);
      }
  }

  const ModelParams<Real>* p_;
  std::vector<EMat> k_, v_;
  int len_ = 0;
};

}  // namespace ztok::model
