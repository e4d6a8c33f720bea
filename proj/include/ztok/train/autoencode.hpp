#pragma once

#include <span>
#include <vector>

#include "ztok/compress/compressor.hpp"
#include "ztok/decompress/losses.hpp"

namespace ztok::train {

// One end-to-end autoencoding step on the tape: soft compression, code
// embeddings straight-through into the decompressor, teacher-forced
// reconstruction with scheduled sampling, and the Eq.-8 composition.
template <class Real>
struct AutoencodeOptions {
  double r_target = 4.0;
  Real tau = Real(1);
  Real p = Real(0);  // scheduled-sampling probability for this step
  Real lambda = Real(0.1);
  Real beta = Real(0.25);
  int window = 0;  // sliding compression when > 0 and the doc exceeds it
  int stride = 0;
  bool relaxed_st = false;                   // smooth surrogate for gradient checks
  const std::vector<int>* replay = nullptr;  // pin emitted codes (single window)
};

template <class Real>
struct AutoencodeStep {
  Var total;
  decompress::LossBreakdown breakdown;
  std::vector<int> z_ids;
  bool stopped_early = false;
  int n_model_fed = 0;
  int n_mixable = 0;
};

template <class Real>
AutoencodeStep<Real> build_autoencode_loss(Graph<Real>& g, const model::BoundModel<Real>& phi,
                                           const model::BoundModel<Real>& theta,
                                           const model::ModelParams<Real>& theta_params,
                                           const data::Vocabulary& vocab, std::span<const int> x,
                                           const AutoencodeOptions<Real>& opt, RngState& rng) {
  AutoencodeStep<Real> out;
  const int base = vocab.base_size();
  const int zs = vocab.z_size();

  std::vector<int> ids;
  std::vector<int> hard_local;
  std::vector<Var> soft;
  Var l_overlap{};
  bool sliding = opt.window > 0 && static_cast<int>(x.size()) > opt.window;
  if (sliding) {
    ZTOK_CHECK(opt.replay == nullptr, logic, "replay is single-window only");
    auto sc = compress::sliding_compress_train(g, phi, vocab, x, opt.window, opt.stride,
                                               opt.r_target, opt.tau, rng, opt.relaxed_st);
    for (auto& w : sc.windows) {
      ids.insert(ids.end(), w.ids.begin(), w.ids.end());
      hard_local.insert(hard_local.end(), w.hard_local.begin(), w.hard_local.end());
      soft.insert(soft.end(), w.soft.begin(), w.soft.end());
      out.stopped_early = out.stopped_early || w.stopped_early;
    }
    l_overlap = sc.overlap_total;
  } else {
    RngState crng = rng.fork(0xC0DE);
    auto tc = compress::compress_train(g, phi, vocab, x, opt.r_target, opt.tau, crng,
                                       opt.relaxed_st, opt.replay);
    ids = std::move(tc.ids);
    hard_local = std::move(tc.hard_local);
    soft = std::move(tc.soft);
    out.stopped_early = tc.stopped_early;
  }
  out.z_ids = ids;

  // Straight-through code embeddings against the decompressor's table.
  std::vector<Var> entries;
  entries.reserve(ids.size());
  for (size_t t = 0; t < ids.size(); ++t)
    entries.push_back(
        st_embed(g, theta.tok_emb, soft[t], hard_local[t], base, zs, opt.relaxed_st));

  // Reconstruction target is the input plus eos, so free decoding learns to
  // terminate.
  std::vector<int> gold(x.begin(), x.end());
  gold.push_back(data::Vocabulary::kEos);
  RngState srng = rng.fork(0x55AA);
  auto tf = decompress::teacher_forced_loss(g, theta, theta_params, entries, ids, gold, opt.p,
                                            srng, vocab);
  Var l_kl = decompress::kl_regularizer(g, soft);
  Var l_com = decompress::commitment_loss(g, theta.tok_emb, soft, hard_local, base, zs);
  out.total = decompress::total_loss(g, tf.loss, l_kl, l_com, opt.lambda, opt.beta, l_overlap);
  out.breakdown = decompress::LossBreakdown::combine(
      static_cast<double>(g.val(tf.loss).values()[0]), static_cast<double>(g.val(l_kl).values()[0]),
      static_cast<double>(g.val(l_com).values()[0]), static_cast<double>(opt.lambda),
      static_cast<double>(opt.beta),
      l_overlap.valid() ? static_cast<double>(g.val(l_overlap).values()[0]) : 0.0);
  out.n_model_fed = tf.n_model_fed;
  out.n_mixable = tf.n_mixable;
  return out;
}

}  // namespace ztok::train
