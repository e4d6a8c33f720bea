#pragma once

#include <span>
#include <vector>

#include "ztok/compress/compressor.hpp"
#include "ztok/core/ops.hpp"
#include "ztok/data/vocab.hpp"
#include "ztok/model/infer_engine.hpp"
#include "ztok/model/transformer.hpp"

namespace ztok::decompress {

// Component log of one training step. total = l_tr + lambda*l_kl +
// beta*l_com, plus l_overlap when sliding compression is active.
struct LossBreakdown {
  double l_tr = 0.0;
  double l_kl = 0.0;
  double l_com = 0.0;
  double l_overlap = 0.0;
  double lambda = 0.1;
  double beta = 0.25;
  double total = 0.0;

  static LossBreakdown combine(double l_tr, double l_kl, double l_com, double lambda, double beta,
                               double l_overlap = 0.0) {
    for (double v : {l_tr, l_kl, l_com, l_overlap})
      ZTOK_CHECK(std::isfinite(v) && v >= 0.0, runtime, "loss component NaN or negative");
    LossBreakdown b;
    b.l_tr = l_tr;
    b.l_kl = l_kl;
    b.l_com = l_com;
    b.l_overlap = l_overlap;
    b.lambda = lambda;
    b.beta = beta;
    b.total = l_tr + lambda * l_kl + beta * l_com + l_overlap;
    return b;
  }
};

// Linear sampling schedule for the model-fed probability p (0 -> 0.5 by
// default over the whole run).
struct SamplingSchedule {
  double p_start = 0.0;
  double p_end = 0.5;
  long total_steps = 1;

  double p_at(long step) const {
    ZTOK_CHECK(0.0 <= p_start && p_start <= p_end && p_end <= 1.0, input,
               "sampling schedule: need 0 <= p_start <= p_end <= 1");
    if (total_steps <= 1) return p_end;
    double f = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    if (f > 1.0) f = 1.0;
    return p_start + (p_end - p_start) * f;
  }
};

template <class Real>
struct TeacherForcedResult {
  Var loss;                     // mean CE over target positions (base segment)
  Var logits;                   // (T x vocab) rows aligned with targets
  int n_model_fed = 0;          // positions whose input came from the model
  int n_mixable = 0;            // positions eligible for mixing (T - 1)
  std::vector<int> inputs_used; // ids fed after bos (gold/model mix)
};

// Teacher-forced reconstruction loss with scheduled sampling. Position t>=1
// is fed the gold token y_{t-1} with probability 1-p, otherwise the model's
// own greedy prediction for that slot, taken from a tape-free
// teacher-forced pass and detached from the gradient. Targets are always
// gold; every logit row is restricted to the base segment.
template <class Real>
TeacherForcedResult<Real> teacher_forced_loss(Graph<Real>& g, const model::BoundModel<Real>& theta,
                                              const model::ModelParams<Real>& theta_params,
                                              const std::vector<Var>& z_entries,
                                              const std::vector<int>& z_ids,
                                              std::span<const int> gold, Real p, RngState& rng,
                                              const data::Vocabulary& vocab) {
  const int T = static_cast<int>(gold.size());
  ZTOK_CHECK(T > 0, input, "teacher_forced_loss: empty target");
  ZTOK_CHECK(p >= Real(0) && p <= Real(1), input, "teacher_forced_loss: p outside [0,1]");
  ZTOK_CHECK(z_entries.empty() || z_entries.size() == z_ids.size(), logic,
             "teacher_forced_loss: code entries/ids length mismatch");
  for (int id : gold) vocab.require_base(id);

  const int K = static_cast<int>(z_ids.size());
  // Mixing decisions first: one coin per fed position, drawn regardless of
  // p so the rng stream position is schedule-independent.
  std::vector<char> use_model(T, 0);
  for (int t = 1; t < T; ++t)
    use_model[t] = rng.next_uniform() < static_cast<double>(p) ? 1 : 0;

  // Greedy predictions from a tape-free teacher-forced pass (the standard
  // parallel realization of scheduled sampling for causal transformers).
  std::vector<int> inputs(gold.begin(), gold.end() - 1);
  int n_model_fed = 0;
  bool any_model = false;
  for (int t = 1; t < T; ++t) any_model = any_model || use_model[t];
  if (any_model) {
    model::InferenceEngine<Real> probe(theta_params);
    std::vector<int> ctx(z_ids.begin(), z_ids.end());
    ctx.push_back(data::Vocabulary::kBos);
    ctx.insert(ctx.end(), gold.begin(), gold.end() - 1);
    auto hidden = probe.feed_embedded(probe.embed_ids(ctx));
    for (int t = 1; t < T; ++t) {
      if (!use_model[t]) continue;
      auto logits = probe.logits(hidden.row(K + t - 1));
      int arg = 0;
      for (int i = 1; i < vocab.base_size(); ++i)
        if (logits(0, i) > logits(0, arg)) arg = i;
      inputs[t - 1] = arg;
      ++n_model_fed;
    }
  } else {
    for (int t = 1; t < T; ++t) n_model_fed += use_model[t];
  }

  // Tape pass over [codes..., bos, mixed inputs...].
  std::vector<model::MixedEntry> entries;
  entries.reserve(K + T);
  if (!z_entries.empty()) {
    for (Var v : z_entries) entries.push_back(model::MixedEntry::embedding(v));
  } else {
    for (int id : z_ids) entries.push_back(model::MixedEntry::token(vocab.require_z(id)));
  }
  entries.push_back(model::MixedEntry::token(data::Vocabulary::kBos));
  for (int id : inputs) entries.push_back(model::MixedEntry::token(id));

  Var hidden = model::forward_hidden<Real>(g, theta, entries);
  Var rows = slice_rows(g, hidden, K, T);
  Var logits = logits_from_hidden(g, theta, rows);
  std::vector<int> targets(gold.begin(), gold.end());
  TeacherForcedResult<Real> out;
  out.loss = ce_rows_mean(g, logits, targets, 0, vocab.base_size(), Real(1e-9));
  out.logits = logits;
  out.n_model_fed = n_model_fed;
  out.n_mixable = T - 1;
  out.inputs_used = std::move(inputs);
  return out;
}

// Batch-usage KL regularizer: KL(mean soft distribution || uniform over the
// code segment).
template <class Real>
Var kl_regularizer(Graph<Real>& g, const std::vector<Var>& soft) {
  ZTOK_CHECK(!soft.empty(), input, "kl_regularizer: empty batch");
  Var mat = soft.size() == 1 ? soft[0] : concat_rows(g, soft);
  return kl_mean_to_uniform(g, mat);
}

// Commitment term: mean squared distance between each soft mixture over the
// consumer's code embeddings and its (detached) hard embedding row.
template <class Real>
Var commitment_loss(Graph<Real>& g, Var consumer_table, const std::vector<Var>& soft,
                    const std::vector<int>& hard_local, int seg_lo, int seg_len) {
  ZTOK_CHECK(!soft.empty() && soft.size() == hard_local.size(), input,
             "commitment_loss: empty or mismatched batch");
  std::vector<Var> mixes;
  mixes.reserve(soft.size());
  for (size_t i = 0; i < soft.size(); ++i)
    mixes.push_back(soft_mix(g, consumer_table, soft[i], seg_lo, seg_len));
  Var soft_mat = mixes.size() == 1 ? mixes[0] : concat_rows(g, mixes);
  const auto& table = g.val(consumer_table);
  Array<Real> hard = Array<Real>::zeros(static_cast<int>(hard_local.size()), table.cols());
  for (size_t i = 0; i < hard_local.size(); ++i)
    hard.mat().row(static_cast<int>(i)) = table.mat().row(seg_lo + hard_local[i]);
  return mean_row_sqdist(g, soft_mat, g.constant(std::move(hard)));
}

// Eq.-8 composition on the tape; the caller reads the component values out
// of the graph for logging.
template <class Real>
Var total_loss(Graph<Real>& g, Var l_tr, Var l_kl, Var l_com, Real lambda, Real beta,
               Var l_overlap = Var{}) {
  Var total = add(g, l_tr, add(g, scale(g, l_kl, lambda), scale(g, l_com, beta)));
  if (l_overlap.valid()) total = add(g, total, l_overlap);
  return total;
}

}  // namespace ztok::decompress
