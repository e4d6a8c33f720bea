#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "ztok/core/array.hpp"
#include "ztok/core/rng.hpp"

namespace ztok {

// Eager, graph-free counterparts of the discrete-relaxation primitives.
// Training builds these as tape ops (see ops.hpp); the functions here are
// the reference surface for direct callers and tests.

template <class Real>
std::vector<Real> softmax(std::span<const Real> logits) {
  ZTOK_CHECK(!logits.empty(), input, "softmax: empty logits");
  Real mx = *std::max_element(logits.begin(), logits.end());
  std::vector<Real> out(logits.size());
  Real sum = Real(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (Real& x : out) x /= sum;
  return out;
}

template <class Real>
struct GumbelSample {
  std::vector<Real> soft;  // probability vector, sums to ~1
  int hard_index = -1;     // argmax of (logits + gumbel noise)
};

// Gumbel-Softmax relaxation: soft = softmax((logits + g)/tau), hard =
// argmax(logits + g). The hard index is distributed exactly as
// softmax(logits) by the Gumbel-max property. with_noise=false gives the
// noiseless (inference/limit) variant.
template <class Real>
GumbelSample<Real> gumbel_softmax(std::span<const Real> logits, Real temperature, RngState& rng,
                                  bool with_noise = true) {
  ZTOK_CHECK(!logits.empty(), input, "gumbel_softmax: empty logits");
  ZTOK_CHECK(temperature > Real(0), input, "gumbel_softmax: temperature must be > 0");
  for (Real x : logits)
    ZTOK_CHECK(std::isfinite(static_cast<double>(x)), input, "gumbel_softmax: non-finite logit");
  std::vector<Real> perturbed(logits.begin(), logits.end());
  if (with_noise)
    for (Real& x : perturbed) x += static_cast<Real>(rng.next_gumbel());
  GumbelSample<Real> out;
  out.hard_index = static_cast<int>(
      std::max_element(perturbed.begin(), perturbed.end()) - perturbed.begin());
  for (Real& x : perturbed) x /= temperature;
  out.soft = softmax<Real>(perturbed);
  return out;
}

// Forward pass of the pass-through estimator: the result is the hard
// embedding row, bit for bit. The gradient contract (soft-path backward)
// lives in the tape op st_embed.
template <class Real>
Array<Real> straight_through_embed(std::span<const Real> soft, int hard_index,
                                   const Array<Real>& table) {
  ZTOK_CHECK(static_cast<int>(soft.size()) == table.rows(), input,
             "straight_through_embed: soft length != table rows");
  ZTOK_CHECK(hard_index >= 0 && hard_index < table.rows(), input,
             "straight_through_embed: hard index out of range");
  Array<Real> out = Array<Real>::zeros(1, table.cols());
  out.mat().row(0) = table.mat().row(hard_index);
  return out;
}

template <class Real>
Real cosine_similarity(std::span<const Real> a, std::span<const Real> b) {
  ZTOK_CHECK(a.size() == b.size() && !a.empty(), input, "cosine_similarity: length mismatch");
  Real dot = Real(0), na = Real(0), nb = Real(0);
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  ZTOK_CHECK(na > Real(0) && nb > Real(0), input, "cosine_similarity: zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// -log p[target], clamped at -log(floor) so free-decoding mistakes stay
// bounded. Validates that probs is (approximately) a distribution.
template <class Real>
Real cross_entropy(std::span<const Real> probs, int target, Real floor = Real(1e-9)) {
  ZTOK_CHECK(target >= 0 && target < static_cast<int>(probs.size()), input,
             "cross_entropy: target out of range");
  Real sum = Real(0);
  for (Real p : probs) {
    ZTOK_CHECK(p >= Real(0), input, "cross_entropy: negative probability");
    sum += p;
  }
  ZTOK_CHECK(std::abs(static_cast<double>(sum) - 1.0) < 1e-3, input,
             "cross_entropy: probabilities do not sum to 1");
  Real p = std::max(probs[target], floor);
  return -std::log(p);
}

}  // namespace ztok
