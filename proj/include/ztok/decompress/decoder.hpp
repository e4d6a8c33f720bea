#pragma once

#include <span>
#include <string>
#include <vector>

#include "ztok/core/rng.hpp"
#include "ztok/data/vocab.hpp"
#include "ztok/model/infer_engine.hpp"

namespace ztok::decompress {

struct DecodeConfig {
  enum class Strategy { greedy, beam, sample };
  Strategy strategy = Strategy::greedy;
  int beam_width = 1;
  double temperature = 1.0;  // sampling only
  int max_len = 256;
  bool stop_at_eos = true;
  uint64_t seed = 0;  // sampling only

  static DecodeConfig parse(const std::string& spec);  // "greedy" | "beam:K" | "sample:T"
};

struct DecodeResult {
  std::vector<int> ids;   // generated tokens, terminator excluded
  double logprob = 0.0;   // sum of log p(token) over emitted tokens
};

// Conditional generation from codes under the base-vocabulary restriction:
// context [z..., bos], then base-segment decoding until eos or max_len.
DecodeResult reconstruct(const model::ModelParams<float>& theta, const data::Vocabulary& vocab,
                         std::span<const int> z_ids, const DecodeConfig& cfg);

// Same, with a lexical task prefix after bos; empty prefix reduces to
// reconstruct.
DecodeResult infer(const model::ModelParams<float>& theta, const data::Vocabulary& vocab,
                   std::span<const int> z_ids, std::span<const int> task_prefix,
                   const DecodeConfig& cfg);

// Per-token cross-entropies of `targets` under the model given
// [context..., bos]; base-segment restricted, clamped at -log(1e-9).
std::vector<double> score_targets(const model::ModelParams<float>& theta,
                                  const data::Vocabulary& vocab, std::span<const int> context,
                                  std::span<const int> targets);

// Shared free-decoding loop over an arbitrary id segment [seg_lo, seg_hi);
// used by the base decoder above and the code-space generator. max_len is
// clamped to the remaining context window (reported via truncated_max).
DecodeResult decode_segment(model::InferenceEngine<float>& engine, std::span<const int> context,
                            int seg_lo, int seg_hi, int stop_id, const DecodeConfig& cfg,
                            int* truncated_max = nullptr);

}  // namespace ztok::decompress
