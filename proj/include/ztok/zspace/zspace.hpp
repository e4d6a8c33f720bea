#pragma once

#include <span>
#include <string>
#include <vector>

#include "ztok/decompress/decoder.hpp"
#include "ztok/model/transformer.hpp"

namespace ztok::zspace {

// Prompt/response code pair; both sides are pure Z-range ids.
struct ZPair {
  std::vector<int> z_prompt;
  std::vector<int> z_response;
  std::string src_prompt_id;
  std::string src_response_id;
};

std::vector<ZPair> read_zpairs(const std::string& path);
void write_zpairs(const std::string& path, const std::vector<ZPair>& pairs);

// Sequence layout for the code-space language model: prompt codes, z_stop
// as the prompt/response boundary, response codes, closing z_stop. The loss
// covers the response positions (boundary included as the final target).
inline std::vector<int> pair_sequence(const ZPair& pair, const data::Vocabulary& vocab,
                                      int* first_response_pos) {
  ZTOK_CHECK(!pair.z_prompt.empty() && !pair.z_response.empty(), input,
             "z pair: prompt and response must be nonempty");
  std::vector<int> seq;
  for (int id : pair.z_prompt) seq.push_back(vocab.require_z(id));
  seq.push_back(vocab.z_stop());
  *first_response_pos = static_cast<int>(seq.size());
  for (int id : pair.z_response) seq.push_back(vocab.require_z(id));
  seq.push_back(vocab.z_stop());
  return seq;
}

// Mean cross-entropy of the response codes (plus terminator) conditioned on
// the prompt, logits restricted to the code segment.
template <class Real>
Var z_lm_loss(Graph<Real>& g, const model::BoundModel<Real>& psi, const data::Vocabulary& vocab,
              const ZPair& pair) {
  int first_response = 0;
  std::vector<int> seq = pair_sequence(pair, vocab, &first_response);
  ZTOK_CHECK(static_cast<int>(seq.size()) <= psi.cfg.max_seq_len, input,
             "z pair exceeds context window");
  int n_targets = static_cast<int>(seq.size()) - first_response;
  std::vector<int> inputs(seq.begin(), seq.end() - 1);
  Var hidden = model::forward_hidden<Real>(
      g, psi, [&] {
        std::vector<model::MixedEntry> e;
        for (int id : inputs) e.push_back(model::MixedEntry::token(id));
        return e;
      }());
  Var rows = slice_rows(g, hidden, first_response - 1, n_targets);
  Var logits = logits_from_hidden(g, psi, rows);
  std::vector<int> targets(seq.begin() + first_response, seq.end());
  return ce_rows_mean(g, logits, targets, vocab.base_size(), vocab.total_size(), Real(1e-9));
}

// Free generation in code space: context [prompt..., z_stop], then
// code-segment decoding until z_stop or max_len.
decompress::DecodeResult z_generate(const model::ModelParams<float>& psi,
                                    const data::Vocabulary& vocab,
                                    std::span<const int> z_prompt,
                                    const decompress::DecodeConfig& cfg);

// Distribution over the code segment for the next step given the prompt and
// a partial response; powers the exhaustive enumeration oracle.
std::vector<double> step_distribution(const model::ModelParams<float>& psi,
                                      const data::Vocabulary& vocab,
                                      std::span<const int> z_prompt,
                                      std::span<const int> partial_response);

}  // namespace ztok::zspace
