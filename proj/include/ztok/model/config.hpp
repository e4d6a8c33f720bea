#pragma once

#include <string>

#include "ztok/core/error.hpp"

namespace ztok::model {

// Low-rank adapter settings; delta = (alpha / rank) * B * A with B
// zero-initialized. Off by default at desk scale (full weights train).
struct AdapterConfig {
  bool enabled = false;
  int rank = 128;
  double alpha = 256.0;
  double dropout = 0.1;
};

struct TransformerConfig {
  int n_layers = 4;
  int n_heads = 4;
  int model_dim = 128;
  int ff_dim = 512;
  int max_seq_len = 512;
  int base_size = 0;  // lexical partition [0, base_size)
  int z_size = 0;     // code partition [base_size, base_size + z_size)
  bool tie_embeddings = true;
  AdapterConfig adapters;

  int vocab_total() const { return base_size + z_size; }

  void validate() const {
    ZTOK_CHECK(n_layers > 0 && n_heads > 0 && model_dim > 0 && ff_dim > 0 && max_seq_len > 0,
               input, "transformer config: sizes must be positive");
    ZTOK_CHECK(model_dim % n_heads == 0, input,
               "transformer config: model_dim must be divisible by n_heads");
    ZTOK_CHECK(base_size > 0 && z_size > 0, input,
               "transformer config: vocabulary partition unset");
    if (adapters.enabled) {
      ZTOK_CHECK(adapters.rank > 0, input, "adapter config: rank must be positive");
      ZTOK_CHECK(adapters.dropout >= 0.0 && adapters.dropout < 1.0, input,
                 "adapter config: dropout must be in [0,1)");
    }
  }
};

enum class Role { compressor, decompressor, zspace };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::compressor: return "compressor";
    case Role::decompressor: return "decompressor";
    case Role::zspace: return "zspace";
  }
  return "?";
}

inline Role role_from_name(const std::string& s) {
  if (s == "compressor") return Role::compressor;
  if (s == "decompressor") return Role::decompressor;
  if (s == "zspace") return Role::zspace;
  throw Error::input("unknown model role: " + s);
}

}  // namespace ztok::model
