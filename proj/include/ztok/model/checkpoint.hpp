#pragma once

#include <cstdint>
#include <string>

#include "ztok/model/params.hpp"

namespace ztok::model {

struct CheckpointMeta {
  Role role = Role::compressor;
  long step = 0;
  uint64_t vocab_hash = 0;
};

// Binary container: magic, a JSON header (config, role, vocab hash, step,
// named buffer table) and the raw float32 little-endian parameter buffers in
// declaration order. Round trips are byte-exact.
void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelParams<float> params;
  CheckpointMeta meta;
};

// expected_vocab_hash != 0 enforces a vocabulary match.
LoadedCheckpoint load_checkpoint(const std::string& path, uint64_t expected_vocab_hash = 0);

std::string config_to_json(const TransformerConfig& cfg);
TransformerConfig config_from_json(const std::string& json_text);

}  // namespace ztok::model
