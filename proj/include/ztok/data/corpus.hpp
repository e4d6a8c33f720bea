#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ztok/data/vocab.hpp"

namespace ztok::data {

// One JSON-lines corpus record: {"id", "text"} with an optional "response"
// field for prompt/response pairs.
struct RawDoc {
  std::string id;
  std::string text;
  std::optional<std::string> response;
};

struct Document {
  std::string id;
  std::vector<int> tokens;  // base ids only
  std::string text;
};

std::vector<RawDoc> read_corpus(const std::string& path);
void write_corpus(const std::string& path, const std::vector<RawDoc>& docs);

Document make_document(const RawDoc& raw, const Vocabulary& vocab);

}  // namespace ztok::data
