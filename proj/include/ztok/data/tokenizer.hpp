#pragma once

#include <span>
#include <string>
#include <vector>

#include "ztok/data/vocab.hpp"

namespace ztok::data {

// Whitespace + punctuation splitting with ASCII lowercasing. Punctuation
// characters become single-character tokens; bytes >= 0x80 are treated as
// word characters so UTF-8 sequences stay intact. Locale-independent.
std::vector<std::string> split_words(const std::string& text);

// Canonical surface form: lowercased, punctuation spaced out, single
// spaces. tokenize/detokenize round-trip up to this normalization.
std::string normalize_text(const std::string& text);

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab);
std::string detokenize(std::span<const int> ids, const Vocabulary& vocab);

}  // namespace ztok::data
