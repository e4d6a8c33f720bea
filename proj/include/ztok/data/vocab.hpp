#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ztok/core/error.hpp"

namespace ztok::data {

// Partitioned id space: ids in [0, base_size) are lexical tokens, ids in
// [base_size, base_size + z_size) are Z-codes. The first Z id (z_stop)
// terminates compression, mirroring eos on the lexical side.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;
  static constexpr int kNumSpecials = 5;

  // base_tokens are the non-special lexical strings, id order; specials are
  // prepended automatically.
  Vocabulary(std::vector<std::string> base_tokens, int z_size);

  int base_size() const { return static_cast<int>(tokens_.size()); }
  int z_size() const { return z_size_; }
  int total_size() const { return base_size() + z_size_; }
  int z_stop() const { return base_size(); }

  bool is_base(int id) const { return id >= 0 && id < base_size(); }
  bool is_z(int id) const { return id >= base_size() && id < total_size(); }

  int require_base(int id) const {
    ZTOK_CHECK(is_base(id), logic, "vocabulary: expected a base id, got " + std::to_string(id));
    return id;
  }
  int require_z(int id) const {
    ZTOK_CHECK(is_z(id), logic, "vocabulary: expected a Z id, got " + std::to_string(id));
    return id;
  }

  // unk for unknown words.
  int token_id(const std::string& w) const;
  const std::string& token_string(int base_id) const;

  uint64_t hash() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;  // includes specials at the front
  std::unordered_map<std::string, int> index_;
  int z_size_ = 0;
};

// Frequency-ranked vocabulary over tokenized corpus text. Ties break
// lexicographically; at most base_size - kNumSpecials words are kept.
Vocabulary build_vocabulary(const std::vector<std::string>& texts, int base_size, int z_size);

}  // namespace ztok::data
