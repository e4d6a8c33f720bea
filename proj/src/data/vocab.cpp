#include "ztok/data/vocab.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "ztok/data/tokenizer.hpp"
#include "ztok/io/files.hpp"

namespace ztok::data {

namespace {
const char* kSpecialNames[Vocabulary::kNumSpecials] = {"<pad>", "<unk>", "<bos>", "<eos>",
                                                       "<sep>"};
}

Vocabulary::Vocabulary(std::vector<std::string> base_tokens, int z_size) : z_size_(z_size) {
  ZTOK_CHECK(z_size_ >= 1, input, "vocabulary: z_size must be >= 1");
  tokens_.reserve(base_tokens.size() + kNumSpecials);
  for (const char* s : kSpecialNames) tokens_.push_back(s);
  for (auto& t : base_tokens) {
    ZTOK_CHECK(!t.empty(), input, "vocabulary: empty token string");
    tokens_.push_back(std::move(t));
  }
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    ZTOK_CHECK(index_.emplace(tokens_[i], i).second, input,
               "vocabulary: duplicate token " + tokens_[i]);
  }
}

int Vocabulary::token_id(const std::string& w) const {
  auto it = index_.find(w);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_string(int base_id) const {
  require_base(base_id);
  return tokens_[base_id];
}

uint64_t Vocabulary::hash() const {
  // FNV-1a over the canonical serialization.
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;
    h *= 1099511628211ULL;
  };
  mix(std::to_string(base_size()));
  mix(std::to_string(z_size_));
  for (const auto& t : tokens_) mix(t);
  return h;
}

void Vocabulary::save(const std::string& path) const {
  std::ostringstream out;
  out << "ztok-vocab 1 base=" << base_size() << " z=" << z_size_ << " pad=" << kPad
      << " unk=" << kUnk << " bos=" << kBos << " eos=" << kEos << " sep=" << kSep
      << " z_stop=" << z_stop() << "\n";
  for (const auto& t : tokens_) out << t << "\n";
  io::write_file_atomic(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::vector<std::string> lines = io::read_lines(path);
  ZTOK_CHECK(!lines.empty(), input, "vocabulary file empty: " + path);
  std::istringstream hdr(lines[0]);
  std::string magic;
  int version = 0;
  hdr >> magic >> version;
  ZTOK_CHECK(magic == "ztok-vocab" && version == 1, input,
             "not a vocabulary file (bad header): " + path);
  int base = -1, z = -1;
  std::string kv;
  while (hdr >> kv) {
    auto eq = kv.find('=');
    ZTOK_CHECK(eq != std::string::npos, input, "vocabulary header: bad field " + kv);
    std::string key = kv.substr(0, eq);
    int val = std::stoi(kv.substr(eq + 1));
    if (key == "base") base = val;
    if (key == "z") z = val;
  }
  ZTOK_CHECK(base > kNumSpecials && z >= 1, input, "vocabulary header: missing sizes");
  ZTOK_CHECK(static_cast<int>(lines.size()) == base + 1, input,
             "vocabulary file: token count does not match header");
  std::vector<std::string> words(lines.begin() + 1 + kNumSpecials, lines.end());
  for (int i = 0; i < kNumSpecials; ++i)
    ZTOK_CHECK(lines[1 + i] == kSpecialNames[i], input, "vocabulary file: special id mismatch");
  return Vocabulary(std::move(words), z);
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, int base_size, int z_size) {
  ZTOK_CHECK(base_size > Vocabulary::kNumSpecials, input, "base_size too small");
  std::map<std::string, long> counts;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  size_t cap = static_cast<size_t>(base_size - Vocabulary::kNumSpecials);
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, c] : ranked) words.push_back(w);
  return Vocabulary(std::move(words), z_size);
}

}  // namespace ztok::data
