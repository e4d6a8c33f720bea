#include "ztok/data/corpus.hpp"

#include <sstream>

#include "json.hpp"
#include "ztok/data/tokenizer.hpp"
#include "ztok/io/files.hpp"

namespace ztok::data {

using nlohmann::json;

std::vector<RawDoc> read_corpus(const std::string& path) {
  std::vector<RawDoc> docs;
  size_t lineno = 0;
  for (const std::string& line : io::read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    ZTOK_CHECK(!j.is_discarded() && j.is_object(), input,
               path + ":" + std::to_string(lineno) + ": not a JSON object");
    ZTOK_CHECK(j.contains("id") && j["id"].is_string(), input,
               path + ":" + std::to_string(lineno) + ": missing string field 'id'");
    ZTOK_CHECK(j.contains("text") && j["text"].is_string(), input,
               path + ":" + std::to_string(lineno) + ": missing string field 'text'");
    RawDoc d;
    d.id = j["id"].get<std::string>();
    d.text = j["text"].get<std::string>();
    if (j.contains("response")) {
      ZTOK_CHECK(j["response"].is_string(), input,
                 path + ":" + std::to_string(lineno) + ": 'response' must be a string");
      d.response = j["response"].get<std::string>();
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

void write_corpus(const std::string& path, const std::vector<RawDoc>& docs) {
  std::ostringstream out;
  for (const RawDoc& d : docs) {
    json j{{"id", d.id}, {"text", d.text}};
    if (d.response) j["response"] = *d.response;
    out << j.dump() << "\n";
  }
  io::write_file_atomic(path, out.str());
}

Document make_document(const RawDoc& raw, const Vocabulary& vocab) {
  Document doc;
  doc.id = raw.id;
  doc.text = raw.text;
  doc.tokens = tokenize(raw.text, vocab);
  return doc;
}

}  // namespace ztok::data
