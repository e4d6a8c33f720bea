#include "ztok/zspace/zspace.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "ztok/io/files.hpp"

namespace ztok::zspace {

using nlohmann::json;

std::vector<ZPair> read_zpairs(const std::string& path) {
  std::vector<ZPair> out;
  size_t lineno = 0;
  for (const std::string& line : io::read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    ZTOK_CHECK(!j.is_discarded() && j.is_object(), input,
               path + ":" + std::to_string(lineno) + ": not a JSON object");
    ZPair p;
    p.z_prompt = j.at("z_prompt").get<std::vector<int>>();
    p.z_response = j.at("z_response").get<std::vector<int>>();
    if (j.contains("src")) {
      const json& s = j["src"];
      if (s.contains("prompt_id")) p.src_prompt_id = s["prompt_id"].get<std::string>();
      if (s.contains("response_id")) p.src_response_id = s["response_id"].get<std::string>();
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_zpairs(const std::string& path, const std::vector<ZPair>& pairs) {
  std::ostringstream out;
  for (const ZPair& p : pairs) {
    json j{{"z_prompt", p.z_prompt},
           {"z_response", p.z_response},
           {"src", json{{"prompt_id", p.src_prompt_id}, {"response_id", p.src_response_id}}}};
    out << j.dump() << "\n";
  }
  io::write_file_atomic(path, out.str());
}

decompress::DecodeResult z_generate(const model::ModelParams<float>& psi,
                                    const data::Vocabulary& vocab,
                                    std::span<const int> z_prompt,
                                    const decompress::DecodeConfig& cfg) {
  ZTOK_CHECK(!z_prompt.empty(), input, "z_generate: empty prompt");
  std::vector<int> context;
  for (int id : z_prompt) context.push_back(vocab.require_z(id));
  context.push_back(vocab.z_stop());
  model::InferenceEngine<float> engine(psi);
  return decompress::decode_segment(engine, context, vocab.base_size(), vocab.total_size(),
                                    vocab.z_stop(), cfg);
}

std::vector<double> step_distribution(const model::ModelParams<float>& psi,
                                      const data::Vocabulary& vocab,
                                      std::span<const int> z_prompt,
                                      std::span<const int> partial_response) {
  ZTOK_CHECK(!z_prompt.empty(), input, "step_distribution: empty prompt");
  std::vector<int> context;
  for (int id : z_prompt) context.push_back(vocab.require_z(id));
  context.push_back(vocab.z_stop());
  for (int id : partial_response) context.push_back(vocab.require_z(id));
  model::InferenceEngine<float> engine(psi);
  auto hidden = engine.feed_ids(context);
  auto logits = engine.logits(hidden.row(hidden.rows() - 1));
  int lo = vocab.base_size(), hi = vocab.total_size();
  double mx = logits(0, lo);
  for (int i = lo + 1; i < hi; ++i) mx = std::max(mx, static_cast<double>(logits(0, i)));
  double sum = 0.0;
  std::vector<double> probs(hi - lo);
  for (int i = lo; i < hi; ++i) {
    probs[i - lo] = std::exp(static_cast<double>(logits(0, i)) - mx);
    sum += probs[i - lo];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

}  // namespace ztok::zspace
