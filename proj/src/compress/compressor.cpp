#include "ztok/compress/compressor.hpp"

#include <sstream>

#include "json.hpp"
#include "ztok/io/files.hpp"

namespace ztok::compress {

using nlohmann::json;

std::vector<CompressedDoc> read_compressed(const std::string& path) {
  std::vector<CompressedDoc> out;
  size_t lineno = 0;
  for (const std::string& line : io::read_lines(path)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    ZTOK_CHECK(!j.is_discarded() && j.is_object(), input,
               path + ":" + std::to_string(lineno) + ": not a JSON object");
    CompressedDoc d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.z_ids = j.at("z_ids").get<std::vector<int>>();
    d.n_input_tokens = j.at("n_input_tokens").get<int>();
    d.r_target = j.at("r_target").get<double>();
    out.push_back(std::move(d));
  }
  return out;
}

void write_compressed(const std::string& path, const std::vector<CompressedDoc>& docs) {
  std::ostringstream out;
  for (const CompressedDoc& d : docs) {
    json j{{"doc_id", d.doc_id},
           {"z_ids", d.z_ids},
           {"n_input_tokens", d.n_input_tokens},
           {"r_target", d.r_target}};
    out << j.dump() << "\n";
  }
  io::write_file_atomic(path, out.str());
}

namespace {

// Shared emission loop at temperature 0. Returns content codes.
ZSequence emit_hard(model::InferenceEngine<float>& engine, const data::Vocabulary& vocab,
                    std::span<const int> x, double r_target) {
  const int n = static_cast<int>(x.size());
  const int k_max = k_max_for(n, r_target);
  const auto& cfg = engine.params().cfg;
  ZTOK_CHECK(n + 1 + k_max <= cfg.max_seq_len, input,
             "compress: input plus code budget exceeds context window");
  ZTOK_CHECK(cfg.base_size == vocab.base_size() && cfg.z_size == vocab.z_size(), input,
             "compress: model/vocabulary partition mismatch");
  std::vector<int> prefix(x.begin(), x.end());
  for (int id : prefix) vocab.require_base(id);
  prefix.push_back(data::Vocabulary::kSep);
  auto hidden = engine.feed_ids(prefix);

  ZSequence z;
  z.r_target = r_target;
  const int base = vocab.base_size();
  const int total = cfg.vocab_total();
  Eigen::Matrix<float, 1, Eigen::Dynamic> row = hidden.row(hidden.rows() - 1);
  for (int t = 0; t < k_max; ++t) {
    auto logits = engine.logits(row);
    int arg = base;
    int first_content = base + 1;
    // K >= 1: the opening step must produce a content code.
    int lo = (t == 0) ? first_content : base;
    arg = lo;
    for (int i = lo; i < total; ++i)
      if (logits(0, i) > logits(0, arg)) arg = i;
    if (arg == vocab.z_stop()) {
      z.stopped_early = true;
      break;
    }
    z.ids.push_back(arg);
    if (t + 1 == k_max) break;
    auto h = engine.feed_ids(std::vector<int>{arg});
    row = h.row(0);
  }
  return z;
}

}  // namespace

CompressionResult compress_hard(const model::ModelParams<float>& phi,
                                const data::Vocabulary& vocab, std::span<const int> x,
                                double r_target) {
  model::InferenceEngine<float> engine(phi);
  CompressionResult res;
  res.n_input_tokens = static_cast<int>(x.size());
  res.z = emit_hard(engine, vocab, x, r_target);
  res.z.src_start = 0;
  res.z.src_end = res.n_input_tokens;
  res.effective_ratio = static_cast<double>(res.n_input_tokens) / res.z.K();
  return res;
}

CompressionResult sliding_compress_hard(const model::ModelParams<float>& phi,
                                        const data::Vocabulary& vocab, std::span<const int> x,
                                        int W, int S, double r_target) {
  data::WindowSet ws = data::make_windows(static_cast<int>(x.size()), W, S);
  CompressionResult res;
  res.n_input_tokens = static_cast<int>(x.size());
  res.z.src_start = 0;
  res.z.src_end = res.n_input_tokens;
  res.z.r_target = r_target;
  bool all_stopped = true;
  for (const auto& w : ws.windows) {
    model::InferenceEngine<float> engine(phi);
    ZSequence part = emit_hard(engine, vocab, x.subspan(w.start, w.length()), r_target);
    res.per_window.push_back({w.start, w.end, part.K()});
    res.z.ids.insert(res.z.ids.end(), part.ids.begin(), part.ids.end());
    all_stopped = all_stopped && part.stopped_early;
  }
  res.z.stopped_early = all_stopped;
  res.effective_ratio = static_cast<double>(res.n_input_tokens) / res.z.K();
  return res;
}

double overlap_loss(const ZSequence& a, const ZSequence& b, int overlap_start, int overlap_end,
                    const Array<float>& code_embeddings) {
  ZTOK_CHECK(overlap_end > overlap_start, input, "overlap_loss: empty overlap");
  ZTOK_CHECK(a.soft.count() > 0 && b.soft.count() > 0, input,
             "overlap_loss: sequences carry no soft relaxation");
  auto pooled = [&](const ZSequence& zs) {
    ZTOK_CHECK(zs.soft.rows() == zs.K(), input, "overlap_loss: soft row count mismatch");
    ZTOK_CHECK(zs.soft.cols() == code_embeddings.rows(), input,
               "overlap_loss: soft width does not match code table");
    std::vector<float> pool(code_embeddings.cols(), 0.0f);
    int members = 0;
    for (int j = 0; j < zs.K(); ++j) {
      auto [lo, hi] = code_attribution(j, zs.K(), zs.src_start, zs.src_end);
      if (lo >= overlap_end || hi <= overlap_start) continue;
      ++members;
      for (int c = 0; c < code_embeddings.cols(); ++c) {
        float acc = 0.0f;
        for (int r = 0; r < code_embeddings.rows(); ++r)
          acc += zs.soft.at(j, r) * code_embeddings.at(r, c);
        pool[c] += acc;
      }
    }
    ZTOK_CHECK(members > 0, input, "overlap_loss: no codes attributed to the overlap");
    for (float& v : pool) v /= static_cast<float>(members);
    return pool;
  };
  std::vector<float> pa = pooled(a);
  std::vector<float> pb = pooled(b);
  return 1.0 - static_cast<double>(cosine_similarity<float>(pa, pb));
}

}  // namespace ztok::compress
