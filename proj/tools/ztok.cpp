// ztok: variable-length discrete-code text compression toolkit.
//
// Subcommands cover the full pipeline: corpus synthesis, training,
// compression, decompression, code-space generation, evaluation and the
// consistency report. Exit codes: 0 ok, 2 usage, 3 input/format, 4 runtime.

#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ztok/compress/compressor.hpp"
#include "ztok/data/synth.hpp"
#include "ztok/data/tokenizer.hpp"
#include "ztok/decompress/decoder.hpp"
#include "ztok/interpret/interpret.hpp"
#include "ztok/io/files.hpp"
#include "ztok/metrics/metrics.hpp"
#include "ztok/train/trainer.hpp"
#include "ztok/zspace/zspace.hpp"

using nlohmann::json;
using namespace ztok;

namespace {

int exit_code_for(ErrKind kind) {
  switch (kind) {
    case ErrKind::usage: return 2;
    case ErrKind::input: return 3;
    case ErrKind::runtime: return 4;
    case ErrKind::logic: return 4;
  }
  return 4;
}

void fail_line(const char* category, const std::string& msg) {
  std::cerr << "ztok: error: " << category << ": " << msg << std::endl;
}

std::pair<int, int> parse_len_range(const std::string& s) {
  auto sep = s.find(':');
  if (sep == std::string::npos) sep = s.find('-');
  if (sep == std::string::npos) {
    int v = std::stoi(s);
    return {v, v};
  }
  return {std::stoi(s.substr(0, sep)), std::stoi(s.substr(sep + 1))};
}

// Loads the vocabulary next to a checkpoint unless an explicit path is given.
data::Vocabulary vocab_for(const std::string& ckpt_path, const std::string& vocab_flag) {
  std::string path = vocab_flag;
  if (path.empty()) {
    auto slash = ckpt_path.find_last_of('/');
    std::string dir = slash == std::string::npos ? "." : ckpt_path.substr(0, slash);
    path = dir + "/vocab.txt";
  }
  ZTOK_CHECK(io::file_exists(path), input,
             "vocabulary file not found: " + path + " (pass --vocab)");
  return data::Vocabulary::load(path);
}

int cmd_synth(uint64_t seed, int vocab_size, int docs, const std::string& len, double redundancy,
              const std::string& out) {
  data::GrammarParams gp;
  gp.vocab_size = vocab_size;
  auto [lo, hi] = parse_len_range(len);
  gp.doc_len_min = lo;
  gp.doc_len_max = hi;
  gp.redundancy = redundancy;
  gp.n_docs = docs;
  data::write_corpus(out, data::synth_corpus(seed, gp));
  std::cout << "wrote " << docs << " documents to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus,
              const std::string& out_dir) {
  train::TrainConfig cfg = train::TrainConfig::from_json_text(io::read_file(config_path));
  train::TrainResult res = train::train(cfg, corpus, out_dir);
  const auto& last = res.records.empty() ? train::RunRecord{} : res.records.back();
  std::cout << "trained " << cfg.regime << " for " << cfg.steps << " steps; final total loss "
            << last.loss.total << "; artifacts in " << out_dir << "\n";
  return 0;
}

int cmd_compress(const std::string& ckpt, const std::string& in, double ratio, int window,
                 int stride, const std::string& out, const std::string& vocab_flag, bool pairs) {
  data::Vocabulary vocab = vocab_for(ckpt, vocab_flag);
  auto loaded = model::load_checkpoint(ckpt, vocab.hash());
  std::vector<data::RawDoc> docs = data::read_corpus(in);
  std::ostringstream os;
  if (pairs) {
    std::vector<zspace::ZPair> zpairs;
    for (const auto& raw : docs) {
      ZTOK_CHECK(raw.response.has_value(), input, "corpus line missing 'response': " + raw.id);
      std::vector<int> p = data::tokenize(raw.text, vocab);
      std::vector<int> r = data::tokenize(*raw.response, vocab);
      ZTOK_CHECK(!p.empty() && !r.empty(), input, "empty prompt or response: " + raw.id);
      zspace::ZPair zp;
      zp.z_prompt = compress::compress_hard(loaded.params, vocab, p, ratio).z.ids;
      zp.z_response = compress::compress_hard(loaded.params, vocab, r, ratio).z.ids;
      zp.src_prompt_id = raw.id;
      zp.src_response_id = raw.id + "#response";
      zpairs.push_back(std::move(zp));
    }
    zspace::write_zpairs(out, zpairs);
    std::cout << "wrote " << zpairs.size() << " code pairs to " << out << "\n";
    return 0;
  }
  std::vector<compress::CompressedDoc> result;
  double ratio_sum = 0.0;
  for (const auto& raw : docs) {
    std::vector<int> toks = data::tokenize(raw.text, vocab);
    ZTOK_CHECK(!toks.empty(), input, "document empty after tokenization: " + raw.id);
    compress::CompressionResult cr =
        window > 0 ? compress::sliding_compress_hard(loaded.params, vocab, toks, window, stride,
                                                     ratio)
                   : compress::compress_hard(loaded.params, vocab, toks, ratio);
    compress::CompressedDoc cd;
    cd.doc_id = raw.id;
    cd.z_ids = cr.z.ids;
    cd.n_input_tokens = cr.n_input_tokens;
    cd.r_target = ratio;
    ratio_sum += cr.effective_ratio;
    result.push_back(std::move(cd));
  }
  compress::write_compressed(out, result);
  std::cout << "compressed " << result.size() << " documents to " << out
            << " (mean effective ratio " << ratio_sum / std::max<size_t>(1, result.size())
            << ")\n";
  return 0;
}

int cmd_decompress(const std::string& ckpt, const std::string& in, const std::string& strategy,
                   const std::string& out, const std::string& vocab_flag,
                   const std::string& gold_path, uint64_t seed, bool seed_given) {
  data::Vocabulary vocab = vocab_for(ckpt, vocab_flag);
  auto loaded = model::load_checkpoint(ckpt, vocab.hash());
  decompress::DecodeConfig cfg = decompress::DecodeConfig::parse(strategy);
  if (cfg.strategy == decompress::DecodeConfig::Strategy::sample)
    ZTOK_CHECK(seed_given, usage, "sampling decode requires an explicit --seed");
  cfg.seed = seed;
  std::vector<compress::CompressedDoc> docs = compress::read_compressed(in);
  std::map<std::string, std::vector<int>> gold;
  if (!gold_path.empty())
    for (const auto& raw : data::read_corpus(gold_path))
      gold[raw.id] = data::tokenize(raw.text, vocab);
  std::ostringstream os;
  for (const auto& cd : docs) {
    decompress::DecodeConfig dc = cfg;
    dc.max_len = 2 * cd.n_input_tokens;  // free decoding safety rail
    auto dec = decompress::reconstruct(loaded.params, vocab, cd.z_ids, dc);
    json j{{"doc_id", cd.doc_id},
           {"text", data::detokenize(dec.ids, vocab)},
           {"logprob", dec.logprob},
           {"strategy", strategy}};
    if (!gold_path.empty()) {
      auto it = gold.find(cd.doc_id);
      ZTOK_CHECK(it != gold.end(), input, "gold file has no document " + cd.doc_id);
      auto ces = decompress::score_targets(loaded.params, vocab, cd.z_ids, it->second);
      double mean = 0.0;
      for (double c : ces) mean += c;
      j["ce"] = mean / static_cast<double>(ces.size());
    }
    os << j.dump() << "\n";
  }
  io::write_file_atomic(out, os.str());
  std::cout << "decompressed " << docs.size() << " documents to " << out << "\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& z_path, const std::string& prompt,
              const std::string& out, const std::string& strategy, const std::string& vocab_flag,
              uint64_t seed, bool seed_given, int max_len) {
  data::Vocabulary vocab = vocab_for(ckpt, vocab_flag);
  auto loaded = model::load_checkpoint(ckpt, vocab.hash());
  decompress::DecodeConfig cfg = decompress::DecodeConfig::parse(strategy);
  if (cfg.strategy == decompress::DecodeConfig::Strategy::sample)
    ZTOK_CHECK(seed_given, usage, "sampling decode requires an explicit --seed");
  cfg.seed = seed;
  std::vector<int> prefix = data::tokenize(prompt, vocab);
  std::vector<compress::CompressedDoc> docs = compress::read_compressed(z_path);
  std::ostringstream os;
  for (const auto& cd : docs) {
    decompress::DecodeConfig dc = cfg;
    dc.max_len = max_len > 0 ? max_len : 2 * cd.n_input_tokens;
    auto dec = decompress::infer(loaded.params, vocab, cd.z_ids, prefix, dc);
    os << json{{"doc_id", cd.doc_id},
               {"text", data::detokenize(dec.ids, vocab)},
               {"logprob", dec.logprob},
               {"strategy", strategy}}
              .dump()
       << "\n";
  }
  io::write_file_atomic(out, os.str());
  std::cout << "answered " << docs.size() << " inputs to " << out << "\n";
  return 0;
}

int cmd_zgen(const std::string& ckpt_psi, const std::string& ckpt_theta,
             const std::string& z_prompt_path, const std::string& out,
             const std::string& vocab_flag, int max_len) {
  data::Vocabulary vocab = vocab_for(ckpt_psi, vocab_flag);
  auto psi = model::load_checkpoint(ckpt_psi, vocab.hash());
  auto theta = model::load_checkpoint(ckpt_theta, vocab.hash());
  std::vector<compress::CompressedDoc> docs = compress::read_compressed(z_prompt_path);
  std::ostringstream os;
  for (const auto& cd : docs) {
    decompress::DecodeConfig zc;
    zc.max_len = max_len > 0 ? max_len : std::max<int>(8, static_cast<int>(cd.z_ids.size()) * 2);
    auto zr = zspace::z_generate(psi.params, vocab, cd.z_ids, zc);
    decompress::DecodeConfig dc;
    dc.max_len = 2 * cd.n_input_tokens;
    json j{{"doc_id", cd.doc_id}, {"z_ids", zr.ids}};
    if (zr.ids.empty()) {
      j["text"] = "";
    } else {
      auto dec = decompress::reconstruct(theta.params, vocab, zr.ids, dc);
      j["text"] = data::detokenize(dec.ids, vocab);
    }
    os << j.dump() << "\n";
  }
  io::write_file_atomic(out, os.str());
  std::cout << "generated " << docs.size() << " code-space responses to " << out << "\n";
  return 0;
}

// Word ids local to the evaluation (metrics are tokenizer-agnostic).
std::vector<int> eval_tokens(const std::string& text, std::map<std::string, int>& dict) {
  std::vector<int> out;
  for (const auto& w : data::split_words(text)) {
    auto [it, fresh] = dict.emplace(w, static_cast<int>(dict.size()));
    out.push_back(it->second);
  }
  return out;
}

int cmd_eval(const std::string& task, const std::string& pred_path, const std::string& gold_path,
             const std::string& report_path) {
  json report{{"task", task}};
  auto read_jsonl = [](const std::string& path) {
    std::vector<json> rows;
    for (const auto& line : io::read_lines(path)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      ZTOK_CHECK(!j.is_discarded(), input, "invalid JSON line in " + path);
      rows.push_back(std::move(j));
    }
    return rows;
  };
  auto text_by_id = [&](const std::string& path) {
    std::map<std::string, std::string> m;
    for (const auto& j : read_jsonl(path)) {
      std::string id = j.contains("doc_id") ? j.at("doc_id").get<std::string>()
                                            : j.at("id").get<std::string>();
      m[id] = j.at("text").get<std::string>();
    }
    return m;
  };

  if (task == "reconstruct") {
    auto pred_rows = read_jsonl(pred_path);
    auto gold = text_by_id(gold_path);
    metrics::BleuAccumulator bleu;
    std::map<std::string, int> dict;
    double ce_sum = 0.0;
    int ce_n = 0;
    for (const auto& j : pred_rows) {
      std::string id = j.contains("doc_id") ? j.at("doc_id").get<std::string>()
                                            : j.at("id").get<std::string>();
      auto it = gold.find(id);
      ZTOK_CHECK(it != gold.end(), input, "gold file has no document " + id);
      std::vector<int> c = eval_tokens(j.at("text").get<std::string>(), dict);
      std::vector<int> r = eval_tokens(it->second, dict);
      if (!c.empty()) bleu.add(c, {r});
      if (j.contains("ce")) {
        ce_sum += j.at("ce").get<double>();
        ++ce_n;
      }
    }
    report["bleu4"] = bleu.score() * 100.0;
    if (ce_n > 0) report["ce"] = ce_sum / ce_n;
  } else if (task == "continue") {
    auto pred_rows = read_jsonl(pred_path);
    std::vector<double> full, zctx;
    for (const auto& j : pred_rows) {
      for (double c : j.at("ce_full").get<std::vector<double>>()) full.push_back(c);
      for (double c : j.at("ce_z").get<std::vector<double>>()) zctx.push_back(c);
    }
    double ppl_full = metrics::perplexity(full);
    double ppl_z = metrics::perplexity(zctx);
    report["ppl_original"] = ppl_full;
    report["ppl_z"] = ppl_z;
    report["gap"] = metrics::ppl_gap(ppl_full, ppl_z);
  } else if (task == "summarize") {
    auto pred = text_by_id(pred_path);
    auto gold = text_by_id(gold_path);
    std::map<std::string, int> dict;
    double r1 = 0, r2 = 0, rl = 0;
    int n = 0;
    for (const auto& [id, text] : pred) {
      auto it = gold.find(id);
      ZTOK_CHECK(it != gold.end(), input, "gold file has no document " + id);
      auto s = metrics::rouge(eval_tokens(text, dict), eval_tokens(it->second, dict));
      r1 += s.r1;
      r2 += s.r2;
      rl += s.rl;
      ++n;
    }
    ZTOK_CHECK(n > 0, input, "no prediction/gold pairs");
    report["rouge1"] = 100.0 * r1 / n;
    report["rouge2"] = 100.0 * r2 / n;
    report["rougeL"] = 100.0 * rl / n;
  } else if (task == "qa") {
    auto pred = text_by_id(pred_path);
    auto gold = text_by_id(gold_path);
    double f1 = 0;
    int em = 0, n = 0;
    for (const auto& [id, text] : pred) {
      auto it = gold.find(id);
      ZTOK_CHECK(it != gold.end(), input, "gold file has no document " + id);
      f1 += metrics::token_f1(text, it->second);
      em += metrics::exact_match(text, it->second);
      ++n;
    }
    ZTOK_CHECK(n > 0, input, "no prediction/gold pairs");
    report["f1"] = 100.0 * f1 / n;
    report["em"] = 100.0 * static_cast<double>(em) / n;
  } else {
    throw Error::usage("unknown eval task: " + task);
  }

  // Appended as one JSON line; the report file accumulates runs.
  std::string existing =
      io::file_exists(report_path) ? io::read_file(report_path) : std::string();
  io::write_file_atomic(report_path, existing + report.dump() + "\n");
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_consistency(const std::string& ckpt, const std::string& corpus_path,
                    const std::string& report_path, const std::string& vocab_flag, double ratio,
                    int widen) {
  data::Vocabulary vocab = vocab_for(ckpt, vocab_flag);
  auto loaded = model::load_checkpoint(ckpt, vocab.hash());
  std::vector<data::RawDoc> raw = data::read_corpus(corpus_path);
  std::vector<data::Document> docs;
  std::vector<compress::CompressedDoc> compressed;
  for (const auto& r : raw) {
    data::Document d = data::make_document(r, vocab);
    ZTOK_CHECK(!d.tokens.empty(), input, "document empty after tokenization: " + r.id);
    auto cr = compress::compress_hard(loaded.params, vocab, d.tokens, ratio);
    compress::CompressedDoc cd;
    cd.doc_id = d.id;
    cd.z_ids = cr.z.ids;
    cd.n_input_tokens = cr.n_input_tokens;
    cd.r_target = ratio;
    compressed.push_back(std::move(cd));
    docs.push_back(std::move(d));
  }
  auto encoder = interpret::embedding_mean_encoder(loaded.params);
  auto rep = interpret::consistency_report(compressed, docs, encoder, widen);
  io::write_file_atomic(report_path, interpret::report_to_json(rep));
  std::cout << "consistency mean " << rep.mean << " +/- " << rep.stddev << " (baseline "
            << rep.random_baseline << ") over " << rep.per_token.size() << " codes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variable-length discrete-code text compression"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic grammar corpus");
  uint64_t s_seed = 0;
  int s_vocab = 256, s_docs = 100;
  std::string s_len = "64:128", s_out;
  double s_red = 0.9;
  synth->add_option("--seed", s_seed, "rng seed")->required();
  synth->add_option("--vocab-size", s_vocab, "distinct word budget");
  synth->add_option("--docs", s_docs, "number of documents");
  synth->add_option("--len", s_len, "document length or range lo:hi in tokens");
  synth->add_option("--redundancy", s_red, "phrase reuse rate in [0,1]");
  synth->add_option("--out", s_out, "output corpus (JSON lines)")->required();

  // train
  auto* tr = app.add_subcommand("train", "run a training regime from a JSON config");
  std::string t_config, t_corpus, t_out;
  tr->add_option("--config", t_config, "TrainConfig JSON file")->required();
  tr->add_option("--corpus", t_corpus, "corpus path (documents or code pairs)")->required();
  tr->add_option("--out-dir", t_out, "output directory")->required();

  // compress
  auto* co = app.add_subcommand("compress", "compress documents into code sequences");
  std::string c_ckpt, c_in, c_out, c_vocab;
  double c_ratio = 4.0;
  int c_window = 0, c_stride = 0;
  bool c_pairs = false;
  co->add_option("--ckpt", c_ckpt, "compressor checkpoint")->required();
  co->add_option("--in", c_in, "input corpus (JSON lines)")->required();
  co->add_option("--ratio", c_ratio, "nominal compression budget");
  co->add_option("--window", c_window, "sliding window length W (0: off)");
  co->add_option("--stride", c_stride, "sliding stride S");
  co->add_option("--out", c_out, "output file")->required();
  co->add_option("--vocab", c_vocab, "vocabulary file (default: next to ckpt)");
  co->add_flag("--pairs", c_pairs, "treat lines as prompt/response pairs; emit code pairs");

  // decompress
  auto* de = app.add_subcommand("decompress", "reconstruct text from code sequences");
  std::string d_ckpt, d_in, d_out, d_vocab, d_gold, d_strategy = "greedy";
  uint64_t d_seed = 0;
  de->add_option("--ckpt", d_ckpt, "decompressor checkpoint")->required();
  de->add_option("--in", d_in, "compressed input (JSON lines)")->required();
  de->add_option("--strategy", d_strategy, "greedy | beam:K | sample:T");
  de->add_option("--out", d_out, "output file")->required();
  de->add_option("--vocab", d_vocab, "vocabulary file (default: next to ckpt)");
  de->add_option("--gold", d_gold, "gold corpus; adds per-document teacher-forced CE");
  auto* d_seed_opt = de->add_option("--seed", d_seed, "rng seed (required for sampling)");

  // infer
  auto* in = app.add_subcommand("infer", "answer a task prompt from compressed context");
  std::string i_ckpt, i_z, i_prompt, i_out, i_vocab, i_strategy = "greedy";
  uint64_t i_seed = 0;
  int i_max_len = 0;
  in->add_option("--ckpt", i_ckpt, "decompressor checkpoint")->required();
  in->add_option("--z", i_z, "compressed context file")->required();
  in->add_option("--prompt", i_prompt, "task prefix text")->required();
  in->add_option("--out", i_out, "output file")->required();
  in->add_option("--strategy", i_strategy, "greedy | beam:K | sample:T");
  in->add_option("--vocab", i_vocab, "vocabulary file (default: next to ckpt)");
  in->add_option("--max-len", i_max_len, "generation cap (default 2x input tokens)");
  auto* i_seed_opt = in->add_option("--seed", i_seed, "rng seed (required for sampling)");

  // zgen
  auto* zg = app.add_subcommand("zgen", "generate in code space, then surface the result");
  std::string z_psi, z_theta, z_in, z_out, z_vocab;
  int z_max_len = 0;
  zg->add_option("--ckpt-psi", z_psi, "code-space inferencer checkpoint")->required();
  zg->add_option("--ckpt-theta", z_theta, "decompressor checkpoint")->required();
  zg->add_option("--z-prompt", z_in, "compressed prompt file")->required();
  zg->add_option("--out", z_out, "output file")->required();
  zg->add_option("--vocab", z_vocab, "vocabulary file (default: next to ckpt-psi)");
  zg->add_option("--max-len", z_max_len, "code generation cap");

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions against gold");
  std::string e_task, e_pred, e_gold, e_report;
  ev->add_option("--task", e_task, "reconstruct | continue | summarize | qa")->required();
  ev->add_option("--pred", e_pred, "predictions (JSON lines)")->required();
  ev->add_option("--gold", e_gold, "gold corpus (JSON lines)");
  ev->add_option("--report", e_report, "report file (JSON lines, appended)")->required();

  // consistency
  auto* cs = app.add_subcommand("consistency", "activation-consistency report over a corpus");
  std::string cs_ckpt, cs_corpus, cs_report, cs_vocab;
  double cs_ratio = 4.0;
  int cs_widen = 8;
  cs->add_option("--ckpt", cs_ckpt, "compressor checkpoint")->required();
  cs->add_option("--corpus", cs_corpus, "corpus to compress and analyze")->required();
  cs->add_option("--report", cs_report, "output report JSON")->required();
  cs->add_option("--vocab", cs_vocab, "vocabulary file (default: next to ckpt)");
  cs->add_option("--ratio", cs_ratio, "compression budget");
  cs->add_option("--widen", cs_widen, "context widening in tokens");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_line("usage", e.what());
    return 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(s_seed, s_vocab, s_docs, s_len, s_red, s_out);
    if (tr->parsed()) return cmd_train(t_config, t_corpus, t_out);
    if (co->parsed())
      return cmd_compress(c_ckpt, c_in, c_ratio, c_window, c_stride, c_out, c_vocab, c_pairs);
    if (de->parsed())
      return cmd_decompress(d_ckpt, d_in, d_strategy, d_out, d_vocab, d_gold, d_seed,
                            d_seed_opt->count() > 0);
    if (in->parsed())
      return cmd_infer(i_ckpt, i_z, i_prompt, i_out, i_strategy, i_vocab, i_seed,
                       i_seed_opt->count() > 0, i_max_len);
    if (zg->parsed()) return cmd_zgen(z_psi, z_theta, z_in, z_out, z_vocab, z_max_len);
    if (ev->parsed()) return cmd_eval(e_task, e_pred, e_gold, e_report);
    if (cs->parsed())
      return cmd_consistency(cs_ckpt, cs_corpus, cs_report, cs_vocab, cs_ratio, cs_widen);
    fail_line("usage", "no subcommand given");
    return 2;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrKind::usage: fail_line("usage", e.what()); break;
      case ErrKind::input: fail_line("input", e.what()); break;
      case ErrKind::runtime: fail_line("runtime", e.what()); break;
      case ErrKind::logic: fail_line("internal", e.what()); break;
    }
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    fail_line("runtime", e.what());
    return 4;
  }
}
