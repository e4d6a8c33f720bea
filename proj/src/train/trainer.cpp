#include "ztok/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ztok/data/tokenizer.hpp"
#include "ztok/io/files.hpp"
#include "ztok/metrics/metrics.hpp"
#include "ztok/train/autoencode.hpp"
#include "ztok/train/optim.hpp"

namespace ztok::train {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    ZTOK_CHECK(ok, input, "config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  ZTOK_CHECK(!j.is_discarded() && j.is_object(), input, "config: not a JSON object");
  reject_unknown(j,
                 {"regime", "batch_size", "steps", "lr", "warmup_frac", "weight_decay",
                  "clip_norm", "lambda", "beta", "p_start", "p_end", "tau_start", "tau_end",
                  "r_target", "window", "stride", "seed", "checkpoint_every", "holdout_frac",
                  "threads", "model", "init"},
                 "top level");
  TrainConfig c;
  maybe(j, "regime", c.regime);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "steps", c.steps);
  maybe(j, "lr", c.lr);
  maybe(j, "warmup_frac", c.warmup_frac);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "clip_norm", c.clip_norm);
  maybe(j, "lambda", c.lambda);
  maybe(j, "beta", c.beta);
  maybe(j, "p_start", c.p_start);
  maybe(j, "p_end", c.p_end);
  maybe(j, "tau_start", c.tau_start);
  maybe(j, "tau_end", c.tau_end);
  maybe(j, "r_target", c.r_target);
  maybe(j, "window", c.window);
  maybe(j, "stride", c.stride);
  maybe(j, "seed", c.seed);
  maybe(j, "checkpoint_every", c.checkpoint_every);
  maybe(j, "holdout_frac", c.holdout_frac);
  maybe(j, "threads", c.threads);
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m,
                   {"n_layers", "n_heads", "model_dim", "ff_dim", "max_seq_len", "base_size",
                    "z_size", "tie_embeddings", "adapters"},
                   "model");
    maybe(m, "n_layers", c.model.n_layers);
    maybe(m, "n_heads", c.model.n_heads);
    maybe(m, "model_dim", c.model.model_dim);
    maybe(m, "ff_dim", c.model.ff_dim);
    maybe(m, "max_seq_len", c.model.max_seq_len);
    maybe(m, "base_size", c.model.base_size);
    maybe(m, "z_size", c.model.z_size);
    maybe(m, "tie_embeddings", c.model.tie_embeddings);
    if (m.contains("adapters")) {
      const json& a = m.at("adapters");
      reject_unknown(a, {"enabled", "rank", "alpha", "dropout"}, "model.adapters");
      maybe(a, "enabled", c.model.adapters.enabled);
      maybe(a, "rank", c.model.adapters.rank);
      maybe(a, "alpha", c.model.adapters.alpha);
      maybe(a, "dropout", c.model.adapters.dropout);
    }
  }
  if (j.contains("init")) {
    const json& i = j.at("init");
    reject_unknown(i, {"compressor", "decompressor", "vocab"}, "init");
    maybe(i, "compressor", c.init.compressor);
    maybe(i, "decompressor", c.init.decompressor);
    maybe(i, "vocab", c.init.vocab);
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_json_text() const {
  json j{{"regime", regime},
         {"batch_size", batch_size},
         {"steps", steps},
         {"lr", lr},
         {"warmup_frac", warmup_frac},
         {"weight_decay", weight_decay},
         {"clip_norm", clip_norm},
         {"lambda", lambda},
         {"beta", beta},
         {"p_start", p_start},
         {"p_end", p_end},
         {"tau_start", tau_start},
         {"tau_end", tau_end},
         {"r_target", r_target},
         {"window", window},
         {"stride", stride},
         {"seed", seed},
         {"checkpoint_every", checkpoint_every},
         {"holdout_frac", holdout_frac},
         {"threads", threads},
         {"model",
          json{{"n_layers", model.n_layers},
               {"n_heads", model.n_heads},
               {"model_dim", model.model_dim},
               {"ff_dim", model.ff_dim},
               {"max_seq_len", model.max_seq_len},
               {"base_size", model.base_size},
               {"z_size", model.z_size},
               {"tie_embeddings", model.tie_embeddings},
               {"adapters", json{{"enabled", model.adapters.enabled},
                                 {"rank", model.adapters.rank},
                                 {"alpha", model.adapters.alpha},
                                 {"dropout", model.adapters.dropout}}}}},
         {"init", json{{"compressor", init.compressor},
                       {"decompressor", init.decompressor},
                       {"vocab", init.vocab}}}};
  return j.dump(2);
}

void TrainConfig::validate() const {
  ZTOK_CHECK(regime == "autoencode" || regime == "zlm" || regime == "task", input,
             "config: regime must be autoencode, zlm or task");
  ZTOK_CHECK(batch_size > 0 && steps >= 0, input, "config: counts must be positive");
  ZTOK_CHECK(lambda >= 0.0 && beta >= 0.0, input, "config: loss weights must be >= 0");
  ZTOK_CHECK(0.0 <= p_start && p_start <= p_end && p_end <= 1.0, input,
             "config: sampling schedule must satisfy 0 <= p_start <= p_end <= 1");
  ZTOK_CHECK(tau_start >= tau_end && tau_end > 0.0, input,
             "config: temperature schedule must be nonincreasing and positive");
  ZTOK_CHECK(r_target > 1.0, input, "config: r_target must be > 1");
  ZTOK_CHECK(holdout_frac >= 0.0 && holdout_frac < 1.0, input,
             "config: holdout_frac in [0,1)");
  ZTOK_CHECK(threads >= 1, input, "config: threads must be >= 1");
  if (window > 0) ZTOK_CHECK(stride > 0 && stride <= window, input, "config: bad window/stride");
}

std::string run_record_json(const RunRecord& r) {
  json j{{"step", r.step},
         {"l_tr", r.loss.l_tr},
         {"l_kl", r.loss.l_kl},
         {"l_com", r.loss.l_com},
         {"l_overlap", r.loss.l_overlap},
         {"lambda", r.loss.lambda},
         {"beta", r.loss.beta},
         {"total", r.loss.total},
         {"eff_ratio", r.eff_ratio},
         {"wall_ms", r.wall_ms}};
  return j.dump();
}

namespace {

struct Slots {
  std::vector<Array<float>*> arrays;
  std::vector<char> trainable;
};

Slots collect_slots(model::ModelParams<float>& p) {
  Slots s;
  bool adapters = p.cfg.adapters.enabled;
  p.visit([&](const std::string&, Array<float>& a, model::ParamKind kind) {
    s.arrays.push_back(&a);
    s.trainable.push_back(!adapters || kind == model::ParamKind::adapter);
  });
  return s;
}

double grad_sq_norm(const std::vector<Array<float>>& grads) {
  double n = 0.0;
  for (const auto& g : grads)
    for (float v : g.values()) n += static_cast<double>(v) * v;
  return n;
}

// Deterministic ordered map over batch items, optionally threaded. Results
// land in submission order, so reductions are bit-identical for any thread
// count.
template <class Fn>
void parallel_batch(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  int t_use = std::min(threads, n);
  for (int t = 0; t < t_use; ++t)
    pool.emplace_back([&fn, t, t_use, n] {
      for (int i = t; i < n; i += t_use) fn(i);
    });
  for (auto& th : pool) th.join();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  ZTOK_CHECK(!ec, input, "cannot create output directory: " + dir);
}

void write_run_log(const std::string& out_dir, const std::vector<RunRecord>& records) {
  std::ostringstream log;
  for (const auto& r : records) log << run_record_json(r) << "\n";
  io::write_file_atomic(out_dir + "/run_log.jsonl", log.str());
}

struct SplitDocs {
  std::vector<data::Document> train, holdout;
};

SplitDocs split_and_tokenize(const std::vector<data::RawDoc>& corpus, double holdout_frac,
                             const data::Vocabulary& vocab) {
  SplitDocs out;
  size_t n_hold = static_cast<size_t>(holdout_frac * static_cast<double>(corpus.size()));
  size_t n_train = corpus.size() - n_hold;
  for (size_t i = 0; i < corpus.size(); ++i) {
    data::Document d = make_document(corpus[i], vocab);
    ZTOK_CHECK(!d.tokens.empty(), input, "corpus document is empty after tokenization: " + d.id);
    (i < n_train ? out.train : out.holdout).push_back(std::move(d));
  }
  return out;
}

}  // namespace

TrainResult train_autoencode(const TrainConfig& cfg, const std::vector<data::RawDoc>& corpus,
                             const std::string& out_dir) {
  cfg.validate();
  ZTOK_CHECK(!corpus.empty(), input, "training corpus is empty");
  ensure_dir(out_dir);

  std::vector<std::string> texts;
  size_t n_hold = static_cast<size_t>(cfg.holdout_frac * static_cast<double>(corpus.size()));
  for (size_t i = 0; i < corpus.size() - n_hold; ++i) texts.push_back(corpus[i].text);
  data::Vocabulary vocab = data::build_vocabulary(texts, cfg.model.base_size, cfg.model.z_size);

  model::TransformerConfig mc = cfg.model;
  mc.base_size = vocab.base_size();
  mc.validate();

  TrainResult res;
  {
    SplitDocs split = split_and_tokenize(corpus, cfg.holdout_frac, vocab);
    res.train_docs = std::move(split.train);
    res.holdout_docs = std::move(split.holdout);
  }
  ZTOK_CHECK(!res.train_docs.empty(), input, "no training documents after holdout split");
  for (const auto& d : res.train_docs) {
    int n = static_cast<int>(d.tokens.size());
    int k = compress::k_max_for(n, cfg.r_target);
    ZTOK_CHECK(std::max(n + 1 + k, k + 1 + n + 1) <= mc.max_seq_len, input,
               "document " + d.id + " does not fit the context window");
  }

  model::ModelParams<float> phi =
      cfg.init.compressor.empty()
          ? model::init_params<float>(mc, model::Role::compressor, cfg.seed)
          : model::load_checkpoint(cfg.init.compressor, vocab.hash()).params;
  model::ModelParams<float> theta =
      cfg.init.decompressor.empty()
          ? model::init_params<float>(mc, model::Role::decompressor, cfg.seed + 1)
          : model::load_checkpoint(cfg.init.decompressor, vocab.hash()).params;

  Slots phi_slots = collect_slots(phi);
  Slots theta_slots = collect_slots(theta);
  AdamW opt_phi, opt_theta;
  opt_phi.weight_decay = cfg.weight_decay;
  opt_theta.weight_decay = cfg.weight_decay;

  vocab.save(out_dir + "/vocab.txt");
  auto save_all = [&](long step) {
    model::save_checkpoint(out_dir + "/phi.ckpt", phi, {model::Role::compressor, step,
                                                        vocab.hash()});
    model::save_checkpoint(out_dir + "/theta.ckpt", theta, {model::Role::decompressor, step,
                                                            vocab.hash()});
  };

  RngState root(cfg.seed);
  struct DocOut {
    std::vector<Array<float>> gphi, gtheta;
    decompress::LossBreakdown bd;
    double ratio = 0.0;
    bool ok = false;
  };

  for (long step = 0; step < cfg.steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    double tau = linear_at(cfg.tau_start, cfg.tau_end, step, cfg.steps);
    double p = linear_at(cfg.p_start, cfg.p_end, step, cfg.steps);
    double lr = lr_at(cfg.lr, step, cfg.steps, cfg.warmup_frac);

    RngState pick = root.fork(0xBA7C, static_cast<uint64_t>(step));
    std::vector<int> batch(cfg.batch_size);
    for (int& b : batch) b = static_cast<int>(pick.next_below(res.train_docs.size()));

    std::vector<DocOut> outs(cfg.batch_size);
    parallel_batch(cfg.batch_size, cfg.threads, [&](int bi) {
      const data::Document& doc = res.train_docs[static_cast<size_t>(batch[bi])];
      Graph<float> g;
      auto bphi = bind_model(g, phi, true);
      auto btheta = bind_model(g, theta, true);
      AutoencodeOptions<float> opt;
      opt.r_target = cfg.r_target;
      opt.tau = static_cast<float>(tau);
      opt.p = static_cast<float>(p);
      opt.lambda = static_cast<float>(cfg.lambda);
      opt.beta = static_cast<float>(cfg.beta);
      opt.window = cfg.window;
      opt.stride = cfg.stride;
      RngState drng = root.fork(0xD0C0 + static_cast<uint64_t>(step), static_cast<uint64_t>(bi));
      auto ae = build_autoencode_loss<float>(g, bphi, btheta, theta, vocab, doc.tokens, opt, drng);
      g.backward(ae.total);
      DocOut& o = outs[bi];
      for (Var v : bphi.slots) o.gphi.push_back(g.grad(v));
      for (Var v : btheta.slots) o.gtheta.push_back(g.grad(v));
      o.bd = ae.breakdown;
      o.ratio = static_cast<double>(doc.tokens.size()) / static_cast<double>(ae.z_ids.size());
      o.ok = true;
    });

    // Ordered reduction: batch-mean gradients, mean components.
    std::vector<Array<float>> gphi = std::move(outs[0].gphi);
    std::vector<Array<float>> gtheta = std::move(outs[0].gtheta);
    double ltr = outs[0].bd.l_tr, lkl = outs[0].bd.l_kl, lcom = outs[0].bd.l_com,
           lovl = outs[0].bd.l_overlap, ratio = outs[0].ratio;
    for (int bi = 1; bi < cfg.batch_size; ++bi) {
      for (size_t i = 0; i < gphi.size(); ++i)
        gphi[i].mat() += outs[bi].gphi[i].mat();
      for (size_t i = 0; i < gtheta.size(); ++i)
        gtheta[i].mat() += outs[bi].gtheta[i].mat();
      ltr += outs[bi].bd.l_tr;
      lkl += outs[bi].bd.l_kl;
      lcom += outs[bi].bd.l_com;
      lovl += outs[bi].bd.l_overlap;
      ratio += outs[bi].ratio;
    }
    float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
    for (auto& a : gphi) a.mat() *= inv_b;
    for (auto& a : gtheta) a.mat() *= inv_b;
    ltr /= cfg.batch_size;
    lkl /= cfg.batch_size;
    lcom /= cfg.batch_size;
    lovl /= cfg.batch_size;
    ratio /= cfg.batch_size;

    decompress::LossBreakdown bd;
    try {
      bd = decompress::LossBreakdown::combine(ltr, lkl, lcom, cfg.lambda, cfg.beta, lovl);
    } catch (const Error&) {
      write_run_log(out_dir, res.records);
      throw Error::runtime("training diverged (non-finite loss) at step " +
                           std::to_string(step) + "; last checkpoint retained");
    }

    if (cfg.clip_norm > 0.0) {
      double norm = std::sqrt(grad_sq_norm(gphi) + grad_sq_norm(gtheta));
      if (norm > cfg.clip_norm) {
        float s = static_cast<float>(cfg.clip_norm / norm);
        for (auto& a : gphi) a.mat() *= s;
        for (auto& a : gtheta) a.mat() *= s;
      }
    }
    opt_phi.step(phi_slots.arrays, gphi, phi_slots.trainable, lr);
    opt_theta.step(theta_slots.arrays, gtheta, theta_slots.trainable, lr);

    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    res.records.push_back(RunRecord{step, bd, ratio, ms});
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) save_all(step + 1);
  }

  save_all(cfg.steps);
  write_run_log(out_dir, res.records);
  res.vocab.emplace(std::move(vocab));
  res.phi.emplace(std::move(phi));
  res.theta.emplace(std::move(theta));
  return res;
}

TrainResult train_zlm(const TrainConfig& cfg, const std::vector<zspace::ZPair>& pairs,
                      const data::Vocabulary& vocab, const std::string& out_dir) {
  cfg.validate();
  ZTOK_CHECK(!pairs.empty(), input, "z-pair corpus is empty");
  ensure_dir(out_dir);
  model::TransformerConfig mc = cfg.model;
  mc.base_size = vocab.base_size();
  mc.z_size = vocab.z_size();
  mc.validate();
  for (const auto& pr : pairs) {
    int need = static_cast<int>(pr.z_prompt.size() + pr.z_response.size()) + 2;
    ZTOK_CHECK(need <= mc.max_seq_len, input, "z pair does not fit the context window");
  }

  model::ModelParams<float> psi = model::init_params<float>(mc, model::Role::zspace, cfg.seed);
  Slots slots = collect_slots(psi);
  AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  vocab.save(out_dir + "/vocab.txt");
  auto save_psi = [&](long step) {
    model::save_checkpoint(out_dir + "/psi.ckpt", psi, {model::Role::zspace, step, vocab.hash()});
  };

  TrainResult res;
  RngState root(cfg.seed);
  for (long step = 0; step < cfg.steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at(cfg.lr, step, cfg.steps, cfg.warmup_frac);
    RngState pick = root.fork(0xBA7C, static_cast<uint64_t>(step));
    std::vector<int> batch(cfg.batch_size);
    for (int& b : batch) b = static_cast<int>(pick.next_below(pairs.size()));

    struct Out {
      std::vector<Array<float>> g;
      double loss = 0.0;
    };
    std::vector<Out> outs(cfg.batch_size);
    parallel_batch(cfg.batch_size, cfg.threads, [&](int bi) {
      Graph<float> g;
      auto bpsi = bind_model(g, psi, true);
      Var loss = zspace::z_lm_loss(g, bpsi, vocab, pairs[static_cast<size_t>(batch[bi])]);
      g.backward(loss);
      for (Var v : bpsi.slots) outs[bi].g.push_back(g.grad(v));
      outs[bi].loss = static_cast<double>(g.val(loss).values()[0]);
    });
    std::vector<Array<float>> grads = std::move(outs[0].g);
    double loss = outs[0].loss;
    for (int bi = 1; bi < cfg.batch_size; ++bi) {
      for (size_t i = 0; i < grads.size(); ++i) grads[i].mat() += outs[bi].g[i].mat();
      loss += outs[bi].loss;
    }
    float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
    for (auto& a : grads) a.mat() *= inv_b;
    loss /= cfg.batch_size;
    ZTOK_CHECK(std::isfinite(loss), runtime,
               "training diverged (non-finite loss) at step " + std::to_string(step));
    if (cfg.clip_norm > 0.0) {
      double norm = std::sqrt(grad_sq_norm(grads));
      if (norm > cfg.clip_norm) {
        float s = static_cast<float>(cfg.clip_norm / norm);
        for (auto& a : grads) a.mat() *= s;
      }
    }
    opt.step(slots.arrays, grads, slots.trainable, lr);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    decompress::LossBreakdown bd =
        decompress::LossBreakdown::combine(loss, 0.0, 0.0, cfg.lambda, cfg.beta);
    res.records.push_back(RunRecord{step, bd, 0.0, ms});
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) save_psi(step + 1);
  }
  save_psi(cfg.steps);
  write_run_log(out_dir, res.records);
  res.vocab.emplace(vocab);
  res.psi.emplace(std::move(psi));
  return res;
}

TrainResult train_task(const TrainConfig& cfg, const std::vector<data::RawDoc>& corpus,
                       const std::string& out_dir) {
  cfg.validate();
  ZTOK_CHECK(!corpus.empty(), input, "training corpus is empty");
  ZTOK_CHECK(!cfg.init.compressor.empty() && !cfg.init.vocab.empty(), input,
             "task regime needs init.compressor and init.vocab");
  ensure_dir(out_dir);
  data::Vocabulary vocab = data::Vocabulary::load(cfg.init.vocab);
  auto phi_loaded = model::load_checkpoint(cfg.init.compressor, vocab.hash());
  const model::ModelParams<float>& phi = phi_loaded.params;

  model::TransformerConfig mc = cfg.model;
  mc.base_size = vocab.base_size();
  mc.z_size = vocab.z_size();
  mc.validate();
  model::ModelParams<float> theta =
      cfg.init.decompressor.empty()
          ? model::init_params<float>(mc, model::Role::decompressor, cfg.seed + 1)
          : model::load_checkpoint(cfg.init.decompressor, vocab.hash()).params;

  // Prompts are compressed once with the frozen compressor.
  struct TaskItem {
    std::vector<int> z;
    std::vector<int> targets;
  };
  std::vector<TaskItem> items;
  for (const auto& raw : corpus) {
    ZTOK_CHECK(raw.response.has_value(), input,
               "task corpus line missing 'response': " + raw.id);
    TaskItem it;
    std::vector<int> prompt = data::tokenize(raw.text, vocab);
    ZTOK_CHECK(!prompt.empty(), input, "task prompt empty after tokenization: " + raw.id);
    it.z = compress::compress_hard(phi, vocab, prompt, cfg.r_target).z.ids;
    it.targets = data::tokenize(*raw.response, vocab);
    ZTOK_CHECK(!it.targets.empty(), input, "task response empty after tokenization: " + raw.id);
    it.targets.push_back(data::Vocabulary::kEos);
    int need = static_cast<int>(it.z.size() + 1 + it.targets.size());
    ZTOK_CHECK(need <= mc.max_seq_len, input, "task item does not fit the context: " + raw.id);
    items.push_back(std::move(it));
  }

  Slots slots = collect_slots(theta);
  AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  vocab.save(out_dir + "/vocab.txt");
  auto save_theta = [&](long step) {
    model::save_checkpoint(out_dir + "/theta.ckpt", theta,
                           {model::Role::decompressor, step, vocab.hash()});
  };

  TrainResult res;
  RngState root(cfg.seed);
  for (long step = 0; step < cfg.steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at(cfg.lr, step, cfg.steps, cfg.warmup_frac);
    double p = linear_at(cfg.p_start, cfg.p_end, step, cfg.steps);
    RngState pick = root.fork(0xBA7C, static_cast<uint64_t>(step));
    std::vector<int> batch(cfg.batch_size);
    for (int& b : batch) b = static_cast<int>(pick.next_below(items.size()));

    struct Out {
      std::vector<Array<float>> g;
      double loss = 0.0;
    };
    std::vector<Out> outs(cfg.batch_size);
    parallel_batch(cfg.batch_size, cfg.threads, [&](int bi) {
      const TaskItem& it = items[static_cast<size_t>(batch[bi])];
      Graph<float> g;
      auto btheta = bind_model(g, theta, true);
      RngState drng = root.fork(0x7A5C + static_cast<uint64_t>(step), static_cast<uint64_t>(bi));
      auto tf = decompress::teacher_forced_loss<float>(g, btheta, theta, {}, it.z, it.targets,
                                                       static_cast<float>(p), drng, vocab);
      g.backward(tf.loss);
      for (Var v : btheta.slots) outs[bi].g.push_back(g.grad(v));
      outs[bi].loss = static_cast<double>(g.val(tf.loss).values()[0]);
    });
    std::vector<Array<float>> grads = std::move(outs[0].g);
    double loss = outs[0].loss;
    for (int bi = 1; bi < cfg.batch_size; ++bi) {
      for (size_t i = 0; i < grads.size(); ++i) grads[i].mat() += outs[bi].g[i].mat();
      loss += outs[bi].loss;
    }
    float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
    for (auto& a : grads) a.mat() *= inv_b;
    loss /= cfg.batch_size;
    ZTOK_CHECK(std::isfinite(loss), runtime,
               "training diverged (non-finite loss) at step " + std::to_string(step));
    if (cfg.clip_norm > 0.0) {
      double norm = std::sqrt(grad_sq_norm(grads));
      if (norm > cfg.clip_norm) {
        float s = static_cast<float>(cfg.clip_norm / norm);
        for (auto& a : grads) a.mat() *= s;
      }
    }
    opt.step(slots.arrays, grads, slots.trainable, lr);
    double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
    decompress::LossBreakdown bd =
        decompress::LossBreakdown::combine(loss, 0.0, 0.0, cfg.lambda, cfg.beta);
    res.records.push_back(RunRecord{step, bd, 0.0, ms});
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) save_theta(step + 1);
  }
  save_theta(cfg.steps);
  write_run_log(out_dir, res.records);
  res.vocab.emplace(std::move(vocab));
  res.theta.emplace(std::move(theta));
  return res;
}

TrainResult train(const TrainConfig& cfg, const std::string& corpus_path,
                  const std::string& out_dir) {
  if (cfg.regime == "autoencode") return train_autoencode(cfg, data::read_corpus(corpus_path),
                                                          out_dir);
  if (cfg.regime == "task") return train_task(cfg, data::read_corpus(corpus_path), out_dir);
  ZTOK_CHECK(!cfg.init.vocab.empty(), input, "zlm regime needs init.vocab");
  data::Vocabulary vocab = data::Vocabulary::load(cfg.init.vocab);
  return train_zlm(cfg, zspace::read_zpairs(corpus_path), vocab, out_dir);
}

ReconstructionEval evaluate_reconstruction(const model::ModelParams<float>& phi,
                                           const model::ModelParams<float>& theta,
                                           const data::Vocabulary& vocab,
                                           const std::vector<data::Document>& docs,
                                           double r_target, int max_docs) {
  ZTOK_CHECK(!docs.empty(), input, "evaluate_reconstruction: no documents");
  metrics::BleuAccumulator bleu;
  double ratio_sum = 0.0;
  int n = 0;
  for (const auto& doc : docs) {
    if (max_docs > 0 && n >= max_docs) break;
    auto comp = compress::compress_hard(phi, vocab, doc.tokens, r_target);
    decompress::DecodeConfig cfg;
    cfg.max_len = 2 * static_cast<int>(doc.tokens.size());
    auto dec = decompress::reconstruct(theta, vocab, comp.z.ids, cfg);
    if (!dec.ids.empty()) bleu.add(dec.ids, {doc.tokens});
    ratio_sum += comp.effective_ratio;
    ++n;
  }
  ReconstructionEval ev;
  ev.bleu = bleu.score();
  ev.mean_effective_ratio = ratio_sum / n;
  ev.n_docs = n;
  return ev;
}

}  // namespace ztok::train
