#include "ztok/decompress/decoder.hpp"

#include <algorithm>
#include <cmath>

namespace ztok::decompress {

DecodeConfig DecodeConfig::parse(const std::string& spec) {
  DecodeConfig cfg;
  if (spec == "greedy") {
    cfg.strategy = Strategy::greedy;
    return cfg;
  }
  auto colon = spec.find(':');
  std::string head = spec.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (head == "beam") {
    cfg.strategy = Strategy::beam;
    ZTOK_CHECK(!arg.empty(), usage, "beam strategy needs a width, e.g. beam:4");
    cfg.beam_width = std::stoi(arg);
    ZTOK_CHECK(cfg.beam_width >= 1, usage, "beam width must be >= 1");
    return cfg;
  }
  if (head == "sample") {
    cfg.strategy = Strategy::sample;
    ZTOK_CHECK(!arg.empty(), usage, "sample strategy needs a temperature, e.g. sample:0.8");
    cfg.temperature = std::stod(arg);
    ZTOK_CHECK(cfg.temperature > 0.0, usage, "sampling temperature must be > 0");
    return cfg;
  }
  throw Error::usage("unknown decoding strategy: " + spec);
}

namespace {

using Engine = model::InferenceEngine<float>;
using RowVec = Eigen::Matrix<float, 1, Eigen::Dynamic>;

// log-softmax over the segment; entries outside get -inf.
std::vector<double> segment_log_probs(const RowVec& logits, int lo, int hi) {
  double mx = logits(0, lo);
  for (int i = lo + 1; i < hi; ++i) mx = std::max(mx, static_cast<double>(logits(0, i)));
  double sum = 0.0;
  for (int i = lo; i < hi; ++i) sum += std::exp(static_cast<double>(logits(0, i)) - mx);
  double lse = mx + std::log(sum);
  std::vector<double> lp(hi - lo);
  for (int i = lo; i < hi; ++i) lp[i - lo] = static_cast<double>(logits(0, i)) - lse;
  return lp;
}

int argmax_local(const std::vector<double>& lp) {
  return static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
}

DecodeResult greedy_rollout(Engine& engine, const RowVec& first_logits, int seg_lo, int seg_hi,
                            int stop_id, const DecodeConfig& cfg) {
  DecodeResult res;
  RowVec logits = first_logits;
  for (int t = 0; t < cfg.max_len; ++t) {
    std::vector<double> lp = segment_log_probs(logits, seg_lo, seg_hi);
    int local = argmax_local(lp);
    int id = seg_lo + local;
    res.logprob += lp[local];
    if (cfg.stop_at_eos && id == stop_id) break;
    res.ids.push_back(id);
    if (t + 1 == cfg.max_len) break;
    auto h = engine.feed_ids(std::vector<int>{id});
    logits = engine.logits(h.row(0));
  }
  return res;
}

DecodeResult sample_rollout(Engine& engine, const RowVec& first_logits, int seg_lo, int seg_hi,
                            int stop_id, const DecodeConfig& cfg) {
  DecodeResult res;
  RngState rng(cfg.seed);
  RowVec logits = first_logits;
  for (int t = 0; t < cfg.max_len; ++t) {
    std::vector<double> lp = segment_log_probs(logits, seg_lo, seg_hi);
    // Temperature applies to the sampling distribution; the reported
    // logprob stays the model's own.
    std::vector<double> probs(lp.size());
    double mx = *std::max_element(lp.begin(), lp.end());
    double sum = 0.0;
    for (size_t i = 0; i < lp.size(); ++i) {
      probs[i] = std::exp((lp[i] - mx) / cfg.temperature);
      sum += probs[i];
    }
    double u = rng.next_uniform() * sum;
    int local = 0;
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u <= acc) {
        local = static_cast<int>(i);
        break;
      }
    }
    int id = seg_lo + local;
    res.logprob += lp[local];
    if (cfg.stop_at_eos && id == stop_id) break;
    res.ids.push_back(id);
    if (t + 1 == cfg.max_len) break;
    auto h = engine.feed_ids(std::vector<int>{id});
    logits = engine.logits(h.row(0));
  }
  return res;
}

DecodeResult beam_rollout(Engine& engine, const RowVec& first_logits, int seg_lo, int seg_hi,
                          int stop_id, const DecodeConfig& cfg) {
  struct Hyp {
    std::vector<int> ids;
    double logprob = 0.0;
    Engine::State state;
    RowVec logits;
    bool done = false;
  };
  // The pure greedy rollout is kept as a protected candidate so beam(W)
  // never scores below greedy and beam(1) coincides with it.
  Engine::State start = engine.save_state();
  DecodeResult greedy = greedy_rollout(engine, first_logits, seg_lo, seg_hi, stop_id, cfg);
  engine.restore_state(start);

  std::vector<Hyp> beam(1);
  beam[0].state = engine.save_state();
  beam[0].logits = first_logits;
  std::vector<Hyp> done;
  for (int t = 0; t < cfg.max_len; ++t) {
    struct Cand {
      size_t hyp;
      int local;
      double total;
    };
    std::vector<Cand> cands;
    for (size_t h = 0; h < beam.size(); ++h) {
      std::vector<double> lp = segment_log_probs(beam[h].logits, seg_lo, seg_hi);
      for (int i = 0; i < seg_hi - seg_lo; ++i)
        cands.push_back({h, i, beam[h].logprob + lp[i]});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.total != b.total) return a.total > b.total;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      return a.local < b.local;
    });
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) >= cfg.beam_width) break;
      Hyp h = beam[c.hyp];
      int id = seg_lo + c.local;
      h.logprob = c.total;
      if (cfg.stop_at_eos && id == stop_id) {
        h.done = true;
        done.push_back(h);
        continue;
      }
      h.ids.push_back(id);
      engine.restore_state(beam[c.hyp].state);
      auto hid = engine.feed_ids(std::vector<int>{id});
      h.logits = engine.logits(hid.row(0));
      h.state = engine.save_state();
      next.push_back(std::move(h));
    }
    beam = std::move(next);
    if (beam.empty()) break;
  }
  for (Hyp& h : beam) done.push_back(h);
  DecodeResult best{greedy.ids, greedy.logprob};
  for (const Hyp& h : done)
    if (h.logprob > best.logprob) best = {h.ids, h.logprob};
  return best;
}

}  // namespace

DecodeResult decode_segment(Engine& engine, std::span<const int> context, int seg_lo, int seg_hi,
                            int stop_id, const DecodeConfig& cfg_in, int* truncated_max) {
  DecodeConfig cfg = cfg_in;
  ZTOK_CHECK(!context.empty(), input, "decode: empty context");
  ZTOK_CHECK(cfg.max_len > 0, input, "decode: max_len must be positive");
  auto hidden = engine.feed_ids(context);
  // Never decode past the model's context window.
  int room = engine.params().cfg.max_seq_len - engine.length();
  ZTOK_CHECK(room > 0, input, "decode: context fills the whole window");
  if (cfg.max_len > room) cfg.max_len = room;
  if (truncated_max) *truncated_max = cfg.max_len;
  RowVec logits = engine.logits(hidden.row(hidden.rows() - 1));
  switch (cfg.strategy) {
    case DecodeConfig::Strategy::greedy:
      return greedy_rollout(engine, logits, seg_lo, seg_hi, stop_id, cfg);
    case DecodeConfig::Strategy::sample:
      return sample_rollout(engine, logits, seg_lo, seg_hi, stop_id, cfg);
    case DecodeConfig::Strategy::beam:
      return beam_rollout(engine, logits, seg_lo, seg_hi, stop_id, cfg);
  }
  throw Error::logic("decode: unreachable strategy");
}

DecodeResult infer(const model::ModelParams<float>& theta, const data::Vocabulary& vocab,
                   std::span<const int> z_ids, std::span<const int> task_prefix,
                   const DecodeConfig& cfg) {
  ZTOK_CHECK(!z_ids.empty(), input, "decode: empty code sequence");
  for (int id : z_ids) vocab.require_z(id);
  for (int id : task_prefix) vocab.require_base(id);
  std::vector<int> context(z_ids.begin(), z_ids.end());
  context.push_back(data::Vocabulary::kBos);
  context.insert(context.end(), task_prefix.begin(), task_prefix.end());
  Engine engine(theta);
  return decode_segment(engine, context, 0, vocab.base_size(), data::Vocabulary::kEos, cfg);
}

DecodeResult reconstruct(const model::ModelParams<float>& theta, const data::Vocabulary& vocab,
                         std::span<const int> z_ids, const DecodeConfig& cfg) {
  return infer(theta, vocab, z_ids, {}, cfg);
}

std::vector<double> score_targets(const model::ModelParams<float>& theta,
                                  const data::Vocabulary& vocab, std::span<const int> context,
                                  std::span<const int> targets) {
  ZTOK_CHECK(!targets.empty(), input, "score: empty target sequence");
  Engine engine(theta);
  std::vector<int> inputs(context.begin(), context.end());
  inputs.push_back(data::Vocabulary::kBos);
  size_t first_target_pos = inputs.size() - 1;
  inputs.insert(inputs.end(), targets.begin(), targets.end() - 1);
  auto hidden = engine.feed_ids(inputs);
  std::vector<double> ces(targets.size());
  const double cap = -std::log(1e-9);
  for (size_t t = 0; t < targets.size(); ++t) {
    vocab.require_base(targets[t]);
    RowVec logits = engine.logits(hidden.row(static_cast<int>(first_target_pos + t)));
    std::vector<double> lp = segment_log_probs(logits, 0, vocab.base_size());
    ces[t] = std::min(-lp[targets[t]], cap);
  }
  return ces;
}

}  // namespace ztok::decompress
