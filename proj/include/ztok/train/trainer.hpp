#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ztok/data/corpus.hpp"
#include "ztok/data/synth.hpp"
#include "ztok/decompress/losses.hpp"
#include "ztok/model/checkpoint.hpp"
#include "ztok/zspace/zspace.hpp"

namespace ztok::train {

struct InitPaths {
  std::string compressor;    // checkpoint to continue from / freeze
  std::string decompressor;  // checkpoint to continue from
  std::string vocab;         // required by regimes that do not build one
};

struct TrainConfig {
  std::string regime = "autoencode";  // autoencode | zlm | task
  int batch_size = 4;
  long steps = 100;
  double lr = 3e-4;
  double warmup_frac = 0.05;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double lambda = 0.1;  // Eq. 8 weight on L_KL
  double beta = 0.25;   // Eq. 8 weight on L_com
  double p_start = 0.0;
  double p_end = 0.5;
  double tau_start = 1.0;
  double tau_end = 0.5;
  double r_target = 4.0;
  int window = 0;  // sliding compression when > 0
  int stride = 0;
  uint64_t seed = 1;
  long checkpoint_every = 0;  // 0: final only
  double holdout_frac = 0.1;
  int threads = 1;
  model::TransformerConfig model;  // base_size acts as the vocabulary cap
  InitPaths init;

  // Strict parse: unknown keys are rejected.
  static TrainConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  void validate() const;
};

struct RunRecord {
  long step = 0;
  decompress::LossBreakdown loss;
  double eff_ratio = 0.0;
  double wall_ms = 0.0;
};

std::string run_record_json(const RunRecord& r);

struct TrainResult {
  std::optional<data::Vocabulary> vocab;
  std::optional<model::ModelParams<float>> phi;
  std::optional<model::ModelParams<float>> theta;
  std::optional<model::ModelParams<float>> psi;
  std::vector<RunRecord> records;
  std::vector<data::Document> train_docs;
  std::vector<data::Document> holdout_docs;
};

// Dispatches on cfg.regime; corpus_path is a JSON-lines document corpus for
// autoencode/task and a ZPair file for zlm. Writes checkpoints, vocab and
// run log under out_dir. Divergence (non-finite loss) raises a runtime
// error after the last good checkpoint has been kept on disk.
TrainResult train(const TrainConfig& cfg, const std::string& corpus_path,
                  const std::string& out_dir);

// In-memory entry points (used by tests and the acceptance harness).
TrainResult train_autoencode(const TrainConfig& cfg, const std::vector<data::RawDoc>& corpus,
                             const std::string& out_dir);
TrainResult train_zlm(const TrainConfig& cfg, const std::vector<zspace::ZPair>& pairs,
                      const data::Vocabulary& vocab, const std::string& out_dir);
TrainResult train_task(const TrainConfig& cfg, const std::vector<data::RawDoc>& corpus,
                       const std::string& out_dir);

// Corpus-BLEU of greedy free-decoding reconstruction over docs at the given
// call-time budget, plus the mean effective ratio.
struct ReconstructionEval {
  double bleu = 0.0;
  double mean_effective_ratio = 0.0;
  int n_docs = 0;
};
ReconstructionEval evaluate_reconstruction(const model::ModelParams<float>& phi,
                                           const model::ModelParams<float>& theta,
                                           const data::Vocabulary& vocab,
                                           const std::vector<data::Document>& docs,
                                           double r_target, int max_docs = 0);

}  // namespace ztok::train
