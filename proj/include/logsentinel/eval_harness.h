#ifndef LOGSENTINEL_EVAL_HARNESS_H_
#define LOGSENTINEL_EVAL_HARNESS_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "logsentinel/anomaly_detector.h"
#include "logsentinel/gpt_model.h"
#include "logsentinel/ppo_finetuner.h"
#include "logsentinel/pretrainer.h"
#include "logsentinel/sequence_corpus.h"

namespace logsentinel {

// Anomalous is the positive class.
struct MetricsReport {
  int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  int64_t unlabeled = 0;  // ignored by the counts
  double precision = 0.0, recall = 0.0, f1 = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport metrics_from_counts(int64_t tp, int64_t fp, int64_t tn, int64_t fn);
MetricsReport score(const std::vector<bool>& flags, const std::vector<Label>& labels);
MetricsReport score(const std::vector<Verdict>& verdicts, const Corpus& corpus);

// ------------------------------------------------------------ synthetic data

using WeightedEdges = std::vector<std::pair<int32_t, double>>;

// Weighted transition graph over keys 0..n_keys-1. A walk picks a start node,
// then repeatedly either stops (weight stop[node]) or moves along an edge.
// Walks never stop before min_length unless stuck, and are cut at max_length.
struct Grammar {
  int32_t n_keys = 0;
  WeightedEdges start;
  std::vector<WeightedEdges> next;
  std::vector<double> stop;
  size_t min_length = 1;
  size_t max_length = 32;

  // Throws DataError on bad ids or weights, or when some node cannot reach a
  // stopping node.
  void validate() const;
  std::vector<int32_t> sample(Rng& rng) const;
  // True when `keys` has nonzero probability under sample().
  bool generates(const std::vector<int32_t>& keys) const;
};

// 0 -> 1 -> ... -> n-1, then stop.
Grammar chain_grammar(int32_t n_keys);
// Fixed start, successor given by a random cyclic permutation, and a constant
// stop weight so lengths vary: every key is determined by its predecessor.
Grammar cycle_grammar(int32_t n_keys, double stop_prob, size_t max_length, uint64_t seed);
// Segments "A_i -> (B_i | C_i) -> A_{i+1}" with equal branch weights.
Grammar two_branch_grammar(int32_t segments);

struct GrammarOptions {
  int32_t n_keys = 30;
  int32_t max_branch = 3;
  int32_t max_jump = 4;            // forward edges reach at most this far
  double back_edge_prob = 0.15;    // chance a node gets one backward edge
  double min_branch_weight = 0.2;  // relative floor so rare branches are still learnable
  size_t min_length = 4;
  size_t max_length = 32;
  uint64_t seed = 0;
};

// Forward-mostly random grammar with stochastic branch weights.
Grammar random_grammar(const GrammarOptions& options);

enum class AnomalyKind { kForeignKey, kSwap, kForeignTail };

std::string anomaly_kind_name(AnomalyKind kind);

struct SyntheticSpec {
  Grammar grammar;
  size_t n_normal = 3000;
  size_t n_anomalous = 200;
  std::vector<AnomalyKind> kinds{AnomalyKind::kForeignKey, AnomalyKind::kSwap, AnomalyKind::kForeignTail};
  uint64_t seed = 0;
};

// Raw key sequences with exact labels: normal walks first ("n<i>"), then
// anomalies ("a<i>-<kind>"). Foreign keys use ids >= n_keys.
std::vector<KeySequence> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------- experiments

struct SweepPoint {
  double ratio = 0.0;
  int64_t k = 0;
  MetricsReport report;
  std::vector<bool> flags;
};

// Ranks are computed once; membership is re-checked per ratio.
std::vector<SweepPoint> sweep_top_k(const GptModel& model, const Corpus& corpus, const std::vector<double>& ratios,
                                    bool score_first_key = true, size_t jobs = 1);

std::vector<double> default_ratio_grid();

struct ExperimentConfig {
  SplitOptions split;
  ModelConfig model;  // vocab_size is taken from the split
  uint64_t model_seed = 0;
  TrainConfig train;
  bool use_rl = true;
  RlConfig rl;
  DetectorConfig detector;
  size_t jobs = 1;
};

struct ExperimentResult {
  CorpusSplit split;
  std::string pretrained_fingerprint;
  std::string final_fingerprint;
  PretrainResult pretrain;
  FinetuneResult finetune;
  std::vector<Verdict> verdicts;  // over split.test_corpus()
  MetricsReport report;
};

// split -> pretrain -> optional RL -> detect -> score, all seeded.
ExperimentResult run_experiment(const std::vector<KeySequence>& raw, const ExperimentConfig& config);

struct SizePoint {
  size_t size = 0;
  MetricsReport report;
};

std::vector<SizePoint> sweep_training_size(const std::vector<KeySequence>& raw, const std::vector<size_t>& sizes,
                                           const ExperimentConfig& config);

struct Ablation {
  ExperimentResult without_rl;
  ExperimentResult with_rl;
};

// Both branches share one pretraining run; only the RL stage differs.
Ablation ablate_rl(const std::vector<KeySequence>& raw, const ExperimentConfig& config);

// Header "config_hash\tratio_or_size\tprecision\trecall\tf1" plus one row per point.
std::string format_report(const std::string& config_hash, const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace logsentinel

#endif  // LOGSENTINEL_EVAL_HARNESS_H_
