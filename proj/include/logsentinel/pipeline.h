#ifndef LOGSENTINEL_PIPELINE_H_
#define LOGSENTINEL_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "logsentinel/anomaly_detector.h"
#include "logsentinel/eval_harness.h"
#include "logsentinel/gpt_model.h"
#include "logsentinel/log_parser.h"
#include "logsentinel/ppo_finetuner.h"
#include "logsentinel/pretrainer.h"
#include "logsentinel/sequence_corpus.h"

namespace logsentinel {

namespace fs = std::filesystem;

// Everything a full run needs. Stage seeds are derived from `seed`.
struct PipelineConfig {
  std::string input;   // raw log file
  std::string labels;  // optional "session,label" CSV
  std::string preset = "hdfs";
  DrainOptions drain;
  std::string group = "session";  // "session" or "window"
  int64_t window_seconds = 60;

  size_t n_train = 5000;
  size_t n_validation = 0;
  size_t max_length = kDefaultMaxSequenceLength;

  ModelConfig model;  // vocab_size is filled in from the corpus
  TrainConfig train;
  bool use_rl = true;
  RlConfig rl;
  std::optional<double> rl_top_k_ratio;  // defaults to detector.top_k_ratio
  DetectorConfig detector;

  uint64_t seed = 0;
  size_t jobs = 1;
  std::string out_dir = "logsentinel-out";
  bool trace = false;

  // Copies the master seed into every stage and settles defaults.
  PipelineConfig resolved() const;
  // Resolved config as JSON. Fields that cannot change results (jobs, output
  // locations) are left out so the hash identifies the experiment.
  std::string to_json() const;
  std::string hash() const;
};

// Independent per-stage seed derived from the master seed.
uint64_t stage_seed(uint64_t seed, const std::string& stage);

// ------------------------------------------------------------------- stages

struct KeyEvent {
  int64_t line = 0;
  KeyId key = 0;
  std::string session;  // empty when the format has no session id
  std::optional<int64_t> timestamp;
  std::optional<bool> alert;
};

struct ParseSummary {
  size_t lines = 0;
  size_t skipped = 0;  // blank or content-free lines
  size_t templates = 0;
};

// Writes templates.tbl and keys.tsv into out_dir. Nothing is written when the
// input has no parseable line.
ParseSummary cmd_parse(const fs::path& input, const std::string& preset, const DrainOptions& drain,
                       const fs::path& out_dir);

std::string serialize_key_stream(const std::vector<KeyEvent>& events);
std::vector<KeyEvent> parse_key_stream(std::string_view text);

// Groups a key stream into labeled raw sequences.
struct GroupSummary {
  std::vector<KeySequence> sequences;
  size_t dropped = 0;
};
GroupSummary group_key_stream(const std::vector<KeyEvent>& events, const std::string& group, int64_t window_seconds,
                              const std::string& labels_csv);

struct CorpusSummary {
  size_t sequences = 0;
  size_t dropped = 0;
  size_t train = 0, validation = 0, test = 0;
  int32_t vocab_size = 0;
};

// Writes train.seq, validation.seq, test.seq and vocab.tsv into out_dir.
CorpusSummary cmd_corpus(const fs::path& keys, const std::optional<fs::path>& labels, const std::string& group,
                         int64_t window_seconds, const SplitOptions& split, const fs::path& out_dir);

// Writes model.lgpt and metrics.tsv (plus periodic ckpt-<epoch>.lgpt).
PretrainResult cmd_pretrain(const fs::path& train, const std::optional<fs::path>& heldout, ModelConfig model,
                            uint64_t model_seed, const TrainConfig& config, const fs::path& out_dir,
                            const std::function<void(const std::string&)>& log = {});

// Writes model.lgpt and metrics.tsv.
FinetuneResult cmd_finetune(const fs::path& model, const fs::path& train, const std::optional<fs::path>& validation,
                            const RlConfig& config, const fs::path& out_dir,
                            const std::function<void(const std::string&)>& log = {});

struct DetectSummary {
  size_t sequences = 0;
  size_t flagged = 0;
  size_t vacuous = 0;  // nothing scored and no UNSEEN key
  int64_t k = 0;
};

// Verdict lines to `out`, optional JSON-lines rank trace. A vocabulary
// mismatch fails before anything is written.
DetectSummary cmd_detect(const fs::path& model, const fs::path& corpus, const DetectorConfig& config, size_t jobs,
                         const fs::path& out, const std::optional<fs::path>& trace);

std::vector<Verdict> parse_verdicts(std::string_view text);

MetricsReport cmd_eval(const fs::path& verdicts, const fs::path& corpus, const std::string& config_hash,
                       const fs::path& out);

std::vector<SweepPoint> cmd_sweep_topk(const fs::path& model, const fs::path& corpus, const std::vector<double>& ratios,
                                       bool score_first_key, size_t jobs, const std::string& config_hash,
                                       const fs::path& out);

// ------------------------------------------------------------- full runs

struct StageRecord {
  std::string name;
  bool cached = false;
  fs::path dir;
};

struct RunSummary {
  std::vector<StageRecord> stages;
  MetricsReport report;
  fs::path report_path;
};

// parse -> corpus -> pretrain -> finetune (unless use_rl is off) -> detect ->
// eval under cfg.out_dir. A stage is skipped when its stamp matches the hash
// of its config subset and input artifacts.
RunSummary run_all(const PipelineConfig& config, const std::function<void(const std::string&)>& log = {});

// Training-size sweep and RL ablation over the grouped sequences of a run's
// parse stage (which is run or reused first).
std::vector<SizePoint> run_size_sweep(const PipelineConfig& config, const std::vector<size_t>& sizes,
                                      const fs::path& out, const std::function<void(const std::string&)>& log = {});
Ablation run_rl_ablation(const PipelineConfig& config, const fs::path& out,
                         const std::function<void(const std::string&)>& log = {});

// ------------------------------------------------------------- synthetic logs

// Renders labeled synthetic sequences as a "keyed" log (one line per key,
// session id first) plus a label CSV. Each key id gets its own message shape
// with a numeric parameter, so parsing recovers one template per key.
void write_synthetic_log(const std::vector<KeySequence>& sequences, uint64_t seed, const fs::path& log_path,
                         const fs::path& labels_path);
std::string synthetic_message(KeyId key, Rng& rng);

}  // namespace logsentinel

#endif  // LOGSENTINEL_PIPELINE_H_
