#ifndef LOGSENTINEL_ANOMALY_DETECTOR_H_
#define LOGSENTINEL_ANOMALY_DETECTOR_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "logsentinel/gpt_model.h"
#include "logsentinel/sequence_corpus.h"

namespace logsentinel {

struct DetectorConfig {
  double top_k_ratio = 0.5;
  // Also score the BOS -> first key step.
  bool score_first_key = true;

  void validate() const;
};

// K = ceil(ratio * mined_count), clamped to [1, mined_count].
int64_t derive_k(double top_k_ratio, int32_t mined_count);

// Rank of each observed key among the mined candidates at its position, or
// kNotScored where no prediction was made. UNSEEN keys rank at the pool size,
// outside every Top-K.
inline constexpr int64_t kNotScored = -1;

struct SequenceRanks {
  std::vector<int64_t> ranks;  // one per key
  std::vector<bool> unseen;    // one per key
};

SequenceRanks score_ranks(const GptModel& model, const std::vector<int32_t>& keys, bool score_first_key);

struct Verdict {
  std::string provenance;
  bool anomalous = false;
  std::optional<int64_t> first_violation;  // 0-based index into the keys
  int64_t violation_count = 0;
  int64_t scored_positions = 0;
  std::vector<int64_t> ranks;  // per-key trace, filled on request
};

// A key violates when it is UNSEEN or its rank is >= K.
Verdict verdict_from_ranks(const SequenceRanks& ranks, int64_t k);

Verdict detect(const GptModel& model, const KeySequence& sequence, const DetectorConfig& config,
               int32_t corpus_vocab_size, bool keep_trace = false);

// Same verdicts as sequential detect, in input order, for any job count.
std::vector<Verdict> detect_batch(const GptModel& model, const Corpus& corpus, const DetectorConfig& config,
                                  size_t jobs = 1, bool keep_trace = false);

// Ranks for every sequence of a corpus, computed once so several K values can
// be evaluated without re-running the model.
std::vector<SequenceRanks> score_corpus(const GptModel& model, const Corpus& corpus, bool score_first_key,
                                        size_t jobs = 1);

// "provenance\tflag\tfirst_violation|-\tviolation_count" without newline.
std::string format_verdict_line(const Verdict& verdict);

}  // namespace logsentinel

#endif  // LOGSENTINEL_ANOMALY_DETECTOR_H_
