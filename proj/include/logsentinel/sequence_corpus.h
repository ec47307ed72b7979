#ifndef LOGSENTINEL_SEQUENCE_CORPUS_H_
#define LOGSENTINEL_SEQUENCE_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "logsentinel/common.h"
#include "logsentinel/log_parser.h"

namespace logsentinel {

// Model-space token ids. Reserved ids come first; mined keys are offset past them.
using TokenId = int32_t;
inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kUnseenId = 2;
inline constexpr TokenId kNumReserved = 3;

inline constexpr size_t kDefaultMaxSequenceLength = 512;

enum class Label : uint8_t { kNormal, kAnomalous, kUnlabeled };

// Before build_split the keys are raw parser key ids (kUnseenKey allowed);
// afterwards they are model TokenIds.
struct KeySequence {
  std::vector<int32_t> keys;
  Label label = Label::kUnlabeled;
  std::string provenance;

  bool operator==(const KeySequence&) const = default;
};

class InsufficientNormalError : public DataError {
 public:
  using DataError::DataError;
};

// Maps raw parser key ids observed in training onto dense model ids.
class Vocabulary {
 public:
  Vocabulary() = default;
  // `raw_keys` need not be sorted or unique; kUnseenKey entries are ignored.
  explicit Vocabulary(std::vector<KeyId> raw_keys);

  static Vocabulary from_sequences(const std::vector<KeySequence>& raw);

  // Reserved tokens plus mined keys: the model's output dimension.
  int32_t size() const { return kNumReserved + mined_count(); }
  int32_t mined_count() const { return static_cast<int32_t>(raw_keys_.size()); }

  TokenId encode(KeyId raw) const;  // kUnseenId when absent
  KeyId decode(TokenId id) const;   // kUnseenKey for reserved ids
  const std::vector<KeyId>& raw_keys() const { return raw_keys_; }

  bool operator==(const Vocabulary& other) const { return raw_keys_ == other.raw_keys_; }

 private:
  std::vector<KeyId> raw_keys_;  // sorted ascending; model id = index + kNumReserved
  std::unordered_map<KeyId, TokenId> index_;
};

// A set of encoded sequences sharing one vocabulary size.
struct Corpus {
  int32_t vocab_size = kNumReserved;
  std::vector<KeySequence> sequences;

  bool operator==(const Corpus&) const = default;
};

struct CorpusSplit {
  Vocabulary vocab;
  std::vector<KeySequence> train;  // label == normal only
  std::vector<KeySequence> validation;
  std::vector<KeySequence> test_normal;
  std::vector<KeySequence> test_anomalous;
  std::vector<KeySequence> test_unlabeled;

  Corpus train_corpus() const { return {vocab.size(), train}; }
  Corpus validation_corpus() const { return {vocab.size(), validation}; }
  // Normal, then anomalous, then unlabeled test sequences.
  Corpus test_corpus() const;
};

struct GroupResult {
  std::vector<KeySequence> sequences;
  size_t dropped = 0;
};

struct SessionEvent {
  int64_t line_id = 0;
  KeyId key = 0;
  std::string raw_line;
};

// One sequence per distinct value of the regex's first capture group, in
// order of first appearance; lines without a match are dropped and counted.
GroupResult group_by_session(const std::vector<SessionEvent>& stream, const std::string& session_regex);

// "session,label" CSV with an optional header row. Labels: Normal/Anomaly
// (case-insensitive) or 0/1.
std::map<std::string, Label> parse_session_labels(std::string_view csv);

// Labels each sequence by provenance; sessions absent from `labels` keep their label.
void apply_session_labels(std::vector<KeySequence>& sequences, const std::map<std::string, Label>& labels);

struct TimedEvent {
  int64_t timestamp = 0;  // seconds
  KeyId key = 0;
  bool anomalous = false;
};

// Tumbling (non-overlapping) windows anchored at the earliest timestamp. A
// window is anomalous if any member event is. Empty windows emit nothing.
std::vector<KeySequence> group_by_time_window(std::vector<TimedEvent> stream, int64_t window_seconds);

struct SplitOptions {
  size_t n_train = 5000;
  size_t n_validation = 0;
  uint64_t seed = 0;
  size_t max_length = kDefaultMaxSequenceLength;
};

// Seeded sample of normal sequences for training (and validation); everything
// else goes to test partitions by label. The vocabulary is built from the
// training sample only, and all partitions are encoded with it.
CorpusSplit build_split(const std::vector<KeySequence>& raw, const SplitOptions& options);

// Text format: header "LOGSEQ v1 vocab=<n>", then per sequence
// "<label>\t<provenance>\t<space-separated ids>" with label 0, 1 or '-'
// (unlabeled).
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view text);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

// Sidecar mapping "<model_id>\t<raw_key_id>" for the mined part of a vocabulary.
std::string serialize_vocabulary(const Vocabulary& vocab);
Vocabulary parse_vocabulary(std::string_view text);

}  // namespace logsentinel

#endif  // LOGSENTINEL_SEQUENCE_CORPUS_H_
