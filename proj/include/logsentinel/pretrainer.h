#ifndef LOGSENTINEL_PRETRAINER_H_
#define LOGSENTINEL_PRETRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "logsentinel/gpt_model.h"
#include "logsentinel/sequence_corpus.h"

namespace logsentinel {

struct TrainConfig {
  float lr = 1e-4f;
  size_t batch_size = 16;
  int32_t epochs = 100;
  uint64_t seed = 0;
  double grad_clip_norm = 1.0;  // <= 0 disables clipping
  int32_t checkpoint_every = 0;  // epochs; 0 disables

  void validate() const;
};

// Token rows as fed to the model: BOS followed by the sequence's keys.
std::vector<std::vector<int32_t>> training_rows(const std::vector<KeySequence>& sequences);

// One right-padded batch. Rows are padded to `width`; inputs and targets are
// the padded rows without their last / first column, so both are
// [rows, width - 1]. Targets equal to PAD carry no loss.
struct Batch {
  int64_t rows = 0;
  int64_t width = 0;
  std::vector<int32_t> inputs;
  std::vector<int32_t> targets;

  int64_t steps() const { return width - 1; }
  int64_t masked_targets() const;
  int64_t counted_targets() const;
};

// Consecutive chunks of `batch_size` rows, in the given order.
std::vector<Batch> batchify(const std::vector<std::vector<int32_t>>& rows, size_t batch_size,
                            int32_t pad_id = kPadId);

struct EpochStats {
  int32_t epoch = 0;  // 1-based
  double mean_loss = 0.0;  // token-weighted over the epoch, train mode
  double top1_acc = 0.0;
  std::optional<double> heldout_loss;
};

struct PretrainResult {
  std::vector<EpochStats> epochs;
  size_t skipped_sequences = 0;  // sequences with no next-key target
};

struct PretrainHooks {
  std::function<void(const EpochStats&)> on_epoch;
  // Called every checkpoint_every epochs with the current model.
  std::function<void(int32_t epoch, const GptModel&)> on_checkpoint;
  // Optional held-out sequences whose eval-mode loss is reported per epoch.
  const std::vector<KeySequence>* heldout = nullptr;
};

// Adam on the mean next-key cross-entropy over all non-PAD target tokens.
// Throws NumericalError if a batch loss is not finite.
PretrainResult pretrain(GptModel& model, const Corpus& train, const TrainConfig& config,
                        const PretrainHooks& hooks = {});

struct LmEval {
  double mean_loss = 0.0;  // per token
  double top1_acc = 0.0;
  int64_t tokens = 0;
};

// Eval-mode loss and top-1 accuracy under the PAD-masked next-key distribution.
LmEval evaluate_lm(const GptModel& model, const std::vector<KeySequence>& sequences);

// -log p(keys[t] | BOS, keys[<t]) for each t, eval mode, PAD-masked.
std::vector<double> token_nll(const GptModel& model, const std::vector<int32_t>& keys);

// "epoch\tmean_loss\ttop1_acc" line without trailing newline.
std::string format_epoch_line(const EpochStats& stats);

}  // namespace logsentinel

#endif  // LOGSENTINEL_PRETRAINER_H_
