#include "logsentinel/pretrainer.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "logsentinel/optim.h"

namespace logsentinel {

namespace {

constexpr size_t kEvalBatch = 32;

int32_t argmax_unpadded(const float* row, int64_t V) {
  int32_t best = -1;
  for (int32_t j = 0; j < V; ++j) {
    if (j == kPadId) continue;
    if (best < 0 || row[j] > row[best]) best = j;
  }
  return best;
}

// Calls fn(row_index, position, logits_row, target) for every non-PAD target
// of every row, running eval-mode forwards over padded chunks.
template <typename Fn>
void for_each_eval_target(const GptModel& model, const std::vector<std::vector<int32_t>>& rows, Fn&& fn) {
  const int64_t V = model.config().vocab_size;
  for (size_t start = 0; start < rows.size(); start += kEvalBatch) {
    const size_t end = std::min(rows.size(), start + kEvalBatch);
    std::vector<std::vector<int32_t>> chunk(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                            rows.begin() + static_cast<std::ptrdiff_t>(end));
    for (const Batch& b : batchify(chunk, chunk.size())) {
      if (b.steps() < 1) continue;
      Tape tape(false);
      Tensor logits = model.forward(tape, b.inputs, b.rows, b.steps(), false);
      const float* lp = logits.ptr();
      for (int64_t r = 0; r < b.rows; ++r) {
        for (int64_t t = 0; t < b.steps(); ++t) {
          const int32_t target = b.targets[r * b.steps() + t];
          if (target == kPadId) continue;
          fn(start + static_cast<size_t>(r), t, lp + (r * b.steps() + t) * V, target);
        }
      }
    }
  }
}

double masked_nll(const float* row, int64_t V, int32_t target) {
  float maxv = -std::numeric_limits<float>::infinity();
  for (int32_t j = 0; j < V; ++j) {
    if (j != kPadId) maxv = std::max(maxv, row[j]);
  }
  double denom = 0.0;
  for (int32_t j = 0; j < V; ++j) {
    if (j != kPadId) denom += std::exp(static_cast<double>(row[j]) - maxv);
  }
  return std::log(denom) - (static_cast<double>(row[target]) - maxv);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0f)) throw UsageError("train: lr must be > 0");
  if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (epochs < 0) throw UsageError("train: epochs must be >= 0");
  if (checkpoint_every < 0) throw UsageError("train: checkpoint_every must be >= 0");
}

std::vector<std::vector<int32_t>> training_rows(const std::vector<KeySequence>& sequences) {
  std::vector<std::vector<int32_t>> rows;
  rows.reserve(sequences.size());
  for (const auto& s : sequences) {
    std::vector<int32_t> row;
    row.reserve(s.keys.size() + 1);
    row.push_back(kBosId);
    row.insert(row.end(), s.keys.begin(), s.keys.end());
    rows.push_back(std::move(row));
  }
  return rows;
}

int64_t Batch::masked_targets() const {
  return static_cast<int64_t>(std::count(targets.begin(), targets.end(), kPadId));
}

int64_t Batch::counted_targets() const { return static_cast<int64_t>(targets.size()) - masked_targets(); }

std::vector<Batch> batchify(const std::vector<std::vector<int32_t>>& rows, size_t batch_size, int32_t pad_id) {
  if (batch_size < 1) throw UsageError("batchify: batch_size must be >= 1");
  std::vector<Batch> batches;
  for (size_t start = 0; start < rows.size(); start += batch_size) {
    const size_t end = std::min(rows.size(), start + batch_size);
    Batch b;
    b.rows = static_cast<int64_t>(end - start);
    for (size_t i = start; i < end; ++i) b.width = std::max<int64_t>(b.width, static_cast<int64_t>(rows[i].size()));
    const int64_t steps = std::max<int64_t>(b.width - 1, 0);
    b.inputs.assign(static_cast<size_t>(b.rows * steps), pad_id);
    b.targets.assign(static_cast<size_t>(b.rows * steps), pad_id);
    for (size_t i = start; i < end; ++i) {
      const auto& row = rows[i];
      const int64_t r = static_cast<int64_t>(i - start);
      for (int64_t t = 0; t + 1 < static_cast<int64_t>(row.size()); ++t) {
        b.inputs[r * steps + t] = row[t];
        b.targets[r * steps + t] = row[t + 1];
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

PretrainResult pretrain(GptModel& model, const Corpus& train, const TrainConfig& config, const PretrainHooks& hooks) {
  config.validate();
  check_vocab(model, train.vocab_size);
  if (train.sequences.empty()) throw DataError("pretrain: training corpus is empty");

  PretrainResult result;
  std::vector<std::vector<int32_t>> rows;
  for (auto& row : training_rows(train.sequences)) {
    if (row.size() < 2) {
      ++result.skipped_sequences;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("pretrain: no training sequence has a next-key target");

  Rng order_rng(config.seed);
  Rng dropout_rng(order_rng.fork_seed());
  AdamState adam;
  const AdamOptions adam_opts{config.lr};
  auto& params = model.parameters();
  const int64_t V = model.config().vocab_size;

  std::vector<size_t> order(rows.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int32_t epoch = 1; epoch <= config.epochs; ++epoch) {
    order_rng.shuffle(order);
    std::vector<std::vector<int32_t>> shuffled;
    shuffled.reserve(rows.size());
    for (size_t i : order) shuffled.push_back(rows[i]);

    double loss_sum = 0.0;
    int64_t tokens = 0, correct = 0;
    for (const Batch& b : batchify(shuffled, config.batch_size)) {
      const int64_t counted = b.counted_targets();
      if (counted == 0) continue;
      Tape tape;
      Tensor logits = model.forward(tape, b.inputs, b.rows, b.steps(), true, &dropout_rng);
      Tensor loss = tape.cross_entropy(logits, b.targets, kPadId);
      const float value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericalError("pretrain: non-finite loss " + format_double(value) + " at epoch " +
                             std::to_string(epoch) + " after " + std::to_string(adam.step) + " updates");
      }
      zero_grads(params);
      tape.backward(loss);
      if (config.grad_clip_norm > 0.0) clip_grad_norm(params, config.grad_clip_norm);
      adam_step(params, adam, adam_opts);

      loss_sum += static_cast<double>(value) * static_cast<double>(counted);
      tokens += counted;
      const float* lp = logits.ptr();
      for (size_t i = 0; i < b.targets.size(); ++i) {
        if (b.targets[i] == kPadId) continue;
        if (argmax_unpadded(lp + static_cast<int64_t>(i) * V, V) == b.targets[i]) ++correct;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = tokens ? loss_sum / static_cast<double>(tokens) : 0.0;
    stats.top1_acc = tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
    if (hooks.heldout && !hooks.heldout->empty()) stats.heldout_loss = evaluate_lm(model, *hooks.heldout).mean_loss;
    result.epochs.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats);
    if (hooks.on_checkpoint && config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      hooks.on_checkpoint(epoch, model);
    }
  }
  return result;
}

LmEval evaluate_lm(const GptModel& model, const std::vector<KeySequence>& sequences) {
  const int64_t V = model.config().vocab_size;
  LmEval ev;
  double total = 0.0;
  int64_t correct = 0;
  for_each_eval_target(model, training_rows(sequences), [&](size_t, int64_t, const float* row, int32_t target) {
    total += masked_nll(row, V, target);
    if (argmax_unpadded(row, V) == target) ++correct;
    ++ev.tokens;
  });
  if (ev.tokens) {
    ev.mean_loss = total / static_cast<double>(ev.tokens);
    ev.top1_acc = static_cast<double>(correct) / static_cast<double>(ev.tokens);
  }
  return ev;
}

std::vector<double> token_nll(const GptModel& model, const std::vector<int32_t>& keys) {
  std::vector<int32_t> row{kBosId};
  row.insert(row.end(), keys.begin(), keys.end());
  std::vector<double> out(keys.size(), 0.0);
  if (keys.empty()) return out;
  const int64_t V = model.config().vocab_size;
  std::vector<float> logits = model.logits(std::span<const int32_t>(row.data(), keys.size()));
  for (size_t t = 0; t < keys.size(); ++t) out[t] = masked_nll(logits.data() + t * V, V, keys[t]);
  return out;
}

std::string format_epoch_line(const EpochStats& stats) {
  return std::to_string(stats.epoch) + "\t" + format_double(stats.mean_loss) + "\t" + format_double(stats.top1_acc);
}

}  // namespace logsentinel
