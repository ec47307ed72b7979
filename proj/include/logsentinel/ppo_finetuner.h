#ifndef LOGSENTINEL_PPO_FINETUNER_H_
#define LOGSENTINEL_PPO_FINETUNER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "logsentinel/gpt_model.h"
#include "logsentinel/optim.h"
#include "logsentinel/sequence_corpus.h"

namespace logsentinel {

struct RlConfig {
  float lr = 1e-6f;
  int32_t episodes = 20;
  double prompt_ratio = 0.5;
  int32_t ppo_epochs = 4;
  std::optional<float> clip_epsilon = 0.2f;  // nullopt: plain ratio * reward
  int32_t early_stop_patience = 3;
  double top_k_ratio = 0.5;
  size_t prompts_per_episode = 0;  // 0: every training sequence
  size_t minibatch_size = 16;
  uint64_t seed = 0;

  void validate() const;
};

struct StepRecord {
  int64_t position = 0;  // index of the predicted key within the sequence
  int32_t action = 0;
  double logp_old = 0.0;  // log pi_old(action | state), PAD-masked softmax
  float reward = 0.0f;    // +1 if the observed key is in the Top-K, else -1
};

struct Episode {
  std::vector<int32_t> prompt;  // observed keys S_1..S_t (no BOS)
  std::vector<StepRecord> steps;

  // BOS, prompt, then all sampled actions except the last: the longest state.
  std::vector<int32_t> state_row() const;
};

// Generates from the prompt with Top-K sampling, rewarding each step by
// whether the observed next key is in the Top-K set at that state. Returns
// nullopt for sequences shorter than two keys.
std::optional<Episode> rollout(const GptModel& model, const std::vector<int32_t>& keys, double prompt_ratio,
                               int64_t k, Rng& rng);

struct UpdateStats {
  double first_objective = 0.0;  // J before any parameter change
  double last_objective = 0.0;
  int64_t skipped_minibatches = 0;  // non-finite ratio
};

// Gradient ascent on J = mean(ratio * reward) over all steps for
// cfg.ppo_epochs passes. logp_old is recomputed with the same kernels the
// update uses, so the ratio is exactly 1 on the first pass.
UpdateStats ppo_update(GptModel& model, std::vector<Episode>& episodes, const RlConfig& config, AdamState& adam);

struct EpisodeStats {
  int32_t episode = 0;  // 1-based
  double mean_reward = 0.0;
  std::optional<double> violation_rate_on_validation;
  int64_t steps = 0;
  int64_t skipped_sequences = 0;
};

struct FinetuneResult {
  std::vector<EpisodeStats> episodes;
  int32_t best_episode = 0;
  bool stopped_early = false;
};

struct FinetuneHooks {
  std::function<void(const EpisodeStats&)> on_episode;
  const Corpus* validation = nullptr;
};

// Runs up to cfg.episodes rollout/update rounds, stopping early when the mean
// reward has not improved for early_stop_patience episodes. On return `model`
// holds the parameters that produced the best mean rollout reward.
FinetuneResult finetune(GptModel& model, const Corpus& train, const RlConfig& config,
                        const FinetuneHooks& hooks = {});

// Fraction of sequences with at least one Top-K violation.
double violation_rate(const GptModel& model, const Corpus& corpus, double top_k_ratio);

// "episode\tmean_reward\tviolation_rate_on_validation|-" without newline.
std::string format_episode_line(const EpisodeStats& stats);

}  // namespace logsentinel

#endif  // LOGSENTINEL_PPO_FINETUNER_H_
