#include "logsentinel/ppo_finetuner.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "logsentinel/anomaly_detector.h"

namespace logsentinel {

void RlConfig::validate() const {
  if (!(lr > 0.0f)) throw UsageError("rl: lr must be > 0");
  if (episodes < 0) throw UsageError("rl: episodes must be >= 0");
  if (!(prompt_ratio > 0.0 && prompt_ratio < 1.0)) throw UsageError("rl: prompt_ratio must be in (0, 1)");
  if (ppo_epochs < 1) throw UsageError("rl: ppo_epochs must be >= 1");
  if (clip_epsilon && !(*clip_epsilon > 0.0f && *clip_epsilon < 1.0f)) {
    throw UsageError("rl: clip_epsilon must be in (0, 1)");
  }
  if (early_stop_patience < 1) throw UsageError("rl: early_stop_patience must be >= 1");
  if (!(top_k_ratio > 0.0 && top_k_ratio <= 1.0)) throw UsageError("rl: top_k_ratio must be in (0, 1]");
  if (minibatch_size < 1) throw UsageError("rl: minibatch_size must be >= 1");
}

std::vector<int32_t> Episode::state_row() const {
  std::vector<int32_t> row{kBosId};
  row.insert(row.end(), prompt.begin(), prompt.end());
  for (size_t i = 0; i + 1 < steps.size(); ++i) row.push_back(steps[i].action);
  return row;
}

std::optional<Episode> rollout(const GptModel& model, const std::vector<int32_t>& keys, double prompt_ratio,
                               int64_t k, Rng& rng) {
  const size_t T = keys.size();
  if (T < 2) return std::nullopt;
  const size_t t = std::max<size_t>(1, static_cast<size_t>(std::floor(prompt_ratio * static_cast<double>(T))));
  if (t >= T) return std::nullopt;

  Episode ep;
  ep.prompt.assign(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(t));
  std::vector<int32_t> state{kBosId};
  state.insert(state.end(), ep.prompt.begin(), ep.prompt.end());
  for (size_t j = t; j < T; ++j) {
    const Distribution dist = model.next_key_distribution(state);
    const TopKSample sample = sample_top_k(dist, k, rng, kFirstMinedId);
    StepRecord step;
    step.position = static_cast<int64_t>(j);
    step.action = sample.id;
    step.logp_old = std::log(dist[sample.id]);
    step.reward = in_top_k(dist, keys[j], k, kFirstMinedId) ? 1.0f : -1.0f;
    ep.steps.push_back(step);
    state.push_back(sample.id);
  }
  return ep;
}

namespace {

struct Minibatch {
  int64_t rows = 0;
  int64_t width = 0;
  std::vector<int32_t> inputs;
  std::vector<int64_t> logit_rows;
  std::vector<int32_t> actions;
  std::vector<float> rewards;
  std::vector<float> logp_old;
  std::vector<StepRecord*> records;
};

std::vector<Minibatch> make_minibatches(std::vector<Episode>& episodes, size_t size) {
  std::vector<Minibatch> out;
  for (size_t start = 0; start < episodes.size(); start += size) {
    const size_t end = std::min(episodes.size(), start + size);
    Minibatch mb;
    std::vector<std::vector<int32_t>> rows;
    for (size_t e = start; e < end; ++e) {
      rows.push_back(episodes[e].state_row());
      mb.width = std::max<int64_t>(mb.width, static_cast<int64_t>(rows.back().size()));
    }
    mb.rows = static_cast<int64_t>(rows.size());
    mb.inputs.assign(static_cast<size_t>(mb.rows * mb.width), kPadId);
    for (int64_t r = 0; r < mb.rows; ++r) {
      std::copy(rows[r].begin(), rows[r].end(), mb.inputs.begin() + r * mb.width);
      for (auto& step : episodes[start + static_cast<size_t>(r)].steps) {
        // The state for predicting key j is the row prefix of length j + 1.
        mb.logit_rows.push_back(r * mb.width + step.position);
        mb.actions.push_back(step.action);
        mb.rewards.push_back(step.reward);
        mb.records.push_back(&step);
      }
    }
    if (!mb.actions.empty()) out.push_back(std::move(mb));
  }
  return out;
}

const std::vector<int32_t> kExcludePad{kPadId};

Tensor step_log_probs(Tape& tape, const GptModel& model, const Minibatch& mb) {
  Tensor logits = model.forward(tape, mb.inputs, mb.rows, mb.width, false);
  return tape.gather_log_softmax(logits, mb.logit_rows, mb.actions, kExcludePad);
}

}  // namespace

UpdateStats ppo_update(GptModel& model, std::vector<Episode>& episodes, const RlConfig& config, AdamState& adam) {
  config.validate();
  std::vector<Minibatch> batches = make_minibatches(episodes, config.minibatch_size);
  if (batches.empty()) throw DataError("ppo_update: no steps to learn from");
  int64_t total_steps = 0;
  for (auto& mb : batches) {
    Tape tape(false);
    Tensor lp = step_log_probs(tape, model, mb);
    mb.logp_old.assign(lp.data().begin(), lp.data().end());
    for (size_t i = 0; i < mb.records.size(); ++i) mb.records[i]->logp_old = mb.logp_old[i];
    total_steps += static_cast<int64_t>(mb.actions.size());
  }

  UpdateStats stats;
  auto& params = model.parameters();
  const AdamOptions opts{config.lr};
  for (int32_t pass = 0; pass < config.ppo_epochs; ++pass) {
    zero_grads(params);
    double objective = 0.0;
    bool any = false;
    for (const auto& mb : batches) {
      Tape tape;
      Tensor logp_new = step_log_probs(tape, model, mb);
      Tensor j;
      try {
        j = tape.ppo_surrogate(logp_new, mb.logp_old, mb.rewards, config.clip_epsilon);
      } catch (const NumericalError&) {
        ++stats.skipped_minibatches;
        continue;
      }
      const double weight = static_cast<double>(mb.actions.size()) / static_cast<double>(total_steps);
      objective += weight * j.item();
      // Ascent on J is descent on -J; minibatch means are weighted into one global mean.
      tape.backward(tape.scale(j, static_cast<float>(-weight)));
      any = true;
    }
    if (pass == 0) stats.first_objective = objective;
    stats.last_objective = objective;
    if (any) adam_step(params, adam, opts);
  }
  return stats;
}

double violation_rate(const GptModel& model, const Corpus& corpus, double top_k_ratio) {
  if (corpus.sequences.empty()) return 0.0;
  const int64_t k = derive_k(top_k_ratio, corpus.vocab_size - kNumReserved);
  size_t flagged = 0;
  for (const auto& r : score_corpus(model, corpus, true)) flagged += verdict_from_ranks(r, k).anomalous ? 1 : 0;
  return static_cast<double>(flagged) / static_cast<double>(corpus.sequences.size());
}

FinetuneResult finetune(GptModel& model, const Corpus& train, const RlConfig& config, const FinetuneHooks& hooks) {
  config.validate();
  check_vocab(model, train.vocab_size);
  if (hooks.validation) check_vocab(model, hooks.validation->vocab_size);
  if (train.sequences.empty()) throw DataError("finetune: training corpus is empty");
  const int64_t k = derive_k(config.top_k_ratio, train.vocab_size - kNumReserved);

  Rng rng(config.seed);
  AdamState adam;
  FinetuneResult result;
  GptModel best = model.clone();
  double best_reward = -std::numeric_limits<double>::infinity();
  int32_t stale = 0;

  std::vector<size_t> order(train.sequences.size());
  std::iota(order.begin(), order.end(), size_t{0});
  const size_t per_episode = config.prompts_per_episode == 0 ? order.size()
                                                             : std::min(order.size(), config.prompts_per_episode);
  for (int32_t e = 1; e <= config.episodes; ++e) {
    rng.shuffle(order);
    EpisodeStats stats;
    stats.episode = e;
    std::vector<Episode> episodes;
    double reward_sum = 0.0;
    for (size_t i = 0; i < per_episode; ++i) {
      auto ep = rollout(model, train.sequences[order[i]].keys, config.prompt_ratio, k, rng);
      if (!ep) {
        ++stats.skipped_sequences;
        continue;
      }
      for (const auto& s : ep->steps) reward_sum += s.reward;
      stats.steps += static_cast<int64_t>(ep->steps.size());
      episodes.push_back(std::move(*ep));
    }
    if (stats.steps == 0) throw DataError("finetune: no training sequence is long enough to roll out");
    stats.mean_reward = reward_sum / static_cast<double>(stats.steps);
    if (hooks.validation) stats.violation_rate_on_validation = violation_rate(model, *hooks.validation, config.top_k_ratio);

    if (stats.mean_reward > best_reward) {
      best_reward = stats.mean_reward;
      best.copy_parameters_from(model);
      result.best_episode = e;
      stale = 0;
    } else {
      ++stale;
    }
    result.episodes.push_back(stats);
    if (hooks.on_episode) hooks.on_episode(stats);
    if (stale >= config.early_stop_patience) {
      result.stopped_early = true;
      break;
    }
    // Nothing would score the policy produced after the final episode.
    if (e < config.episodes) ppo_update(model, episodes, config, adam);
  }
  if (result.best_episode > 0) model.copy_parameters_from(best);
  return result;
}

std::string format_episode_line(const EpisodeStats& s) {
  return std::to_string(s.episode) + "\t" + format_double(s.mean_reward) + "\t" +
         (s.violation_rate_on_validation ? format_double(*s.violation_rate_on_validation) : std::string("-"));
}

}  // namespace logsentinel
