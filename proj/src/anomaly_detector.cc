#include "logsentinel/anomaly_detector.h"

#include <algorithm>
#include <cmath>
#include <thread>

namespace logsentinel {

void DetectorConfig::validate() const {
  if (!(top_k_ratio > 0.0 && top_k_ratio <= 1.0)) throw UsageError("detector: top_k_ratio must be in (0, 1]");
}

int64_t derive_k(double top_k_ratio, int32_t mined_count) {
  if (!(top_k_ratio > 0.0 && top_k_ratio <= 1.0)) throw UsageError("top_k_ratio must be in (0, 1]");
  if (mined_count < 1) throw UsageError("no mined keys to rank");
  // The epsilon keeps ratios such as 0.3 * 10 from rounding up to 4.
  const auto k = static_cast<int64_t>(std::ceil(top_k_ratio * mined_count - 1e-9));
  return std::clamp<int64_t>(k, 1, mined_count);
}

SequenceRanks score_ranks(const GptModel& model, const std::vector<int32_t>& keys, bool score_first_key) {
  SequenceRanks out;
  const size_t T = keys.size();
  out.ranks.assign(T, kNotScored);
  out.unseen.assign(T, false);
  for (size_t t = 0; t < T; ++t) out.unseen[t] = keys[t] == kUnseenId;
  const size_t first = score_first_key ? 0 : 1;
  if (T <= first) return out;

  // Row [BOS, k0, ..., k_{T-2}]: position p predicts keys[p].
  std::vector<int32_t> row{kBosId};
  row.insert(row.end(), keys.begin(), keys.end() - 1);
  const std::vector<float> logits = model.logits(row);
  const size_t V = static_cast<size_t>(model.config().vocab_size);
  for (size_t t = first; t < T; ++t) {
    const Distribution dist =
        distribution_from_logits(std::span<const float>(logits.data() + t * V, V));
    out.ranks[t] = candidate_rank(dist, keys[t], kFirstMinedId);
  }
  return out;
}

Verdict verdict_from_ranks(const SequenceRanks& ranks, int64_t k) {
  if (k < 1) throw UsageError("K must be >= 1");
  Verdict v;
  for (size_t t = 0; t < ranks.ranks.size(); ++t) {
    const bool scored = ranks.ranks[t] != kNotScored;
    if (scored) ++v.scored_positions;
    const bool violation = ranks.unseen[t] || (scored && ranks.ranks[t] >= k);
    if (!violation) continue;
    ++v.violation_count;
    if (!v.first_violation) v.first_violation = static_cast<int64_t>(t);
  }
  v.anomalous = v.violation_count > 0;
  return v;
}

namespace {

void check_sequence(const KeySequence& s, int32_t vocab_size) {
  if (s.keys.empty()) throw DataError("detect: sequence '" + s.provenance + "' is empty");
  for (int32_t id : s.keys) {
    if (id < kUnseenId || id >= vocab_size) {
      throw DataError("detect: sequence '" + s.provenance + "' has id " + std::to_string(id) +
                      " outside the vocabulary");
    }
  }
}

template <typename Fn>
void parallel_for(size_t n, size_t jobs, Fn&& fn) {
  jobs = std::max<size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (size_t i = w; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Verdict detect(const GptModel& model, const KeySequence& sequence, const DetectorConfig& config,
               int32_t corpus_vocab_size, bool keep_trace) {
  config.validate();
  check_vocab(model, corpus_vocab_size);
  check_sequence(sequence, corpus_vocab_size);
  const SequenceRanks ranks = score_ranks(model, sequence.keys, config.score_first_key);
  Verdict v = verdict_from_ranks(ranks, derive_k(config.top_k_ratio, corpus_vocab_size - kNumReserved));
  v.provenance = sequence.provenance;
  if (keep_trace) v.ranks = ranks.ranks;
  return v;
}

std::vector<SequenceRanks> score_corpus(const GptModel& model, const Corpus& corpus, bool score_first_key,
                                        size_t jobs) {
  check_vocab(model, corpus.vocab_size);
  for (const auto& s : corpus.sequences) check_sequence(s, corpus.vocab_size);
  std::vector<SequenceRanks> out(corpus.sequences.size());
  parallel_for(out.size(), jobs,
               [&](size_t i) { out[i] = score_ranks(model, corpus.sequences[i].keys, score_first_key); });
  return out;
}

std::vector<Verdict> detect_batch(const GptModel& model, const Corpus& corpus, const DetectorConfig& config,
                                  size_t jobs, bool keep_trace) {
  config.validate();
  const std::vector<SequenceRanks> ranks = score_corpus(model, corpus, config.score_first_key, jobs);
  const int64_t k = derive_k(config.top_k_ratio, corpus.vocab_size - kNumReserved);
  std::vector<Verdict> out;
  out.reserve(ranks.size());
  for (size_t i = 0; i < ranks.size(); ++i) {
    Verdict v = verdict_from_ranks(ranks[i], k);
    v.provenance = corpus.sequences[i].provenance;
    if (keep_trace) v.ranks = ranks[i].ranks;
    out.push_back(std::move(v));
  }
  return out;
}

std::string format_verdict_line(const Verdict& v) {
  return v.provenance + "\t" + (v.anomalous ? "1" : "0") + "\t" +
         (v.first_violation ? std::to_string(*v.first_violation) : std::string("-")) + "\t" +
         std::to_string(v.violation_count);
}

}  // namespace logsentinel
