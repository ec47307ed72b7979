#include "logsentinel/eval_harness.h"

#include <algorithm>
#include <cmath>
#include <deque>

namespace logsentinel {

// ------------------------------------------------------------------ metrics

MetricsReport metrics_from_counts(int64_t tp, int64_t fp, int64_t tn, int64_t fn) {
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

MetricsReport score(const std::vector<bool>& flags, const std::vector<Label>& labels) {
  if (flags.size() != labels.size()) {
    throw DataError("score: " + std::to_string(flags.size()) + " predictions for " + std::to_string(labels.size()) +
                    " labels");
  }
  int64_t tp = 0, fp = 0, tn = 0, fn = 0, unlabeled = 0;
  for (size_t i = 0; i < flags.size(); ++i) {
    switch (labels[i]) {
      case Label::kAnomalous: (flags[i] ? tp : fn) += 1; break;
      case Label::kNormal: (flags[i] ? fp : tn) += 1; break;
      case Label::kUnlabeled: ++unlabeled; break;
    }
  }
  MetricsReport m = metrics_from_counts(tp, fp, tn, fn);
  m.unlabeled = unlabeled;
  return m;
}

MetricsReport score(const std::vector<Verdict>& verdicts, const Corpus& corpus) {
  std::vector<bool> flags;
  std::vector<Label> labels;
  for (const auto& v : verdicts) flags.push_back(v.anomalous);
  for (const auto& s : corpus.sequences) labels.push_back(s.label);
  return score(flags, labels);
}

// ------------------------------------------------------------------ grammar

namespace {

double total_weight(const WeightedEdges& edges) {
  double t = 0.0;
  for (const auto& [_, w] : edges) t += w;
  return t;
}

double edge_weight(const WeightedEdges& edges, int32_t to) {
  double w = 0.0;
  for (const auto& [id, weight] : edges) {
    if (id == to) w += weight;
  }
  return w;
}

// Index into `weights` drawn proportionally; weights must have a positive sum.
size_t pick(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = rng.uniform() * total;
  double acc = 0.0;
  size_t last = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

}  // namespace

void Grammar::validate() const {
  if (n_keys < 1) throw DataError("grammar: no keys");
  if (next.size() != static_cast<size_t>(n_keys) || stop.size() != static_cast<size_t>(n_keys)) {
    throw DataError("grammar: next/stop tables must have one entry per key");
  }
  if (min_length < 1 || max_length < min_length) throw DataError("grammar: need 1 <= min_length <= max_length");
  auto check_edges = [&](const WeightedEdges& edges, const std::string& where) {
    for (const auto& [id, w] : edges) {
      if (id < 0 || id >= n_keys) throw DataError("grammar: " + where + " edge to unknown key " + std::to_string(id));
      if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("grammar: " + where + " has a bad weight");
    }
  };
  check_edges(start, "start");
  if (!(total_weight(start) > 0.0)) throw DataError("grammar: no start weight");
  for (int32_t i = 0; i < n_keys; ++i) {
    check_edges(next[i], "key " + std::to_string(i));
    if (!(stop[i] >= 0.0) || !std::isfinite(stop[i])) throw DataError("grammar: bad stop weight");
  }
  // Every key must be able to reach a key where a walk may end.
  std::vector<std::vector<int32_t>> reverse(static_cast<size_t>(n_keys));
  std::vector<bool> ok(static_cast<size_t>(n_keys), false);
  std::deque<int32_t> queue;
  for (int32_t i = 0; i < n_keys; ++i) {
    for (const auto& [to, w] : next[i]) {
      if (w > 0.0) reverse[to].push_back(i);
    }
    if (stop[i] > 0.0 || !(total_weight(next[i]) > 0.0)) {
      ok[i] = true;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const int32_t n = queue.front();
    queue.pop_front();
    for (int32_t from : reverse[n]) {
      if (!ok[from]) {
        ok[from] = true;
        queue.push_back(from);
      }
    }
  }
  for (int32_t i = 0; i < n_keys; ++i) {
    if (!ok[i]) throw DataError("grammar: key " + std::to_string(i) + " cannot reach an end");
  }
}

std::vector<int32_t> Grammar::sample(Rng& rng) const {
  std::vector<double> w;
  for (const auto& [_, weight] : start) w.push_back(weight);
  int32_t node = start[pick(w, rng)].first;
  std::vector<int32_t> out{node};
  while (out.size() < max_length) {
    const WeightedEdges& edges = next[node];
    if (!(total_weight(edges) > 0.0)) break;
    w.clear();
    for (const auto& [_, weight] : edges) w.push_back(weight);
    const double stop_w = out.size() >= min_length ? stop[node] : 0.0;
    w.push_back(stop_w);
    const size_t choice = pick(w, rng);
    if (choice == edges.size()) break;
    node = edges[choice].first;
    out.push_back(node);
  }
  return out;
}

bool Grammar::generates(const std::vector<int32_t>& keys) const {
  if (keys.empty() || keys.size() > max_length) return false;
  for (int32_t k : keys) {
    if (k < 0 || k >= n_keys) return false;
  }
  if (!(edge_weight(start, keys[0]) > 0.0)) return false;
  for (size_t i = 0; i + 1 < keys.size(); ++i) {
    if (!(edge_weight(next[keys[i]], keys[i + 1]) > 0.0)) return false;
  }
  if (keys.size() == max_length) return true;
  const int32_t last = keys.back();
  if (!(total_weight(next[last]) > 0.0)) return true;
  return keys.size() >= min_length && stop[last] > 0.0;
}

Grammar chain_grammar(int32_t n_keys) {
  Grammar g;
  g.n_keys = n_keys;
  g.start = {{0, 1.0}};
  g.next.resize(static_cast<size_t>(n_keys));
  g.stop.assign(static_cast<size_t>(n_keys), 0.0);
  for (int32_t i = 0; i + 1 < n_keys; ++i) g.next[i] = {{i + 1, 1.0}};
  g.stop[n_keys - 1] = 1.0;
  g.min_length = 1;
  g.max_length = static_cast<size_t>(n_keys);
  g.validate();
  return g;
}

Grammar cycle_grammar(int32_t n_keys, double stop_prob, size_t max_length, uint64_t seed) {
  if (!(stop_prob > 0.0 && stop_prob < 1.0)) throw UsageError("cycle_grammar: stop_prob must be in (0, 1)");
  Rng rng(seed);
  std::vector<int32_t> order(static_cast<size_t>(n_keys));
  for (int32_t i = 0; i < n_keys; ++i) order[i] = i;
  rng.shuffle(order);
  Grammar g;
  g.n_keys = n_keys;
  g.start = {{order[0], 1.0}};
  g.next.resize(static_cast<size_t>(n_keys));
  g.stop.assign(static_cast<size_t>(n_keys), stop_prob);
  for (size_t i = 0; i < order.size(); ++i) g.next[order[i]] = {{order[(i + 1) % order.size()], 1.0 - stop_prob}};
  g.min_length = 2;
  g.max_length = max_length;
  g.validate();
  return g;
}

Grammar two_branch_grammar(int32_t segments) {
  if (segments < 1) throw UsageError("two_branch_grammar: need at least one segment");
  Grammar g;
  g.n_keys = 3 * segments + 1;
  g.start = {{0, 1.0}};
  g.next.resize(static_cast<size_t>(g.n_keys));
  g.stop.assign(static_cast<size_t>(g.n_keys), 0.0);
  for (int32_t s = 0; s < segments; ++s) {
    const int32_t a = 3 * s, b = a + 1, c = a + 2, next_a = a + 3;
    g.next[a] = {{b, 0.5}, {c, 0.5}};
    g.next[b] = {{next_a, 1.0}};
    g.next[c] = {{next_a, 1.0}};
  }
  g.stop[g.n_keys - 1] = 1.0;
  g.min_length = static_cast<size_t>(2 * segments + 1);
  g.max_length = g.min_length;
  g.validate();
  return g;
}

Grammar random_grammar(const GrammarOptions& o) {
  if (o.n_keys < 2 || o.max_branch < 1 || o.max_jump < 1) throw UsageError("random_grammar: bad options");
  Rng rng(o.seed);
  Grammar g;
  g.n_keys = o.n_keys;
  g.start = {{0, 1.0}};
  g.next.resize(static_cast<size_t>(o.n_keys));
  g.stop.assign(static_cast<size_t>(o.n_keys), 0.0);
  g.min_length = o.min_length;
  g.max_length = o.max_length;
  for (int32_t i = 0; i < o.n_keys; ++i) {
    std::vector<int32_t> candidates;
    for (int32_t j = i + 1; j <= std::min(i + o.max_jump, o.n_keys - 1); ++j) candidates.push_back(j);
    rng.shuffle(candidates);
    const size_t branches =
        std::min(candidates.size(), static_cast<size_t>(1 + rng.uniform_int(static_cast<uint64_t>(o.max_branch))));
    for (size_t b = 0; b < branches; ++b) g.next[i].push_back({candidates[b], o.min_branch_weight + rng.uniform()});
    if (i > 0 && rng.uniform() < o.back_edge_prob && static_cast<int32_t>(g.next[i].size()) < o.max_branch) {
      const int32_t lo = std::max(0, i - 2 * o.max_jump);
      const auto back = static_cast<int32_t>(lo + static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(i - lo))));
      g.next[i].push_back({back, o.min_branch_weight + 0.5 * rng.uniform()});
    }
    if (i >= o.n_keys - o.n_keys / 4) g.stop[i] = 0.3;
  }
  g.stop[o.n_keys - 1] = 1.0;
  g.validate();
  return g;
}

std::string anomaly_kind_name(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kForeignKey: return "foreign";
    case AnomalyKind::kSwap: return "swap";
    case AnomalyKind::kForeignTail: return "tail";
  }
  return "unknown";
}

namespace {

constexpr int32_t kForeignPool = 10;
constexpr int kSwapAttempts = 1000;

int32_t foreign_key(const Grammar& g, Rng& rng) {
  return g.n_keys + static_cast<int32_t>(rng.uniform_int(kForeignPool));
}

// True when the keys around a swap at i use a start or an edge the grammar
// lacks. A swap that only changes where the walk ends does not count: no
// next-key model can see it.
bool breaks_transition(const Grammar& g, const std::vector<int32_t>& keys, size_t i) {
  if (i == 0 && !(edge_weight(g.start, keys[0]) > 0.0)) return true;
  const size_t lo = i == 0 ? 0 : i - 1;
  const size_t hi = std::min(keys.size() - 1, i + 2);
  for (size_t j = lo; j < hi; ++j) {
    if (!(edge_weight(g.next[keys[j]], keys[j + 1]) > 0.0)) return true;
  }
  return false;
}

std::vector<int32_t> make_anomaly(const Grammar& g, AnomalyKind kind, Rng& rng) {
  switch (kind) {
    case AnomalyKind::kForeignKey: {
      std::vector<int32_t> keys = g.sample(rng);
      keys[rng.uniform_int(keys.size())] = foreign_key(g, rng);
      return keys;
    }
    case AnomalyKind::kSwap: {
      for (int attempt = 0; attempt < kSwapAttempts; ++attempt) {
        std::vector<int32_t> keys = g.sample(rng);
        std::vector<size_t> positions;
        for (size_t i = 0; i + 1 < keys.size(); ++i) {
          if (keys[i] == keys[i + 1]) continue;
          std::swap(keys[i], keys[i + 1]);
          if (breaks_transition(g, keys, i)) positions.push_back(i);
          std::swap(keys[i], keys[i + 1]);
        }
        if (positions.empty()) continue;
        const size_t i = positions[rng.uniform_int(positions.size())];
        std::swap(keys[i], keys[i + 1]);
        return keys;
      }
      throw DataError("synthetic: grammar admits no adjacent swap that breaks a transition");
    }
    case AnomalyKind::kForeignTail: {
      std::vector<int32_t> keys = g.sample(rng);
      const size_t cut = keys.size() >= 2 ? 1 + rng.uniform_int(keys.size() - 1) : 1;
      keys.resize(cut);
      const uint64_t tail = 1 + rng.uniform_int(3);
      for (uint64_t i = 0; i < tail; ++i) keys.push_back(foreign_key(g, rng));
      return keys;
    }
  }
  throw UsageError("synthetic: unknown anomaly kind");
}

}  // namespace

std::vector<KeySequence> generate_synthetic(const SyntheticSpec& spec) {
  spec.grammar.validate();
  if (spec.n_anomalous > 0 && spec.kinds.empty()) throw UsageError("synthetic: no anomaly kinds selected");
  Rng rng(spec.seed);
  std::vector<KeySequence> out;
  out.reserve(spec.n_normal + spec.n_anomalous);
  for (size_t i = 0; i < spec.n_normal; ++i) {
    out.push_back({spec.grammar.sample(rng), Label::kNormal, "n" + std::to_string(i)});
  }
  for (size_t i = 0; i < spec.n_anomalous; ++i) {
    const AnomalyKind kind = spec.kinds[i % spec.kinds.size()];
    out.push_back({make_anomaly(spec.grammar, kind, rng), Label::kAnomalous,
                   "a" + std::to_string(i) + "-" + anomaly_kind_name(kind)});
  }
  return out;
}

// -------------------------------------------------------------- experiments

std::vector<double> default_ratio_grid() {
  std::vector<double> r;
  for (int i = 1; i <= 10; ++i) r.push_back(i / 10.0);
  return r;
}

std::vector<SweepPoint> sweep_top_k(const GptModel& model, const Corpus& corpus, const std::vector<double>& ratios,
                                    bool score_first_key, size_t jobs) {
  const std::vector<SequenceRanks> ranks = score_corpus(model, corpus, score_first_key, jobs);
  std::vector<Label> labels;
  for (const auto& s : corpus.sequences) labels.push_back(s.label);
  std::vector<SweepPoint> out;
  for (double ratio : ratios) {
    SweepPoint p;
    p.ratio = ratio;
    p.k = derive_k(ratio, corpus.vocab_size - kNumReserved);
    for (const auto& r : ranks) p.flags.push_back(verdict_from_ranks(r, p.k).anomalous);
    p.report = score(p.flags, labels);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

struct Pretrained {
  CorpusSplit split;
  GptModel model;
  PretrainResult curve;
};

Pretrained pretrain_stage(const std::vector<KeySequence>& raw, const ExperimentConfig& config) {
  CorpusSplit split = build_split(raw, config.split);
  ModelConfig mc = config.model;
  mc.vocab_size = split.vocab.size();
  GptModel model(mc, config.model_seed);
  PretrainResult curve = pretrain(model, split.train_corpus(), config.train);
  return {std::move(split), std::move(model), std::move(curve)};
}

ExperimentResult finish(const Pretrained& pre, GptModel model, const ExperimentConfig& config, bool use_rl) {
  ExperimentResult r;
  r.split = pre.split;
  r.pretrain = pre.curve;
  r.pretrained_fingerprint = pre.model.fingerprint();
  if (use_rl) {
    const Corpus validation = r.split.validation_corpus();
    FinetuneHooks hooks;
    if (!validation.sequences.empty()) hooks.validation = &validation;
    r.finetune = finetune(model, r.split.train_corpus(), config.rl, hooks);
  }
  r.final_fingerprint = model.fingerprint();
  const Corpus test = r.split.test_corpus();
  r.verdicts = detect_batch(model, test, config.detector, config.jobs);
  r.report = score(r.verdicts, test);
  return r;
}

}  // namespace

ExperimentResult run_experiment(const std::vector<KeySequence>& raw, const ExperimentConfig& config) {
  Pretrained pre = pretrain_stage(raw, config);
  return finish(pre, pre.model.clone(), config, config.use_rl);
}

std::vector<SizePoint> sweep_training_size(const std::vector<KeySequence>& raw, const std::vector<size_t>& sizes,
                                           const ExperimentConfig& config) {
  std::vector<SizePoint> out;
  for (size_t size : sizes) {
    ExperimentConfig c = config;
    c.split.n_train = size;
    out.push_back({size, run_experiment(raw, c).report});
  }
  return out;
}

Ablation ablate_rl(const std::vector<KeySequence>& raw, const ExperimentConfig& config) {
  Pretrained pre = pretrain_stage(raw, config);
  Ablation a{finish(pre, pre.model.clone(), config, false), finish(pre, pre.model.clone(), config, true)};
  return a;
}

std::string format_report(const std::string& config_hash,
                          const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::string out = "config_hash\tratio_or_size\tprecision\trecall\tf1\n";
  for (const auto& [label, m] : rows) {
    out += config_hash + "\t" + label + "\t" + format_double(m.precision) + "\t" + format_double(m.recall) + "\t" +
           format_double(m.f1) + "\n";
  }
  return out;
}

}  // namespace logsentinel
