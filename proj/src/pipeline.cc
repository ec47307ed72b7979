#include "logsentinel/pipeline.h"

#include <charconv>
#include <set>
#include <sstream>

#include "json.hpp"

namespace logsentinel {

using json = nlohmann::ordered_json;

namespace {

using Log = std::function<void(const std::string&)>;

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

// Shortest decimal form of a float, so 1e-4f prints as 1e-4 in configs.
double float_value(float f) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, f);
  double d = 0.0;
  std::from_chars(buf, res.ptr, d);
  return d;
}

json drain_json(const DrainOptions& d) {
  return {{"depth", d.depth}, {"sim_threshold", d.sim_threshold}, {"max_children", d.max_children}};
}

json model_json(const ModelConfig& m) {
  return {{"n_layers", m.n_layers},
          {"n_heads", m.n_heads},
          {"d_model", m.d_model},
          {"max_len", m.max_len},
          {"dropout", float_value(m.dropout)}};
}

json train_json(const TrainConfig& t) {
  return {{"lr", float_value(t.lr)},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"grad_clip_norm", t.grad_clip_norm},
          {"checkpoint_every", t.checkpoint_every},
          {"seed", t.seed}};
}

json rl_json(const PipelineConfig& c) {
  const RlConfig& r = c.rl;
  json clip = r.clip_epsilon ? json(float_value(*r.clip_epsilon)) : json(nullptr);
  return {{"enabled", c.use_rl},
          {"lr", float_value(r.lr)},
          {"episodes", r.episodes},
          {"prompt_ratio", r.prompt_ratio},
          {"ppo_epochs", r.ppo_epochs},
          {"clip_epsilon", clip},
          {"early_stop_patience", r.early_stop_patience},
          {"top_k_ratio", r.top_k_ratio},
          {"prompts_per_episode", r.prompts_per_episode},
          {"minibatch_size", r.minibatch_size},
          {"seed", r.seed}};
}

json detector_json(const DetectorConfig& d) {
  return {{"top_k_ratio", d.top_k_ratio}, {"score_first_key", d.score_first_key}};
}

json split_json(const PipelineConfig& c) {
  return {{"n_train", c.n_train},
          {"n_validation", c.n_validation},
          {"max_length", c.max_length},
          {"seed", stage_seed(c.seed, "split")}};
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

// Rethrows with context, keeping the error family (and so the exit code).
[[noreturn]] void rethrow_with(const std::string& context) {
  try {
    throw;
  } catch (const UsageError& e) {
    throw UsageError(context + e.what());
  } catch (const IoError& e) {
    throw IoError(context + e.what());
  } catch (const FormatError& e) {
    throw FormatError(context + e.what());
  } catch (const DataError& e) {
    throw DataError(context + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + e.what());
  } catch (const std::exception& e) {
    throw Error(context + e.what());
  }
}

}  // namespace

uint64_t stage_seed(uint64_t seed, const std::string& stage) {
  const std::string h = sha256_hex(std::to_string(seed) + ":" + stage);
  uint64_t v = 0;
  std::from_chars(h.data(), h.data() + 16, v, 16);
  return v;
}

PipelineConfig PipelineConfig::resolved() const {
  PipelineConfig c = *this;
  c.train.seed = stage_seed(seed, "pretrain");
  c.rl.seed = stage_seed(seed, "finetune");
  c.rl.top_k_ratio = rl_top_k_ratio.value_or(detector.top_k_ratio);
  return c;
}

std::string PipelineConfig::to_json() const {
  const PipelineConfig c = resolved();
  json j;
  j["data"] = {{"input", c.input},
               {"labels", c.labels},
               {"preset", c.preset},
               {"drain", drain_json(c.drain)},
               {"group", c.group},
               {"window_seconds", c.window_seconds}};
  j["split"] = split_json(c);
  j["model"] = model_json(c.model);
  j["model"]["init_seed"] = stage_seed(c.seed, "init");
  j["train"] = train_json(c.train);
  j["rl"] = rl_json(c);
  j["detector"] = detector_json(c.detector);
  j["seed"] = c.seed;
  return j.dump(2);
}

std::string PipelineConfig::hash() const { return sha256_hex(to_json()); }

// -------------------------------------------------------------------- parse

std::string serialize_key_stream(const std::vector<KeyEvent>& events) {
  std::string out = "line\tkey\tsession\ttimestamp\tlabel\n";
  for (const auto& e : events) {
    out += std::to_string(e.line) + "\t" + std::to_string(e.key) + "\t" + (e.session.empty() ? "-" : e.session) +
           "\t" + (e.timestamp ? std::to_string(*e.timestamp) : "-") + "\t" +
           (e.alert ? (*e.alert ? "1" : "0") : "-") + "\n";
  }
  return out;
}

std::vector<KeyEvent> parse_key_stream(std::string_view text) {
  std::vector<KeyEvent> out;
  const auto lines = split(text, '\n');
  if (lines.empty() || trim(lines[0]) != "line\tkey\tsession\ttimestamp\tlabel") {
    throw FormatError("key stream: missing header");
  }
  auto to_int = [](const std::string& s, size_t line_no) {
    int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw FormatError("key stream line " + std::to_string(line_no) + ": bad integer '" + s + "'");
    }
    return v;
  };
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    if (f.size() != 5) throw FormatError("key stream line " + std::to_string(i + 1) + ": expected 5 columns");
    KeyEvent e;
    e.line = to_int(f[0], i + 1);
    e.key = static_cast<KeyId>(to_int(f[1], i + 1));
    if (f[2] != "-") e.session = f[2];
    if (f[3] != "-") e.timestamp = to_int(f[3], i + 1);
    if (f[4] == "0" || f[4] == "1") {
      e.alert = f[4] == "1";
    } else if (f[4] != "-") {
      throw FormatError("key stream line " + std::to_string(i + 1) + ": bad label '" + f[4] + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

ParseSummary cmd_parse(const fs::path& input, const std::string& preset, const DrainOptions& drain,
                       const fs::path& out_dir) {
  const LogFormat format = log_format_preset(preset);
  const std::string text = read_file(input);
  std::optional<std::regex> session_re;
  if (!format.session_regex.empty()) session_re.emplace(format.session_regex, std::regex::ECMAScript);

  DrainParser parser(drain);
  std::vector<KeyEvent> events;
  ParseSummary summary;
  int64_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      ++summary.skipped;
      continue;
    }
    ExtractedLine ex;
    KeyEvent e;
    try {
      ex = extract_content(line, format);
      e.key = parser.parse_content(ex.content, format.masks);
    } catch (const EmptyContentError&) {
      ++summary.skipped;
      continue;
    } catch (const FormatError& err) {
      throw FormatError(input.string() + ":" + std::to_string(line_no) + ": " + err.what());
    }
    e.line = line_no;
    if (session_re && std::regex_search(line, m, *session_re) && m[1].matched) e.session = m[1].str();
    e.timestamp = ex.timestamp;
    if (ex.label_field) e.alert = *ex.label_field != "-";
    events.push_back(std::move(e));
  }
  if (events.empty()) throw DataError(input.string() + ": no parseable log lines");
  summary.lines = events.size();
  summary.templates = parser.size();
  const TemplateTable table = parser.freeze();
  save_templates(table, out_dir / "templates.tbl");
  write_file_atomic(out_dir / "keys.tsv", serialize_key_stream(events));
  return summary;
}

// ------------------------------------------------------------------- corpus

GroupSummary group_key_stream(const std::vector<KeyEvent>& events, const std::string& group, int64_t window_seconds,
                              const std::string& labels_csv) {
  GroupSummary out;
  if (group == "session") {
    std::vector<SessionEvent> stream;
    stream.reserve(events.size());
    for (const auto& e : events) stream.push_back({e.line, e.key, e.session});
    GroupResult r = group_by_session(stream, "^(.+)$");
    out.sequences = std::move(r.sequences);
    out.dropped = r.dropped;
    if (!labels_csv.empty()) apply_session_labels(out.sequences, parse_session_labels(labels_csv));
  } else if (group == "window") {
    std::vector<TimedEvent> stream;
    stream.reserve(events.size());
    for (const auto& e : events) {
      if (!e.timestamp) {
        throw DataError("window grouping needs timestamps; line " + std::to_string(e.line) + " has none");
      }
      stream.push_back({*e.timestamp, e.key, e.alert.value_or(false)});
    }
    out.sequences = group_by_time_window(std::move(stream), window_seconds);
  } else {
    throw UsageError("unknown grouping '" + group + "' (expected session or window)");
  }
  return out;
}

CorpusSummary cmd_corpus(const fs::path& keys, const std::optional<fs::path>& labels, const std::string& group,
                         int64_t window_seconds, const SplitOptions& split_opts, const fs::path& out_dir) {
  const std::vector<KeyEvent> events = parse_key_stream(read_file(keys));
  GroupSummary grouped = group_key_stream(events, group, window_seconds, labels ? read_file(*labels) : "");
  const CorpusSplit split = build_split(grouped.sequences, split_opts);
  save_corpus(split.train_corpus(), out_dir / "train.seq");
  save_corpus(split.validation_corpus(), out_dir / "validation.seq");
  save_corpus(split.test_corpus(), out_dir / "test.seq");
  write_file_atomic(out_dir / "vocab.tsv", serialize_vocabulary(split.vocab));
  CorpusSummary s;
  s.sequences = grouped.sequences.size();
  s.dropped = grouped.dropped;
  s.train = split.train.size();
  s.validation = split.validation.size();
  s.test = split.test_normal.size() + split.test_anomalous.size() + split.test_unlabeled.size();
  s.vocab_size = split.vocab.size();
  return s;
}

// ------------------------------------------------------------ train stages

PretrainResult cmd_pretrain(const fs::path& train, const std::optional<fs::path>& heldout, ModelConfig mc,
                            uint64_t model_seed, const TrainConfig& config, const fs::path& out_dir, const Log& log) {
  const Corpus corpus = load_corpus(train);
  std::optional<Corpus> held;
  if (heldout) {
    held = load_corpus(*heldout);
    if (held->vocab_size != corpus.vocab_size) {
      throw VocabMismatchError("held-out corpus vocabulary " + std::to_string(held->vocab_size) +
                               " differs from training vocabulary " + std::to_string(corpus.vocab_size));
    }
  }
  mc.vocab_size = corpus.vocab_size;
  GptModel model(mc, model_seed);
  say(log, "pretrain: " + std::to_string(corpus.sequences.size()) + " sequences, vocab " +
               std::to_string(mc.vocab_size) + ", " + std::to_string(model.num_parameters()) + " parameters");
  std::vector<std::string> lines;
  PretrainHooks hooks;
  if (held && !held->sequences.empty()) hooks.heldout = &held->sequences;
  hooks.on_epoch = [&](const EpochStats& s) {
    lines.push_back(format_epoch_line(s));
    std::string msg = "pretrain epoch " + lines.back();
    if (s.heldout_loss) msg += "\theldout_loss=" + format_double(*s.heldout_loss);
    say(log, msg);
  };
  hooks.on_checkpoint = [&](int32_t epoch, const GptModel& m) {
    save_model(m, out_dir / ("ckpt-" + std::to_string(epoch) + ".lgpt"));
  };
  PretrainResult r = pretrain(model, corpus, config, hooks);
  save_model(model, out_dir / "model.lgpt");
  write_file_atomic(out_dir / "metrics.tsv", join_lines(lines));
  return r;
}

FinetuneResult cmd_finetune(const fs::path& model_path, const fs::path& train, const std::optional<fs::path>& validation,
                            const RlConfig& config, const fs::path& out_dir, const Log& log) {
  GptModel model = load_model(model_path);
  const Corpus corpus = load_corpus(train);
  check_vocab(model, corpus.vocab_size);
  std::optional<Corpus> val;
  if (validation) {
    val = load_corpus(*validation);
    check_vocab(model, val->vocab_size);
  }
  std::vector<std::string> lines;
  FinetuneHooks hooks;
  if (val && !val->sequences.empty()) hooks.validation = &*val;
  hooks.on_episode = [&](const EpisodeStats& s) {
    lines.push_back(format_episode_line(s));
    say(log, "finetune episode " + lines.back());
  };
  FinetuneResult r = finetune(model, corpus, config, hooks);
  say(log, "finetune: best episode " + std::to_string(r.best_episode) + (r.stopped_early ? " (early stop)" : ""));
  save_model(model, out_dir / "model.lgpt");
  write_file_atomic(out_dir / "metrics.tsv", join_lines(lines));
  return r;
}

// ------------------------------------------------------------ detect / eval

DetectSummary cmd_detect(const fs::path& model_path, const fs::path& corpus_path, const DetectorConfig& config,
                         size_t jobs, const fs::path& out, const std::optional<fs::path>& trace) {
  config.validate();
  const GptModel model = load_model(model_path);
  const Corpus corpus = load_corpus(corpus_path);
  check_vocab(model, corpus.vocab_size);
  const std::vector<Verdict> verdicts = detect_batch(model, corpus, config, jobs, trace.has_value());
  DetectSummary s;
  s.sequences = verdicts.size();
  s.k = derive_k(config.top_k_ratio, corpus.vocab_size - kNumReserved);
  std::string text;
  std::string trace_text;
  for (size_t i = 0; i < verdicts.size(); ++i) {
    const Verdict& v = verdicts[i];
    if (v.anomalous) ++s.flagged;
    if (!v.anomalous && v.scored_positions == 0) ++s.vacuous;
    text += format_verdict_line(v) + "\n";
    if (trace) {
      json j = {{"provenance", v.provenance},
                {"k", s.k},
                {"anomalous", v.anomalous},
                {"keys", corpus.sequences[i].keys},
                {"ranks", v.ranks}};
      trace_text += j.dump() + "\n";
    }
  }
  write_file_atomic(out, text);
  if (trace) write_file_atomic(*trace, trace_text);
  return s;
}

std::vector<Verdict> parse_verdicts(std::string_view text) {
  std::vector<Verdict> out;
  size_t line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    const std::string where = "verdicts line " + std::to_string(line_no);
    if (f.size() != 4 || (f[1] != "0" && f[1] != "1")) throw FormatError(where + ": malformed");
    Verdict v;
    v.provenance = f[0];
    v.anomalous = f[1] == "1";
    int64_t n = 0;
    if (f[2] != "-") {
      auto r = std::from_chars(f[2].data(), f[2].data() + f[2].size(), n);
      if (r.ec != std::errc() || r.ptr != f[2].data() + f[2].size()) throw FormatError(where + ": bad position");
      v.first_violation = n;
    }
    auto r = std::from_chars(f[3].data(), f[3].data() + f[3].size(), n);
    if (f[3].empty() || r.ec != std::errc() || r.ptr != f[3].data() + f[3].size()) {
      throw FormatError(where + ": bad violation count");
    }
    v.violation_count = n;
    out.push_back(std::move(v));
  }
  return out;
}

MetricsReport cmd_eval(const fs::path& verdicts_path, const fs::path& corpus_path, const std::string& config_hash,
                       const fs::path& out) {
  const std::vector<Verdict> verdicts = parse_verdicts(read_file(verdicts_path));
  const Corpus corpus = load_corpus(corpus_path);
  if (verdicts.size() != corpus.sequences.size()) {
    throw DataError("eval: " + std::to_string(verdicts.size()) + " verdicts for " +
                    std::to_string(corpus.sequences.size()) + " sequences");
  }
  for (size_t i = 0; i < verdicts.size(); ++i) {
    if (verdicts[i].provenance != corpus.sequences[i].provenance) {
      throw DataError("eval: verdict " + std::to_string(i + 1) + " is for '" + verdicts[i].provenance +
                      "' but the corpus has '" + corpus.sequences[i].provenance + "'");
    }
  }
  const MetricsReport m = score(verdicts, corpus);
  write_file_atomic(out, format_report(config_hash, {{"-", m}}));
  return m;
}

std::vector<SweepPoint> cmd_sweep_topk(const fs::path& model_path, const fs::path& corpus_path,
                                       const std::vector<double>& ratios, bool score_first_key, size_t jobs,
                                       const std::string& config_hash, const fs::path& out) {
  const GptModel model = load_model(model_path);
  const Corpus corpus = load_corpus(corpus_path);
  check_vocab(model, corpus.vocab_size);
  std::vector<SweepPoint> points = sweep_top_k(model, corpus, ratios, score_first_key, jobs);
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const auto& p : points) rows.emplace_back(format_double(p.ratio), p.report);
  write_file_atomic(out, format_report(config_hash, rows));
  return points;
}

// ---------------------------------------------------------------- run-all

namespace {

struct StageRunner {
  const Log& log;
  RunSummary& summary;

  // Runs fn unless the stamp in `dir` matches the key of (config, inputs)
  // and every output exists.
  void run(const std::string& name, const fs::path& dir, const json& config, const std::string& full_hash,
           const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
           const std::function<void()>& fn) {
    json input_hashes = json::object();
    std::string key_material = name + "\n" + config.dump() + "\n";
    for (const auto& in : inputs) {
      const std::string h = sha256_file(in);
      input_hashes[in.filename().string()] = h;
      key_material += h + "\n";
    }
    const std::string key = sha256_hex(key_material);
    const fs::path stamp = dir / "stamp";
    bool cached = fs::exists(stamp);
    if (cached) {
      try {
        cached = std::string(trim(read_file(stamp))) == key;
      } catch (const IoError&) {
        cached = false;
      }
    }
    for (const auto& out : outputs) cached = cached && fs::exists(out);
    summary.stages.push_back({name, cached, dir});
    if (cached) {
      say(log, "[" + name + "] cached (" + dir.string() + ")");
      return;
    }
    say(log, "[" + name + "] running (" + dir.string() + ")");
    fs::create_directories(dir);
    fs::remove(stamp);
    try {
      fn();
    } catch (...) {
      rethrow_with("stage '" + name + "' (" + dir.string() + "): ");
    }
    json meta = {{"stage", name}, {"stage_key", key}, {"config_hash", full_hash}, {"config", config},
                 {"inputs", input_hashes}};
    write_file_atomic(dir / "config.json", meta.dump(2) + "\n");
    write_file_atomic(stamp, key + "\n");
  }
};

struct Layout {
  fs::path root, parse, corpus, pretrain, finetune, detect, eval;
  explicit Layout(const fs::path& r)
      : root(r),
        parse(r / "parse"),
        corpus(r / "corpus"),
        pretrain(r / "pretrain"),
        finetune(r / "finetune"),
        detect(r / "detect"),
        eval(r / "eval") {}
};

void parse_stage(const PipelineConfig& c, const Layout& L, StageRunner& runner, const std::string& full_hash) {
  if (c.input.empty()) throw UsageError("no input log given (--input)");
  json cfg = {{"preset", c.preset}, {"drain", drain_json(c.drain)}};
  runner.run("parse", L.parse, cfg, full_hash, {c.input}, {L.parse / "templates.tbl", L.parse / "keys.tsv"}, [&] {
    const ParseSummary s = cmd_parse(c.input, c.preset, c.drain, L.parse);
    say(runner.log, "parse: " + std::to_string(s.lines) + " lines, " + std::to_string(s.templates) +
                        " templates, " + std::to_string(s.skipped) + " skipped");
  });
}

std::vector<KeySequence> grouped_sequences(const PipelineConfig& c, const Layout& L) {
  const auto events = parse_key_stream(read_file(L.parse / "keys.tsv"));
  return group_key_stream(events, c.group, c.window_seconds, c.labels.empty() ? "" : read_file(c.labels)).sequences;
}

ExperimentConfig experiment_config(const PipelineConfig& c) {
  ExperimentConfig e;
  e.split = {c.n_train, c.n_validation, stage_seed(c.seed, "split"), c.max_length};
  e.model = c.model;
  e.model_seed = stage_seed(c.seed, "init");
  e.train = c.train;
  e.use_rl = c.use_rl;
  e.rl = c.rl;
  e.detector = c.detector;
  e.jobs = c.jobs;
  return e;
}

}  // namespace

RunSummary run_all(const PipelineConfig& raw_config, const Log& log) {
  const PipelineConfig c = raw_config.resolved();
  const std::string full_hash = c.hash();
  const Layout L(c.out_dir);
  fs::create_directories(L.root);
  write_file_atomic(L.root / "config.json", c.to_json() + "\n");

  RunSummary summary;
  StageRunner runner{log, summary};
  parse_stage(c, L, runner, full_hash);

  std::vector<fs::path> corpus_inputs{L.parse / "keys.tsv"};
  if (!c.labels.empty()) corpus_inputs.push_back(c.labels);
  json corpus_cfg = {{"group", c.group}, {"window_seconds", c.window_seconds}, {"split", split_json(c)}};
  const fs::path train = L.corpus / "train.seq", validation = L.corpus / "validation.seq", test = L.corpus / "test.seq";
  runner.run("corpus", L.corpus, corpus_cfg, full_hash, corpus_inputs,
             {train, validation, test, L.corpus / "vocab.tsv"}, [&] {
               std::optional<fs::path> labels;
               if (!c.labels.empty()) labels = c.labels;
               const SplitOptions so{c.n_train, c.n_validation, stage_seed(c.seed, "split"), c.max_length};
               const CorpusSummary s = cmd_corpus(L.parse / "keys.tsv", labels, c.group, c.window_seconds, so, L.corpus);
               say(log, "corpus: " + std::to_string(s.sequences) + " sequences (" + std::to_string(s.dropped) +
                            " lines dropped), train " + std::to_string(s.train) + ", validation " +
                            std::to_string(s.validation) + ", test " + std::to_string(s.test) + ", vocab " +
                            std::to_string(s.vocab_size));
             });

  json pre_cfg = {{"model", model_json(c.model)}, {"train", train_json(c.train)},
                  {"init_seed", stage_seed(c.seed, "init")}};
  runner.run("pretrain", L.pretrain, pre_cfg, full_hash, {train, validation}, {L.pretrain / "model.lgpt"}, [&] {
    cmd_pretrain(train, validation, c.model, stage_seed(c.seed, "init"), c.train, L.pretrain, log);
  });

  fs::path final_model = L.pretrain / "model.lgpt";
  if (c.use_rl) {
    runner.run("finetune", L.finetune, rl_json(c), full_hash, {final_model, train, validation},
               {L.finetune / "model.lgpt"},
               [&] { cmd_finetune(L.pretrain / "model.lgpt", train, validation, c.rl, L.finetune, log); });
    final_model = L.finetune / "model.lgpt";
  }

  const fs::path verdicts = L.detect / "verdicts.tsv";
  std::vector<fs::path> detect_outputs{verdicts};
  if (c.trace) detect_outputs.push_back(L.detect / "trace.jsonl");
  json det_cfg = detector_json(c.detector);
  det_cfg["trace"] = c.trace;
  runner.run("detect", L.detect, det_cfg, full_hash, {final_model, test}, detect_outputs, [&] {
    std::optional<fs::path> trace;
    if (c.trace) trace = L.detect / "trace.jsonl";
    const DetectSummary s = cmd_detect(final_model, test, c.detector, c.jobs, verdicts, trace);
    say(log, "detect: K=" + std::to_string(s.k) + ", " + std::to_string(s.flagged) + "/" +
                 std::to_string(s.sequences) + " flagged, " + std::to_string(s.vacuous) + " normal by vacuity");
  });

  summary.report_path = L.eval / "report.tsv";
  runner.run("eval", L.eval, json{{"config_hash", full_hash}}, full_hash, {verdicts, test}, {summary.report_path},
             [&] {
               const std::vector<Verdict> v = parse_verdicts(read_file(verdicts));
               const Corpus corpus = load_corpus(test);
               if (v.size() != corpus.sequences.size()) throw DataError("eval: verdict count mismatch");
               const MetricsReport m = score(v, corpus);
               write_file_atomic(summary.report_path,
                                 format_report(full_hash, {{format_double(c.detector.top_k_ratio), m}}));
             });
  const std::vector<Verdict> v = parse_verdicts(read_file(verdicts));
  summary.report = score(v, load_corpus(test));
  return summary;
}

std::vector<SizePoint> run_size_sweep(const PipelineConfig& raw_config, const std::vector<size_t>& sizes,
                                      const fs::path& out, const Log& log) {
  if (sizes.empty()) throw UsageError("size sweep needs at least one size");
  const PipelineConfig c = raw_config.resolved();
  const Layout L(c.out_dir);
  RunSummary summary;
  StageRunner runner{log, summary};
  parse_stage(c, L, runner, c.hash());
  const std::vector<KeySequence> raw = grouped_sequences(c, L);
  std::vector<SizePoint> points;
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (size_t size : sizes) {
    say(log, "size sweep: n_train=" + std::to_string(size));
    points.push_back(sweep_training_size(raw, {size}, experiment_config(c)).front());
    rows.emplace_back(std::to_string(size), points.back().report);
  }
  write_file_atomic(out, format_report(c.hash(), rows));
  return points;
}

Ablation run_rl_ablation(const PipelineConfig& raw_config, const fs::path& out, const Log& log) {
  const PipelineConfig c = raw_config.resolved();
  const Layout L(c.out_dir);
  RunSummary summary;
  StageRunner runner{log, summary};
  parse_stage(c, L, runner, c.hash());
  const std::vector<KeySequence> raw = grouped_sequences(c, L);
  Ablation a = ablate_rl(raw, experiment_config(c));
  write_file_atomic(out, format_report(c.hash(), {{"no-rl", a.without_rl.report}, {"rl", a.with_rl.report}}));
  return a;
}

// ---------------------------------------------------------- synthetic logs

namespace {

std::string key_word(KeyId key) {
  std::string w;
  uint32_t v = static_cast<uint32_t>(key);
  do {
    w.insert(w.begin(), static_cast<char>('a' + v % 26));
    v /= 26;
  } while (v > 0);
  return "op" + w;
}

}  // namespace

std::string synthetic_message(KeyId key, Rng& rng) {
  static const char* kVerbs[] = {"started", "finished", "retried", "served", "flushed", "opened", "closed"};
  std::string msg = key_word(key) + " " + kVerbs[static_cast<uint32_t>(key) % 7] + " request " +
                    std::to_string(rng.uniform_int(100000));
  for (int i = 0; i < key % 3; ++i) msg += " ok";
  return msg;
}

void write_synthetic_log(const std::vector<KeySequence>& sequences, uint64_t seed, const fs::path& log_path,
                         const fs::path& labels_path) {
  Rng rng(seed);
  std::string log_text;
  std::string labels = "session,label\n";
  for (const auto& s : sequences) {
    const std::string session = "s-" + s.provenance;
    for (KeyId k : s.keys) log_text += session + " " + synthetic_message(k, rng) + "\n";
    if (s.label != Label::kUnlabeled) {
      labels += session + "," + (s.label == Label::kAnomalous ? "Anomaly" : "Normal") + "\n";
    }
  }
  write_file_atomic(log_path, log_text);
  write_file_atomic(labels_path, labels);
}

}  // namespace logsentinel
