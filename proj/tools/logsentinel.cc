// logsentinel: command-line entry point for the log anomaly pipeline.
//
//   logsentinel parse | corpus | pretrain | finetune | detect | eval | sweep | run-all | synth
//
// Options can also come from a TOML file: logsentinel --config run.toml run-all
// with values under a [run-all] section. Every command writes its resolved
// options in that form next to its outputs.
//
// Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical failure.

#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "logsentinel/pipeline.h"

namespace ls = logsentinel;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

void log_line(const std::string& msg) { std::cerr << "logsentinel: " << msg << "\n"; }

void add_drain_options(CLI::App* app, ls::DrainOptions& d) {
  app->add_option("--drain-depth", d.depth, "Drain tree depth (root and length layer included)");
  app->add_option("--drain-sim", d.sim_threshold, "Drain similarity threshold");
  app->add_option("--drain-max-children", d.max_children, "Drain max children per internal node");
}

void add_split_options(CLI::App* app, size_t& n_train, size_t& n_validation, size_t& max_length) {
  app->add_option("--n-train", n_train, "Normal sequences sampled for training");
  app->add_option("--n-validation", n_validation, "Normal sequences held out for validation");
  app->add_option("--max-length", max_length, "Keep only the first N keys of each sequence");
}

void add_model_options(CLI::App* app, ls::ModelConfig& m) {
  app->add_option("--n-layers", m.n_layers, "Transformer layers");
  app->add_option("--n-heads", m.n_heads, "Attention heads per layer");
  app->add_option("--d-model", m.d_model, "Hidden size (multiple of --n-heads)");
  app->add_option("--max-len", m.max_len, "Positional embedding length");
  app->add_option("--dropout", m.dropout, "Dropout probability during pretraining");
}

void add_train_options(CLI::App* app, ls::TrainConfig& t) {
  app->add_option("--lr", t.lr, "Pretraining learning rate (Adam)");
  app->add_option("--batch-size", t.batch_size, "Pretraining batch size");
  app->add_option("--epochs", t.epochs, "Pretraining epochs");
  app->add_option("--grad-clip", t.grad_clip_norm, "Global gradient-norm clip (<= 0 disables)");
  app->add_option("--checkpoint-every", t.checkpoint_every, "Save a checkpoint every N epochs (0 disables)");
}

struct RlFlags {
  float clip = 0.2f;
  bool no_clip = false;
  double rl_top_k_ratio = 0.0;

  void apply(ls::RlConfig& rl) const {
    rl.clip_epsilon = no_clip ? std::nullopt : std::optional<float>(clip);
  }
};

void add_rl_options(CLI::App* app, ls::RlConfig& r, RlFlags& flags) {
  app->add_option("--rl-lr", r.lr, "Fine-tuning learning rate (Adam)");
  app->add_option("--rl-episodes", r.episodes, "Maximum fine-tuning episodes");
  app->add_option("--prompt-ratio", r.prompt_ratio, "Fraction of each sequence given as prompt");
  app->add_option("--ppo-epochs", r.ppo_epochs, "Update passes per episode");
  app->add_option("--clip-epsilon", flags.clip, "PPO clip range");
  app->add_flag("--no-clip", flags.no_clip, "Use the plain ratio * reward objective");
  app->add_option("--patience", r.early_stop_patience, "Episodes without reward improvement before stopping");
  app->add_option("--prompts-per-episode", r.prompts_per_episode, "Prompts rolled out per episode (0 = all)");
  app->add_option("--rl-minibatch", r.minibatch_size, "Episodes per forward pass in the update");
  app->add_option("--rl-top-k-ratio", flags.rl_top_k_ratio,
                  "Top-K ratio for rewards and sampling (0 = same as --top-k-ratio)");
}

void add_detector_options(CLI::App* app, ls::DetectorConfig& d, bool& no_first_key) {
  app->add_option("--top-k-ratio", d.top_k_ratio, "K as a fraction of mined training keys");
  app->add_flag("--no-score-first-key", no_first_key, "Do not score the first key against BOS");
}

void add_seed_option(CLI::App* app, uint64_t& seed) {
  app->add_option("--seed", seed, "Master seed")->envname("LOGSENTINEL_SEED");
}

// "[sweep.topk]"-style section so the file can be passed back via --config.
std::string section_of(const CLI::App* app) {
  std::string name;
  for (const CLI::App* a = app; a->get_parent() != nullptr; a = a->get_parent()) {
    name = name.empty() ? a->get_name() : a->get_name() + "." + name;
  }
  return name;
}

std::string resolved_text(const CLI::App* app) {
  return "[" + section_of(app) + "]\n" + app->config_to_str(true, false);
}

// Writes the subcommand's resolved options and their hash next to an artifact.
std::string write_resolved(const CLI::App* app, const fs::path& where) {
  const std::string text = resolved_text(app);
  const std::string hash = ls::sha256_hex(text);
  ls::write_file_atomic(where, "# config_hash = " + hash + "\n" + text);
  return hash;
}

fs::path sidecar(const fs::path& artifact) { return fs::path(artifact.string() + ".config.toml"); }

struct PipelineFlags {
  ls::PipelineConfig cfg;
  RlFlags rl;
  bool no_rl = false;
  bool no_first_key = false;

  void add(CLI::App* app) {
    app->add_option("--input", cfg.input, "Raw log file");
    app->add_option("--labels", cfg.labels, "Session label CSV (session,label)");
    app->add_option("--preset", cfg.preset, "Log format preset");
    add_drain_options(app, cfg.drain);
    app->add_option("--group", cfg.group, "Sequence grouping: session or window")
        ->check(CLI::IsMember({"session", "window"}));
    app->add_option("--window-seconds", cfg.window_seconds, "Window length for --group window");
    add_split_options(app, cfg.n_train, cfg.n_validation, cfg.max_length);
    add_model_options(app, cfg.model);
    add_train_options(app, cfg.train);
    app->add_flag("--no-rl", no_rl, "Skip reinforcement-learning fine-tuning");
    add_rl_options(app, cfg.rl, rl);
    add_detector_options(app, cfg.detector, no_first_key);
    add_seed_option(app, cfg.seed);
    app->add_option("--jobs", cfg.jobs, "Worker threads for detection")->check(CLI::PositiveNumber);
    app->add_option("--out", cfg.out_dir, "Output directory");
    app->add_flag("--trace", cfg.trace, "Also write a JSON-lines rank trace");
  }

  ls::PipelineConfig resolved() const {
    ls::PipelineConfig c = cfg;
    c.use_rl = !no_rl;
    rl.apply(c.rl);
    if (rl.rl_top_k_ratio > 0.0) c.rl_top_k_ratio = rl.rl_top_k_ratio;
    c.detector.score_first_key = !no_first_key;
    return c;
  }
};

std::string fmt(double v) { return ls::format_double(v); }

void print_report(const ls::MetricsReport& m) {
  std::cout << "tp=" << m.tp << " fp=" << m.fp << " tn=" << m.tn << " fn=" << m.fn << " precision=" << fmt(m.precision)
            << " recall=" << fmt(m.recall) << " f1=" << fmt(m.f1);
  if (m.unlabeled) std::cout << " unlabeled=" << m.unlabeled;
  std::cout << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"logsentinel: log anomaly detection with a generative key model"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "logsentinel 1.0");
  app.set_config("--config", "", "TOML file with one [subcommand] section of option values");
  std::function<void()> action;

  // parse
  auto* parse = app.add_subcommand("parse", "Mine templates from a raw log and emit the key stream");
  std::string parse_input, parse_preset = "hdfs", parse_out;
  ls::DrainOptions parse_drain;
  parse->add_option("--input", parse_input, "Raw log file")->required();
  parse->add_option("--preset", parse_preset, "Log format preset");
  add_drain_options(parse, parse_drain);
  parse->add_option("--out", parse_out, "Output directory")->required();
  parse->callback([&] {
    action = [&] {
      const ls::ParseSummary s = ls::cmd_parse(parse_input, parse_preset, parse_drain, parse_out);
      write_resolved(parse, fs::path(parse_out) / "config.toml");
      std::cout << "lines=" << s.lines << " skipped=" << s.skipped << " templates=" << s.templates << "\n";
    };
  });

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Group a key stream into sequences and split train/test");
  std::string corpus_keys, corpus_labels, corpus_group = "session", corpus_out;
  int64_t corpus_window = 60;
  ls::SplitOptions corpus_split;
  corpus->add_option("--keys", corpus_keys, "keys.tsv from parse")->required();
  corpus->add_option("--labels", corpus_labels, "Session label CSV (session,label)");
  corpus->add_option("--group", corpus_group, "Sequence grouping: session or window")
      ->check(CLI::IsMember({"session", "window"}));
  corpus->add_option("--window-seconds", corpus_window, "Window length for --group window");
  add_split_options(corpus, corpus_split.n_train, corpus_split.n_validation, corpus_split.max_length);
  add_seed_option(corpus, corpus_split.seed);
  corpus->add_option("--out", corpus_out, "Output directory")->required();
  corpus->callback([&] {
    action = [&] {
      std::optional<fs::path> labels;
      if (!corpus_labels.empty()) labels = corpus_labels;
      ls::SplitOptions so = corpus_split;
      so.seed = ls::stage_seed(corpus_split.seed, "split");
      const ls::CorpusSummary s = ls::cmd_corpus(corpus_keys, labels, corpus_group, corpus_window, so, corpus_out);
      write_resolved(corpus, fs::path(corpus_out) / "config.toml");
      std::cout << "sequences=" << s.sequences << " dropped_lines=" << s.dropped << " train=" << s.train
                << " validation=" << s.validation << " test=" << s.test << " vocab=" << s.vocab_size << "\n";
    };
  });

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Train the key language model on normal sequences");
  std::string pre_train, pre_heldout, pre_out;
  ls::ModelConfig pre_model;
  ls::TrainConfig pre_cfg;
  uint64_t pre_seed = 0;
  pretrain->add_option("--train", pre_train, "Training corpus (train.seq)")->required();
  pretrain->add_option("--heldout", pre_heldout, "Optional corpus whose loss is reported per epoch")
      ;
  add_model_options(pretrain, pre_model);
  add_train_options(pretrain, pre_cfg);
  add_seed_option(pretrain, pre_seed);
  pretrain->add_option("--out", pre_out, "Output directory")->required();
  pretrain->callback([&] {
    action = [&] {
      std::optional<fs::path> heldout;
      if (!pre_heldout.empty()) heldout = pre_heldout;
      ls::TrainConfig tc = pre_cfg;
      tc.seed = ls::stage_seed(pre_seed, "pretrain");
      const ls::PretrainResult r =
          ls::cmd_pretrain(pre_train, heldout, pre_model, ls::stage_seed(pre_seed, "init"), tc, pre_out, log_line);
      write_resolved(pretrain, fs::path(pre_out) / "config.toml");
      if (!r.epochs.empty()) std::cout << "final " << ls::format_epoch_line(r.epochs.back()) << "\n";
    };
  });

  // finetune
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a pretrained model with the Top-K reward");
  std::string ft_model, ft_train, ft_validation, ft_out;
  ls::RlConfig ft_cfg;
  RlFlags ft_flags;
  double ft_ratio = 0.5;
  uint64_t ft_seed = 0;
  finetune->add_option("--model", ft_model, "Pretrained checkpoint")->required();
  finetune->add_option("--train", ft_train, "Training corpus (train.seq)")->required();
  finetune->add_option("--validation", ft_validation, "Corpus for the per-episode violation rate")
      ;
  add_rl_options(finetune, ft_cfg, ft_flags);
  finetune->add_option("--top-k-ratio", ft_ratio, "Detector K ratio, used when --rl-top-k-ratio is 0");
  add_seed_option(finetune, ft_seed);
  finetune->add_option("--out", ft_out, "Output directory")->required();
  finetune->callback([&] {
    action = [&] {
      ls::RlConfig rc = ft_cfg;
      ft_flags.apply(rc);
      rc.top_k_ratio = ft_flags.rl_top_k_ratio > 0.0 ? ft_flags.rl_top_k_ratio : ft_ratio;
      rc.seed = ls::stage_seed(ft_seed, "finetune");
      std::optional<fs::path> validation;
      if (!ft_validation.empty()) validation = ft_validation;
      const ls::FinetuneResult r = ls::cmd_finetune(ft_model, ft_train, validation, rc, ft_out, log_line);
      write_resolved(finetune, fs::path(ft_out) / "config.toml");
      std::cout << "episodes=" << r.episodes.size() << " best_episode=" << r.best_episode
                << " stopped_early=" << (r.stopped_early ? 1 : 0) << "\n";
    };
  });

  // detect
  auto* detect = app.add_subcommand("detect", "Flag sequences with a Top-K violation");
  std::string det_model, det_corpus, det_out, det_trace;
  ls::DetectorConfig det_cfg;
  bool det_no_first = false;
  size_t det_jobs = 1;
  detect->add_option("--model", det_model, "Model checkpoint")->required();
  detect->add_option("--corpus", det_corpus, "Corpus to score")->required();
  add_detector_options(detect, det_cfg, det_no_first);
  detect->add_option("--jobs", det_jobs, "Worker threads")->check(CLI::PositiveNumber);
  detect->add_option("--out", det_out, "Verdict file")->required();
  detect->add_option("--trace", det_trace, "Also write a JSON-lines rank trace here");
  detect->callback([&] {
    action = [&] {
      ls::DetectorConfig dc = det_cfg;
      dc.score_first_key = !det_no_first;
      std::optional<fs::path> trace;
      if (!det_trace.empty()) trace = det_trace;
      const ls::DetectSummary s = ls::cmd_detect(det_model, det_corpus, dc, det_jobs, det_out, trace);
      write_resolved(detect, sidecar(det_out));
      std::cout << "sequences=" << s.sequences << " flagged=" << s.flagged << " k=" << s.k
                << " normal_by_vacuity=" << s.vacuous << "\n";
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Score verdicts against corpus labels");
  std::string ev_verdicts, ev_corpus, ev_out;
  eval->add_option("--verdicts", ev_verdicts, "Verdict file from detect")->required();
  eval->add_option("--corpus", ev_corpus, "The corpus that was scored")->required();
  eval->add_option("--out", ev_out, "Report TSV")->required();
  eval->callback([&] {
    action = [&] {
      const std::string hash = ls::sha256_hex(resolved_text(eval));
      const ls::MetricsReport m = ls::cmd_eval(ev_verdicts, ev_corpus, hash, ev_out);
      write_resolved(eval, sidecar(ev_out));
      print_report(m);
    };
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Top-K ratio sweep, training-size sweep, RL ablation");
  sweep->require_subcommand(1);

  auto* sweep_topk = sweep->add_subcommand("topk", "Metrics across Top-K ratios for one model");
  std::string st_model, st_corpus, st_out;
  std::vector<double> st_ratios = ls::default_ratio_grid();
  bool st_no_first = false;
  size_t st_jobs = 1;
  sweep_topk->add_option("--model", st_model, "Model checkpoint")->required();
  sweep_topk->add_option("--corpus", st_corpus, "Labeled corpus")->required();
  sweep_topk->add_option("--ratios", st_ratios, "Top-K ratios")->delimiter(',');
  sweep_topk->add_flag("--no-score-first-key", st_no_first, "Do not score the first key against BOS");
  sweep_topk->add_option("--jobs", st_jobs, "Worker threads")->check(CLI::PositiveNumber);
  sweep_topk->add_option("--out", st_out, "Report TSV")->required();
  sweep_topk->callback([&] {
    action = [&] {
      const std::string hash = ls::sha256_hex(resolved_text(sweep_topk));
      for (const auto& p : ls::cmd_sweep_topk(st_model, st_corpus, st_ratios, !st_no_first, st_jobs, hash, st_out)) {
        std::cout << "ratio=" << fmt(p.ratio) << " k=" << p.k << " ";
        print_report(p.report);
      }
      write_resolved(sweep_topk, sidecar(st_out));
    };
  });

  auto* sweep_size = sweep->add_subcommand("size", "Full pipeline per training-set size");
  PipelineFlags ss_flags;
  std::vector<size_t> ss_sizes;
  std::string ss_report;
  ss_flags.add(sweep_size);
  sweep_size->add_option("--sizes", ss_sizes, "Training sizes")->required()->delimiter(',');
  sweep_size->add_option("--report", ss_report, "Report TSV")->required();
  sweep_size->callback([&] {
    action = [&] {
      for (const auto& p : ls::run_size_sweep(ss_flags.resolved(), ss_sizes, ss_report, log_line)) {
        std::cout << "size=" << p.size << " ";
        print_report(p.report);
      }
      write_resolved(sweep_size, sidecar(ss_report));
    };
  });

  auto* sweep_rl = sweep->add_subcommand("rl", "Pretrained-only versus pretrained plus RL");
  PipelineFlags sr_flags;
  std::string sr_report;
  sr_flags.add(sweep_rl);
  sweep_rl->add_option("--report", sr_report, "Report TSV")->required();
  sweep_rl->callback([&] {
    action = [&] {
      const ls::Ablation a = ls::run_rl_ablation(sr_flags.resolved(), sr_report, log_line);
      std::cout << "no-rl ";
      print_report(a.without_rl.report);
      std::cout << "rl    ";
      print_report(a.with_rl.report);
      write_resolved(sweep_rl, sidecar(sr_report));
    };
  });

  // run-all
  auto* run_all = app.add_subcommand("run-all", "parse, corpus, pretrain, finetune, detect and eval with caching");
  PipelineFlags ra_flags;
  ra_flags.add(run_all);
  run_all->callback([&] {
    action = [&] {
      const ls::PipelineConfig cfg = ra_flags.resolved();
      const ls::RunSummary s = ls::run_all(cfg, log_line);
      write_resolved(run_all, fs::path(cfg.out_dir) / "cli-config.toml");
      for (const auto& st : s.stages) std::cout << st.name << (st.cached ? " cached" : " ran") << "\n";
      print_report(s.report);
      std::cout << "report " << s.report_path.string() << "\n";
    };
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Write a labeled synthetic log for experiments");
  std::string sy_log, sy_labels, sy_grammar = "random";
  ls::GrammarOptions sy_grammar_opts;
  ls::SyntheticSpec sy_spec;
  double sy_stop = 0.06;
  int32_t sy_segments = 10;
  std::vector<std::string> sy_kinds{"foreign", "swap", "tail"};
  synth->add_option("--log", sy_log, "Output log file")->required();
  synth->add_option("--labels", sy_labels, "Output label CSV")->required();
  synth->add_option("--grammar", sy_grammar, "random, cycle, two-branch or chain")
      ->check(CLI::IsMember({"random", "cycle", "two-branch", "chain"}));
  synth->add_option("--keys", sy_grammar_opts.n_keys, "Keys in the grammar (random, cycle, chain)");
  synth->add_option("--max-branch", sy_grammar_opts.max_branch, "Maximum successors per key (random)");
  synth->add_option("--stop-prob", sy_stop, "Per-step stop probability (cycle)");
  synth->add_option("--segments", sy_segments, "Branch segments (two-branch)");
  synth->add_option("--n-normal", sy_spec.n_normal, "Normal sequences");
  synth->add_option("--n-anomalous", sy_spec.n_anomalous, "Anomalous sequences");
  synth->add_option("--anomalies", sy_kinds, "Anomaly kinds: foreign, swap, tail")
      ->delimiter(',')
      ->check(CLI::IsMember({"foreign", "swap", "tail"}));
  add_seed_option(synth, sy_spec.seed);
  synth->callback([&] {
    action = [&] {
      const uint64_t seed = sy_spec.seed;
      if (sy_grammar == "random") {
        sy_grammar_opts.seed = ls::stage_seed(seed, "grammar");
        sy_spec.grammar = ls::random_grammar(sy_grammar_opts);
      } else if (sy_grammar == "cycle") {
        sy_spec.grammar = ls::cycle_grammar(sy_grammar_opts.n_keys, sy_stop, 32, ls::stage_seed(seed, "grammar"));
      } else if (sy_grammar == "two-branch") {
        sy_spec.grammar = ls::two_branch_grammar(sy_segments);
      } else {
        sy_spec.grammar = ls::chain_grammar(sy_grammar_opts.n_keys);
      }
      sy_spec.kinds.clear();
      for (const auto& k : sy_kinds) {
        sy_spec.kinds.push_back(k == "foreign" ? ls::AnomalyKind::kForeignKey
                                : k == "swap"  ? ls::AnomalyKind::kSwap
                                               : ls::AnomalyKind::kForeignTail);
      }
      sy_spec.seed = ls::stage_seed(seed, "sequences");
      const auto sequences = ls::generate_synthetic(sy_spec);
      ls::write_synthetic_log(sequences, ls::stage_seed(seed, "messages"), sy_log, sy_labels);
      write_resolved(synth, sidecar(sy_log));
      std::cout << "sequences=" << sequences.size() << " keys=" << sy_spec.grammar.n_keys << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    action();
  } catch (const ls::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ls::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ls::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
