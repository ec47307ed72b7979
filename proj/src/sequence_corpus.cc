#include "logsentinel/sequence_corpus.h"

#include <algorithm>
#include <charconv>
#include <regex>
#include <sstream>

namespace logsentinel {

namespace {

char label_char(Label l) {
  switch (l) {
    case Label::kNormal:
      return '0';
    case Label::kAnomalous:
      return '1';
    case Label::kUnlabeled:
      return '-';
  }
  return '-';
}

bool valid_provenance(std::string_view p) {
  return !p.empty() && p.find_first_of("\t\n\r") == std::string_view::npos;
}

std::vector<KeySequence> encode_all(const std::vector<const KeySequence*>& src, const Vocabulary& vocab,
                                    size_t max_length) {
  std::vector<KeySequence> out;
  out.reserve(src.size());
  for (const KeySequence* s : src) {
    KeySequence e;
    e.label = s->label;
    e.provenance = s->provenance;
    const size_t n = std::min(s->keys.size(), max_length);
    e.keys.reserve(n);
    for (size_t i = 0; i < n; ++i) e.keys.push_back(vocab.encode(s->keys[i]));
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary(std::vector<KeyId> raw_keys) {
  raw_keys.erase(std::remove(raw_keys.begin(), raw_keys.end(), kUnseenKey), raw_keys.end());
  std::sort(raw_keys.begin(), raw_keys.end());
  raw_keys.erase(std::unique(raw_keys.begin(), raw_keys.end()), raw_keys.end());
  raw_keys_ = std::move(raw_keys);
  for (size_t i = 0; i < raw_keys_.size(); ++i) {
    index_.emplace(raw_keys_[i], static_cast<TokenId>(i) + kNumReserved);
  }
}

Vocabulary Vocabulary::from_sequences(const std::vector<KeySequence>& raw) {
  std::vector<KeyId> keys;
  for (const auto& s : raw) keys.insert(keys.end(), s.keys.begin(), s.keys.end());
  return Vocabulary(std::move(keys));
}

TokenId Vocabulary::encode(KeyId raw) const {
  auto it = index_.find(raw);
  return it == index_.end() ? kUnseenId : it->second;
}

KeyId Vocabulary::decode(TokenId id) const {
  if (id < kNumReserved || id >= size()) return kUnseenKey;
  return raw_keys_[static_cast<size_t>(id - kNumReserved)];
}

Corpus CorpusSplit::test_corpus() const {
  Corpus c{vocab.size(), {}};
  c.sequences.reserve(test_normal.size() + test_anomalous.size() + test_unlabeled.size());
  c.sequences.insert(c.sequences.end(), test_normal.begin(), test_normal.end());
  c.sequences.insert(c.sequences.end(), test_anomalous.begin(), test_anomalous.end());
  c.sequences.insert(c.sequences.end(), test_unlabeled.begin(), test_unlabeled.end());
  return c;
}

// ----------------------------------------------------------------- grouping

GroupResult group_by_session(const std::vector<SessionEvent>& stream, const std::string& session_regex) {
  std::regex re;
  try {
    re = std::regex(session_regex, std::regex::ECMAScript | std::regex::optimize);
  } catch (const std::regex_error& e) {
    throw UsageError("bad session regex '" + session_regex + "': " + e.what());
  }
  if (re.mark_count() < 1) throw UsageError("session regex must have one capture group");

  GroupResult out;
  std::unordered_map<std::string, size_t> index;
  std::smatch m;
  for (const auto& ev : stream) {
    if (!std::regex_search(ev.raw_line, m, re) || !m[1].matched) {
      ++out.dropped;
      continue;
    }
    std::string session = m[1].str();
    auto [it, inserted] = index.emplace(session, out.sequences.size());
    if (inserted) {
      KeySequence s;
      s.provenance = std::move(session);
      s.label = Label::kUnlabeled;
      out.sequences.push_back(std::move(s));
    }
    out.sequences[it->second].keys.push_back(ev.key);
  }
  return out;
}

std::map<std::string, Label> parse_session_labels(std::string_view csv) {
  std::map<std::string, Label> out;
  size_t line_no = 0;
  for (const auto& raw : split(csv, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2) {
      throw FormatError("labels line " + std::to_string(line_no) + ": expected 'session,label'");
    }
    std::string value(trim(fields[1]));
    std::transform(value.begin(), value.end(), value.begin(), [](unsigned char c) { return std::tolower(c); });
    Label label;
    if (value == "normal" || value == "0") {
      label = Label::kNormal;
    } else if (value == "anomaly" || value == "anomalous" || value == "1") {
      label = Label::kAnomalous;
    } else if (line_no == 1) {
      continue;  // header
    } else {
      throw FormatError("labels line " + std::to_string(line_no) + ": unknown label '" + value + "'");
    }
    out[std::string(trim(fields[0]))] = label;
  }
  return out;
}

void apply_session_labels(std::vector<KeySequence>& sequences, const std::map<std::string, Label>& labels) {
  for (auto& s : sequences) {
    auto it = labels.find(s.provenance);
    if (it != labels.end()) s.label = it->second;
  }
}

std::vector<KeySequence> group_by_time_window(std::vector<TimedEvent> stream, int64_t window_seconds) {
  if (window_seconds <= 0) throw UsageError("time window must be positive");
  std::vector<KeySequence> out;
  if (stream.empty()) return out;
  std::stable_sort(stream.begin(), stream.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.timestamp < b.timestamp; });
  const int64_t origin = stream.front().timestamp;
  int64_t current = -1;
  for (const auto& ev : stream) {
    const int64_t w = (ev.timestamp - origin) / window_seconds;
    if (w != current) {
      KeySequence s;
      s.provenance = "w" + std::to_string(w);
      s.label = Label::kNormal;
      out.push_back(std::move(s));
      current = w;
    }
    out.back().keys.push_back(ev.key);
    if (ev.anomalous) out.back().label = Label::kAnomalous;
  }
  return out;
}

// -------------------------------------------------------------------- split

CorpusSplit build_split(const std::vector<KeySequence>& raw, const SplitOptions& options) {
  if (options.max_length == 0) throw UsageError("max sequence length must be positive");
  std::vector<size_t> normal;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].keys.empty()) throw DataError("sequence '" + raw[i].provenance + "' is empty");
    if (raw[i].label == Label::kNormal) normal.push_back(i);
  }
  const size_t needed = options.n_train + options.n_validation;
  if (normal.size() < needed || options.n_train == 0) {
    throw InsufficientNormalError("need " + std::to_string(needed) + " normal sequences (n_train " +
                                  std::to_string(options.n_train) + "), corpus has " +
                                  std::to_string(normal.size()));
  }

  Rng rng(options.seed);
  std::vector<size_t> order = normal;
  rng.shuffle(order);
  std::vector<size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.n_train));
  std::vector<size_t> val_idx(order.begin() + static_cast<std::ptrdiff_t>(options.n_train),
                              order.begin() + static_cast<std::ptrdiff_t>(needed));
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  std::vector<bool> taken(raw.size(), false);
  std::vector<const KeySequence*> train, val, test_n, test_a, test_u;
  for (size_t i : train_idx) {
    taken[i] = true;
    train.push_back(&raw[i]);
  }
  for (size_t i : val_idx) {
    taken[i] = true;
    val.push_back(&raw[i]);
  }
  for (size_t i = 0; i < raw.size(); ++i) {
    if (taken[i]) continue;
    switch (raw[i].label) {
      case Label::kNormal:
        test_n.push_back(&raw[i]);
        break;
      case Label::kAnomalous:
        test_a.push_back(&raw[i]);
        break;
      case Label::kUnlabeled:
        test_u.push_back(&raw[i]);
        break;
    }
  }

  // Vocabulary covers only keys that survive truncation, i.e. keys the model is trained on.
  std::vector<KeyId> keys;
  for (const KeySequence* s : train) {
    const size_t n = std::min(s->keys.size(), options.max_length);
    keys.insert(keys.end(), s->keys.begin(), s->keys.begin() + static_cast<std::ptrdiff_t>(n));
  }

  CorpusSplit split;
  split.vocab = Vocabulary(std::move(keys));
  split.train = encode_all(train, split.vocab, options.max_length);
  split.validation = encode_all(val, split.vocab, options.max_length);
  split.test_normal = encode_all(test_n, split.vocab, options.max_length);
  split.test_anomalous = encode_all(test_a, split.vocab, options.max_length);
  split.test_unlabeled = encode_all(test_u, split.vocab, options.max_length);
  return split;
}

// -------------------------------------------------------------- file format

std::string serialize_corpus(const Corpus& corpus) {
  std::string out = "LOGSEQ v1 vocab=" + std::to_string(corpus.vocab_size) + "\n";
  for (const auto& s : corpus.sequences) {
    if (!valid_provenance(s.provenance)) {
      throw FormatError("sequence provenance must be non-empty and free of tabs/newlines");
    }
    if (s.keys.empty()) throw FormatError("cannot serialize empty sequence '" + s.provenance + "'");
    out += label_char(s.label);
    out += '\t';
    out += s.provenance;
    out += '\t';
    for (size_t i = 0; i < s.keys.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(s.keys[i]);
    }
    out += '\n';
  }
  return out;
}

Corpus parse_corpus(std::string_view text) {
  std::vector<std::string> lines = split(text, '\n');
  if (lines.empty() || lines[0].empty()) throw FormatError("corpus: missing header");
  if (!lines.back().empty()) throw FormatError("corpus: truncated (no trailing newline)");
  lines.pop_back();

  auto header = split_whitespace(lines[0]);
  if (header.size() != 3 || header[0] != "LOGSEQ") throw FormatError("corpus line 1: bad header");
  if (header[1] != "v1") throw FormatError("corpus line 1: unsupported version '" + header[1] + "'");
  if (header[2].rfind("vocab=", 0) != 0) throw FormatError("corpus line 1: missing vocab=");
  Corpus c;
  {
    std::string_view v = std::string_view(header[2]).substr(6);
    auto res = std::from_chars(v.data(), v.data() + v.size(), c.vocab_size);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || c.vocab_size < kNumReserved) {
      throw FormatError("corpus line 1: bad vocab size");
    }
  }

  for (size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string where = "corpus line " + std::to_string(ln + 1) + ": ";
    auto fields = split(lines[ln], '\t');
    if (fields.size() != 3) throw FormatError(where + "expected 3 tab-separated fields");
    KeySequence s;
    if (fields[0] == "0") {
      s.label = Label::kNormal;
    } else if (fields[0] == "1") {
      s.label = Label::kAnomalous;
    } else if (fields[0] == "-") {
      s.label = Label::kUnlabeled;
    } else {
      throw FormatError(where + "bad label '" + fields[0] + "'");
    }
    if (fields[1].empty()) throw FormatError(where + "empty provenance");
    s.provenance = fields[1];
    for (const auto& tok : split_whitespace(fields[2])) {
      TokenId id = 0;
      auto res = std::from_chars(tok.data(), tok.data() + tok.size(), id);
      if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
        throw FormatError(where + "bad key id '" + tok + "'");
      }
      if (id < kUnseenId || id >= c.vocab_size) {
        throw FormatError(where + "key id " + tok + " outside vocabulary of size " + std::to_string(c.vocab_size));
      }
      s.keys.push_back(id);
    }
    if (s.keys.empty()) throw FormatError(where + "empty sequence");
    c.sequences.push_back(std::move(s));
  }
  return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) {
  try {
    return parse_corpus(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string serialize_vocabulary(const Vocabulary& vocab) {
  std::ostringstream out;
  for (TokenId id = kNumReserved; id < vocab.size(); ++id) out << id << '\t' << vocab.decode(id) << '\n';
  return out.str();
}

Vocabulary parse_vocabulary(std::string_view text) {
  std::vector<KeyId> keys;
  TokenId expected = kNumReserved;
  for (const auto& line : split(text, '\n')) {
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 2) throw FormatError("vocabulary: malformed line '" + line + "'");
    try {
      if (std::stoi(f[0]) != expected++) throw FormatError("vocabulary: ids must be contiguous");
      keys.push_back(static_cast<KeyId>(std::stol(f[1])));
    } catch (const std::logic_error&) {
      throw FormatError("vocabulary: malformed line '" + line + "'");
    }
  }
  Vocabulary v(keys);
  if (v.raw_keys() != keys) throw FormatError("vocabulary: raw keys must be unique and ascending");
  return v;
}

}  // namespace logsentinel
