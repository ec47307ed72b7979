#include "logsentinel/log_parser.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

namespace logsentinel {

namespace {

bool has_digit(std::string_view token) {
  return std::any_of(token.begin(), token.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

void validate(const DrainOptions& o) {
  if (o.depth < 2) throw UsageError("drain depth must be >= 2");
  if (!(o.sim_threshold > 0.0 && o.sim_threshold <= 1.0)) {
    throw UsageError("drain sim_threshold must be in (0, 1]");
  }
  if (o.max_children < 1) throw UsageError("drain max_children must be >= 1");
}

}  // namespace

std::string LogTemplate::text() const {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

MaskRule make_mask(std::string name, const std::string& pattern) {
  try {
    return MaskRule{std::move(name), std::regex(pattern, std::regex::ECMAScript | std::regex::optimize),
                    std::string(kWildcard)};
  } catch (const std::regex_error& e) {
    throw UsageError("bad mask regex '" + pattern + "': " + e.what());
  }
}

LogFormat log_format_preset(std::string_view name) {
  const std::string ip = R"((\d{1,3}\.){3}\d{1,3}(:\d+)?)";
  LogFormat f;
  if (name == "generic") {
    f.name = "generic";
    return f;
  }
  if (name == "keyed") {
    // <session-id> <content>
    f.name = "keyed";
    f.header_columns = 1;
    f.session_regex = R"(^(\S+))";
    return f;
  }
  if (name == "hdfs") {
    // 081109 203615 148 INFO dfs.DataNode$PacketResponder: <content>
    f.name = "hdfs";
    f.header_columns = 5;
    f.session_regex = R"((blk_-?\d+))";
    f.masks.push_back(make_mask("block", R"(blk_-?\d+)"));
    f.masks.push_back(make_mask("ip", ip));
    return f;
  }
  if (name == "bgl") {
    // - 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.363779
    //   R02-M1-N0-C:J12-U11 RAS KERNEL INFO <content>
    f.name = "bgl";
    f.header_columns = 9;
    f.label_column = 0;
    f.timestamp_column = 1;
    f.masks.push_back(make_mask("core", R"(core\.\d+)"));
    f.masks.push_back(make_mask("ip", ip));
    f.masks.push_back(make_mask("hex", R"(0x[0-9a-fA-F]+)"));
    return f;
  }
  if (name == "thunderbird") {
    // - 1131566461 2005.11.09 dn228 Nov 9 12:01:01 dn228/dn228 crond[2915]: <content>
    f.name = "thunderbird";
    f.header_columns = 9;
    f.label_column = 0;
    f.timestamp_column = 1;
    f.masks.push_back(make_mask("ip", ip));
    f.masks.push_back(make_mask("hex", R"(0x[0-9a-fA-F]+)"));
    return f;
  }
  std::string msg = "unknown parser preset '" + std::string(name) + "'; available presets:";
  for (const auto& n : log_format_preset_names()) msg += " " + n;
  throw UsageError(msg);
}

std::vector<std::string> log_format_preset_names() { return {"bgl", "generic", "hdfs", "keyed", "thunderbird"}; }

ExtractedLine extract_content(std::string_view line, const LogFormat& format) {
  ExtractedLine out;
  size_t pos = 0;
  for (int col = 0; col < format.header_columns; ++col) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    std::string_view field = line.substr(pos, end - pos);
    if (format.label_column && *format.label_column == col) out.label_field = std::string(field);
    if (format.timestamp_column && *format.timestamp_column == col) {
      int64_t ts = 0;
      auto res = std::from_chars(field.data(), field.data() + field.size(), ts);
      if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw FormatError("unparseable timestamp '" + std::string(field) + "'");
      }
      out.timestamp = ts;
    }
    pos = end;
  }
  out.content = std::string(trim(line.substr(std::min(pos, line.size()))));
  if (out.content.empty()) throw EmptyContentError("log line has no content after header stripping");
  return out;
}

std::vector<std::string> preprocess(std::string_view content, const std::vector<MaskRule>& masks) {
  std::string text(content);
  for (const auto& m : masks) text = std::regex_replace(text, m.pattern, m.replacement);
  auto tokens = split_whitespace(text);
  if (tokens.empty()) throw EmptyContentError("log content has no tokens after preprocessing");
  return tokens;
}

double sequence_similarity(const std::vector<std::string>& templ, const std::vector<std::string>& tokens) {
  if (templ.size() != tokens.size() || templ.empty()) return 0.0;
  size_t equal = 0;
  for (size_t i = 0; i < templ.size(); ++i) {
    if (templ[i] == tokens[i]) ++equal;
  }
  return static_cast<double>(equal) / static_cast<double>(templ.size());
}

// ---------------------------------------------------------------- ParseTree

ParseTree::ParseTree(DrainOptions options) : options_(options) { validate(options_); }

const ParseTree::Node* ParseTree::find_leaf(const std::vector<std::string>& tokens) const {
  auto it = by_length_.find(tokens.size());
  if (it == by_length_.end()) return nullptr;
  const Node* node = it->second.get();
  const size_t layers = std::min<size_t>(static_cast<size_t>(options_.depth - 2), tokens.size());
  for (size_t i = 0; i < layers; ++i) {
    auto child = node->children.find(tokens[i]);
    if (child == node->children.end()) child = node->children.find(std::string(kWildcard));
    if (child == node->children.end()) return nullptr;
    node = child->second.get();
  }
  return node;
}

std::optional<ParseTree::Match> ParseTree::search(const std::vector<std::string>& tokens,
                                                  const std::vector<LogTemplate>& templates) const {
  const Node* leaf = find_leaf(tokens);
  if (leaf == nullptr || leaf->templates.empty()) return std::nullopt;
  std::optional<Match> best;
  for (size_t idx : leaf->templates) {
    double sim = sequence_similarity(templates[idx].tokens, tokens);
    if (!best || sim > best->similarity || (sim == best->similarity && idx < best->template_index)) {
      best = Match{idx, sim};
    }
  }
  return best;
}

void ParseTree::insert(const std::vector<std::string>& tokens, size_t template_index) {
  auto& root = by_length_[tokens.size()];
  if (!root) root = std::make_unique<Node>();
  Node* node = root.get();
  const std::string wildcard(kWildcard);
  const size_t layers = std::min<size_t>(static_cast<size_t>(options_.depth - 2), tokens.size());
  for (size_t i = 0; i < layers; ++i) {
    const std::string& tok = tokens[i];
    std::string key;
    if (tok == wildcard || has_digit(tok)) {
      key = wildcard;
    } else if (node->children.count(tok)) {
      key = tok;
    } else {
      // One slot stays reserved for the wildcard child.
      size_t literal = node->children.size() - (node->children.count(wildcard) ? 1 : 0);
      key = (literal + 1 < static_cast<size_t>(options_.max_children)) ? tok : wildcard;
    }
    auto& child = node->children[key];
    if (!child) child = std::make_unique<Node>();
    node = child.get();
  }
  node->templates.push_back(template_index);
}

// ------------------------------------------------------------ TemplateTable

TemplateTable::TemplateTable(DrainOptions options, std::vector<LogTemplate> templates)
    : templates_(std::move(templates)) {
  auto tree = std::make_shared<ParseTree>(options);
  for (size_t i = 0; i < templates_.size(); ++i) {
    if (templates_[i].key_id != static_cast<KeyId>(i)) {
      throw FormatError("template key ids must be contiguous from 0");
    }
    if (templates_[i].tokens.empty()) throw FormatError("template has no tokens");
    tree->insert(templates_[i].tokens, i);
  }
  tree_ = std::move(tree);
}

const LogTemplate& TemplateTable::at(KeyId id) const {
  if (id < 0 || static_cast<size_t>(id) >= templates_.size()) {
    throw std::out_of_range("template id out of range");
  }
  return templates_[static_cast<size_t>(id)];
}

KeyId TemplateTable::match_tokens(const std::vector<std::string>& tokens) const {
  auto m = tree_->search(tokens, templates_);
  if (!m || m->similarity < tree_->options().sim_threshold) return kUnseenKey;
  return templates_[m->template_index].key_id;
}

KeyId TemplateTable::match_content(std::string_view content, const std::vector<MaskRule>& masks) const {
  return match_tokens(preprocess(content, masks));
}

KeyId TemplateTable::match_line(std::string_view line, const LogFormat& format) const {
  return match_content(extract_content(line, format).content, format.masks);
}

// -------------------------------------------------------------- DrainParser

DrainParser::DrainParser(DrainOptions options) : tree_(options) {}

KeyId DrainParser::parse_tokens(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw EmptyContentError("log content has no tokens");
  auto m = tree_.search(tokens, templates_);
  if (m && m->similarity >= tree_.options().sim_threshold) {
    LogTemplate& t = templates_[m->template_index];
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (t.tokens[i] != tokens[i]) t.tokens[i] = std::string(kWildcard);
    }
    ++t.match_count;
    return t.key_id;
  }
  LogTemplate t;
  t.key_id = static_cast<KeyId>(templates_.size());
  t.tokens = tokens;
  t.match_count = 1;
  tree_.insert(t.tokens, templates_.size());
  templates_.push_back(std::move(t));
  return templates_.back().key_id;
}

KeyId DrainParser::parse_content(std::string_view content, const std::vector<MaskRule>& masks) {
  return parse_tokens(preprocess(content, masks));
}

KeyId DrainParser::parse_line(std::string_view line, const LogFormat& format) {
  return parse_content(extract_content(line, format).content, format.masks);
}

TemplateTable DrainParser::freeze() const {
  if (templates_.empty()) throw DataError("cannot freeze a parser with no mined templates");
  return TemplateTable(tree_.options(), templates_);
}

// -------------------------------------------------------------- file format

std::string serialize_templates(const TemplateTable& table) {
  std::ostringstream out;
  const auto& o = table.options();
  out << "DRAINTBL v1 depth=" << o.depth << " sim=" << format_double(o.sim_threshold)
      << " max_children=" << o.max_children << " count=" << table.size() << "\n";
  for (const auto& t : table.templates()) out << t.key_id << '\t' << t.text() << '\n';
  return out.str();
}

TemplateTable parse_templates(std::string_view text) {
  std::vector<std::string> lines = split(text, '\n');
  if (lines.empty() || lines[0].empty()) throw FormatError("template table: missing header");
  if (!lines.back().empty()) throw FormatError("template table: truncated (no trailing newline)");
  lines.pop_back();

  auto header = split_whitespace(lines[0]);
  if (header.size() < 2 || header[0] != "DRAINTBL") throw FormatError("template table: bad header");
  if (header[1] != "v1") throw FormatError("template table: unsupported version '" + header[1] + "'");

  DrainOptions opts;
  std::optional<size_t> count;
  bool have_depth = false, have_sim = false;
  for (size_t i = 2; i < header.size(); ++i) {
    auto eq = header[i].find('=');
    if (eq == std::string::npos) throw FormatError("template table: bad header field '" + header[i] + "'");
    std::string key = header[i].substr(0, eq), val = header[i].substr(eq + 1);
    try {
      if (key == "depth") {
        opts.depth = std::stoi(val);
        have_depth = true;
      } else if (key == "sim") {
        opts.sim_threshold = std::stod(val);
        have_sim = true;
      } else if (key == "max_children") {
        opts.max_children = std::stoi(val);
      } else if (key == "count") {
        count = static_cast<size_t>(std::stoull(val));
      }
    } catch (const std::exception&) {
      throw FormatError("template table: bad value in header field '" + header[i] + "'");
    }
  }
  if (!have_depth || !have_sim) throw FormatError("template table: header lacks depth/sim");

  std::vector<LogTemplate> templates;
  for (size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("template table line " + std::to_string(ln + 1) + ": missing tab");
    }
    LogTemplate t;
    auto res = std::from_chars(line.data(), line.data() + tab, t.key_id);
    if (res.ec != std::errc() || res.ptr != line.data() + tab) {
      throw FormatError("template table line " + std::to_string(ln + 1) + ": bad key id");
    }
    t.tokens = split_whitespace(std::string_view(line).substr(tab + 1));
    if (t.tokens.empty()) throw FormatError("template table line " + std::to_string(ln + 1) + ": no tokens");
    templates.push_back(std::move(t));
  }
  if (templates.empty()) throw FormatError("template table: no templates");
  if (count && *count != templates.size()) {
    throw FormatError("template table: header declares " + std::to_string(*count) + " templates, found " +
                      std::to_string(templates.size()) + " (truncated?)");
  }
  try {
    return TemplateTable(opts, std::move(templates));
  } catch (const UsageError& e) {
    throw FormatError(std::string("template table: ") + e.what());
  }
}

void save_templates(const TemplateTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_templates(table));
}

TemplateTable load_templates(const std::filesystem::path& path) { return parse_templates(read_file(path)); }

}  // namespace logsentinel
