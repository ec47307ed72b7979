#ifndef LOGSENTINEL_LOG_PARSER_H_
#define LOGSENTINEL_LOG_PARSER_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "logsentinel/common.h"

namespace logsentinel {

using KeyId = int32_t;

// Returned by a frozen table for lines that match no mined template.
inline constexpr KeyId kUnseenKey = -1;
inline constexpr std::string_view kWildcard = "<*>";

class EmptyContentError : public DataError {
 public:
  using DataError::DataError;
};

struct LogTemplate {
  KeyId key_id = 0;
  std::vector<std::string> tokens;  // literal tokens or kWildcard
  int64_t match_count = 0;

  std::string text() const;
};

struct MaskRule {
  std::string name;
  std::regex pattern;
  std::string replacement{kWildcard};
};

MaskRule make_mask(std::string name, const std::string& pattern);

// Describes how to pull content and metadata out of a raw log line: a fixed
// number of whitespace-separated header columns precede the message content.
struct LogFormat {
  std::string name = "generic";
  int header_columns = 0;
  std::optional<int> label_column;      // value "-" means normal, anything else alert
  std::optional<int> timestamp_column;  // integer epoch seconds
  std::string session_regex;            // one capture group; empty when unused
  std::vector<MaskRule> masks;
};

// Built-in presets: "hdfs", "bgl", "thunderbird", "keyed" (first column is a
// session id), "generic".
LogFormat log_format_preset(std::string_view name);
std::vector<std::string> log_format_preset_names();

struct ExtractedLine {
  std::string content;
  std::optional<std::string> label_field;
  std::optional<int64_t> timestamp;
};

// Splits off header columns. Throws EmptyContentError if nothing remains.
ExtractedLine extract_content(std::string_view line, const LogFormat& format);

// Content -> token list after masking.
std::vector<std::string> preprocess(std::string_view content, const std::vector<MaskRule>& masks);

struct DrainOptions {
  int depth = 4;              // tree depth incl. root and length layer; depth-2 token layers
  double sim_threshold = 0.5;
  int max_children = 100;
};

// Fixed-depth parse tree. Internal nodes are keyed by token count, then by the
// leading depth-2 tokens; leaves hold template indices.
class ParseTree {
 public:
  explicit ParseTree(DrainOptions options);

  const DrainOptions& options() const { return options_; }

  struct Match {
    size_t template_index;
    double similarity;
  };

  // Best template in the leaf reached by `tokens`, ties broken toward the
  // lower template index. Returns nullopt if no leaf exists or the leaf is empty.
  std::optional<Match> search(const std::vector<std::string>& tokens,
                              const std::vector<LogTemplate>& templates) const;

  // Routes a new template into the tree, creating internal nodes as needed.
  void insert(const std::vector<std::string>& tokens, size_t template_index);

 private:
  struct Node {
    std::map<std::string, std::unique_ptr<Node>> children;
    std::vector<size_t> templates;
  };

  const Node* find_leaf(const std::vector<std::string>& tokens) const;

  DrainOptions options_;
  std::map<size_t, std::unique_ptr<Node>> by_length_;
};

// Similarity between a template and a token list of the same length: number
// of positions holding equal tokens over the token count.
double sequence_similarity(const std::vector<std::string>& templ, const std::vector<std::string>& tokens);

// Immutable template table produced by DrainParser::freeze() or loaded from
// disk. Never grows; unmatched lines map to kUnseenKey.
class TemplateTable {
 public:
  TemplateTable(DrainOptions options, std::vector<LogTemplate> templates);

  size_t size() const { return templates_.size(); }
  const std::vector<LogTemplate>& templates() const { return templates_; }
  const LogTemplate& at(KeyId id) const;
  const DrainOptions& options() const { return tree_->options(); }

  KeyId match_tokens(const std::vector<std::string>& tokens) const;
  KeyId match_content(std::string_view content, const std::vector<MaskRule>& masks) const;
  KeyId match_line(std::string_view line, const LogFormat& format) const;

 private:
  std::vector<LogTemplate> templates_;
  std::shared_ptr<const ParseTree> tree_;
};

// Online template miner. Single writer.
class DrainParser {
 public:
  explicit DrainParser(DrainOptions options = {});

  KeyId parse_tokens(const std::vector<std::string>& tokens);
  KeyId parse_content(std::string_view content, const std::vector<MaskRule>& masks);
  KeyId parse_line(std::string_view line, const LogFormat& format);

  size_t size() const { return templates_.size(); }
  const std::vector<LogTemplate>& templates() const { return templates_; }

  // Requires at least one mined template.
  TemplateTable freeze() const;

 private:
  ParseTree tree_;
  std::vector<LogTemplate> templates_;
};

// Text format: header "DRAINTBL v1 depth=<d> sim=<s> max_children=<m> count=<n>"
// followed by one "<key_id>\t<space-joined tokens>" line per template.
std::string serialize_templates(const TemplateTable& table);
TemplateTable parse_templates(std::string_view text);
void save_templates(const TemplateTable& table, const std::filesystem::path& path);
TemplateTable load_templates(const std::filesystem::path& path);

}  // namespace logsentinel

#endif  // LOGSENTINEL_LOG_PARSER_H_
