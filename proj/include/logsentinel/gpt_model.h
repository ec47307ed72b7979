#ifndef LOGSENTINEL_GPT_MODEL_H_
#define LOGSENTINEL_GPT_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "logsentinel/common.h"
#include "logsentinel/sequence_corpus.h"
#include "logsentinel/tensor.h"

namespace logsentinel {

struct ModelConfig {
  int32_t n_layers = 6;
  int32_t n_heads = 6;
  int32_t d_model = 60;
  int32_t vocab_size = kNumReserved + 1;
  int32_t max_len = static_cast<int32_t>(kDefaultMaxSequenceLength);
  float dropout = 0.1f;

  void validate() const;
  std::string describe() const;
  bool operator==(const ModelConfig&) const = default;
};

// Closed-form parameter count for a config.
int64_t parameter_count(const ModelConfig& config);

class SequenceError : public DataError {
 public:
  using DataError::DataError;
};

class VocabMismatchError : public DataError {
 public:
  using DataError::DataError;
};

// Next-key probabilities, one entry per vocabulary id.
using Distribution = std::vector<double>;

// Decoder-only transformer over log-key ids: token and learned positional
// embeddings, pre-norm blocks of causal self-attention and a GELU MLP, a final
// layer norm and a bias-free LM head.
class GptModel {
 public:
  // Weights ~ N(0, 0.02), biases zero, layer-norm gains one.
  GptModel(const ModelConfig& config, uint64_t init_seed);

  GptModel(const GptModel&) = delete;
  GptModel& operator=(const GptModel&) = delete;
  GptModel(GptModel&&) = default;
  GptModel& operator=(GptModel&&) = default;

  // Independent deep copy of all parameters.
  GptModel clone() const;
  // Copies parameter values from a model with an identical config.
  void copy_parameters_from(const GptModel& other);

  const ModelConfig& config() const { return config_; }

  // ids holds `batch` rows of `seq_len` tokens, row-major. Returns logits of
  // shape [batch*seq_len, vocab]; row t only depends on tokens <= t of its
  // sequence. Dropout is active only when train_mode, and then needs rng.
  Tensor forward(Tape& tape, std::span<const int32_t> ids, int64_t batch, int64_t seq_len, bool train_mode,
                 Rng* rng = nullptr) const;

  // Eval-mode logits for one sequence, [T * vocab] row-major.
  std::vector<float> logits(std::span<const int32_t> ids) const;

  // Softmax of the last position's logits with PAD masked out.
  Distribution next_key_distribution(std::span<const int32_t> prefix) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  int64_t num_parameters() const;

  // SHA-256 over the raw parameter bytes and config.
  std::string fingerprint() const;

 private:
  struct Layer {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor fc_w, fc_b, proj_w, proj_b;
  };

  GptModel() = default;
  void collect();

  ModelConfig config_;
  Tensor tok_emb_, pos_emb_;
  std::vector<Layer> layers_;
  Tensor lnf_g_, lnf_b_;
  Tensor head_;

  std::vector<Tensor> params_;
  std::vector<std::string> names_;

  friend GptModel load_model(const std::filesystem::path& path);
  friend GptModel parse_model(std::string_view bytes);
};

// Softmax over one row of logits with PAD excluded (its probability is 0).
Distribution distribution_from_logits(std::span<const float> logits_row);

// The candidate pool is ids in [first_candidate, dist.size()). Ranking is by
// descending probability, ties broken by ascending id.
inline constexpr TokenId kFirstMinedId = kNumReserved;

// K ids with the highest probability. Throws UsageError unless 1 <= K <= pool size.
std::vector<TokenId> top_k_set(std::span<const double> dist, int64_t k, TokenId first_candidate = 0);

// 0-based rank of `key` within the candidate pool; ids outside the pool get
// the pool size (never inside any Top-K).
int64_t candidate_rank(std::span<const double> dist, TokenId key, TokenId first_candidate = 0);

// key in top_k_set(dist, k, first_candidate). The shared membership test used
// by both the RL reward and the detector.
bool in_top_k(std::span<const double> dist, TokenId key, int64_t k, TokenId first_candidate = 0);

struct TopKSample {
  TokenId id;
  double log_prob;  // under the distribution renormalized over the Top-K set
};

TopKSample sample_top_k(std::span<const double> dist, int64_t k, Rng& rng, TokenId first_candidate = 0);

// Binary checkpoint: "LGPT", u32 version, config, u32 tensor count, then per
// tensor <u32 name_len><name><u32 rank><u32 dims...><f32 data>, little-endian.
std::string serialize_model(const GptModel& model);
GptModel parse_model(std::string_view bytes);
void save_model(const GptModel& model, const std::filesystem::path& path);
GptModel load_model(const std::filesystem::path& path);

// Throws VocabMismatchError naming both sizes when they differ.
void check_vocab(const GptModel& model, int32_t corpus_vocab_size);

}  // namespace logsentinel

#endif  // LOGSENTINEL_GPT_MODEL_H_
