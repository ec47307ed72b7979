#include "logsentinel/gpt_model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace logsentinel {

namespace {

constexpr char kMagic[4] = {'L', 'G', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;
constexpr float kInitStd = 0.02f;

Tensor normal_param(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (float& v : t.data()) v = static_cast<float>(rng.normal()) * kInitStd;
  return t;
}

Tensor const_param(Shape shape, float value) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view take(size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint: truncated");
  }
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

// -------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
  if (n_layers < 1) throw UsageError("model: n_layers must be >= 1");
  if (n_heads < 1) throw UsageError("model: n_heads must be >= 1");
  if (d_model < 1 || d_model % n_heads != 0) throw UsageError("model: d_model must be a positive multiple of n_heads");
  if (vocab_size <= kNumReserved) throw UsageError("model: vocab_size must exceed the reserved token count");
  if (max_len < 1) throw UsageError("model: max_len must be >= 1");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw UsageError("model: dropout must be in [0, 1)");
}

std::string ModelConfig::describe() const {
  std::ostringstream s;
  s << "n_layers=" << n_layers << " n_heads=" << n_heads << " d_model=" << d_model << " vocab_size=" << vocab_size
    << " max_len=" << max_len << " dropout=" << format_double(dropout);
  return s.str();
}

int64_t parameter_count(const ModelConfig& c) {
  const int64_t d = c.d_model, V = c.vocab_size, L = c.max_len;
  const int64_t per_layer = 2 * d                 // ln1
                            + 4 * (d * d + d)     // q, k, v, o
                            + 2 * d               // ln2
                            + (d * 4 * d + 4 * d)  // fc
                            + (4 * d * d + d);    // proj
  return V * d + L * d + c.n_layers * per_layer + 2 * d + d * V;
}

// ----------------------------------------------------------------- GptModel

GptModel::GptModel(const ModelConfig& config, uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const int64_t d = config_.d_model;
  tok_emb_ = normal_param({config_.vocab_size, d}, rng);
  pos_emb_ = normal_param({config_.max_len, d}, rng);
  layers_.resize(static_cast<size_t>(config_.n_layers));
  for (auto& l : layers_) {
    l.ln1_g = const_param({d}, 1.0f);
    l.ln1_b = const_param({d}, 0.0f);
    l.wq = normal_param({d, d}, rng);
    l.bq = const_param({d}, 0.0f);
    l.wk = normal_param({d, d}, rng);
    l.bk = const_param({d}, 0.0f);
    l.wv = normal_param({d, d}, rng);
    l.bv = const_param({d}, 0.0f);
    l.wo = normal_param({d, d}, rng);
    l.bo = const_param({d}, 0.0f);
    l.ln2_g = const_param({d}, 1.0f);
    l.ln2_b = const_param({d}, 0.0f);
    l.fc_w = normal_param({d, 4 * d}, rng);
    l.fc_b = const_param({4 * d}, 0.0f);
    l.proj_w = normal_param({4 * d, d}, rng);
    l.proj_b = const_param({d}, 0.0f);
  }
  lnf_g_ = const_param({d}, 1.0f);
  lnf_b_ = const_param({d}, 0.0f);
  head_ = normal_param({d, config_.vocab_size}, rng);
  collect();
}

void GptModel::collect() {
  params_.clear();
  names_.clear();
  auto add = [&](const Tensor& t, std::string name) {
    params_.push_back(t);
    names_.push_back(std::move(name));
  };
  add(tok_emb_, "tok_emb");
  add(pos_emb_, "pos_emb");
  for (size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "h." + std::to_string(i) + ".";
    add(l.ln1_g, p + "ln1.g");
    add(l.ln1_b, p + "ln1.b");
    add(l.wq, p + "attn.wq");
    add(l.bq, p + "attn.bq");
    add(l.wk, p + "attn.wk");
    add(l.bk, p + "attn.bk");
    add(l.wv, p + "attn.wv");
    add(l.bv, p + "attn.bv");
    add(l.wo, p + "attn.wo");
    add(l.bo, p + "attn.bo");
    add(l.ln2_g, p + "ln2.g");
    add(l.ln2_b, p + "ln2.b");
    add(l.fc_w, p + "mlp.fc_w");
    add(l.fc_b, p + "mlp.fc_b");
    add(l.proj_w, p + "mlp.proj_w");
    add(l.proj_b, p + "mlp.proj_b");
  }
  add(lnf_g_, "ln_f.g");
  add(lnf_b_, "ln_f.b");
  add(head_, "head");
}

GptModel GptModel::clone() const {
  GptModel m;
  m.config_ = config_;
  m.tok_emb_ = tok_emb_.clone();
  m.pos_emb_ = pos_emb_.clone();
  m.layers_.reserve(layers_.size());
  for (const auto& l : layers_) {
    m.layers_.push_back(Layer{l.ln1_g.clone(), l.ln1_b.clone(), l.wq.clone(), l.bq.clone(), l.wk.clone(),
                              l.bk.clone(), l.wv.clone(), l.bv.clone(), l.wo.clone(), l.bo.clone(),
                              l.ln2_g.clone(), l.ln2_b.clone(), l.fc_w.clone(), l.fc_b.clone(),
                              l.proj_w.clone(), l.proj_b.clone()});
  }
  m.lnf_g_ = lnf_g_.clone();
  m.lnf_b_ = lnf_b_.clone();
  m.head_ = head_.clone();
  m.collect();
  return m;
}

void GptModel::copy_parameters_from(const GptModel& other) {
  if (!(other.config_ == config_)) throw UsageError("copy_parameters_from: config mismatch");
  for (size_t i = 0; i < params_.size(); ++i) {
    auto src = other.params_[i].data();
    std::copy(src.begin(), src.end(), params_[i].data().begin());
  }
}

int64_t GptModel::num_parameters() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

std::string GptModel::fingerprint() const {
  std::string bytes = config_.describe();
  for (const auto& p : params_) {
    bytes.append(reinterpret_cast<const char*>(p.ptr()), static_cast<size_t>(p.numel()) * sizeof(float));
  }
  return sha256_hex(bytes);
}

Tensor GptModel::forward(Tape& tape, std::span<const int32_t> ids, int64_t batch, int64_t seq_len, bool train_mode,
                         Rng* rng) const {
  if (batch < 1 || seq_len < 1 || static_cast<int64_t>(ids.size()) != batch * seq_len) {
    throw ShapeError("forward: ids size does not match batch * seq_len");
  }
  if (seq_len > config_.max_len) {
    throw SequenceError("sequence length " + std::to_string(seq_len) + " exceeds max_len " +
                        std::to_string(config_.max_len));
  }
  for (int32_t id : ids) {
    if (id < 0 || id >= config_.vocab_size) {
      throw SequenceError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(config_.vocab_size));
    }
  }
  const float p = train_mode ? config_.dropout : 0.0f;
  if (p > 0.0f && rng == nullptr) throw UsageError("forward: train mode with dropout needs an rng");

  std::vector<int32_t> positions(ids.size());
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < seq_len; ++t) positions[b * seq_len + t] = static_cast<int32_t>(t);
  }
  auto drop = [&](const Tensor& x) { return p > 0.0f ? tape.dropout(x, p, *rng) : x; };

  Tensor x = drop(tape.add(tape.embedding(tok_emb_, ids), tape.embedding(pos_emb_, positions)));
  for (const auto& l : layers_) {
    Tensor a = tape.layer_norm(x, l.ln1_g, l.ln1_b);
    Tensor q = tape.add_bias(tape.matmul(a, l.wq), l.bq);
    Tensor k = tape.add_bias(tape.matmul(a, l.wk), l.bk);
    Tensor v = tape.add_bias(tape.matmul(a, l.wv), l.bv);
    Tensor att = tape.causal_attention(q, k, v, batch, seq_len, config_.n_heads);
    x = tape.add(x, drop(tape.add_bias(tape.matmul(att, l.wo), l.bo)));
    Tensor m = tape.layer_norm(x, l.ln2_g, l.ln2_b);
    Tensor h = tape.gelu(tape.add_bias(tape.matmul(m, l.fc_w), l.fc_b));
    x = tape.add(x, drop(tape.add_bias(tape.matmul(h, l.proj_w), l.proj_b)));
  }
  x = tape.layer_norm(x, lnf_g_, lnf_b_);
  return tape.matmul(x, head_);
}

std::vector<float> GptModel::logits(std::span<const int32_t> ids) const {
  Tape tape(false);
  Tensor out = forward(tape, ids, 1, static_cast<int64_t>(ids.size()), false);
  return std::vector<float>(out.data().begin(), out.data().end());
}

Distribution GptModel::next_key_distribution(std::span<const int32_t> prefix) const {
  if (prefix.empty()) throw SequenceError("next_key_distribution: empty prefix");
  std::vector<float> all = logits(prefix);
  const size_t V = static_cast<size_t>(config_.vocab_size);
  return distribution_from_logits(std::span<const float>(all).subspan(all.size() - V, V));
}

// ------------------------------------------------------------------- Top-K

Distribution distribution_from_logits(std::span<const float> row) {
  Distribution dist(row.size(), 0.0);
  double maxv = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < row.size(); ++j) {
    if (static_cast<TokenId>(j) != kPadId) maxv = std::max(maxv, static_cast<double>(row[j]));
  }
  double denom = 0.0;
  for (size_t j = 0; j < row.size(); ++j) {
    if (static_cast<TokenId>(j) == kPadId) continue;
    dist[j] = std::exp(static_cast<double>(row[j]) - maxv);
    denom += dist[j];
  }
  for (double& p : dist) p /= denom;
  return dist;
}

namespace {

void check_k(std::span<const double> dist, int64_t k, TokenId first_candidate) {
  const int64_t pool = static_cast<int64_t>(dist.size()) - first_candidate;
  if (first_candidate < 0 || pool < 1) throw UsageError("top-k: empty candidate pool");
  if (k < 1 || k > pool) {
    throw UsageError("top-k: K=" + std::to_string(k) + " outside [1, " + std::to_string(pool) + "]");
  }
}

// True when a ranks strictly ahead of b.
bool ranks_before(std::span<const double> dist, TokenId a, TokenId b) {
  return dist[a] > dist[b] || (dist[a] == dist[b] && a < b);
}

}  // namespace

std::vector<TokenId> top_k_set(std::span<const double> dist, int64_t k, TokenId first_candidate) {
  check_k(dist, k, first_candidate);
  std::vector<TokenId> ids(dist.size() - static_cast<size_t>(first_candidate));
  std::iota(ids.begin(), ids.end(), first_candidate);
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(),
                    [&](TokenId a, TokenId b) { return ranks_before(dist, a, b); });
  ids.resize(static_cast<size_t>(k));
  return ids;
}

int64_t candidate_rank(std::span<const double> dist, TokenId key, TokenId first_candidate) {
  const int64_t pool = static_cast<int64_t>(dist.size()) - first_candidate;
  if (key < first_candidate || key >= static_cast<TokenId>(dist.size())) return std::max<int64_t>(pool, 0);
  int64_t rank = 0;
  for (TokenId i = first_candidate; i < static_cast<TokenId>(dist.size()); ++i) {
    if (i != key && ranks_before(dist, i, key)) ++rank;
  }
  return rank;
}

bool in_top_k(std::span<const double> dist, TokenId key, int64_t k, TokenId first_candidate) {
  check_k(dist, k, first_candidate);
  return candidate_rank(dist, key, first_candidate) < k;
}

TopKSample sample_top_k(std::span<const double> dist, int64_t k, Rng& rng, TokenId first_candidate) {
  const std::vector<TokenId> ids = top_k_set(dist, k, first_candidate);
  double total = 0.0;
  for (TokenId id : ids) total += dist[id];
  if (!(total > 0.0)) {
    // Degenerate: every candidate has zero mass; fall back to uniform over the set.
    const TokenId id = ids[rng.uniform_int(ids.size())];
    return {id, -std::log(static_cast<double>(ids.size()))};
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (TokenId id : ids) {
    acc += dist[id];
    if (u < acc && dist[id] > 0.0) return {id, std::log(dist[id] / total)};
  }
  // Rounding left u at the very top; take the last id with mass.
  for (auto it = ids.rbegin(); it != ids.rend(); ++it) {
    if (dist[*it] > 0.0) return {*it, std::log(dist[*it] / total)};
  }
  return {ids.back(), std::log(dist[ids.back()] / total)};
}

// -------------------------------------------------------------- checkpoints

std::string serialize_model(const GptModel& model) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const auto& c = model.config();
  put_u32(out, static_cast<uint32_t>(c.n_layers));
  put_u32(out, static_cast<uint32_t>(c.n_heads));
  put_u32(out, static_cast<uint32_t>(c.d_model));
  put_u32(out, static_cast<uint32_t>(c.vocab_size));
  put_u32(out, static_cast<uint32_t>(c.max_len));
  put_f32(out, c.dropout);
  const auto& params = model.parameters();
  const auto& names = model.parameter_names();
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    put_u32(out, static_cast<uint32_t>(names[i].size()));
    out += names[i];
    put_u32(out, static_cast<uint32_t>(params[i].rank()));
    for (int64_t d : params[i].shape()) put_u32(out, static_cast<uint32_t>(d));
    for (float v : params[i].data()) put_f32(out, v);
  }
  return out;
}

GptModel parse_model(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) {
    throw FormatError("checkpoint: bad magic (not an LGPT file)");
  }
  r.take(4);
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig c;
  c.n_layers = static_cast<int32_t>(r.u32());
  c.n_heads = static_cast<int32_t>(r.u32());
  c.d_model = static_cast<int32_t>(r.u32());
  c.vocab_size = static_cast<int32_t>(r.u32());
  c.max_len = static_cast<int32_t>(r.u32());
  c.dropout = r.f32();
  try {
    c.validate();
  } catch (const UsageError& e) {
    throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
  }

  GptModel m(c, 0);
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < m.names_.size(); ++i) index.emplace(m.names_[i], i);
  const uint32_t count = r.u32();
  if (count != m.params_.size()) {
    throw FormatError("checkpoint: expected " + std::to_string(m.params_.size()) + " tensors, header says " +
                      std::to_string(count));
  }
  std::vector<bool> seen(m.params_.size(), false);
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = r.u32();
    std::string name(r.take(name_len));
    auto it = index.find(name);
    if (it == index.end() || seen[it->second]) throw FormatError("checkpoint: unexpected tensor '" + name + "'");
    seen[it->second] = true;
    Tensor& p = m.params_[it->second];
    const uint32_t rank = r.u32();
    Shape shape;
    for (uint32_t k = 0; k < rank; ++k) shape.push_back(r.u32());
    if (shape != p.shape()) throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    for (float& v : p.data()) v = r.f32();
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  return m;
}

void save_model(const GptModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_model(model));
}

GptModel load_model(const std::filesystem::path& path) {
  try {
    return parse_model(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void check_vocab(const GptModel& model, int32_t corpus_vocab_size) {
  if (model.config().vocab_size != corpus_vocab_size) {
    throw VocabMismatchError("vocabulary size mismatch: model has " + std::to_string(model.config().vocab_size) +
                             ", corpus has " + std::to_string(corpus_vocab_size) + " (diff " +
                             std::to_string(corpus_vocab_size - model.config().vocab_size) + ")");
  }
}

}  // namespace logsentinel
