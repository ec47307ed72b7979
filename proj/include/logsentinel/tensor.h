#ifndef LOGSENTINEL_TENSOR_H_
#define LOGSENTINEL_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "logsentinel/common.h"

namespace logsentinel {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);

// Dense row-major float32 tensor with an optional gradient buffer. Copies are
// shallow handles onto the same storage, like a parameter reference.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t rank() const { return impl_->shape.size(); }
  int64_t dim(size_t axis) const { return impl_->shape.at(axis); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  // Handle semantics: a const Tensor still refers to mutable storage.
  std::span<float> data() const { return impl_->data; }
  float* ptr() const { return impl_->data.data(); }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Allocates a zero gradient buffer on first use.
  std::span<float> grad() const;
  void zero_grad() const;

  // Deep copy of shape, data and requires_grad; the gradient is not copied.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Records differentiable operations in execution order. backward() replays
// the recorded closures in exact reverse order; gradients accumulate
// additively into leaves. A non-recording tape runs the same kernels without
// saving anything, which is what evaluation and rollout scoring use.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  size_t size() const { return backward_.size(); }

  // loss must be a scalar produced on this tape. Intermediate gradients are
  // reset first, so repeated calls accumulate only into leaves.
  void backward(const Tensor& loss);

  // [m,k] x [k,n] -> [m,n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  // x[..., n] + bias[n]
  Tensor add_bias(const Tensor& x, const Tensor& bias);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, float factor);
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor reshape(const Tensor& x, Shape shape);

  // Row gather: table[V,d], ids -> [ids.size(), d].
  Tensor embedding(const Tensor& table, std::span<const int32_t> ids);
  // Normalizes over the last axis.
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);
  // tanh approximation used by GPT-2.
  Tensor gelu(const Tensor& x);
  // Inverted dropout; identity when p == 0.
  Tensor dropout(const Tensor& x, float p, Rng& rng);
  // Multi-head causal self-attention over q, k, v of shape [batch*seq_len, d].
  // Position t attends to positions <= t of its own sequence.
  Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t batch, int64_t seq_len,
                          int64_t n_heads);
  // Softmax over the last axis with max subtraction.
  Tensor softmax_rows(const Tensor& x);
  // Mean negative log-likelihood of targets under softmax(logits) over the
  // rows whose target != ignore_id. Returns 0 when every row is ignored.
  Tensor cross_entropy(const Tensor& logits, std::span<const int32_t> targets, int32_t ignore_id);
  // log softmax(logits[rows[i]])[ids[i]] for each i, with `excluded` columns
  // removed from the normalization. Output shape [rows.size()].
  Tensor gather_log_softmax(const Tensor& logits, std::span<const int64_t> rows, std::span<const int32_t> ids,
                            std::span<const int32_t> excluded);
  // PPO surrogate, averaged over steps:
  //   ratio = exp(logp_new - logp_old)
  //   unclipped: ratio * reward
  //   clipped:   min(ratio * reward, clamp(ratio, 1 - eps, 1 + eps) * reward)
  Tensor ppo_surrogate(const Tensor& logp_new, std::span<const float> logp_old, std::span<const float> rewards,
                       std::optional<float> clip_eps);

 private:
  Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs);
  void record(const Tensor& out, std::function<void()> fn);

  bool record_;
  std::vector<std::function<void()>> backward_;
  std::vector<Tensor> outputs_;
};

}  // namespace logsentinel

#endif  // LOGSENTINEL_TENSOR_H_
