#include "logsentinel/tensor.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace logsentinel {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

int64_t last_dim(const Tensor& t) { return t.shape().back(); }
int64_t leading_rows(const Tensor& t) { return t.numel() / std::max<int64_t>(1, last_dim(t)); }

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

// ------------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

std::span<float> Tensor::grad() const {
  if (impl_->grad.empty() && !impl_->data.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::zero_grad() const { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f); }

Tensor Tensor::clone() const {
  Tensor t = from_data(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

// --------------------------------------------------------------------- Tape

Tensor Tape::make_output(Shape shape, std::initializer_list<const Tensor*> inputs) {
  bool needs = false;
  if (record_) {
    for (const Tensor* in : inputs) needs = needs || in->requires_grad();
  }
  return Tensor::zeros(std::move(shape), needs);
}

void Tape::record(const Tensor& out, std::function<void()> fn) {
  if (!out.requires_grad()) return;
  backward_.push_back(std::move(fn));
  outputs_.push_back(out);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward: root must be a scalar");
  if (!record_ || !loss.requires_grad()) throw Error("backward: loss was not recorded on this tape");
  bool on_tape = false;
  for (auto& t : outputs_) {
    t.zero_grad();
    on_tape = on_tape || t.same_storage(loss);
  }
  if (!on_tape) throw Error("backward: loss was not recorded on this tape");
  Tensor root = loss;
  root.grad()[0] = 1.0f;
  for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = make_output({m, n}, {&a, &b});
  MatMap(out.ptr(), m, n).noalias() = ConstMatMap(a.ptr(), m, k) * ConstMatMap(b.ptr(), k, n);
  record(out, [a, b, out, m, k, n]() mutable {
    ConstMatMap dc(out.grad().data(), m, n);
    if (a.requires_grad()) MatMap(a.grad().data(), m, k).noalias() += dc * ConstMatMap(b.ptr(), k, n).transpose();
    if (b.requires_grad()) MatMap(b.grad().data(), k, n).noalias() += ConstMatMap(a.ptr(), m, k).transpose() * dc;
  });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_output(a.shape(), {&a, &b});
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  record(out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
  return out;
}

Tensor Tape::add_bias(const Tensor& x, const Tensor& bias) {
  require(x.rank() >= 1 && bias.rank() == 1 && bias.dim(0) == last_dim(x),
          "add_bias: shape mismatch " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  const int64_t n = bias.dim(0), rows = leading_rows(x);
  Tensor out = make_output(x.shape(), {&x, &bias});
  const float* xp = x.ptr();
  const float* bp = bias.ptr();
  float* op = out.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t j = 0; j < n; ++j) op[r * n + j] = xp[r * n + j] + bp[j];
  }
  record(out, [x, bias, out, n, rows]() mutable {
    auto g = out.grad();
    if (x.requires_grad()) {
      auto gx = x.grad();
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bias.requires_grad()) {
      auto gb = bias.grad();
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    }
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = make_output(a.shape(), {&a, &b});
  auto o = out.data();
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  record(out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad();
      auto y = b.data();
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad();
      auto x = a.data();
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
  return out;
}

Tensor Tape::scale(const Tensor& x, float factor) {
  Tensor out = make_output(x.shape(), {&x});
  auto o = out.data();
  auto in = x.data();
  for (size_t i = 0; i < o.size(); ++i) o[i] = in[i] * factor;
  record(out, [x, out, factor]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  Tensor out = make_output({}, {&x});
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  out.data()[0] = static_cast<float>(acc);
  record(out, [x, out]() mutable {
    const float g = out.grad()[0];
    for (float& gx : x.grad()) gx += g;
  });
  return out;
}

Tensor Tape::mean(const Tensor& x) {
  require(x.numel() > 0, "mean of empty tensor");
  return scale(sum(x), 1.0f / static_cast<float>(x.numel()));
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out = make_output(std::move(shape), {&x});
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  record(out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor Tape::embedding(const Tensor& table, std::span<const int32_t> ids) {
  require(table.rank() == 2, "embedding: table must be 2-D");
  const int64_t vocab = table.dim(0), d = table.dim(1);
  const int64_t n = static_cast<int64_t>(ids.size());
  for (int32_t id : ids) require(id >= 0 && id < vocab, "embedding: id " + std::to_string(id) + " out of range");
  Tensor out = make_output({n, d}, {&table});
  const float* tp = table.ptr();
  float* op = out.ptr();
  for (int64_t i = 0; i < n; ++i) std::copy_n(tp + ids[i] * d, d, op + i * d);
  std::vector<int32_t> saved(ids.begin(), ids.end());
  record(out, [table, out, saved = std::move(saved), d]() mutable {
    auto g = out.grad();
    auto gt = table.grad();
    for (size_t i = 0; i < saved.size(); ++i) {
      float* dst = gt.data() + saved[i] * d;
      const float* src = g.data() + static_cast<int64_t>(i) * d;
      for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  require(x.rank() >= 1 && gain.rank() == 1 && bias.rank() == 1 && gain.dim(0) == last_dim(x) &&
              bias.dim(0) == last_dim(x),
          "layer_norm: shape mismatch " + shape_str(x.shape()));
  const int64_t n = last_dim(x), rows = leading_rows(x);
  require(n >= 1, "layer_norm: normalized axis must be non-empty");
  Tensor out = make_output(x.shape(), {&x, &gain, &bias});
  // Statistics and the backward pass run in double: for short rows the input
  // gradient is a small difference of O(1) terms and float loses it.
  std::vector<double> xhat(static_cast<size_t>(x.numel()));
  std::vector<double> rstd(static_cast<size_t>(rows));
  const float* xp = x.ptr();
  const float* gp = gain.ptr();
  const float* bp = bias.ptr();
  float* op = out.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xp + r * n;
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[r] = rs;
    for (int64_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * rs;
      xhat[r * n + j] = h;
      op[r * n + j] = static_cast<float>(h * gp[j] + bp[j]);
    }
  }
  record(out, [x, gain, bias, out, xhat = std::move(xhat), rstd = std::move(rstd), n, rows]() mutable {
    auto g = out.grad();
    const float* gp = gain.ptr();
    if (gain.requires_grad() || bias.requires_grad()) {
      auto gg = gain.requires_grad() ? gain.grad() : std::span<float>();
      auto gb = bias.requires_grad() ? bias.grad() : std::span<float>();
      for (int64_t j = 0; j < n; ++j) {
        double sg = 0.0, sb = 0.0;
        for (int64_t r = 0; r < rows; ++r) {
          sg += g[r * n + j] * xhat[r * n + j];
          sb += g[r * n + j];
        }
        if (!gg.empty()) gg[j] += static_cast<float>(sg);
        if (!gb.empty()) gb[j] += static_cast<float>(sb);
      }
    }
    if (x.requires_grad()) {
      auto gx = x.grad();
      for (int64_t r = 0; r < rows; ++r) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int64_t j = 0; j < n; ++j) {
          const double dxh = static_cast<double>(g[r * n + j]) * gp[j];
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat[r * n + j];
        }
        mean_dxhat /= static_cast<double>(n);
        mean_dxhat_xhat /= static_cast<double>(n);
        for (int64_t j = 0; j < n; ++j) {
          const double dxh = static_cast<double>(g[r * n + j]) * gp[j];
          gx[r * n + j] += static_cast<float>(rstd[r] * (dxh - mean_dxhat - xhat[r * n + j] * mean_dxhat_xhat));
        }
      }
    }
  });
  return out;
}

Tensor Tape::gelu(const Tensor& x) {
  // Evaluated in double: for |x| above ~3, tanh is within float epsilon of
  // +-1 and both 1 + t and 1 - t^2 cancel to nothing in float.
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  Tensor out = make_output(x.shape(), {&x});
  auto in = x.data();
  auto o = out.data();
  for (size_t i = 0; i < o.size(); ++i) {
    const double v = in[i];
    o[i] = static_cast<float>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  record(out, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    auto in = x.data();
    for (size_t i = 0; i < g.size(); ++i) {
      const double v = in[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      gx[i] += static_cast<float>(g[i] * (0.5 * (1.0 + t) + 0.5 * v * dt));
    }
  });
  return out;
}

Tensor Tape::dropout(const Tensor& x, float p, Rng& rng) {
  require(p >= 0.0f && p < 1.0f, "dropout: p must be in [0, 1)");
  if (p == 0.0f) return x;
  Tensor out = make_output(x.shape(), {&x});
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> mask(static_cast<size_t>(x.numel()));
  auto in = x.data();
  auto o = out.data();
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0f : keep_scale;
    o[i] = in[i] * mask[i];
  }
  record(out, [x, out, mask = std::move(mask)]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
  return out;
}

Tensor Tape::causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int64_t batch, int64_t seq_len,
                              int64_t n_heads) {
  require(q.rank() == 2 && q.shape() == k.shape() && q.shape() == v.shape(), "attention: q/k/v shape mismatch");
  require(q.dim(0) == batch * seq_len, "attention: rows != batch * seq_len");
  const int64_t d = q.dim(1);
  require(n_heads >= 1 && d % n_heads == 0, "attention: d_model not divisible by n_heads");
  const int64_t hd = d / n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const int64_t T = seq_len;

  Tensor out = make_output({batch * T, d}, {&q, &k, &v});
  std::vector<float> probs(static_cast<size_t>(batch * n_heads * T * T), 0.0f);
  const float* qp = q.ptr();
  const float* kp = k.ptr();
  const float* vp = v.ptr();
  float* op = out.ptr();
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t h = 0; h < n_heads; ++h) {
      for (int64_t t = 0; t < T; ++t) {
        const float* qrow = qp + (b * T + t) * d + h * hd;
        float* prow = probs.data() + ((b * n_heads + h) * T + t) * T;
        float maxv = -std::numeric_limits<float>::infinity();
        for (int64_t j = 0; j <= t; ++j) {
          const float* krow = kp + (b * T + j) * d + h * hd;
          float s = 0.0f;
          for (int64_t c = 0; c < hd; ++c) s += qrow[c] * krow[c];
          s *= scale;
          prow[j] = s;
          maxv = std::max(maxv, s);
        }
        float denom = 0.0f;
        for (int64_t j = 0; j <= t; ++j) {
          prow[j] = std::exp(prow[j] - maxv);
          denom += prow[j];
        }
        const float inv = 1.0f / denom;
        float* orow = op + (b * T + t) * d + h * hd;
        for (int64_t j = 0; j <= t; ++j) {
          prow[j] *= inv;
          const float* vrow = vp + (b * T + j) * d + h * hd;
          for (int64_t c = 0; c < hd; ++c) orow[c] += prow[j] * vrow[c];
        }
      }
    }
  }
  record(out, [q, k, v, out, probs = std::move(probs), batch, T, n_heads, hd, d, scale]() mutable {
    auto g = out.grad();
    const float* qp = q.ptr();
    const float* kp = k.ptr();
    const float* vp = v.ptr();
    float* gq = q.requires_grad() ? q.grad().data() : nullptr;
    float* gk = k.requires_grad() ? k.grad().data() : nullptr;
    float* gv = v.requires_grad() ? v.grad().data() : nullptr;
    std::vector<float> dp(static_cast<size_t>(T));
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t h = 0; h < n_heads; ++h) {
        for (int64_t t = 0; t < T; ++t) {
          const float* prow = probs.data() + ((b * n_heads + h) * T + t) * T;
          const float* grow = g.data() + (b * T + t) * d + h * hd;
          float dot = 0.0f;
          for (int64_t j = 0; j <= t; ++j) {
            const float* vrow = vp + (b * T + j) * d + h * hd;
            float s = 0.0f;
            for (int64_t c = 0; c < hd; ++c) s += grow[c] * vrow[c];
            dp[j] = s;
            dot += prow[j] * s;
            if (gv) {
              float* gvrow = gv + (b * T + j) * d + h * hd;
              for (int64_t c = 0; c < hd; ++c) gvrow[c] += prow[j] * grow[c];
            }
          }
          const float* qrow = qp + (b * T + t) * d + h * hd;
          for (int64_t j = 0; j <= t; ++j) {
            const float ds = prow[j] * (dp[j] - dot) * scale;
            const float* krow = kp + (b * T + j) * d + h * hd;
            if (gq) {
              float* gqrow = gq + (b * T + t) * d + h * hd;
              for (int64_t c = 0; c < hd; ++c) gqrow[c] += ds * krow[c];
            }
            if (gk) {
              float* gkrow = gk + (b * T + j) * d + h * hd;
              for (int64_t c = 0; c < hd; ++c) gkrow[c] += ds * qrow[c];
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor Tape::softmax_rows(const Tensor& x) {
  require(x.rank() >= 1 && last_dim(x) >= 1, "softmax_rows: last axis must be non-empty");
  const int64_t n = last_dim(x), rows = leading_rows(x);
  for (float v : x.data()) {
    if (!std::isfinite(v)) throw NumericalError("softmax_rows: non-finite input");
  }
  Tensor out = make_output(x.shape(), {&x});
  const float* xp = x.ptr();
  float* op = out.ptr();
  for (int64_t r = 0; r < rows; ++r) {
    const float* row = xp + r * n;
    float* orow = op + r * n;
    const float maxv = *std::max_element(row, row + n);
    float denom = 0.0f;
    for (int64_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - maxv);
      denom += orow[j];
    }
    for (int64_t j = 0; j < n; ++j) orow[j] /= denom;
  }
  record(out, [x, out, n, rows]() mutable {
    auto g = out.grad();
    auto gx = x.grad();
    const float* y = out.ptr();
    for (int64_t r = 0; r < rows; ++r) {
      float dot = 0.0f;
      for (int64_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (int64_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const int32_t> targets, int32_t ignore_id) {
  require(logits.rank() == 2, "cross_entropy: logits must be [N, V]");
  const int64_t rows = logits.dim(0), V = logits.dim(1);
  require(static_cast<int64_t>(targets.size()) == rows, "cross_entropy: targets size != rows");
  for (int32_t t : targets) {
    if (t != ignore_id && (t < 0 || t >= V)) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " out of range [0, " + std::to_string(V) + ")");
    }
  }
  Tensor out = make_output({}, {&logits});
  std::vector<float> probs(static_cast<size_t>(logits.numel()));
  const float* lp = logits.ptr();
  double total = 0.0;
  int64_t count = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (targets[r] == ignore_id) continue;
    const float* row = lp + r * V;
    float* prow = probs.data() + r * V;
    const float maxv = *std::max_element(row, row + V);
    float denom = 0.0f;
    for (int64_t j = 0; j < V; ++j) {
      prow[j] = std::exp(row[j] - maxv);
      denom += prow[j];
    }
    for (int64_t j = 0; j < V; ++j) prow[j] /= denom;
    total += static_cast<double>(std::log(denom) + maxv - row[targets[r]]);
    ++count;
  }
  out.data()[0] = count ? static_cast<float>(total / static_cast<double>(count)) : 0.0f;
  std::vector<int32_t> saved(targets.begin(), targets.end());
  record(out, [logits, out, probs = std::move(probs), saved = std::move(saved), ignore_id, rows, V, count]() mutable {
    if (count == 0) return;
    const float g = out.grad()[0] / static_cast<float>(count);
    auto gl = logits.grad();
    for (int64_t r = 0; r < rows; ++r) {
      if (saved[r] == ignore_id) continue;
      const float* prow = probs.data() + r * V;
      float* grow = gl.data() + r * V;
      for (int64_t j = 0; j < V; ++j) grow[j] += g * prow[j];
      grow[saved[r]] -= g;
    }
  });
  return out;
}

Tensor Tape::gather_log_softmax(const Tensor& logits, std::span<const int64_t> rows, std::span<const int32_t> ids,
                                std::span<const int32_t> excluded) {
  require(logits.rank() == 2, "gather_log_softmax: logits must be [N, V]");
  require(rows.size() == ids.size(), "gather_log_softmax: rows/ids size mismatch");
  const int64_t N = logits.dim(0), V = logits.dim(1);
  std::vector<uint8_t> keep(static_cast<size_t>(V), 1);
  for (int32_t e : excluded) {
    require(e >= 0 && e < V, "gather_log_softmax: excluded id out of range");
    keep[e] = 0;
  }
  const int64_t M = static_cast<int64_t>(rows.size());
  Tensor out = make_output({M}, {&logits});
  std::vector<float> probs(static_cast<size_t>(M * V), 0.0f);
  const float* lp = logits.ptr();
  for (int64_t i = 0; i < M; ++i) {
    require(rows[i] >= 0 && rows[i] < N, "gather_log_softmax: row out of range");
    require(ids[i] >= 0 && ids[i] < V && keep[ids[i]], "gather_log_softmax: id out of range or excluded");
    const float* row = lp + rows[i] * V;
    float maxv = -std::numeric_limits<float>::infinity();
    for (int64_t j = 0; j < V; ++j) {
      if (keep[j]) maxv = std::max(maxv, row[j]);
    }
    float denom = 0.0f;
    float* prow = probs.data() + i * V;
    for (int64_t j = 0; j < V; ++j) {
      if (!keep[j]) continue;
      prow[j] = std::exp(row[j] - maxv);
      denom += prow[j];
    }
    for (int64_t j = 0; j < V; ++j) prow[j] /= denom;
    out.data()[i] = row[ids[i]] - maxv - std::log(denom);
  }
  std::vector<int64_t> saved_rows(rows.begin(), rows.end());
  std::vector<int32_t> saved_ids(ids.begin(), ids.end());
  record(out, [logits, out, probs = std::move(probs), saved_rows = std::move(saved_rows),
               saved_ids = std::move(saved_ids), M, V]() mutable {
    auto g = out.grad();
    auto gl = logits.grad();
    for (int64_t i = 0; i < M; ++i) {
      float* grow = gl.data() + saved_rows[i] * V;
      const float* prow = probs.data() + i * V;
      for (int64_t j = 0; j < V; ++j) grow[j] -= g[i] * prow[j];
      grow[saved_ids[i]] += g[i];
    }
  });
  return out;
}

Tensor Tape::ppo_surrogate(const Tensor& logp_new, std::span<const float> logp_old, std::span<const float> rewards,
                           std::optional<float> clip_eps) {
  require(logp_new.rank() == 1, "ppo_surrogate: logp_new must be 1-D");
  const int64_t M = logp_new.dim(0);
  require(M > 0, "ppo_surrogate: no steps");
  require(static_cast<int64_t>(logp_old.size()) == M && static_cast<int64_t>(rewards.size()) == M,
          "ppo_surrogate: size mismatch");
  Tensor out = make_output({}, {&logp_new});
  // d objective / d logp_new for each step, already divided by M.
  std::vector<float> dlogp(static_cast<size_t>(M));
  double total = 0.0;
  for (int64_t i = 0; i < M; ++i) {
    const float ratio = std::exp(logp_new.data()[i] - logp_old[i]);
    if (!std::isfinite(ratio)) throw NumericalError("ppo_surrogate: non-finite probability ratio");
    const float plain = ratio * rewards[i];
    float value = plain;
    bool plain_active = true;
    if (clip_eps) {
      const float clipped = std::clamp(ratio, 1.0f - *clip_eps, 1.0f + *clip_eps) * rewards[i];
      if (clipped < plain) {
        value = clipped;
        plain_active = false;
      }
    }
    total += value;
    dlogp[i] = plain_active ? plain / static_cast<float>(M) : 0.0f;
  }
  out.data()[0] = static_cast<float>(total / static_cast<double>(M));
  record(out, [logp_new, out, dlogp = std::move(dlogp)]() mutable {
    const float g = out.grad()[0];
    auto gl = logp_new.grad();
    for (size_t i = 0; i < dlogp.size(); ++i) gl[i] += g * dlogp[i];
  });
  return out;
}

}  // namespace logsentinel
