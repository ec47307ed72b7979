#include "logsentinel/optim.h"

#include <cmath>
#include <string>

namespace logsentinel {

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options) {
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
      state.v.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) + " buffers for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != static_cast<size_t>(params[i].numel()) ||
        state.v[i].size() != static_cast<size_t>(params[i].numel())) {
      throw ShapeError("adam_step: state shape mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(static_cast<double>(options.beta1), static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(options.beta2), static_cast<double>(state.step));
  const float step_size = static_cast<float>(options.lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float b1 = options.beta1, b2 = options.beta2;

  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + options.eps);
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float factor = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (float& g : p.grad()) g *= factor;
    }
  }
  return norm;
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace logsentinel
