#ifndef LOGSENTINEL_OPTIM_H_
#define LOGSENTINEL_OPTIM_H_

#include <cstdint>
#include <span>
#include <vector>

#include "logsentinel/tensor.h"

namespace logsentinel {

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First/second moment buffers, one per parameter, plus the shared step count.
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// One bias-corrected Adam update using each parameter's accumulated gradient.
// An empty state is initialized on first use; a state built for a different
// parameter list throws ShapeError. Parameters without a gradient are skipped
// (but still count toward the step).
void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options);

// Scales all gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

void zero_grads(std::span<Tensor> params);

}  // namespace logsentinel

#endif  // LOGSENTINEL_OPTIM_H_
