#pragma once

#include <cmath>
#include <vector>

#include "plugtag/tensor.hpp"

namespace plugtag {

// AdamW: Adam with decoupled weight decay. State exists only for the tensors
// handed in, so memory stays proportional to the trainable set.
class AdamW {
 public:
  explicit AdamW(std::vector<Tensor> params, double weight_decay = 0.01f,
                 double beta1 = 0.9f, double beta2 = 0.999f, double eps = 1e-8f)
      : params_(std::move(params)),
        weight_decay_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
  }

  // Global-norm gradient clipping; returns the pre-clip norm.
  double clip_grad_norm(double max_norm);

  void step(double lr);
  void zero_grad() {
    for (auto& p : params_) const_cast<Tensor&>(p).zero_grad();
  }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double weight_decay_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// lr schedule: linear decay to zero over total_steps, no warmup.
inline double linear_decay_lr(double base_lr, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  const double remaining =
      static_cast<double>(total_steps - step) / static_cast<double>(total_steps);
  return base_lr * (remaining > 0.0f ? remaining : 0.0f);
}

}  // namespace plugtag
