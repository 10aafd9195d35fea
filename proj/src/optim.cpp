#include "plugtag/optim.hpp"

namespace plugtag {

double AdamW::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (auto& p : params_) {
    if (!p.has_grad()) continue;
    for (double g : const_cast<Tensor&>(p).grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = static_cast<double>(max_norm / norm);
    for (auto& p : params_) {
      if (!p.has_grad()) continue;
      for (double& g : const_cast<Tensor&>(p).grad()) g *= s;
    }
  }
  return norm;
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0f - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0f - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = const_cast<Tensor&>(params_[i]);
    if (!p.has_grad()) continue;
    auto& g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    double* w = p.data();
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0f - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0f - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * w[j]);
    }
  }
}

}  // namespace plugtag
