#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "plugtag/errors.hpp"

namespace plugtag {

// Tensor math runs in double; checkpoint formats store f32 (values are
// rounded through f32 at serialization boundaries).
using Scalar = double;

// Dense row-major tensor of Scalar (double) with an optional gradient buffer.
// Tensors are cheap handles; copying shares the underlying node so that a
// Tape can route gradients back to the original parameter.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<Scalar> data,
                     bool requires_grad = false);
  static Tensor scalar(Scalar v, bool requires_grad = false);
  // i.i.d. Normal(0, stddev) draws from `rng`.
  static Tensor randn(std::vector<int64_t> shape, Scalar stddev,
                      std::mt19937_64& rng, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(p_); }
  const std::vector<int64_t>& shape() const { return p_->shape; }
  int64_t ndim() const { return static_cast<int64_t>(p_->shape.size()); }
  int64_t dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int64_t rows() const { return ndim() >= 1 ? dim(0) : 1; }
  int64_t cols() const { return ndim() >= 2 ? dim(1) : 1; }
  int64_t size() const { return static_cast<int64_t>(p_->value.size()); }

  std::vector<Scalar>& value() { return p_->value; }
  const std::vector<Scalar>& value() const { return p_->value; }
  Scalar* data() { return p_->value.data(); }
  const Scalar* data() const { return p_->value.data(); }

  bool requires_grad() const { return p_->requires_grad; }
  // True when this tensor participates in autodiff (a trainable leaf or a
  // value computed from one). Non-taped tensors never receive gradient.
  bool taped() const { return p_->taped; }

  // Gradient buffer, allocated (zero-filled) on first access. Only valid on
  // taped tensors; accessing it on a frozen tensor is a contract error.
  std::vector<Scalar>& grad();
  bool has_grad() const { return !p_->grad.empty(); }
  void zero_grad() { p_->grad.assign(p_->grad.size(), 0.0f); }

  Scalar item() const;
  Tensor clone() const;  // deep copy, detached from any tape
  bool same_node(const Tensor& o) const { return p_ == o.p_; }

 private:
  struct Node {
    std::vector<int64_t> shape;
    std::vector<Scalar> value;
    std::vector<Scalar> grad;
    bool requires_grad = false;
    bool taped = false;
  };
  std::shared_ptr<Node> p_;
  friend class Tape;
  static Tensor make(std::vector<int64_t> shape, bool taped);
};

bool same_shape(const Tensor& a, const Tensor& b);
bool same_values(const Tensor& a, const Tensor& b);  // bit equality

// Records primitive operations in execution order; backward() replays them
// in reverse and accumulates gradients into every taped input.
//
// Policy: backward() consumes the recorded nodes (the tape resets and can be
// reused for the next forward pass). Gradients accumulate across calls until
// zero_grad() on the parameters.
class Tape {
 public:
  // out = a(m,k) * b(k,n)
  Tensor matmul(const Tensor& a, const Tensor& b);
  // out = a(m,k) * b(n,k)^T
  Tensor matmul_nt(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);       // same shape
  Tensor add_rowvec(const Tensor& a, const Tensor& v);  // broadcast v over rows
  Tensor mul(const Tensor& a, const Tensor& b);       // elementwise
  Tensor scale(const Tensor& a, Scalar s);
  Tensor sum(const Tensor& a);  // -> scalar
  Tensor softmax_rows(const Tensor& m);
  Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Scalar eps = 1e-5);
  Tensor gelu(const Tensor& x);  // tanh approximation, constants documented in impl
  Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
  // Copy of `base` with row ids[j] replaced by deltas row j; gradient for a
  // replaced row flows to `deltas`, never to `base`.
  Tensor patch_rows(const Tensor& base, const std::vector<int>& ids,
                    const Tensor& deltas);
  Tensor concat_rows(const Tensor& a, const Tensor& b);
  Tensor slice_rows(const Tensor& a, int64_t off, int64_t count);
  Tensor slice_cols(const Tensor& a, int64_t off, int64_t count);
  Tensor concat_cols(const std::vector<Tensor>& parts);
  // Sum over rows listed in `row_mask` (all rows when empty) of
  // -log softmax(logits[r])[targets[r]].
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                       const std::vector<int>& row_mask = {});

  void backward(const Tensor& loss);
  size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
  Tensor result(std::vector<int64_t> shape, bool taped);
  void record(std::function<void()> back) { nodes_.push_back(std::move(back)); }
};

// Max relative error between analytic gradients of f and central finite
// differences, sampled over up to `coords_per_param` coordinates of each
// param. f is evaluated twice up front; a value mismatch is a contract error
// (non-deterministic function).
double grad_check(const std::function<Tensor(Tape&)>& f,
                  const std::vector<Tensor>& params, double eps,
                  int coords_per_param = 12, uint64_t seed = 17);

}  // namespace plugtag
