#include "plugtag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace plugtag {

namespace {

int64_t numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void require_2d(const Tensor& t, const char* who) {
  if (t.ndim() != 2) throw ShapeError(std::string(who) + ": expected 2-D input");
}

// Gradient of `t` if it is taped and has received any upstream gradient.
const std::vector<Scalar>* upstream(const Tensor& t) {
  if (!t.taped() || !t.has_grad()) return nullptr;
  return &const_cast<Tensor&>(t).grad();
}

std::vector<Scalar>* sink(Tensor& t) {
  if (!t.taped()) return nullptr;
  return &t.grad();
}

constexpr Scalar kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr Scalar kGeluC1 = 0.044715;

}  // namespace

Tensor Tensor::make(std::vector<int64_t> shape, bool taped) {
  Tensor t;
  t.p_ = std::make_shared<Node>();
  t.p_->shape = std::move(shape);
  t.p_->value.assign(static_cast<size_t>(numel(t.p_->shape)), 0.0f);
  t.p_->taped = taped;
  return t;
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  Tensor t = make(std::move(shape), requires_grad);
  t.p_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<Scalar> data,
                    bool requires_grad) {
  if (numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("Tensor::from: shape does not match data length");
  }
  Tensor t = make(std::move(shape), requires_grad);
  t.p_->requires_grad = requires_grad;
  t.p_->value = std::move(data);
  return t;
}

Tensor Tensor::scalar(Scalar v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int64_t> shape, Scalar stddev,
                     std::mt19937_64& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::normal_distribution<Scalar> dist(0.0, stddev);
  // Round through f32 so freshly initialized tensors survive checkpoint
  // round-trips bit for bit.
  for (auto& v : t.value()) v = static_cast<float>(dist(rng));
  return t;
}

std::vector<Scalar>& Tensor::grad() {
  if (!p_->taped) {
    throw ContractError("gradient requested on a non-taped tensor");
  }
  if (p_->grad.empty()) p_->grad.assign(p_->value.size(), 0.0f);
  return p_->grad;
}

Scalar Tensor::item() const {
  if (size() != 1) throw ShapeError("item(): tensor is not a scalar");
  return p_->value[0];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.p_ = std::make_shared<Node>();
  t.p_->shape = p_->shape;
  t.p_->value = p_->value;
  t.p_->requires_grad = p_->requires_grad;
  t.p_->taped = p_->taped;
  return t;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

bool same_values(const Tensor& a, const Tensor& b) {
  return same_shape(a, b) &&
         std::memcmp(a.data(), b.data(), sizeof(Scalar) * a.size()) == 0;
}

Tensor Tape::result(std::vector<int64_t> shape, bool taped) {
  return Tensor::make(std::move(shape), taped);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: inner dimensions differ");
  bool taped = a.taped() || b.taped();
  Tensor out = result({m, n}, taped);
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  Scalar* pc = out.data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const Scalar av = pa[i * k + kk];
      const Scalar* brow = pb + kk * n;
      Scalar* crow = pc + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  if (taped) {
    record([a, b, out, m, k, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a))) {
        // da += g * b^T
        for (int64_t i = 0; i < m; ++i)
          for (int64_t kk = 0; kk < k; ++kk) {
            Scalar acc = 0.0f;
            const Scalar* grow = g->data() + i * n;
            const Scalar* brow = b.data() + kk * n;
            for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            (*da)[i * k + kk] += acc;
          }
      }
      if (auto* db = sink(const_cast<Tensor&>(b))) {
        // db += a^T * g
        for (int64_t i = 0; i < m; ++i) {
          const Scalar* grow = g->data() + i * n;
          for (int64_t kk = 0; kk < k; ++kk) {
            const Scalar av = a.data()[i * k + kk];
            Scalar* drow = db->data() + kk * n;
            for (int64_t j = 0; j < n; ++j) drow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) throw ShapeError("matmul_nt: inner dimensions differ");
  bool taped = a.taped() || b.taped();
  Tensor out = result({m, n}, taped);
  for (int64_t i = 0; i < m; ++i) {
    const Scalar* arow = a.data() + i * k;
    Scalar* crow = out.data() + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const Scalar* brow = b.data() + j * k;
      Scalar acc = 0.0f;
      for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  if (taped) {
    record([a, b, out, m, k, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a))) {
        // da += g * b
        for (int64_t i = 0; i < m; ++i) {
          const Scalar* grow = g->data() + i * n;
          Scalar* drow = da->data() + i * k;
          for (int64_t j = 0; j < n; ++j) {
            const Scalar gv = grow[j];
            const Scalar* brow = b.data() + j * k;
            for (int64_t kk = 0; kk < k; ++kk) drow[kk] += gv * brow[kk];
          }
        }
      }
      if (auto* db = sink(const_cast<Tensor&>(b))) {
        // db += g^T * a
        for (int64_t i = 0; i < m; ++i) {
          const Scalar* grow = g->data() + i * n;
          const Scalar* arow = a.data() + i * k;
          for (int64_t j = 0; j < n; ++j) {
            const Scalar gv = grow[j];
            Scalar* drow = db->data() + j * k;
            for (int64_t kk = 0; kk < k; ++kk) drow[kk] += gv * arow[kk];
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw ShapeError("add: shape mismatch");
  bool taped = a.taped() || b.taped();
  Tensor out = result(a.shape(), taped);
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (taped) {
    record([a, b, out, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < n; ++i) (*da)[i] += (*g)[i];
      if (auto* db = sink(const_cast<Tensor&>(b)))
        for (int64_t i = 0; i < n; ++i) (*db)[i] += (*g)[i];
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& a, const Tensor& v) {
  require_2d(a, "add_rowvec");
  if (v.size() != a.dim(1)) throw ShapeError("add_rowvec: vector length mismatch");
  bool taped = a.taped() || v.taped();
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = result({m, n}, taped);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.data()[i * n + j] = a.data()[i * n + j] + v.data()[j];
  if (taped) {
    record([a, v, out, m, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < m * n; ++i) (*da)[i] += (*g)[i];
      if (auto* dv = sink(const_cast<Tensor&>(v)))
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) (*dv)[j] += (*g)[i * n + j];
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw ShapeError("mul: shape mismatch");
  bool taped = a.taped() || b.taped();
  Tensor out = result(a.shape(), taped);
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (taped) {
    record([a, b, out, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < n; ++i) (*da)[i] += (*g)[i] * b.data()[i];
      if (auto* db = sink(const_cast<Tensor&>(b)))
        for (int64_t i = 0; i < n; ++i) (*db)[i] += (*g)[i] * a.data()[i];
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, Scalar s) {
  bool taped = a.taped();
  Tensor out = result(a.shape(), taped);
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  if (taped) {
    record([a, out, s, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < n; ++i) (*da)[i] += (*g)[i] * s;
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  bool taped = a.taped();
  Tensor out = result({}, taped);
  double acc = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  out.data()[0] = static_cast<Scalar>(acc);
  if (taped) {
    record([a, out]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (auto& dv : *da) dv += (*g)[0];
    });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& m) {
  require_2d(m, "softmax_rows");
  const int64_t r = m.dim(0), c = m.dim(1);
  for (int64_t i = 0; i < m.size(); ++i) {
    if (std::isnan(m.data()[i])) throw NumericError("softmax_rows: NaN input");
  }
  bool taped = m.taped();
  Tensor out = result({r, c}, taped);
  for (int64_t i = 0; i < r; ++i) {
    const Scalar* x = m.data() + i * c;
    Scalar* y = out.data() + i * c;
    Scalar mx = x[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    const Scalar inv = static_cast<Scalar>(1.0 / z);
    for (int64_t j = 0; j < c; ++j) y[j] *= inv;
  }
  if (taped) {
    record([m, out, r, c]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      auto* dm = sink(const_cast<Tensor&>(m));
      if (!dm) return;
      for (int64_t i = 0; i < r; ++i) {
        const Scalar* y = out.data() + i * c;
        const Scalar* gr = g->data() + i * c;
        double dot = 0.0;
        for (int64_t j = 0; j < c; ++j) dot += static_cast<double>(gr[j]) * y[j];
        Scalar* d = dm->data() + i * c;
        for (int64_t j = 0; j < c; ++j)
          d[j] += (gr[j] - static_cast<Scalar>(dot)) * y[j];
      }
    });
  }
  return out;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gamma,
                        const Tensor& beta, Scalar eps) {
  require_2d(x, "layer_norm");
  const int64_t r = x.dim(0), c = x.dim(1);
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("layer_norm: parameter length mismatch");
  }
  bool taped = x.taped() || gamma.taped() || beta.taped();
  Tensor out = result({r, c}, taped);
  // Cache xhat and 1/std for the backward pass.
  auto xhat = std::make_shared<std::vector<Scalar>>(static_cast<size_t>(r * c));
  auto inv_std = std::make_shared<std::vector<Scalar>>(static_cast<size_t>(r));
  for (int64_t i = 0; i < r; ++i) {
    const Scalar* row = x.data() + i * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const Scalar istd = static_cast<Scalar>(1.0 / std::sqrt(var + eps));
    (*inv_std)[static_cast<size_t>(i)] = istd;
    Scalar* y = out.data() + i * c;
    for (int64_t j = 0; j < c; ++j) {
      const Scalar xh = (row[j] - static_cast<Scalar>(mu)) * istd;
      (*xhat)[static_cast<size_t>(i * c + j)] = xh;
      y[j] = gamma.data()[j] * xh + beta.data()[j];
    }
  }
  if (taped) {
    record([x, gamma, beta, out, xhat, inv_std, r, c]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      auto* dx = sink(const_cast<Tensor&>(x));
      auto* dgamma = sink(const_cast<Tensor&>(gamma));
      auto* dbeta = sink(const_cast<Tensor&>(beta));
      for (int64_t i = 0; i < r; ++i) {
        const Scalar* gr = g->data() + i * c;
        const Scalar* xh = xhat->data() + i * c;
        if (dgamma)
          for (int64_t j = 0; j < c; ++j) (*dgamma)[j] += gr[j] * xh[j];
        if (dbeta)
          for (int64_t j = 0; j < c; ++j) (*dbeta)[j] += gr[j];
        if (dx) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int64_t j = 0; j < c; ++j) {
            const double dxh = static_cast<double>(gr[j]) * gamma.data()[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<double>(c);
          mean_dxhat_xhat /= static_cast<double>(c);
          const Scalar istd = (*inv_std)[static_cast<size_t>(i)];
          Scalar* d = dx->data() + i * c;
          for (int64_t j = 0; j < c; ++j) {
            const double dxh = static_cast<double>(gr[j]) * gamma.data()[j];
            d[j] += static_cast<Scalar>(
                istd * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat));
          }
        }
      }
    });
  }
  return out;
}

Tensor Tape::gelu(const Tensor& x) {
  // 0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3)))
  bool taped = x.taped();
  Tensor out = result(x.shape(), taped);
  const int64_t n = x.size();
  for (int64_t i = 0; i < n; ++i) {
    const Scalar v = x.data()[i];
    const Scalar u = kGeluC0 * (v + kGeluC1 * v * v * v);
    out.data()[i] = 0.5f * v * (1.0f + std::tanh(u));
  }
  if (taped) {
    record([x, out, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      auto* dx = sink(const_cast<Tensor&>(x));
      if (!dx) return;
      for (int64_t i = 0; i < n; ++i) {
        const Scalar v = x.data()[i];
        const Scalar u = kGeluC0 * (v + kGeluC1 * v * v * v);
        const Scalar t = std::tanh(u);
        const Scalar du = kGeluC0 * (1.0f + 3.0f * kGeluC1 * v * v);
        const Scalar d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * du;
        (*dx)[i] += (*g)[i] * d;
      }
    });
  }
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  const int64_t v = table.dim(0), h = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) throw DataError("gather_rows: id out of range");
  }
  bool taped = table.taped();
  const int64_t n = static_cast<int64_t>(ids.size());
  Tensor out = result({n, h}, taped);
  for (int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * h, table.data() + ids[static_cast<size_t>(i)] * h,
                sizeof(Scalar) * static_cast<size_t>(h));
  }
  if (taped) {
    record([table, out, ids, h, n]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      auto* dt = sink(const_cast<Tensor&>(table));
      if (!dt) return;
      for (int64_t i = 0; i < n; ++i) {
        Scalar* drow = dt->data() + ids[static_cast<size_t>(i)] * h;
        const Scalar* grow = g->data() + i * h;
        for (int64_t j = 0; j < h; ++j) drow[j] += grow[j];
      }
    });
  }
  return out;
}

Tensor Tape::patch_rows(const Tensor& base, const std::vector<int>& ids,
                        const Tensor& deltas) {
  require_2d(base, "patch_rows");
  const int64_t v = base.dim(0), h = base.dim(1);
  if (!ids.empty()) {
    require_2d(deltas, "patch_rows");
    if (deltas.dim(0) != static_cast<int64_t>(ids.size()) || deltas.dim(1) != h) {
      throw ShapeError("patch_rows: delta shape mismatch");
    }
  }
  for (int id : ids) {
    if (id < 0 || id >= v) throw DataError("patch_rows: id out of range");
  }
  bool taped = base.taped() || (!ids.empty() && deltas.taped());
  Tensor out = result({v, h}, taped);
  std::memcpy(out.data(), base.data(), sizeof(Scalar) * static_cast<size_t>(base.size()));
  for (size_t j = 0; j < ids.size(); ++j) {
    std::memcpy(out.data() + static_cast<int64_t>(ids[j]) * h,
                deltas.data() + static_cast<int64_t>(j) * h,
                sizeof(Scalar) * static_cast<size_t>(h));
  }
  if (taped) {
    record([base, deltas, out, ids, h]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      std::vector<char> patched(static_cast<size_t>(base.dim(0)), 0);
      for (int id : ids) patched[static_cast<size_t>(id)] = 1;
      if (auto* dd = sink(const_cast<Tensor&>(deltas))) {
        for (size_t j = 0; j < ids.size(); ++j) {
          const Scalar* grow = g->data() + static_cast<int64_t>(ids[j]) * h;
          Scalar* drow = dd->data() + static_cast<int64_t>(j) * h;
          for (int64_t k = 0; k < h; ++k) drow[k] += grow[k];
        }
      }
      if (auto* db = sink(const_cast<Tensor&>(base))) {
        for (int64_t i = 0; i < base.dim(0); ++i) {
          if (patched[static_cast<size_t>(i)]) continue;
          const Scalar* grow = g->data() + i * h;
          Scalar* drow = db->data() + i * h;
          for (int64_t k = 0; k < h; ++k) drow[k] += grow[k];
        }
      }
    });
  }
  return out;
}

Tensor Tape::concat_rows(const Tensor& a, const Tensor& b) {
  require_2d(a, "concat_rows");
  require_2d(b, "concat_rows");
  if (a.dim(1) != b.dim(1)) throw ShapeError("concat_rows: column mismatch");
  const int64_t ra = a.dim(0), rb = b.dim(0), c = a.dim(1);
  bool taped = a.taped() || b.taped();
  Tensor out = result({ra + rb, c}, taped);
  std::memcpy(out.data(), a.data(), sizeof(Scalar) * static_cast<size_t>(a.size()));
  std::memcpy(out.data() + ra * c, b.data(), sizeof(Scalar) * static_cast<size_t>(b.size()));
  if (taped) {
    record([a, b, out, ra, rb, c]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < ra * c; ++i) (*da)[i] += (*g)[i];
      if (auto* db = sink(const_cast<Tensor&>(b)))
        for (int64_t i = 0; i < rb * c; ++i) (*db)[i] += (*g)[ra * c + i];
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, int64_t off, int64_t count) {
  require_2d(a, "slice_rows");
  if (off < 0 || count < 0 || off + count > a.dim(0)) {
    throw ShapeError("slice_rows: range out of bounds");
  }
  const int64_t c = a.dim(1);
  bool taped = a.taped();
  Tensor out = result({count, c}, taped);
  std::memcpy(out.data(), a.data() + off * c,
              sizeof(Scalar) * static_cast<size_t>(count * c));
  if (taped) {
    record([a, out, off, count, c]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < count * c; ++i) (*da)[off * c + i] += (*g)[i];
    });
  }
  return out;
}

Tensor Tape::slice_cols(const Tensor& a, int64_t off, int64_t count) {
  require_2d(a, "slice_cols");
  if (off < 0 || count < 0 || off + count > a.dim(1)) {
    throw ShapeError("slice_cols: range out of bounds");
  }
  const int64_t r = a.dim(0), c = a.dim(1);
  bool taped = a.taped();
  Tensor out = result({r, count}, taped);
  for (int64_t i = 0; i < r; ++i) {
    std::memcpy(out.data() + i * count, a.data() + i * c + off,
                sizeof(Scalar) * static_cast<size_t>(count));
  }
  if (taped) {
    record([a, out, off, count, r, c]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      if (auto* da = sink(const_cast<Tensor&>(a)))
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < count; ++j)
            (*da)[i * c + off + j] += (*g)[i * count + j];
    });
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int64_t r = parts[0].dim(0);
  int64_t total = 0;
  bool taped = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != r) throw ShapeError("concat_cols: row mismatch");
    total += p.dim(1);
    taped = taped || p.taped();
  }
  Tensor out = result({r, total}, taped);
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t c = p.dim(1);
    for (int64_t i = 0; i < r; ++i)
      std::memcpy(out.data() + i * total + off, p.data() + i * c,
                  sizeof(Scalar) * static_cast<size_t>(c));
    off += c;
  }
  if (taped) {
    record([parts, out, r, total]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      int64_t off = 0;
      for (const auto& p : parts) {
        const int64_t c = p.dim(1);
        if (auto* dp = sink(const_cast<Tensor&>(p)))
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
              (*dp)[i * c + j] += (*g)[i * total + off + j];
        off += c;
      }
    });
  }
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                           const std::vector<int>& row_mask) {
  require_2d(logits, "cross_entropy");
  const int64_t r = logits.dim(0), c = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != r) {
    throw ShapeError("cross_entropy: target length mismatch");
  }
  std::vector<int> rows = row_mask;
  if (rows.empty()) {
    rows.resize(static_cast<size_t>(r));
    std::iota(rows.begin(), rows.end(), 0);
  }
  for (int i : rows) {
    if (i < 0 || i >= r) throw ShapeError("cross_entropy: masked row out of range");
    if (targets[static_cast<size_t>(i)] < 0 || targets[static_cast<size_t>(i)] >= c) {
      throw DataError("cross_entropy: target id out of range");
    }
  }
  bool taped = logits.taped();
  Tensor out = result({}, taped);
  double total = 0.0;
  for (int i : rows) {
    const Scalar* x = logits.data() + static_cast<int64_t>(i) * c;
    Scalar mx = x[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(x[j]) - mx);
    total += std::log(z) + mx - x[targets[static_cast<size_t>(i)]];
  }
  out.data()[0] = static_cast<Scalar>(total);
  if (taped) {
    record([logits, out, targets, rows, c]() mutable {
      const auto* g = upstream(out);
      if (!g) return;
      auto* dl = sink(const_cast<Tensor&>(logits));
      if (!dl) return;
      const Scalar gv = (*g)[0];
      for (int i : rows) {
        const Scalar* x = logits.data() + static_cast<int64_t>(i) * c;
        Scalar mx = x[0];
        for (int64_t j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(x[j]) - mx);
        Scalar* d = dl->data() + static_cast<int64_t>(i) * c;
        for (int64_t j = 0; j < c; ++j) {
          const Scalar p = static_cast<Scalar>(std::exp(static_cast<double>(x[j]) - mx) / z);
          d[j] += gv * p;
        }
        d[targets[static_cast<size_t>(i)]] -= gv;
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar tensor");
  }
  if (loss.taped()) {
    auto& g = const_cast<Tensor&>(loss).grad();
    g[0] += 1.0f;
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
}

double grad_check(const std::function<Tensor(Tape&)>& f,
                  const std::vector<Tensor>& params, double eps,
                  int coords_per_param, uint64_t seed) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
  auto eval = [&]() {
    Tape tape;
    Tensor loss = f(tape);
    return loss.item();
  };
  const Scalar v0 = eval();
  const Scalar v1 = eval();
  if (v0 != v1) throw ContractError("grad_check: function is not deterministic");

  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }

  std::mt19937_64 rng(seed);
  double max_err = 0.0;
  for (const auto& p : params) {
    auto& t = const_cast<Tensor&>(p);
    const int64_t n = t.size();
    std::vector<int64_t> coords;
    if (n <= coords_per_param) {
      coords.resize(static_cast<size_t>(n));
      std::iota(coords.begin(), coords.end(), 0);
    } else {
      std::uniform_int_distribution<int64_t> dist(0, n - 1);
      for (int i = 0; i < coords_per_param; ++i) coords.push_back(dist(rng));
    }
    for (int64_t c : coords) {
      const Scalar orig = t.data()[c];
      t.data()[c] = orig + static_cast<Scalar>(eps);
      const double xp = t.data()[c];  // realized perturbation after fp32 rounding
      const double fp = eval();
      t.data()[c] = orig - static_cast<Scalar>(eps);
      const double xm = t.data()[c];
      const double fm = eval();
      t.data()[c] = orig;
      const double numeric = (fp - fm) / (xp - xm);
      const double analytic = t.has_grad() ? t.grad()[static_cast<size_t>(c)] : 0.0;
      const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace plugtag
