#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace mdbert {

template <class Real>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Real> data;
  bool requires_grad = false;
  std::vector<Real> grad;  // allocated lazily, same length as data

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, Real fill = Real(0))
      : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) throw ShapeError("tensor: shape does not match data length");
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }

  bool all_finite() const {
    for (Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

template <class Real>
using TensorPtr = std::shared_ptr<Tensor<Real>>;

inline std::string shape_string(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

// C[m,n] = opA(A) * opB(B), optionally accumulating into C.
// opA/opB transpose the logical operand; storage layouts are row-major.
template <class Real>
void gemm(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t n, std::size_t k,
          bool trans_a, bool trans_b, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, Real(0));
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real* arow = a + i * k;
      Real* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = arow[p];
        if (av == Real(0)) continue;
        const Real* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real* arow = a + i * k;
      Real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const Real* brow = b + j * k;
        Real sum = Real(0);
        for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
        crow[j] += sum;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real* arow = a + p * m;
      const Real* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const Real av = arow[i];
        if (av == Real(0)) continue;
        Real* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      Real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        Real sum = Real(0);
        for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * b[j * k + p];
        crow[j] += sum;
      }
    }
  }
}

}  // namespace detail

// Reverse-mode autodiff over a flat tape. Each op allocates its output,
// computes it eagerly, and pushes one backward closure. backward() walks
// the tape in reverse; gradient accumulation is always additive, so a
// tensor used several times collects the sum of its contributions.
template <class Real>
class Graph {
 public:
  using P = TensorPtr<Real>;

  static P leaf(Tensor<Real> t, bool requires_grad = false) {
    auto p = std::make_shared<Tensor<Real>>(std::move(t));
    p->requires_grad = requires_grad;
    return p;
  }

  P constant(Tensor<Real> t) { return leaf(std::move(t), false); }

  // a: [m,k] or [batch,m,k]; b: [k,n] or [batch,k,n] (dims swapped when
  // transpose_b). A rank-2 b is shared across the batch.
  P matmul(const P& a, const P& b, bool transpose_b = false) {
    if (a->rank() != 2 && a->rank() != 3) throw ShapeError("matmul: lhs must be rank 2 or 3, got " + shape_string(a->shape));
    if (b->rank() != 2 && b->rank() != 3) throw ShapeError("matmul: rhs must be rank 2 or 3, got " + shape_string(b->shape));
    const std::size_t batch = a->rank() == 3 ? a->dim(0) : 1;
    const std::size_t m = a->dim(a->rank() - 2);
    const std::size_t k = a->dim(a->rank() - 1);
    const std::size_t bk = transpose_b ? b->dim(b->rank() - 1) : b->dim(b->rank() - 2);
    const std::size_t n = transpose_b ? b->dim(b->rank() - 2) : b->dim(b->rank() - 1);
    if (k != bk)
      throw ShapeError("matmul: inner dimensions disagree: " + shape_string(a->shape) + " vs " +
                       shape_string(b->shape) + (transpose_b ? " (rhs transposed)" : ""));
    const bool b_batched = b->rank() == 3;
    if (b_batched && (a->rank() != 3 || b->dim(0) != batch))
      throw ShapeError("matmul: batch dimensions disagree: " + shape_string(a->shape) + " vs " + shape_string(b->shape));

    std::vector<std::size_t> out_shape = a->rank() == 3 ? std::vector<std::size_t>{batch, m, n}
                                                        : std::vector<std::size_t>{m, n};
    P out = node(std::move(out_shape), a->requires_grad || b->requires_grad);
    const std::size_t a_stride = m * k, b_stride = n * k, c_stride = m * n;
    for (std::size_t bi = 0; bi < batch; ++bi) {
      detail::gemm(a->data.data() + bi * a_stride, b->data.data() + (b_batched ? bi * b_stride : 0),
                   out->data.data() + bi * c_stride, m, n, k, false, transpose_b, false);
    }
    if (out->requires_grad) {
      tape_.push_back([a, b, out, batch, m, n, k, a_stride, b_stride, c_stride, b_batched, transpose_b]() {
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const Real* g = out->grad.data() + bi * c_stride;
          const Real* bp = b->data.data() + (b_batched ? bi * b_stride : 0);
          const Real* ap = a->data.data() + bi * a_stride;
          if (a->requires_grad) {
            a->ensure_grad();
            // dA = dC * B^T  (or dC * B when rhs was transposed)
            detail::gemm(g, bp, a->grad.data() + bi * a_stride, m, k, n, false, !transpose_b, true);
          }
          if (b->requires_grad) {
            b->ensure_grad();
            Real* bg = b->grad.data() + (b_batched ? bi * b_stride : 0);
            if (!transpose_b) {
              detail::gemm(ap, g, bg, k, n, m, true, false, true);  // dB = A^T * dC
            } else {
              detail::gemm(g, ap, bg, n, k, m, true, false, true);  // dB = dC^T * A
            }
          }
        }
      });
    }
    return out;
  }

  // Elementwise sum; b may be a trailing-shape broadcast of a (e.g. a bias).
  P add(const P& a, const P& b) { return binary(a, b, /*is_mul=*/false); }

  // Elementwise product with the same broadcast rule as add.
  P mul(const P& a, const P& b) { return binary(a, b, /*is_mul=*/true); }

  P scale(const P& a, Real c) {
    P out = node(a->shape, a->requires_grad);
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * c;
    if (out->requires_grad) {
      tape_.push_back([a, out, c]() {
        a->ensure_grad();
        for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * c;
      });
    }
    return out;
  }

  // Rows along the last axis sum to one; the max is subtracted first so
  // additive -1e30 masking stays finite and masked slots underflow to zero.
  P softmax_lastdim(const P& a) {
    if (a->rank() == 0) throw ShapeError("softmax: scalar input");
    const std::size_t n = a->shape.back();
    const std::size_t rows = a->size() / n;
    P out = node(a->shape, a->requires_grad);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* x = a->data.data() + r * n;
      Real* y = out->data.data() + r * n;
      Real mx = x[0];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
      Real sum = Real(0);
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = std::exp(x[i] - mx);
        sum += y[i];
      }
      const Real inv = Real(1) / sum;
      for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
    }
    if (out->requires_grad) {
      tape_.push_back([a, out, rows, n]() {
        a->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* y = out->data.data() + r * n;
          const Real* g = out->grad.data() + r * n;
          Real dot = Real(0);
          for (std::size_t i = 0; i < n; ++i) dot += y[i] * g[i];
          Real* ag = a->grad.data() + r * n;
          for (std::size_t i = 0; i < n; ++i) ag[i] += y[i] * (g[i] - dot);
        }
      });
    }
    return out;
  }

  // Per-row normalization over the last axis, then affine gain/bias.
  P layer_norm(const P& x, const P& gain, const P& bias, Real eps = Real(1e-12)) {
    const std::size_t n = x->shape.back();
    if (gain->size() != n || bias->size() != n)
      throw ShapeError("layer_norm: gain/bias " + shape_string(gain->shape) + "/" + shape_string(bias->shape) +
                       " do not match last dim of " + shape_string(x->shape));
    const std::size_t rows = x->size() / n;
    P out = node(x->shape, x->requires_grad || gain->requires_grad || bias->requires_grad);
    auto xhat = std::make_shared<std::vector<Real>>(x->size());
    auto inv_std = std::make_shared<std::vector<Real>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* xp = x->data.data() + r * n;
      Real mean = Real(0);
      for (std::size_t i = 0; i < n; ++i) mean += xp[i];
      mean /= Real(n);
      Real var = Real(0);
      for (std::size_t i = 0; i < n; ++i) {
        const Real d = xp[i] - mean;
        var += d * d;
      }
      var /= Real(n);
      const Real inv = Real(1) / std::sqrt(var + eps);
      (*inv_std)[r] = inv;
      Real* xh = xhat->data() + r * n;
      Real* y = out->data.data() + r * n;
      for (std::size_t i = 0; i < n; ++i) {
        xh[i] = (xp[i] - mean) * inv;
        y[i] = gain->data[i] * xh[i] + bias->data[i];
      }
    }
    if (out->requires_grad) {
      tape_.push_back([x, gain, bias, out, xhat, inv_std, rows, n]() {
        std::vector<Real> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* g = out->grad.data() + r * n;
          const Real* xh = xhat->data() + r * n;
          if (gain->requires_grad) {
            gain->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) gain->grad[i] += g[i] * xh[i];
          }
          if (bias->requires_grad) {
            bias->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) bias->grad[i] += g[i];
          }
          if (x->requires_grad) {
            x->ensure_grad();
            Real m1 = Real(0), m2 = Real(0);
            for (std::size_t i = 0; i < n; ++i) {
              dxhat[i] = g[i] * gain->data[i];
              m1 += dxhat[i];
              m2 += dxhat[i] * xh[i];
            }
            m1 /= Real(n);
            m2 /= Real(n);
            const Real inv = (*inv_std)[r];
            Real* xg = x->grad.data() + r * n;
            for (std::size_t i = 0; i < n; ++i) xg[i] += inv * (dxhat[i] - m1 - xh[i] * m2);
          }
        }
      });
    }
    return out;
  }

  P gelu(const P& x) {
    P out = node(x->shape, x->requires_grad);
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    for (std::size_t i = 0; i < x->size(); ++i) {
      const double v = static_cast<double>(x->data[i]);
      out->data[i] = static_cast<Real>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
    }
    if (out->requires_grad) {
      tape_.push_back([x, out]() {
        x->ensure_grad();
        constexpr double kInvSqrt2 = 0.70710678118654752440;
        constexpr double kInvSqrt2Pi = 0.39894228040143267794;
        for (std::size_t i = 0; i < x->size(); ++i) {
          const double v = static_cast<double>(x->data[i]);
          const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
          x->grad[i] += out->grad[i] * static_cast<Real>(cdf + v * pdf);
        }
      });
    }
    return out;
  }

  P sigmoid(const P& x) {
    P out = node(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) {
      const Real v = x->data[i];
      out->data[i] = v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                                  : std::exp(v) / (Real(1) + std::exp(v));
    }
    if (out->requires_grad) {
      tape_.push_back([x, out]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->size(); ++i) {
          const Real y = out->data[i];
          x->grad[i] += out->grad[i] * y * (Real(1) - y);
        }
      });
    }
    return out;
  }

  // Row gather: out = table[ids], shaped lead_shape + [width].
  P embedding(const P& table, const std::vector<std::uint32_t>& ids, std::vector<std::size_t> lead_shape) {
    if (table->rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_string(table->shape));
    const std::size_t vocab = table->dim(0), width = table->dim(1);
    if (Tensor<Real>::numel(lead_shape) != ids.size()) throw ShapeError("embedding: id count does not match lead shape");
    for (std::uint32_t id : ids)
      if (id >= vocab) throw DataError("embedding: id " + std::to_string(id) + " out of range (table rows " + std::to_string(vocab) + ")");
    std::vector<std::size_t> out_shape = std::move(lead_shape);
    out_shape.push_back(width);
    P out = node(std::move(out_shape), table->requires_grad);
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy_n(table->data.data() + std::size_t(ids[i]) * width, width, out->data.data() + i * width);
    if (out->requires_grad) {
      auto ids_copy = std::make_shared<std::vector<std::uint32_t>>(ids);
      tape_.push_back([table, out, ids_copy, width]() {
        table->ensure_grad();
        for (std::size_t i = 0; i < ids_copy->size(); ++i) {
          const Real* g = out->grad.data() + i * width;
          Real* tg = table->grad.data() + std::size_t((*ids_copy)[i]) * width;
          for (std::size_t c = 0; c < width; ++c) tg[c] += g[c];
        }
      });
    }
    return out;
  }

  // Gather along axis 0.
  P select_rows(const P& x, const std::vector<std::size_t>& rows) {
    if (x->rank() < 1) throw ShapeError("select_rows: scalar input");
    const std::size_t stride = x->size() / x->dim(0);
    for (std::size_t r : rows)
      if (r >= x->dim(0)) throw ShapeError("select_rows: row index out of range");
    std::vector<std::size_t> out_shape = x->shape;
    out_shape[0] = rows.size();
    P out = node(std::move(out_shape), x->requires_grad);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy_n(x->data.data() + rows[i] * stride, stride, out->data.data() + i * stride);
    if (out->requires_grad) {
      auto rows_copy = std::make_shared<std::vector<std::size_t>>(rows);
      tape_.push_back([x, out, rows_copy, stride]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < rows_copy->size(); ++i) {
          const Real* g = out->grad.data() + i * stride;
          Real* xg = x->grad.data() + (*rows_copy)[i] * stride;
          for (std::size_t c = 0; c < stride; ++c) xg[c] += g[c];
        }
      });
    }
    return out;
  }

  P transpose_last2(const P& x) {
    if (x->rank() < 2) throw ShapeError("transpose_last2: needs rank >= 2, got " + shape_string(x->shape));
    const std::size_t n = x->shape.back();
    const std::size_t m = x->shape[x->rank() - 2];
    const std::size_t batch = x->size() / (m * n);
    std::vector<std::size_t> out_shape = x->shape;
    std::swap(out_shape[x->rank() - 2], out_shape[x->rank() - 1]);
    P out = node(std::move(out_shape), x->requires_grad);
    for (std::size_t b = 0; b < batch; ++b) {
      const Real* src = x->data.data() + b * m * n;
      Real* dst = out->data.data() + b * m * n;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
    if (out->requires_grad) {
      tape_.push_back([x, out, batch, m, n]() {
        x->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          const Real* g = out->grad.data() + b * m * n;
          Real* xg = x->grad.data() + b * m * n;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) xg[i * n + j] += g[j * m + i];
        }
      });
    }
    return out;
  }

  // [B,T,E] -> [B*heads, T, E/heads]; head h takes columns [h*dk, (h+1)*dk).
  P split_heads(const P& x, std::size_t heads) {
    if (x->rank() != 3) throw ShapeError("split_heads: needs rank 3, got " + shape_string(x->shape));
    const std::size_t B = x->dim(0), T = x->dim(1), E = x->dim(2);
    if (E % heads != 0) throw ShapeError("split_heads: width not divisible by head count");
    const std::size_t dk = E / heads;
    P out = node({B * heads, T, dk}, x->requires_grad);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < T; ++t)
          std::copy_n(x->data.data() + (b * T + t) * E + h * dk, dk,
                      out->data.data() + ((b * heads + h) * T + t) * dk);
    if (out->requires_grad) {
      tape_.push_back([x, out, B, T, E, heads, dk]() {
        x->ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < T; ++t) {
              const Real* g = out->grad.data() + ((b * heads + h) * T + t) * dk;
              Real* xg = x->grad.data() + (b * T + t) * E + h * dk;
              for (std::size_t c = 0; c < dk; ++c) xg[c] += g[c];
            }
      });
    }
    return out;
  }

  // Inverse of split_heads: [B*heads, T, dk] -> [B, T, heads*dk].
  P merge_heads(const P& x, std::size_t heads) {
    if (x->rank() != 3) throw ShapeError("merge_heads: needs rank 3, got " + shape_string(x->shape));
    if (x->dim(0) % heads != 0) throw ShapeError("merge_heads: batch not divisible by head count");
    const std::size_t B = x->dim(0) / heads, T = x->dim(1), dk = x->dim(2);
    const std::size_t E = heads * dk;
    P out = node({B, T, E}, x->requires_grad);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < T; ++t)
          std::copy_n(x->data.data() + ((b * heads + h) * T + t) * dk, dk,
                      out->data.data() + (b * T + t) * E + h * dk);
    if (out->requires_grad) {
      tape_.push_back([x, out, B, T, E, heads, dk]() {
        x->ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t t = 0; t < T; ++t) {
              const Real* g = out->grad.data() + (b * T + t) * E + h * dk;
              Real* xg = x->grad.data() + ((b * heads + h) * T + t) * dk;
              for (std::size_t c = 0; c < dk; ++c) xg[c] += g[c];
            }
      });
    }
    return out;
  }

  // Mean over axis 1 restricted to unmasked slots. Masked slots are skipped
  // outright, so their contents cannot perturb the result even bitwise.
  P masked_mean_axis1(const P& x, const Tensor<Real>& mask) {
    if (x->rank() != 3) throw ShapeError("masked_mean: needs rank 3, got " + shape_string(x->shape));
    const std::size_t B = x->dim(0), S = x->dim(1), E = x->dim(2);
    if (mask.rank() != 2 || mask.dim(0) != B || mask.dim(1) != S)
      throw ShapeError("masked_mean: mask " + shape_string(mask.shape) + " does not match " + shape_string(x->shape));
    auto keep = std::make_shared<std::vector<std::uint8_t>>(B * S);
    auto counts = std::make_shared<std::vector<std::size_t>>(B, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < S; ++s) {
        const bool on = mask.data[b * S + s] != Real(0);
        (*keep)[b * S + s] = on;
        if (on) ++(*counts)[b];
      }
    for (std::size_t b = 0; b < B; ++b)
      if ((*counts)[b] == 0) throw DataError("masked_mean: empty group at row " + std::to_string(b));
    P out = node({B, E}, x->requires_grad);
    for (std::size_t b = 0; b < B; ++b) {
      Real* y = out->data.data() + b * E;
      for (std::size_t s = 0; s < S; ++s) {
        if (!(*keep)[b * S + s]) continue;
        const Real* xp = x->data.data() + (b * S + s) * E;
        for (std::size_t e = 0; e < E; ++e) y[e] += xp[e];
      }
      const Real inv = Real(1) / Real((*counts)[b]);
      for (std::size_t e = 0; e < E; ++e) y[e] *= inv;
    }
    if (out->requires_grad) {
      tape_.push_back([x, out, keep, counts, B, S, E]() {
        x->ensure_grad();
        for (std::size_t b = 0; b < B; ++b) {
          const Real inv = Real(1) / Real((*counts)[b]);
          const Real* g = out->grad.data() + b * E;
          for (std::size_t s = 0; s < S; ++s) {
            if (!(*keep)[b * S + s]) continue;
            Real* xg = x->grad.data() + (b * S + s) * E;
            for (std::size_t e = 0; e < E; ++e) xg[e] += g[e] * inv;
          }
        }
      });
    }
    return out;
  }

  // Regroup a flat batch of per-sentence rows into per-document sequences,
  // ordered by position and zero-padded to max_sentences.
  P rebatch(const P& flat, const std::vector<std::size_t>& doc_index,
            const std::vector<std::size_t>& sent_position, std::size_t num_docs,
            std::size_t max_sentences) {
    if (flat->rank() != 2) throw ShapeError("rebatch: needs rank 2, got " + shape_string(flat->shape));
    const std::size_t rows = flat->dim(0), E = flat->dim(1);
    if (doc_index.size() != rows || sent_position.size() != rows)
      throw ShapeError("rebatch: index vectors do not match row count");
    auto slot_of_row = std::make_shared<std::vector<std::size_t>>(rows);
    std::vector<std::uint8_t> taken(num_docs * max_sentences, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (doc_index[r] >= num_docs) throw DataError("rebatch: document index out of range");
      if (sent_position[r] >= max_sentences) throw DataError("rebatch: sentence position out of range");
      const std::size_t slot = doc_index[r] * max_sentences + sent_position[r];
      if (taken[slot])
        throw DataError("rebatch: duplicate (document " + std::to_string(doc_index[r]) + ", position " +
                        std::to_string(sent_position[r]) + ")");
      taken[slot] = 1;
      (*slot_of_row)[r] = slot;
    }
    P out = node({num_docs, max_sentences, E}, flat->requires_grad);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(flat->data.data() + r * E, E, out->data.data() + (*slot_of_row)[r] * E);
    if (out->requires_grad) {
      tape_.push_back([flat, out, slot_of_row, E]() {
        flat->ensure_grad();
        for (std::size_t r = 0; r < slot_of_row->size(); ++r) {
          const Real* g = out->grad.data() + (*slot_of_row)[r] * E;
          Real* fg = flat->grad.data() + r * E;
          for (std::size_t e = 0; e < E; ++e) fg[e] += g[e];
        }
      });
    }
    return out;
  }

  // Inverted dropout; identity when rate is zero.
  P dropout(const P& x, Real rate, Rng& rng) {
    if (rate == Real(0)) return x;
    if (rate < Real(0) || rate >= Real(1)) throw UsageError("dropout rate must be in [0, 1)");
    auto mask = std::make_shared<std::vector<Real>>(x->size());
    const Real keep_scale = Real(1) / (Real(1) - rate);
    for (std::size_t i = 0; i < x->size(); ++i)
      (*mask)[i] = rng.uniform() < static_cast<double>(rate) ? Real(0) : keep_scale;
    P out = node(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = x->data[i] * (*mask)[i];
    if (out->requires_grad) {
      tape_.push_back([x, out, mask]() {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i] * (*mask)[i];
      });
    }
    return out;
  }

  P sum_lastdim(const P& x) {
    if (x->rank() == 0) throw ShapeError("sum_lastdim: scalar input");
    const std::size_t n = x->shape.back();
    const std::size_t rows = x->size() / n;
    std::vector<std::size_t> out_shape(x->shape.begin(), x->shape.end() - 1);
    if (out_shape.empty()) out_shape.push_back(1);
    P out = node(std::move(out_shape), x->requires_grad);
    for (std::size_t r = 0; r < rows; ++r) {
      Real sum = Real(0);
      const Real* xp = x->data.data() + r * n;
      for (std::size_t i = 0; i < n; ++i) sum += xp[i];
      out->data[r] = sum;
    }
    if (out->requires_grad) {
      tape_.push_back([x, out, rows, n]() {
        x->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const Real g = out->grad[r];
          Real* xg = x->grad.data() + r * n;
          for (std::size_t i = 0; i < n; ++i) xg[i] += g;
        }
      });
    }
    return out;
  }

  P sum_all(const P& x) {
    P out = node({1}, x->requires_grad);
    Real sum = Real(0);
    for (Real v : x->data) sum += v;
    out->data[0] = sum;
    if (out->requires_grad) {
      tape_.push_back([x, out]() {
        x->ensure_grad();
        const Real g = out->grad[0];
        for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += g;
      });
    }
    return out;
  }

  // Multi-label cross entropy with extra weight on positive samples:
  // per row, sum over classes of -[w*y*log(p) + (1-y)*log(1-p)], then the
  // mean over rows. Probabilities are clamped to [1e-7, 1-1e-7] before the
  // logs; clamped entries get zero gradient.
  P weighted_bce(const P& probs, const Tensor<Real>& labels, Real w) {
    if (probs->shape != labels.shape)
      throw ShapeError("weighted_bce: probs " + shape_string(probs->shape) + " vs labels " + shape_string(labels.shape));
    if (probs->rank() != 2) throw ShapeError("weighted_bce: needs rank 2, got " + shape_string(probs->shape));
    const std::size_t D = probs->dim(0), L = probs->dim(1);
    constexpr Real lo = Real(1e-7);
    const Real hi = Real(1) - Real(1e-7);
    P out = node({1}, probs->requires_grad);
    double total = 0.0;
    for (std::size_t i = 0; i < D * L; ++i) {
      const Real raw = probs->data[i];
      // conditional clamp so NaN propagates instead of being swallowed
      const Real p = raw < lo ? lo : (raw > hi ? hi : raw);
      const Real y = labels.data[i];
      total += -(double)(w * y * std::log(p) + (Real(1) - y) * std::log(Real(1) - p));
    }
    out->data[0] = static_cast<Real>(total / double(D));
    if (out->requires_grad) {
      auto labels_copy = std::make_shared<Tensor<Real>>(labels);
      tape_.push_back([probs, out, labels_copy, w, D, L, lo, hi]() {
        probs->ensure_grad();
        const Real g = out->grad[0] / Real(D);
        for (std::size_t i = 0; i < D * L; ++i) {
          const Real p = probs->data[i];
          if (p < lo || p > hi) continue;
          const Real y = labels_copy->data[i];
          probs->grad[i] += g * (-w * y / p + (Real(1) - y) / (Real(1) - p));
        }
      });
    }
    return out;
  }

  // Seeds d(root)/d(root) = 1 and walks the tape backwards.
  void backward(const P& root) {
    if (root->size() != 1) throw ShapeError("backward: root must be scalar, got " + shape_string(root->shape));
    if (!root->requires_grad) throw ShapeError("backward: root does not require gradients");
    root->ensure_grad();
    root->grad[0] += Real(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    tape_.clear();
  }

  std::size_t tape_size() const { return tape_.size(); }

 private:
  P node(std::vector<std::size_t> shape, bool requires_grad) {
    auto p = std::make_shared<Tensor<Real>>(std::move(shape));
    p->requires_grad = requires_grad;
    if (requires_grad) p->ensure_grad();
    return p;
  }

  P binary(const P& a, const P& b, bool is_mul) {
    const bool same = a->shape == b->shape;
    bool suffix = false;
    if (!same) {
      suffix = b->rank() <= a->rank() &&
               std::equal(b->shape.rbegin(), b->shape.rend(), a->shape.rbegin());
      if (!suffix)
        throw ShapeError(std::string(is_mul ? "mul" : "add") + ": shapes " + shape_string(a->shape) +
                         " and " + shape_string(b->shape) + " neither match nor broadcast");
    }
    const std::size_t bs = b->size();
    P out = node(a->shape, a->requires_grad || b->requires_grad);
    if (is_mul) {
      for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i % bs];
    } else {
      for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i % bs];
    }
    if (out->requires_grad) {
      tape_.push_back([a, b, out, bs, is_mul]() {
        if (a->requires_grad) {
          a->ensure_grad();
          if (is_mul) {
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * b->data[i % bs];
          } else {
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
          }
        }
        if (b->requires_grad) {
          b->ensure_grad();
          if (is_mul) {
            for (std::size_t i = 0; i < a->size(); ++i) b->grad[i % bs] += out->grad[i] * a->data[i];
          } else {
            for (std::size_t i = 0; i < a->size(); ++i) b->grad[i % bs] += out->grad[i];
          }
        }
      });
    }
    return out;
  }

  std::vector<std::function<void()>> tape_;
};

}  // namespace mdbert
