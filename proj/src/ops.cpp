#include "dlarc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include <Eigen/Core>

#include "dlarc/error.hpp"
#include "kernels.hpp"

namespace dlarc::nc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;
using OuterStride = Eigen::OuterStride<Eigen::Dynamic>;
using StridedC = Eigen::Map<const RowMat, 0, OuterStride>;
using Strided = Eigen::Map<RowMat, 0, OuterStride>;

TensorData* raw(const Tensor& t) { return t.data().get(); }

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.defined() && b.defined(), std::string(op) + ": undefined tensor");
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

double logistic_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// out[i] = in[offset(i)] where the output walks `shape` in row-major order and
// `src_strides` gives the input stride of each output axis.
template <typename Fn>
void walk(const Shape& shape, const std::vector<std::size_t>& src_strides, Fn fn) {
  const std::size_t n = numel(shape);
  if (n == 0) return;
  const std::size_t r = shape.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, src);
    for (std::size_t ax = r; ax-- > 0;) {
      if (++idx[ax] < shape[ax]) {
        src += src_strides[ax];
        break;
      }
      src -= src_strides[ax] * (shape[ax] - 1);
      idx[ax] = 0;
    }
  }
}

std::vector<double> transposed(std::span<const double> w, std::size_t rows, std::size_t cols) {
  constexpr std::size_t TB = 16;
  std::vector<double> t(w.size());
  for (std::size_t i0 = 0; i0 < rows; i0 += TB)
    for (std::size_t j0 = 0; j0 < cols; j0 += TB)
      for (std::size_t i = i0; i < std::min(rows, i0 + TB); ++i)
        for (std::size_t j = j0; j < std::min(cols, j0 + TB); ++j) t[j * rows + i] = w[i * cols + j];
  return t;
}

struct AffineTerm {
  const double* x;  // [rows, d]
  std::size_t d;
  const double* w;  // [n, d]
};

// out[r, j] = bias[j] + sum over terms, then d ascending, of x[r, d] * w[j, d].
// Computed as out^T = W x^T so the batch runs along the vector axis and only the
// activations are transposed.
std::vector<double> affine_rows(std::size_t rows, std::size_t n, std::span<const double> bias,
                                std::initializer_list<AffineTerm> terms) {
  std::vector<double> acc(n * rows);
  for (std::size_t j = 0; j < n; ++j) std::fill_n(acc.begin() + static_cast<std::ptrdiff_t>(j * rows), rows, bias[j]);
  for (const auto& t : terms) {
    const auto xt = transposed(std::span<const double>(t.x, rows * t.d), rows, t.d);
    const double* px = xt.data();
    kernels::accumulate(t.w, t.d, n, t.d, [px, rows](std::size_t q) { return px + q * rows; }, rows, acc.data(), rows);
  }
  return transposed(acc, n, rows);
}


template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  require(a.defined(), "unary op: undefined tensor");
  std::vector<double> out(a.numel());
  auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  TensorData* pa = raw(a);
  return Tensor::from_op(a.shape(), std::move(out), {a}, [pa, dfdx](const TensorData& o) {
    if (!pa->requires_grad) return;
    auto& g = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * dfdx(pa->values[i], o.values[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  TensorData *pa = raw(a), *pb = raw(b);
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [pa, pb](const TensorData& o) {
    for (TensorData* p : {pa, pb}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  TensorData *pa = raw(a), *pb = raw(b);
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [pa, pb](const TensorData& o) {
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  TensorData *pa = raw(a), *pb = raw(b);
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [pa, pb](const TensorData& o) {
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb->values[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pa->values[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor logistic(const Tensor& a) {
  return unary(a, logistic_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return std::isnan(x) || x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  require(a.defined(), "sum: undefined tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  TensorData* pa = raw(a);
  return Tensor::from_op({}, {s}, {a}, [pa](const TensorData& o) {
    if (!pa->requires_grad) return;
    auto& g = pa->grad_buffer();
    for (auto& x : g) x += o.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& a, Shape shape) {
  require(a.defined(), "reshape: undefined tensor");
  require(numel(shape) == a.numel(),
          "reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  TensorData* pa = raw(a);
  return Tensor::from_op(std::move(shape), pa->values, {a}, [pa](const TensorData& o) {
    if (!pa->requires_grad) return;
    auto& g = pa->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
  require(a.defined(), "transpose: undefined tensor");
  require(axis0 < a.rank() && axis1 < a.rank(), "transpose: axis out of range for " + to_string(a.shape()));
  Shape out_shape = a.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  auto src_strides = strides_of(a.shape());
  std::swap(src_strides[axis0], src_strides[axis1]);
  std::vector<double> out(a.numel());
  auto in = a.values();
  walk(out_shape, src_strides, [&](std::size_t i, std::size_t s) { out[i] = in[s]; });
  TensorData* pa = raw(a);
  return Tensor::from_op(out_shape, std::move(out), {a}, [pa, out_shape, src_strides](const TensorData& o) {
    if (!pa->requires_grad) return;
    auto& g = pa->grad_buffer();
    walk(out_shape, src_strides, [&](std::size_t i, std::size_t s) { g[s] += o.grad[i]; });
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require(a.defined(), "slice: undefined tensor");
  require(axis < a.rank(), "slice: axis out of range for " + to_string(a.shape()));
  require(begin < end && end <= a.dim(axis), "slice: bad range along axis " + std::to_string(axis));
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const std::size_t block = (end - begin) * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<double> out(outer * block);
  auto in = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * len + begin) * inner), block,
                out.begin() + static_cast<std::ptrdiff_t>(o * block));
  }
  TensorData* pa = raw(a);
  return Tensor::from_op(std::move(out_shape), std::move(out), {a},
                         [pa, outer, inner, len, begin, block](const TensorData& o) {
                           if (!pa->requires_grad) return;
                           auto& g = pa->grad_buffer();
                           for (std::size_t b = 0; b < outer; ++b) {
                             double* dst = g.data() + (b * len + begin) * inner;
                             const double* src = o.grad.data() + b * block;
                             for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
                           }
                         });
}

Tensor select(const Tensor& a, std::size_t axis, std::size_t index) {
  require(a.defined(), "select: undefined tensor");
  require(axis < a.rank(), "select: axis out of range for " + to_string(a.shape()));
  require(index < a.dim(axis), "select: index out of range");
  const auto& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  std::vector<double> out(outer * inner);
  auto in = a.values();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((o * len + index) * inner), inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * inner));
  }
  TensorData* pa = raw(a);
  return Tensor::from_op(std::move(out_shape), std::move(out), {a},
                         [pa, outer, inner, len, index](const TensorData& o) {
                           if (!pa->requires_grad) return;
                           auto& g = pa->grad_buffer();
                           for (std::size_t b = 0; b < outer; ++b) {
                             double* dst = g.data() + (b * len + index) * inner;
                             const double* src = o.grad.data() + b * inner;
                             for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
                           }
                         });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts.front().shape();
  require(axis < s0.size(), "concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == s0.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < s0.size(); ++i) {
      if (i != axis) require(p.dim(i) == s0[i], "concat: shape mismatch off the concat axis");
    }
    total += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::vector<TensorData*> ptrs;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis);
    auto in = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * total + off) * inner));
    }
    ptrs.push_back(raw(p));
    offsets.push_back(off);
    off += len;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::from_op(std::move(out_shape), std::move(out), std::move(inputs),
                         [ptrs, offsets, outer, inner, total, axis](const TensorData& o) {
                           for (std::size_t i = 0; i < ptrs.size(); ++i) {
                             TensorData* p = ptrs[i];
                             if (!p->requires_grad) continue;
                             auto& g = p->grad_buffer();
                             const std::size_t len = p->shape[axis];
                             for (std::size_t b = 0; b < outer; ++b) {
                               const double* src = o.grad.data() + (b * total + offsets[i]) * inner;
                               double* dst = g.data() + b * len * inner;
                               for (std::size_t j = 0; j < len * inner; ++j) dst[j] += src[j];
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv_temporal(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require(input.defined() && kernels.defined() && bias.defined(), "conv_temporal: undefined tensor");
  require(input.rank() == 4, "conv_temporal: input must be [B, F_in, T, C], got " + to_string(input.shape()));
  require(kernels.rank() == 4 && kernels.dim(3) == 1,
          "conv_temporal: kernels must be [F_out, F_in, K, 1], got " + to_string(kernels.shape()));
  const std::size_t B = input.dim(0), Fi = input.dim(1), T = input.dim(2), C = input.dim(3);
  const std::size_t Fo = kernels.dim(0), K = kernels.dim(2);
  require(kernels.dim(1) == Fi, "conv_temporal: kernel input depth " + std::to_string(kernels.dim(1)) +
                                    " does not match input depth " + std::to_string(Fi));
  require(bias.rank() == 1 && bias.dim(0) == Fo, "conv_temporal: bias must be [F_out]");
  require(K >= 1 && T >= K, "conv_temporal: sequence shorter than kernel");
  const std::size_t To = T - K + 1;
  const std::size_t L = To * C;  // one output row per (b, f)

  // Rows are padded to a multiple of 8 columns so the whole row runs in the
  // vector path; the padding columns read zeros and are dropped.
  const std::size_t Lp = (L + 7) / 8 * 8;
  const std::size_t sample = Fi * T * C;
  std::vector<double> out(B * Fo * L);
  std::vector<double> padded(sample + (Lp - L), 0.0);
  std::vector<double> acc(Fo * Lp);
  std::vector<const double*> rows(Fi * K);
  for (std::size_t g = 0; g < Fi; ++g)
    for (std::size_t k = 0; k < K; ++k) rows[g * K + k] = padded.data() + (g * T + k) * C;
  const double* const* rp = rows.data();
  const double* ker = kernels.values().data();
  const double* bs = bias.values().data();
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(input.values().data() + b * sample, sample, padded.data());
    for (std::size_t f = 0; f < Fo; ++f) std::fill_n(acc.data() + f * Lp, Lp, bs[f]);
    // Reduction index q = g*K + k reads input row g shifted by k time steps.
    kernels::accumulate(ker, Fi * K, Fo, Fi * K, [rp](std::size_t q) { return rp[q]; }, Lp, acc.data(), Lp);
    double* ob = out.data() + b * Fo * L;
    for (std::size_t f = 0; f < Fo; ++f) std::copy_n(acc.data() + f * Lp, L, ob + f * L);
  }

  TensorData *pin = raw(input), *pk = raw(kernels), *pb = raw(bias);
  return Tensor::from_op(
      {B, Fo, To, C}, std::move(out), {input, kernels, bias},
      [pin, pk, pb, B, Fi, T, C, Fo, K, L](const TensorData& o) {
        const auto Fo_i = static_cast<Eigen::Index>(Fo), Fi_i = static_cast<Eigen::Index>(Fi),
                   L_i = static_cast<Eigen::Index>(L), row = static_cast<Eigen::Index>(T * C);
        if (pb->requires_grad) {
          auto& g = pb->grad_buffer();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t f = 0; f < Fo; ++f) {
              const double* src = o.grad.data() + (b * Fo + f) * L;
              double s = 0.0;
              for (std::size_t j = 0; j < L; ++j) s += src[j];
              g[f] += s;
            }
        }
        const bool need_in = pin->requires_grad;
        const bool need_k = pk->requires_grad;
        if (!need_in && !need_k) return;
        // Per tap k, the input rows shifted by k form an [F_in, L] matrix with
        // row stride T*C, so each tap is a plain product with no im2col.
        std::vector<RowMat> taps(K), dtaps(K);
        for (std::size_t k = 0; k < K; ++k) {
          taps[k].resize(Fo_i, Fi_i);
          dtaps[k].setZero(Fo_i, Fi_i);
          for (std::size_t f = 0; f < Fo; ++f)
            for (std::size_t g = 0; g < Fi; ++g)
              taps[k](static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(g)) = pk->values[(f * Fi + g) * K + k];
        }
        for (std::size_t b = 0; b < B; ++b) {
          MapC dout(o.grad.data() + b * Fo * L, Fo_i, L_i);
          for (std::size_t k = 0; k < K; ++k) {
            const std::size_t off = b * Fi * T * C + k * C;
            if (need_k) {
              StridedC x(pin->values.data() + off, Fi_i, L_i, OuterStride(row));
              dtaps[k].noalias() += dout * x.transpose();
            }
            if (need_in) {
              Strided dx(pin->grad_buffer().data() + off, Fi_i, L_i, OuterStride(row));
              dx.noalias() += taps[k].transpose() * dout;
            }
          }
        }
        if (need_k) {
          auto& gk = pk->grad_buffer();
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t f = 0; f < Fo; ++f)
              for (std::size_t g = 0; g < Fi; ++g)
                gk[(f * Fi + g) * K + k] += dtaps[k](static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(g));
        }
      });
}

// ---------------------------------------------------------------------------
// Dense

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require(input.defined() && weight.defined() && bias.defined(), "dense: undefined tensor");
  require(input.rank() == 2, "dense: input must be [B, D], got " + to_string(input.shape()));
  require(weight.rank() == 2 && weight.dim(1) == input.dim(1),
          "dense: weight " + to_string(weight.shape()) + " incompatible with input " + to_string(input.shape()));
  require(bias.rank() == 1 && bias.dim(0) == weight.dim(0), "dense: bias must be [K]");
  const std::size_t B = input.dim(0), D = input.dim(1), K = weight.dim(0);
  auto out = affine_rows(B, K, bias.values(), {{input.values().data(), D, weight.values().data()}});

  TensorData *px = raw(input), *pw = raw(weight), *pb = raw(bias);
  return Tensor::from_op({B, K}, std::move(out), {input, weight, bias}, [px, pw, pb, B, D, K](const TensorData& o) {
    const auto Bi = static_cast<Eigen::Index>(B), Di = static_cast<Eigen::Index>(D),
               Ki = static_cast<Eigen::Index>(K);
    MapC dy(o.grad.data(), Bi, Ki);
    if (px->requires_grad) {
      Map gx(px->grad_buffer().data(), Bi, Di);
      gx.noalias() += dy * MapC(pw->values.data(), Ki, Di);
    }
    if (pw->requires_grad) {
      Map gw(pw->grad_buffer().data(), Ki, Di);
      gw.noalias() += dy.transpose() * MapC(px->values.data(), Bi, Di);
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t k = 0; k < K; ++k) g[k] += o.grad[b * K + k];
    }
  });
}

// ---------------------------------------------------------------------------
// LSTM

Tensor lstm_preactivation(const Tensor& x, const Tensor& h, const LstmParams& p) {
  require(x.defined() && h.defined() && p.w_ih.defined() && p.w_hh.defined() && p.bias.defined(),
          "lstm: undefined tensor");
  require(x.rank() == 2 && h.rank() == 2 && x.dim(0) == h.dim(0), "lstm: x must be [B, D] and h [B, H]");
  const std::size_t B = x.dim(0), D = x.dim(1), H = h.dim(1), G = 4 * H;
  require(p.w_ih.rank() == 2 && p.w_ih.dim(0) == G && p.w_ih.dim(1) == D,
          "lstm: w_ih must be [4H, D], got " + to_string(p.w_ih.shape()));
  require(p.w_hh.rank() == 2 && p.w_hh.dim(0) == G && p.w_hh.dim(1) == H,
          "lstm: w_hh must be [4H, H], got " + to_string(p.w_hh.shape()));
  require(p.bias.rank() == 1 && p.bias.dim(0) == G, "lstm: bias must be [4H]");

  auto out = affine_rows(B, G, p.bias.values(),
                         {{x.values().data(), D, p.w_ih.values().data()}, {h.values().data(), H, p.w_hh.values().data()}});

  TensorData *px = raw(x), *ph = raw(h), *pwi = raw(p.w_ih), *pwh = raw(p.w_hh), *pb = raw(p.bias);
  return Tensor::from_op(
      {B, G}, std::move(out), {x, h, p.w_ih, p.w_hh, p.bias},
      [px, ph, pwi, pwh, pb, B, D, H, G](const TensorData& o) {
        const auto Bi = static_cast<Eigen::Index>(B), Di = static_cast<Eigen::Index>(D),
                   Hi = static_cast<Eigen::Index>(H), Gi = static_cast<Eigen::Index>(G);
        MapC dy(o.grad.data(), Bi, Gi);
        if (px->requires_grad) {
          Map gx(px->grad_buffer().data(), Bi, Di);
          gx.noalias() += dy * MapC(pwi->values.data(), Gi, Di);
        }
        if (ph->requires_grad) {
          Map gh(ph->grad_buffer().data(), Bi, Hi);
          gh.noalias() += dy * MapC(pwh->values.data(), Gi, Hi);
        }
        if (pwi->requires_grad) {
          Map gw(pwi->grad_buffer().data(), Gi, Di);
          gw.noalias() += dy.transpose() * MapC(px->values.data(), Bi, Di);
        }
        if (pwh->requires_grad) {
          Map gw(pwh->grad_buffer().data(), Gi, Hi);
          gw.noalias() += dy.transpose() * MapC(ph->values.data(), Bi, Hi);
        }
        if (pb->requires_grad) {
          auto& g = pb->grad_buffer();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < G; ++j) g[j] += o.grad[b * G + j];
        }
      });
}

Tensor lstm_cell_state(const Tensor& preact, const Tensor& c) {
  require(preact.defined() && c.defined(), "lstm: undefined tensor");
  require(preact.rank() == 2 && c.rank() == 2 && preact.dim(0) == c.dim(0) && preact.dim(1) == 4 * c.dim(1),
          "lstm_cell_state: preactivation must be [B, 4H] for c [B, H]");
  const std::size_t B = c.dim(0), H = c.dim(1);
  // Gate activations are kept for the backward pass: i, f, g per (b, j).
  std::vector<double> gates(B * 3 * H);
  std::vector<double> out(B * H);
  auto z = preact.values();
  auto cv = c.values();
  for (std::size_t b = 0; b < B; ++b) {
    const double* zr = z.data() + b * 4 * H;
    double* gr = gates.data() + b * 3 * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double i = logistic_scalar(zr[j]);
      const double f = logistic_scalar(zr[H + j]);
      const double g = std::tanh(zr[2 * H + j]);
      gr[j] = i;
      gr[H + j] = f;
      gr[2 * H + j] = g;
      out[b * H + j] = f * cv[b * H + j] + i * g;
    }
  }
  TensorData *pz = raw(preact), *pc = raw(c);
  return Tensor::from_op({B, H}, std::move(out), {preact, c},
                         [pz, pc, B, H, gates = std::move(gates)](const TensorData& o) {
                           double* gz = pz->requires_grad ? pz->grad_buffer().data() : nullptr;
                           double* gc = pc->requires_grad ? pc->grad_buffer().data() : nullptr;
                           for (std::size_t b = 0; b < B; ++b) {
                             const double* gr = gates.data() + b * 3 * H;
                             for (std::size_t j = 0; j < H; ++j) {
                               const double d = o.grad[b * H + j];
                               const double i = gr[j], f = gr[H + j], g = gr[2 * H + j];
                               if (gz) {
                                 double* zr = gz + b * 4 * H;
                                 zr[j] += d * g * i * (1.0 - i);
                                 zr[H + j] += d * pc->values[b * H + j] * f * (1.0 - f);
                                 zr[2 * H + j] += d * i * (1.0 - g * g);
                               }
                               if (gc) gc[b * H + j] += d * f;
                             }
                           }
                         });
}

Tensor lstm_hidden(const Tensor& preact, const Tensor& c_next) {
  require(preact.defined() && c_next.defined(), "lstm: undefined tensor");
  require(preact.rank() == 2 && c_next.rank() == 2 && preact.dim(0) == c_next.dim(0) &&
              preact.dim(1) == 4 * c_next.dim(1),
          "lstm_hidden: preactivation must be [B, 4H] for c [B, H]");
  const std::size_t B = c_next.dim(0), H = c_next.dim(1);
  std::vector<double> og(B * H), tc(B * H), out(B * H);
  auto z = preact.values();
  auto cv = c_next.values();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < H; ++j) {
      const std::size_t n = b * H + j;
      og[n] = logistic_scalar(z[b * 4 * H + 3 * H + j]);
      tc[n] = std::tanh(cv[n]);
      out[n] = og[n] * tc[n];
    }
  }
  TensorData *pz = raw(preact), *pc = raw(c_next);
  return Tensor::from_op({B, H}, std::move(out), {preact, c_next},
                         [pz, pc, B, H, og = std::move(og), tc = std::move(tc)](const TensorData& o) {
                           double* gz = pz->requires_grad ? pz->grad_buffer().data() : nullptr;
                           double* gc = pc->requires_grad ? pc->grad_buffer().data() : nullptr;
                           for (std::size_t b = 0; b < B; ++b) {
                             for (std::size_t j = 0; j < H; ++j) {
                               const std::size_t n = b * H + j;
                               const double d = o.grad[n];
                               if (gz) gz[b * 4 * H + 3 * H + j] += d * tc[n] * og[n] * (1.0 - og[n]);
                               if (gc) gc[n] += d * og[n] * (1.0 - tc[n] * tc[n]);
                             }
                           }
                         });
}

LstmState lstm_step(const Tensor& x, const LstmState& state, const LstmParams& p) {
  require(state.h.defined() && state.c.defined() && state.h.shape() == state.c.shape(),
          "lstm_step: h and c must share a shape");
  Tensor z = lstm_preactivation(x, state.h, p);
  Tensor c = lstm_cell_state(z, state.c);
  Tensor h = lstm_hidden(z, c);
  return {h, c};
}

// ---------------------------------------------------------------------------
// Loss

double cross_entropy_row(std::span<const double> logits, std::span<const double> target) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  const double lse = std::log(s);
  double loss = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (target[k] != 0.0) loss -= target[k] * (logits[k] - m - lse);
  }
  return loss;
}

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t k) {
  if (k == 0 || logits.size() % k != 0) throw ShapeError("softmax_rows: buffer is not [rows, k]");
  std::vector<double> p(logits.size());
  for (std::size_t r = 0; r < logits.size() / k; ++r) {
    const double* z = logits.data() + r * k;
    double* pr = p.data() + r * k;
    const double m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (pr[j] = std::exp(z[j] - m));
    for (std::size_t j = 0; j < k; ++j) pr[j] /= s;
  }
  return p;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target) {
  require_same_shape(logits, target, "softmax_cross_entropy");
  require(logits.rank() == 2 && logits.dim(0) >= 1 && logits.dim(1) >= 1,
          "softmax_cross_entropy: logits must be [B, K], got " + to_string(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  auto z = logits.values();
  auto t = target.values();
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    double rs = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (t[b * K + k] < 0.0) throw DataError("softmax_cross_entropy: negative target entry");
      rs += t[b * K + k];
    }
    if (std::abs(rs - 1.0) > 1e-9) {
      throw DataError("softmax_cross_entropy: target row " + std::to_string(b) + " sums to " + std::to_string(rs));
    }
    total += cross_entropy_row(z.subspan(b * K, K), t.subspan(b * K, K));
  }
  const double loss = total / static_cast<double>(B);
  TensorData *pz = raw(logits), *pt = raw(target);
  return Tensor::from_op({}, {loss}, {logits, target}, [pz, pt, B, K](const TensorData& o) {
    const double up = o.grad[0] / static_cast<double>(B);
    const auto p = softmax_rows(pz->values, K);
    if (pz->requires_grad) {
      auto& g = pz->grad_buffer();
      for (std::size_t i = 0; i < B * K; ++i) g[i] += up * (p[i] - pt->values[i]);
    }
    if (pt->requires_grad) {
      auto& g = pt->grad_buffer();
      for (std::size_t b = 0; b < B; ++b) {
        const double* z = pz->values.data() + b * K;
        const double m = *std::max_element(z, z + K);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += std::exp(z[k] - m);
        const double lse = std::log(s);
        for (std::size_t k = 0; k < K; ++k) g[b * K + k] -= up * (z[k] - m - lse);
      }
    }
  });
}

}  // namespace dlarc::nc
