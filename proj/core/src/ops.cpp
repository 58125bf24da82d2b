// SPDX-License-Identifier: Apache-2.0
#include "informer/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "informer/error.hpp"

namespace informer {

namespace {

thread_local std::uint64_t g_mac_count = 0;

bool is_binary(ElementwiseKind k) {
  return k == ElementwiseKind::kAdd || k == ElementwiseKind::kSub || k == ElementwiseKind::kMul ||
         k == ElementwiseKind::kDiv;
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Strides of `in` laid against the broadcast `out` shape (0 on expanded dims).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  const auto own = contiguous_strides(in);
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != 1) strides[offset + i] = own[i];
  }
  return strides;
}

// Calls fn(out_index, a_index, b_index) for every element of the broadcast.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t n = shape_numel(out);
  const std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor binary(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  if (kind == ElementwiseKind::kDiv) {
    for (double d : bv) {
      if (d == 0.0) throw DomainError("division by zero");
    }
  }
  std::vector<double> out(shape_numel(out_shape));
  const bool same = a.shape() == b.shape();
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  auto apply = [kind](double x, double y) {
    switch (kind) {
      case ElementwiseKind::kAdd: return x + y;
      case ElementwiseKind::kSub: return x - y;
      case ElementwiseKind::kMul: return x * y;
      default: return x / y;
    }
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = apply(av[ia], bv[ib]); });
  }
  Tensor result(out_shape, std::move(out));
  if (should_record({&a, &b})) {
    active_tape()->record(result, [kind, a, b, result, sa, sb]() mutable {
      const auto g = result.grad();
      const auto av = a.values();
      const auto bv = b.values();
      std::vector<double> ga(a.requires_grad() ? a.numel() : 0, 0.0);
      std::vector<double> gb(b.requires_grad() ? b.numel() : 0, 0.0);
      const bool want_a = !ga.empty();
      const bool want_b = !gb.empty();
      for_each_broadcast(result.shape(), sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        const double go = g[o];
        switch (kind) {
          case ElementwiseKind::kAdd:
            if (want_a) ga[ia] += go;
            if (want_b) gb[ib] += go;
            break;
          case ElementwiseKind::kSub:
            if (want_a) ga[ia] += go;
            if (want_b) gb[ib] -= go;
            break;
          case ElementwiseKind::kMul:
            if (want_a) ga[ia] += go * bv[ib];
            if (want_b) gb[ib] += go * av[ia];
            break;
          default:
            if (want_a) ga[ia] += go / bv[ib];
            if (want_b) gb[ib] -= go * av[ia] / (bv[ib] * bv[ib]);
            break;
        }
      });
      if (want_a) accumulate_grad(a, ga);
      if (want_b) accumulate_grad(b, gb);
    });
  }
  return result;
}

Tensor unary(ElementwiseOp op, const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    switch (op.kind) {
      case ElementwiseKind::kExp: out[i] = std::exp(x); break;
      case ElementwiseKind::kLog:
        if (!(x > 0.0)) throw DomainError("log of non-positive value");
        out[i] = std::log(x);
        break;
      case ElementwiseKind::kSqrt:
        if (x < 0.0) throw DomainError("sqrt of negative value");
        out[i] = std::sqrt(x);
        break;
      case ElementwiseKind::kSquare: out[i] = x * x; break;
      case ElementwiseKind::kNegate: out[i] = -x; break;
      case ElementwiseKind::kLeakyRelu: out[i] = x > 0.0 ? x : op.param * x; break;
      case ElementwiseKind::kClampMin: out[i] = x < op.param ? op.param : x; break;
      case ElementwiseKind::kTanh: out[i] = std::tanh(x); break;
      case ElementwiseKind::kSigmoid: out[i] = sigmoid_value(x); break;
      case ElementwiseKind::kSoftplus: out[i] = softplus_value(x); break;
      default: throw ShapeError("binary elementwise kind used as unary");
    }
  }
  Tensor result(a.shape(), std::move(out));
  if (should_record({&a})) {
    active_tape()->record(result, [op, a, result]() mutable {
      const auto g = result.grad();
      const auto x = a.values();
      const auto y = result.values();
      std::vector<double> ga(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        double d = 0.0;
        switch (op.kind) {
          case ElementwiseKind::kExp: d = y[i]; break;
          case ElementwiseKind::kLog: d = 1.0 / x[i]; break;
          case ElementwiseKind::kSqrt: d = 0.5 / y[i]; break;
          case ElementwiseKind::kSquare: d = 2.0 * x[i]; break;
          case ElementwiseKind::kNegate: d = -1.0; break;
          case ElementwiseKind::kLeakyRelu: d = x[i] > 0.0 ? 1.0 : op.param; break;
          case ElementwiseKind::kClampMin: d = x[i] < op.param ? 0.0 : 1.0; break;
          case ElementwiseKind::kTanh: d = 1.0 - y[i] * y[i]; break;
          case ElementwiseKind::kSigmoid: d = y[i] * (1.0 - y[i]); break;
          case ElementwiseKind::kSoftplus: d = sigmoid_value(x[i]); break;
          default: break;
        }
        ga[i] = g[i] * d;
      }
      accumulate_grad(a, ga);
    });
  }
  return result;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b) {
  if (is_binary(op.kind)) {
    if (!b) throw ShapeError("binary elementwise op requires two operands");
    return binary(op.kind, a, *b);
  }
  return unary(op, a);
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(ElementwiseKind::kDiv, a, b); }
Tensor exp(const Tensor& a) { return unary({ElementwiseKind::kExp}, a); }
Tensor log(const Tensor& a) { return unary({ElementwiseKind::kLog}, a); }
Tensor sqrt(const Tensor& a) { return unary({ElementwiseKind::kSqrt}, a); }
Tensor square(const Tensor& a) { return unary({ElementwiseKind::kSquare}, a); }
Tensor neg(const Tensor& a) { return unary({ElementwiseKind::kNegate}, a); }
Tensor leaky_relu(const Tensor& a, double slope) { return unary({ElementwiseKind::kLeakyRelu, slope}, a); }
Tensor clamp_min(const Tensor& a, double bound) { return unary({ElementwiseKind::kClampMin, bound}, a); }
Tensor tanh(const Tensor& a) { return unary({ElementwiseKind::kTanh}, a); }
Tensor sigmoid(const Tensor& a) { return unary({ElementwiseKind::kSigmoid}, a); }
Tensor softplus(const Tensor& a) { return unary({ElementwiseKind::kSoftplus}, a); }
Tensor scale(const Tensor& a, double factor) { return mul(a, Tensor::scalar(factor)); }
Tensor add_scalar(const Tensor& a, double offset) { return add(a, Tensor::scalar(offset)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t p = b.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shape(a_batch, b_batch);
  const auto sa = broadcast_strides(a_batch, batch);
  const auto sb = broadcast_strides(b_batch, batch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(p);
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t a_mat = m * k;
  const std::size_t b_mat = k * p;
  const std::size_t c_mat = m * p;
  for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    const double* A = av.data() + ia * a_mat;
    const double* B = bv.data() + ib * b_mat;
    double* C = out.data() + o * c_mat;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = A[i * k + kk];
        const double* brow = B + kk * p;
        double* crow = C + i * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += aik * brow[j];
      }
    }
  });
  Tensor result(out_shape, std::move(out));
  if (should_record({&a, &b})) {
    active_tape()->record(result, [a, b, result, batch, sa, sb, m, k, p]() mutable {
      const auto g = result.grad();
      const auto av = a.values();
      const auto bv = b.values();
      std::vector<double> ga(a.requires_grad() ? a.numel() : 0, 0.0);
      std::vector<double> gb(b.requires_grad() ? b.numel() : 0, 0.0);
      for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        const double* A = av.data() + ia * m * k;
        const double* B = bv.data() + ib * k * p;
        const double* G = g.data() + o * m * p;
        if (!ga.empty()) {
          double* GA = ga.data() + ia * m * k;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              double acc = 0.0;
              for (std::size_t j = 0; j < p; ++j) acc += G[i * p + j] * B[kk * p + j];
              GA[i * k + kk] += acc;
            }
          }
        }
        if (!gb.empty()) {
          double* GB = gb.data() + ib * k * p;
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = A[i * k + kk];
              for (std::size_t j = 0; j < p; ++j) GB[kk * p + j] += aik * G[i * p + j];
            }
          }
        }
      });
      if (!ga.empty()) accumulate_grad(a, ga);
      if (!gb.empty()) accumulate_grad(b, gb);
    });
  }
  return result;
}

namespace {

struct ConvGeometry {
  std::size_t h, w, cin, k, cout, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
                           int padding, const std::optional<Tensor>& mask) {
  if (x.rank() != 3) throw ShapeError("conv2d input must be [H, W, C], got " + shape_str(x.shape()));
  if (kernels.rank() != 4 || kernels.dim(0) != kernels.dim(1)) {
    throw ShapeError("conv2d kernels must be [k, k, Cin, Cout], got " + shape_str(kernels.shape()));
  }
  const std::size_t k = kernels.dim(0);
  if (k % 2 == 0) throw ShapeError("conv2d kernel size must be odd");
  if (kernels.dim(2) != x.dim(2)) throw ShapeError("conv2d channel mismatch");
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(3)) throw ShapeError("conv2d bias must be [Cout]");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d needs stride >= 1 and padding >= 0");
  if (mask && mask->shape() != Shape{k, k}) throw ShapeError("conv2d mask must be [k, k]");
  const auto span_h = static_cast<long>(x.dim(0)) + 2L * padding - static_cast<long>(k);
  const auto span_w = static_cast<long>(x.dim(1)) + 2L * padding - static_cast<long>(k);
  if (span_h < 0 || span_w < 0) throw ShapeError("conv2d kernel larger than padded input");
  return {x.dim(0), x.dim(1), x.dim(2), k, kernels.dim(3), static_cast<std::size_t>(span_h / stride) + 1,
          static_cast<std::size_t>(span_w / stride) + 1};
}

std::vector<double> effective_kernel(const Tensor& kernels, const std::optional<Tensor>& mask) {
  std::vector<double> kv(kernels.values().begin(), kernels.values().end());
  if (mask) {
    const auto mv = mask->values();
    const std::size_t per_tap = kernels.dim(2) * kernels.dim(3);
    for (std::size_t t = 0; t < mv.size(); ++t) {
      for (std::size_t i = 0; i < per_tap; ++i) kv[t * per_tap + i] *= mv[t];
    }
  }
  return kv;
}

// Accumulates one output pixel into `out` (length Cout), bias first.
void conv_pixel(const ConvGeometry& g, const double* x, const double* kern, const double* bias, int stride,
                int padding, std::size_t oh, std::size_t ow, double* out) {
  for (std::size_t co = 0; co < g.cout; ++co) out[co] = bias[co];
  for (std::size_t kh = 0; kh < g.k; ++kh) {
    const long ih = static_cast<long>(oh) * stride - padding + static_cast<long>(kh);
    if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
    for (std::size_t kw = 0; kw < g.k; ++kw) {
      const long iw = static_cast<long>(ow) * stride - padding + static_cast<long>(kw);
      if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
      const double* xp = x + (static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw)) * g.cin;
      const double* kp = kern + (kh * g.k + kw) * g.cin * g.cout;
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        const double xv = xp[ci];
        const double* krow = kp + ci * g.cout;
        for (std::size_t co = 0; co < g.cout; ++co) out[co] += xv * krow[co];
      }
      g_mac_count += g.cin * g.cout;
    }
  }
}

}  // namespace

std::vector<double> conv2d_at(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
                              int padding, const std::optional<Tensor>& mask, std::size_t out_h,
                              std::size_t out_w) {
  const auto g = conv_geometry(x, kernels, bias, stride, padding, mask);
  if (out_h >= g.oh || out_w >= g.ow) throw ShapeError("conv2d_at position outside output");
  const auto kv = effective_kernel(kernels, mask);
  std::vector<double> out(g.cout);
  conv_pixel(g, x.values().data(), kv.data(), bias.values().data(), stride, padding, out_h, out_w, out.data());
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride, int padding,
              const std::optional<Tensor>& mask) {
  const auto g = conv_geometry(x, kernels, bias, stride, padding, mask);
  const auto kv = effective_kernel(kernels, mask);
  std::vector<double> out(g.oh * g.ow * g.cout);
  const double* xv = x.values().data();
  const double* bv = bias.values().data();
  for (std::size_t oh = 0; oh < g.oh; ++oh) {
    for (std::size_t ow = 0; ow < g.ow; ++ow) {
      conv_pixel(g, xv, kv.data(), bv, stride, padding, oh, ow, out.data() + (oh * g.ow + ow) * g.cout);
    }
  }
  Tensor result({g.oh, g.ow, g.cout}, std::move(out));
  if (should_record({&x, &kernels, &bias})) {
    active_tape()->record(result, [x, kernels, bias, mask, result, g, stride, padding,
                                   kv = std::move(kv)]() mutable {
      const auto go = result.grad();
      const auto xs = x.values();
      std::vector<double> gx(x.requires_grad() ? x.numel() : 0, 0.0);
      std::vector<double> gk(kernels.requires_grad() ? kernels.numel() : 0, 0.0);
      std::vector<double> gb(bias.requires_grad() ? bias.numel() : 0, 0.0);
      for (std::size_t oh = 0; oh < g.oh; ++oh) {
        for (std::size_t ow = 0; ow < g.ow; ++ow) {
          const double* gp = go.data() + (oh * g.ow + ow) * g.cout;
          if (!gb.empty()) {
            for (std::size_t co = 0; co < g.cout; ++co) gb[co] += gp[co];
          }
          for (std::size_t kh = 0; kh < g.k; ++kh) {
            const long ih = static_cast<long>(oh) * stride - padding + static_cast<long>(kh);
            if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
            for (std::size_t kw = 0; kw < g.k; ++kw) {
              const long iw = static_cast<long>(ow) * stride - padding + static_cast<long>(kw);
              if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
              const std::size_t xoff = (static_cast<std::size_t>(ih) * g.w + static_cast<std::size_t>(iw)) * g.cin;
              const std::size_t koff = (kh * g.k + kw) * g.cin * g.cout;
              for (std::size_t ci = 0; ci < g.cin; ++ci) {
                const double* krow = kv.data() + koff + ci * g.cout;
                if (!gx.empty()) {
                  double acc = 0.0;
                  for (std::size_t co = 0; co < g.cout; ++co) acc += gp[co] * krow[co];
                  gx[xoff + ci] += acc;
                }
                if (!gk.empty()) {
                  const double xval = xs[xoff + ci];
                  double* gkrow = gk.data() + koff + ci * g.cout;
                  for (std::size_t co = 0; co < g.cout; ++co) gkrow[co] += xval * gp[co];
                }
              }
            }
          }
        }
      }
      if (!gk.empty() && mask) {
        const auto mv = mask->values();
        const std::size_t per_tap = g.cin * g.cout;
        for (std::size_t t = 0; t < mv.size(); ++t) {
          for (std::size_t i = 0; i < per_tap; ++i) gk[t * per_tap + i] *= mv[t];
        }
      }
      if (!gx.empty()) accumulate_grad(x, gx);
      if (!gk.empty()) accumulate_grad(kernels, gk);
      if (!gb.empty()) accumulate_grad(bias, gb);
    });
  }
  return result;
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride,
                        int padding, int output_padding) {
  if (x.rank() != 3) throw ShapeError("conv_transpose2d input must be [H, W, C]");
  if (kernels.rank() != 4 || kernels.dim(0) != kernels.dim(1) || kernels.dim(2) != x.dim(2)) {
    throw ShapeError("conv_transpose2d kernels must be [k, k, Cin, Cout] matching the input");
  }
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(3)) throw ShapeError("conv_transpose2d bias must be [Cout]");
  if (stride < 1 || padding < 0 || output_padding < 0 || output_padding >= stride) {
    throw ShapeError("conv_transpose2d needs stride >= 1, padding >= 0, 0 <= output_padding < stride");
  }
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t k = kernels.dim(0), cout = kernels.dim(3);
  const long oh_l = (static_cast<long>(h) - 1) * stride - 2L * padding + static_cast<long>(k) + output_padding;
  const long ow_l = (static_cast<long>(w) - 1) * stride - 2L * padding + static_cast<long>(k) + output_padding;
  if (oh_l <= 0 || ow_l <= 0) throw ShapeError("conv_transpose2d output would be empty");
  const auto oh = static_cast<std::size_t>(oh_l);
  const auto ow = static_cast<std::size_t>(ow_l);
  std::vector<double> out(oh * ow * cout);
  const auto bv = bias.values();
  for (std::size_t i = 0; i < oh * ow; ++i) {
    for (std::size_t co = 0; co < cout; ++co) out[i * cout + co] = bv[co];
  }
  const auto xv = x.values();
  const auto kv = kernels.values();
  // Visits every (input pixel, tap) pair landing inside the output.
  auto visit = [=](auto&& fn) {
    for (std::size_t ih = 0; ih < h; ++ih) {
      for (std::size_t iw = 0; iw < w; ++iw) {
        for (std::size_t kh = 0; kh < k; ++kh) {
          const long y = static_cast<long>(ih) * stride - padding + static_cast<long>(kh);
          if (y < 0 || y >= oh_l) continue;
          for (std::size_t kw = 0; kw < k; ++kw) {
            const long xo = static_cast<long>(iw) * stride - padding + static_cast<long>(kw);
            if (xo < 0 || xo >= ow_l) continue;
            fn((ih * w + iw) * cin, (static_cast<std::size_t>(y) * ow + static_cast<std::size_t>(xo)) * cout,
               (kh * k + kw) * cin * cout);
          }
        }
      }
    }
  };
  visit([&](std::size_t xoff, std::size_t ooff, std::size_t koff) {
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double xval = xv[xoff + ci];
      const double* krow = kv.data() + koff + ci * cout;
      double* orow = out.data() + ooff;
      for (std::size_t co = 0; co < cout; ++co) orow[co] += xval * krow[co];
    }
    g_mac_count += cin * cout;
  });
  Tensor result({oh, ow, cout}, std::move(out));
  if (should_record({&x, &kernels, &bias})) {
    active_tape()->record(result, [x, kernels, bias, result, visit, oh, ow, cin, cout]() mutable {
      const auto go = result.grad();
      const auto xs = x.values();
      const auto ks = kernels.values();
      std::vector<double> gx(x.requires_grad() ? x.numel() : 0, 0.0);
      std::vector<double> gk(kernels.requires_grad() ? kernels.numel() : 0, 0.0);
      std::vector<double> gb(bias.requires_grad() ? bias.numel() : 0, 0.0);
      if (!gb.empty()) {
        for (std::size_t i = 0; i < oh * ow; ++i) {
          for (std::size_t co = 0; co < cout; ++co) gb[co] += go[i * cout + co];
        }
      }
      visit([&](std::size_t xoff, std::size_t ooff, std::size_t koff) {
        const double* gp = go.data() + ooff;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* krow = ks.data() + koff + ci * cout;
          if (!gx.empty()) {
            double acc = 0.0;
            for (std::size_t co = 0; co < cout; ++co) acc += gp[co] * krow[co];
            gx[xoff + ci] += acc;
          }
          if (!gk.empty()) {
            const double xval = xs[xoff + ci];
            double* gkrow = gk.data() + koff + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) gkrow[co] += xval * gp[co];
          }
        }
      });
      if (!gx.empty()) accumulate_grad(x, gx);
      if (!gk.empty()) accumulate_grad(kernels, gk);
      if (!gb.empty()) accumulate_grad(bias, gb);
    });
  }
  return result;
}

Tensor reduce(ReduceKind kind, const Tensor& x, std::vector<int> axes, bool keepdims) {
  const std::size_t r = x.rank();
  std::vector<bool> reduced(r, false);
  for (int a : axes) reduced[normalize_axis(a, r)] = true;
  Shape kept_shape(r);
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < r; ++d) {
    kept_shape[d] = reduced[d] ? 1 : x.shape()[d];
    if (reduced[d]) count *= x.shape()[d];
    if (!reduced[d] || keepdims) out_shape.push_back(kept_shape[d]);
  }
  const auto so = broadcast_strides(kept_shape, x.shape());
  const std::vector<std::size_t> zero(r, 0);
  std::vector<double> out(shape_numel(kept_shape), 0.0);
  const auto xv = x.values();
  for_each_broadcast(x.shape(), so, zero, [&](std::size_t i, std::size_t o, std::size_t) { out[o] += xv[i]; });
  const double factor = kind == ReduceKind::kMean ? 1.0 / static_cast<double>(count) : 1.0;
  if (kind == ReduceKind::kMean) {
    for (double& v : out) v *= factor;
  }
  Tensor result(out_shape, std::move(out));
  if (should_record({&x})) {
    active_tape()->record(result, [x, result, so, zero, factor]() mutable {
      const auto g = result.grad();
      std::vector<double> gx(x.numel());
      for_each_broadcast(x.shape(), so, zero,
                         [&](std::size_t i, std::size_t o, std::size_t) { gx[i] = g[o] * factor; });
      accumulate_grad(x, gx);
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(ReduceKind::kSum, x, axes);
}

Tensor mean(const Tensor& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(ReduceKind::kMean, x, axes);
}

namespace {
struct AxisSplit {
  std::size_t outer, n, inner;
};
AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
  return s;
}
}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const auto s = split_at(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.n * s.inner + i;
      double mx = xv[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.n; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.n; ++j) out[base + j * s.inner] /= total;
    }
  }
  Tensor result(x.shape(), std::move(out));
  if (should_record({&x})) {
    active_tape()->record(result, [x, result, s]() mutable {
      const auto g = result.grad();
      const auto y = result.values();
      std::vector<double> gx(y.size());
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.n * s.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * y[base + j * s.inner];
          for (std::size_t j = 0; j < s.n; ++j) {
            const std::size_t idx = base + j * s.inner;
            gx[idx] = y[idx] * (g[idx] - dot);
          }
        }
      }
      accumulate_grad(x, gx);
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> tensors, int axis) {
  if (tensors.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t r = tensors[0].rank();
  const std::size_t ax = normalize_axis(axis, r);
  Shape out_shape = tensors[0].shape();
  out_shape[ax] = 0;
  for (const auto& t : tensors) {
    if (t.rank() != r) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < r; ++d) {
      if (d != ax && t.shape()[d] != tensors[0].shape()[d]) {
        throw ShapeError("concat shape mismatch off-axis: " + shape_str(t.shape()) + " vs " +
                         shape_str(tensors[0].shape()));
      }
    }
    out_shape[ax] += t.shape()[ax];
  }
  const auto so = split_at(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    const auto st = split_at(t.shape(), ax);
    const auto tv = t.values();
    for (std::size_t o = 0; o < st.outer; ++o) {
      std::copy_n(tv.data() + o * st.n * st.inner, st.n * st.inner,
                  out.data() + o * so.n * so.inner + offset * so.inner);
    }
    offset += st.n;
  }
  Tensor result(out_shape, std::move(out));
  bool record = false;
  if (active_tape()) {
    for (const auto& t : tensors) record = record || t.requires_grad();
  }
  if (record) {
    std::vector<Tensor> inputs(tensors.begin(), tensors.end());
    active_tape()->record(result, [inputs, result, so]() mutable {
      const auto g = result.grad();
      std::size_t offset = 0;
      for (auto& t : inputs) {
        const std::size_t n = t.numel() / (so.outer * so.inner);
        if (t.requires_grad()) {
          std::vector<double> gt(t.numel());
          for (std::size_t o = 0; o < so.outer; ++o) {
            std::copy_n(g.data() + o * so.n * so.inner + offset * so.inner, n * so.inner,
                        gt.data() + o * n * so.inner);
          }
          accumulate_grad(t, gt);
        }
        offset += n;
      }
    });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  Tensor result(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  if (should_record({&x})) {
    active_tape()->record(result, [x, result]() mutable { accumulate_grad(x, result.grad()); });
  }
  return result;
}

Tensor permute(const Tensor& x, std::vector<std::size_t> perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw ShapeError("permute needs one entry per axis");
  std::vector<bool> seen(r, false);
  for (auto p : perm) {
    if (p >= r || seen[p]) throw ShapeError("permute argument is not a permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  const auto in_strides = contiguous_strides(x.shape());
  std::vector<std::size_t> gather(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = x.shape()[perm[d]];
    gather[d] = in_strides[perm[d]];
  }
  const std::vector<std::size_t> zero(r, 0);
  std::vector<double> out(x.numel());
  const auto xv = x.values();
  for_each_broadcast(out_shape, gather, zero, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = xv[i]; });
  Tensor result(out_shape, std::move(out));
  if (should_record({&x})) {
    active_tape()->record(result, [x, result, out_shape, gather, zero]() mutable {
      const auto g = result.grad();
      std::vector<double> gx(x.numel());
      for_each_broadcast(out_shape, gather, zero, [&](std::size_t o, std::size_t i, std::size_t) { gx[i] = g[o]; });
      accumulate_grad(x, gx);
    });
  }
  return result;
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  if (length == 0 || start + length > x.shape()[ax]) throw ShapeError("slice out of range");
  const auto s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<double> out(shape_numel(out_shape));
  const auto xv = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + o * s.n * s.inner + start * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  }
  Tensor result(out_shape, std::move(out));
  if (should_record({&x})) {
    active_tape()->record(result, [x, result, s, start, length]() mutable {
      const auto g = result.grad();
      std::vector<double> gx(x.numel(), 0.0);
      for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(g.data() + o * length * s.inner, length * s.inner,
                    gx.data() + o * s.n * s.inner + start * s.inner);
      }
      accumulate_grad(x, gx);
    });
  }
  return result;
}

void reset_mac_count() { g_mac_count = 0; }
std::uint64_t mac_count() { return g_mac_count; }

double grad_check(const std::function<Tensor(std::span<const Tensor>)>& f, std::vector<Tensor> inputs,
                  const GradCheckOptions& options) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f(inputs);
  }
  if (loss.numel() != 1) throw ShapeError("grad_check function must return a scalar");
  if (!std::isfinite(loss.item())) throw DomainError("grad_check function returned a non-finite value");
  if (tape.size() > 0) tape.backward(loss);

  NoGradGuard no_grad;
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end()) : std::vector<double>(t.numel(), 0.0);
    const std::size_t n = t.numel();
    const std::size_t stride =
        options.max_coords_per_input == 0 || n <= options.max_coords_per_input
            ? 1
            : (n + options.max_coords_per_input - 1) / options.max_coords_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      auto vals = t.mutable_values();
      const double orig = vals[i];
      vals[i] = orig + options.step;
      const double up = f(inputs).item();
      vals[i] = orig - options.step;
      const double down = f(inputs).item();
      vals[i] = orig;
      if (!std::isfinite(up) || !std::isfinite(down)) throw DomainError("grad_check saw a non-finite value");
      const double numeric = (up - down) / (2.0 * options.step);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace informer
