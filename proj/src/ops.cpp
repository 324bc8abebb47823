#include "rga/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "kernels.hpp"

namespace rga::ops {

namespace {

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": unknown axis " + std::to_string(axis) + " for rank " + std::to_string(rank));
  }
  return a;
}

std::int64_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::int64_t p = 1;
  for (std::size_t i = from; i < to; ++i) p *= s[i];
  return p;
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  const std::size_t n = dst.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
}

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

/// Walks every output index of a size-1 broadcast, calling fn(out, ia, ib)
/// with flat offsets; the innermost axis runs as a tight loop.
struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> sa, sb;

  BroadcastPlan(const Shape& a, const Shape& b) : out(broadcast_shape(a, b)) {
    const auto ra = strides_of(a), rb = strides_of(b);
    sa.resize(out.size());
    sb.resize(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      sa[i] = a[i] == 1 && out[i] != 1 ? 0 : ra[i];
      sb[i] = b[i] == 1 && out[i] != 1 ? 0 : rb[i];
    }
  }

  template <class Fn>
  void run(Fn&& fn) const {
    if (out.empty()) {
      fn(0, 0, 0);
      return;
    }
    walk(0, 0, 0, 0, fn);
  }

 private:
  template <class Fn>
  void walk(std::size_t axis, std::int64_t o, std::int64_t ia, std::int64_t ib, Fn& fn) const {
    const std::int64_t n = out[axis];
    if (axis + 1 == out.size()) {
      for (std::int64_t i = 0; i < n; ++i) fn(o + i, ia + i * sa[axis], ib + i * sb[axis]);
      return;
    }
    const std::int64_t ostride = prod(out, axis + 1, out.size());
    for (std::int64_t i = 0; i < n; ++i) {
      walk(axis + 1, o + i * ostride, ia + i * sa[axis], ib + i * sb[axis], fn);
    }
  }
};

template <class T>
Tensor<T> zeros(const Shape& s) {
  return Tensor<T>(s, T{0});
}

struct MatMulDims {
  std::int64_t batch, m, k, n;
  std::int64_t stride_a, stride_b;
  Shape out;
};

MatMulDims matmul_dims(const Shape& a, const Shape& b, const char* op) {
  auto fail = [&] {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
  };
  MatMulDims d{};
  if (a.size() == 2 && b.size() == 2) {
    if (a[1] != b[0]) fail();
    d = {1, a[0], a[1], b[1], 0, 0, {a[0], b[1]}};
  } else if (a.size() == 3 && b.size() == 3) {
    if (a[0] != b[0] || a[2] != b[1]) fail();
    d = {a[0], a[1], a[2], b[2], a[1] * a[2], b[1] * b[2], {a[0], a[1], b[2]}};
  } else if (a.size() == 2 && b.size() == 3) {
    if (a[1] != b[1]) fail();
    d = {b[0], a[0], a[1], b[2], 0, b[1] * b[2], {b[0], a[0], b[2]}};
  } else {
    fail();
  }
  return d;
}

template <class T>
Var matmul_impl(Graph<T>& g, Var a, Var b, OpKind kind, Shape out_shape_override) {
  const MatMulDims d = matmul_dims(g.value(a).shape(), g.value(b).shape(), op_name(kind));
  Shape out_shape = out_shape_override.empty() ? d.out : out_shape_override;
  auto fwd = [d, out_shape](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(out_shape, T{0});
    if (d.n < 8 && d.m > d.n) {
      // Narrow output: form C^T = B^T A^T so the vector axis runs over m.
      std::vector<T> at, bt, ct(static_cast<std::size_t>(d.m * d.n));
      if (d.stride_a == 0) at = kernels::transposed(in[0]->ptr(), d.m, d.k);
      for (std::int64_t bi = 0; bi < d.batch; ++bi) {
        if (d.stride_a != 0) at = kernels::transposed(in[0]->ptr() + bi * d.stride_a, d.m, d.k);
        bt = kernels::transposed(in[1]->ptr() + bi * d.stride_b, d.k, d.n);
        std::fill(ct.begin(), ct.end(), T{0});
        kernels::gemm_acc(d.n, d.m, d.k, bt.data(), at.data(), ct.data());
        kernels::transpose(ct.data(), d.n, d.m, out.ptr() + bi * d.m * d.n);
      }
      return out;
    }
    for (std::int64_t bi = 0; bi < d.batch; ++bi) {
      kernels::gemm_acc(d.m, d.n, d.k, in[0]->ptr() + bi * d.stride_a, in[1]->ptr() + bi * d.stride_b,
                        out.ptr() + bi * d.m * d.n);
    }
    return out;
  };
  auto bwd = [d](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved&, typename Graph<T>::InputGrads gin) {
    for (std::int64_t bi = 0; bi < d.batch; ++bi) {
      const T* gc = gout.ptr() + bi * d.m * d.n;
      if (gin[0]) kernels::gemm_nt_acc(d.m, d.k, d.n, gc, in[1]->ptr() + bi * d.stride_b, gin[0]->ptr() + bi * d.stride_a);
      if (gin[1]) kernels::gemm_tn_acc(d.k, d.n, d.m, in[0]->ptr() + bi * d.stride_a, gc, gin[1]->ptr() + bi * d.stride_b);
    }
  };
  return g.apply(kind, {a, b}, fwd, bwd);
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError("broadcast needs equal ranks, got " + shape_str(a) + " and " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError("shape mismatch " + shape_str(a) + " vs " + shape_str(b) + " on axis " + std::to_string(i));
    }
  }
  return out;
}

template <class T>
Var matmul(Graph<T>& g, Var a, Var b) {
  return matmul_impl(g, a, b, OpKind::kMatMul, {});
}

template <class T>
Var conv1x1(Graph<T>& g, Var x, Var w) {
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(w).shape();
  if (xs.size() < 2 || ws.size() != 2 || ws[1] != xs[1]) {
    throw ShapeError("conv1x1: input " + shape_str(xs) + " does not match weight " + shape_str(ws));
  }
  // Viewed as a shared-left matmul over (B, Cin, P); the output keeps the
  // trailing spatial axes of the input.
  const std::int64_t positions = prod(xs, 2, xs.size());
  Shape out_shape = xs;
  out_shape[1] = ws[0];
  const std::int64_t batch = xs[0], cin = xs[1], cout = ws[0];
  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(out_shape, T{0});
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      kernels::gemm_acc(cout, positions, cin, in[1]->ptr(), in[0]->ptr() + bi * cin * positions,
                        out.ptr() + bi * cout * positions);
    }
    return out;
  };
  auto bwd = [=](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved&, typename Graph<T>::InputGrads gin) {
    const bool wide = positions >= 16 || positions >= cin;
    std::vector<T> wt;
    if (gin[0] && wide) wt = kernels::transposed(in[1]->ptr(), cout, cin);
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      const T* gc = gout.ptr() + bi * cout * positions;
      if (gin[0] && wide) kernels::gemm_acc(cin, positions, cout, wt.data(), gc, gin[0]->ptr() + bi * cin * positions);
      if (gin[0] && !wide) {
        kernels::gemm_tn_acc(cin, positions, cout, in[1]->ptr(), gc, gin[0]->ptr() + bi * cin * positions);
      }
      if (gin[1]) kernels::gemm_nt_acc(cout, cin, positions, gc, in[0]->ptr() + bi * cin * positions, gin[1]->ptr());
    }
  };
  return g.apply(OpKind::kConv1x1, {x, w}, fwd, bwd);
}

template <class T>
Var conv2d(Graph<T>& g, Var x, Var w, int stride, int padding) {
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(w).shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3]) {
    throw ShapeError("conv2d: input " + shape_str(xs) + " does not match weight " + shape_str(ws));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  const std::int64_t batch = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
  const std::int64_t cout = ws[0], k = ws[2];
  const std::int64_t ho = (h + 2 * padding - k) / stride + 1;
  const std::int64_t wo = (wd + 2 * padding - k) / stride + 1;
  if (h + 2 * padding < k || wd + 2 * padding < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + shape_str(xs));
  }
  const std::int64_t rows = cin * k * k, cols = ho * wo;

  auto im2col = [=](const T* src, T* dst) {
    for (std::int64_t c = 0; c < cin; ++c) {
      for (std::int64_t ky = 0; ky < k; ++ky) {
        for (std::int64_t kx = 0; kx < k; ++kx) {
          T* row = dst + ((c * k + ky) * k + kx) * cols;
          for (std::int64_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy = oy * stride - padding + ky;
            for (std::int64_t ox = 0; ox < wo; ++ox) {
              const std::int64_t ix = ox * stride - padding + kx;
              row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? src[(c * h + iy) * wd + ix] : T{0};
            }
          }
        }
      }
    }
  };

  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved& saved) {
    Tensor<T> out(Shape{batch, cout, ho, wo}, T{0});
    Tensor<T> col(Shape{batch, rows, cols});
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      T* cb = col.ptr() + bi * rows * cols;
      im2col(in[0]->ptr() + bi * cin * h * wd, cb);
      kernels::gemm_acc(cout, cols, rows, in[1]->ptr(), cb, out.ptr() + bi * cout * cols);
    }
    saved.push_back(std::move(col));
    return out;
  };
  auto bwd = [=](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved& saved, typename Graph<T>::InputGrads gin) {
    const Tensor<T>& col = saved[0];
    std::vector<T> wt;
    std::vector<T> gcol;
    if (gin[0]) {
      wt = kernels::transposed(in[1]->ptr(), cout, rows);
      gcol.resize(static_cast<std::size_t>(rows * cols));
    }
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      const T* gc = gout.ptr() + bi * cout * cols;
      if (gin[1]) kernels::gemm_nt_acc(cout, rows, cols, gc, col.ptr() + bi * rows * cols, gin[1]->ptr());
      if (gin[0]) {
        std::fill(gcol.begin(), gcol.end(), T{0});
        kernels::gemm_acc(rows, cols, cout, wt.data(), gc, gcol.data());
        T* gx = gin[0]->ptr() + bi * cin * h * wd;
        for (std::int64_t c = 0; c < cin; ++c) {
          for (std::int64_t ky = 0; ky < k; ++ky) {
            for (std::int64_t kx = 0; kx < k; ++kx) {
              const T* row = gcol.data() + ((c * k + ky) * k + kx) * cols;
              for (std::int64_t oy = 0; oy < ho; ++oy) {
                const std::int64_t iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (std::int64_t ox = 0; ox < wo; ++ox) {
                  const std::int64_t ix = ox * stride - padding + kx;
                  if (ix >= 0 && ix < wd) gx[(c * h + iy) * wd + ix] += row[oy * wo + ox];
                }
              }
            }
          }
        }
      }
    }
  };
  return g.apply(OpKind::kConv2d, {x, w}, fwd, bwd);
}

template <class T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, std::optional<Var> running_mean,
               std::optional<Var> running_var, BatchNormAttrs attrs) {
  const Shape xs = g.value(x).shape();
  if (xs.size() < 2) throw ShapeError("batch_norm: input needs (B,C,...) layout, got " + shape_str(xs));
  const std::int64_t batch = xs[0], ch = xs[1], positions = prod(xs, 2, xs.size());
  const Shape cshape{ch};
  if (g.value(gamma).shape() != cshape || g.value(beta).shape() != cshape) {
    throw ShapeError("batch_norm: affine parameters must have shape " + shape_str(cshape) + ", got " +
                     shape_str(g.value(gamma).shape()) + " and " + shape_str(g.value(beta).shape()));
  }
  std::vector<Var> inputs{x, gamma, beta};
  if (!attrs.training) {
    if (!running_mean || !running_var) throw std::invalid_argument("batch_norm: eval mode requires running statistics");
    if (g.value(*running_mean).shape() != cshape || g.value(*running_var).shape() != cshape) {
      throw ShapeError("batch_norm: running statistics must have shape " + shape_str(cshape));
    }
    inputs.push_back(*running_mean);
    inputs.push_back(*running_var);
  }
  const T eps = static_cast<T>(attrs.eps);
  const bool training = attrs.training;
  const T count = static_cast<T>(batch * positions);

  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved& saved) {
    const T* xp = in[0]->ptr();
    const T* gp = in[1]->ptr();
    const T* bp = in[2]->ptr();
    Tensor<T> out(xs);
    Tensor<T> xhat(xs);
    Tensor<T> inv_std(cshape), mean(cshape), var(cshape);
    for (std::int64_t c = 0; c < ch; ++c) {
      T mu, v;
      if (training) {
        T s{0};
        for (std::int64_t b = 0; b < batch; ++b) s = kernels::sum_run(xp + (b * ch + c) * positions, positions, s);
        mu = s / count;
        T sq{0};
        for (std::int64_t b = 0; b < batch; ++b) {
          sq = kernels::sq_dev_run(xp + (b * ch + c) * positions, positions, mu, sq);
        }
        v = sq / count;
      } else {
        mu = in[3]->ptr()[c];
        v = in[4]->ptr()[c];
      }
      const T inv = T{1} / std::sqrt(v + eps);
      mean[c] = mu;
      var[c] = v;
      inv_std[c] = inv;
      const T gc = gp[c], bc = bp[c];
      for (std::int64_t b = 0; b < batch; ++b) {
        const std::int64_t off = (b * ch + c) * positions;
        const T* __restrict xr = xp + off;
        T* __restrict hr = xhat.ptr() + off;
        T* __restrict orow = out.ptr() + off;
        for (std::int64_t p = 0; p < positions; ++p) {
          const T xh = (xr[p] - mu) * inv;
          hr[p] = xh;
          orow[p] = gc * xh + bc;
        }
      }
    }
    saved.push_back(std::move(xhat));
    saved.push_back(std::move(inv_std));
    saved.push_back(std::move(mean));
    saved.push_back(std::move(var));
    return out;
  };
  auto bwd = [=](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved& saved, typename Graph<T>::InputGrads gin) {
    const Tensor<T>& xhat = saved[0];
    const Tensor<T>& inv_std = saved[1];
    const T* gp = in[1]->ptr();
    const T* gy = gout.ptr();
    const T* xh = xhat.ptr();
    for (std::int64_t c = 0; c < ch; ++c) {
      T sum_g{0}, sum_gx{0};
      for (std::int64_t b = 0; b < batch; ++b) {
        const std::int64_t off = (b * ch + c) * positions;
        for (std::int64_t p = 0; p < positions; ++p) {
          sum_g += gy[off + p];
          sum_gx += gy[off + p] * xh[off + p];
        }
      }
      if (gin[1]) (*gin[1])[c] += sum_gx;
      if (gin[2]) (*gin[2])[c] += sum_g;
      if (!gin[0]) continue;
      T* gx = gin[0]->ptr();
      if (training) {
        const T k = gp[c] * inv_std[c] / count;
        for (std::int64_t b = 0; b < batch; ++b) {
          const std::int64_t off = (b * ch + c) * positions;
          T* __restrict gr = gx + off;
          const T* __restrict gyr = gy + off;
          const T* __restrict xr = xh + off;
          for (std::int64_t p = 0; p < positions; ++p) gr[p] += k * (count * gyr[p] - sum_g - xr[p] * sum_gx);
        }
      } else {
        const T k = gp[c] * inv_std[c];
        for (std::int64_t b = 0; b < batch; ++b) {
          const std::int64_t off = (b * ch + c) * positions;
          T* __restrict gr = gx + off;
          const T* __restrict gyr = gy + off;
          for (std::int64_t p = 0; p < positions; ++p) gr[p] += k * gyr[p];
        }
      }
    }
  };
  return g.apply(OpKind::kBatchNorm, inputs, fwd, bwd);
}

template <class T>
Var relu(Graph<T>& g, Var x) {
  auto fwd = [](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out = *in[0];
    T* __restrict op = out.ptr();
    const std::size_t n = out.size();
    for (std::size_t i = 0; i < n; ++i) op[i] = op[i] > T{0} ? op[i] : T{0};
    return out;
  };
  auto bwd = [](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                typename Graph<T>::InputGrads gin) {
    const T* __restrict xp = in[0]->ptr();
    const T* __restrict gy = gout.ptr();
    T* __restrict gx = gin[0]->ptr();
    const std::size_t n = gout.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += xp[i] > T{0} ? gy[i] : T{0};
  };
  return g.apply(OpKind::kRelu, {x}, fwd, bwd);
}

template <class T>
Var sigmoid(Graph<T>& g, Var x) {
  // Output clamped to the open interval so it never rounds onto 0 or 1.
  auto fwd = [](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    const T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T{1}, T{0});
    Tensor<T> out = *in[0];
    for (auto& v : out.data()) {
      const T s = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
      v = std::clamp(s, lo, hi);
    }
    return out;
  };
  auto bwd = [](typename Graph<T>::Inputs, const Tensor<T>& out, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                typename Graph<T>::InputGrads gin) {
    T* gx = gin[0]->ptr();
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i] * out[i] * (T{1} - out[i]);
  };
  return g.apply(OpKind::kSigmoid, {x}, fwd, bwd);
}

template <class T>
Var softmax(Graph<T>& g, Var x) {
  const Shape xs = g.value(x).shape();
  if (xs.empty()) throw ShapeError("softmax: needs at least one axis");
  const std::int64_t len = xs.back();
  const std::int64_t rows = numel(xs) / len;
  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out = *in[0];
    for (std::int64_t r = 0; r < rows; ++r) {
      T* row = out.ptr() + r * len;
      const T mx = *std::max_element(row, row + len);
      T s{0};
      for (std::int64_t j = 0; j < len; ++j) {
        row[j] = std::exp(row[j] - mx);
        s += row[j];
      }
      for (std::int64_t j = 0; j < len; ++j) row[j] /= s;
    }
    return out;
  };
  auto bwd = [=](typename Graph<T>::Inputs, const Tensor<T>& out, const Tensor<T>& gout,
                 const typename Graph<T>::Saved&, typename Graph<T>::InputGrads gin) {
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* y = out.ptr() + r * len;
      const T* gy = gout.ptr() + r * len;
      T dot{0};
      for (std::int64_t j = 0; j < len; ++j) dot += gy[j] * y[j];
      T* gx = gin[0]->ptr() + r * len;
      for (std::int64_t j = 0; j < len; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  };
  return g.apply(OpKind::kSoftmax, {x}, fwd, bwd);
}

namespace {

struct AxisSplit {
  std::int64_t outer, len, inner;
  Shape out;
};

AxisSplit split_axis(const Shape& xs, int axis, bool keepdim, const char* op) {
  const int a = normalize_axis(axis, static_cast<int>(xs.size()), op);
  AxisSplit s{prod(xs, 0, a), xs[a], prod(xs, a + 1, xs.size()), xs};
  if (keepdim) {
    s.out[a] = 1;
  } else {
    s.out.erase(s.out.begin() + a);
  }
  return s;
}

}  // namespace

template <class T>
Var mean(Graph<T>& g, Var x, int axis, bool keepdim) {
  const AxisSplit s = split_axis(g.value(x).shape(), axis, keepdim, "mean");
  auto fwd = [s](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(s.out, T{0});
    const T* xp = in[0]->ptr();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      T* dst = out.ptr() + o * s.inner;
      for (std::int64_t l = 0; l < s.len; ++l) {
        const T* src = xp + (o * s.len + l) * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
      for (std::int64_t i = 0; i < s.inner; ++i) dst[i] /= static_cast<T>(s.len);
    }
    return out;
  };
  auto bwd = [s](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                 typename Graph<T>::InputGrads gin) {
    const T scale = T{1} / static_cast<T>(s.len);
    for (std::int64_t o = 0; o < s.outer; ++o) {
      const T* gy = gout.ptr() + o * s.inner;
      for (std::int64_t l = 0; l < s.len; ++l) {
        T* gx = gin[0]->ptr() + (o * s.len + l) * s.inner;
        for (std::int64_t i = 0; i < s.inner; ++i) gx[i] += gy[i] * scale;
      }
    }
  };
  return g.apply(OpKind::kMean, {x}, fwd, bwd);
}

template <class T>
Var max(Graph<T>& g, Var x, int axis, bool keepdim) {
  const AxisSplit s = split_axis(g.value(x).shape(), axis, keepdim, "max");
  auto fwd = [s](typename Graph<T>::Inputs in, typename Graph<T>::Saved& saved) {
    Tensor<T> out(s.out);
    Tensor<T> arg(s.out, T{0});
    const T* xp = in[0]->ptr();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        T best = xp[o * s.len * s.inner + i];
        std::int64_t bi = 0;
        for (std::int64_t l = 1; l < s.len; ++l) {
          const T v = xp[(o * s.len + l) * s.inner + i];
          if (v > best) {
            best = v;
            bi = l;
          }
        }
        out[o * s.inner + i] = best;
        arg[o * s.inner + i] = static_cast<T>(bi);
      }
    }
    saved.push_back(std::move(arg));
    return out;
  };
  auto bwd = [s](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout,
                 const typename Graph<T>::Saved& saved, typename Graph<T>::InputGrads gin) {
    const Tensor<T>& arg = saved[0];
    T* gx = gin[0]->ptr();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const auto l = static_cast<std::int64_t>(arg[o * s.inner + i]);
        gx[(o * s.len + l) * s.inner + i] += gout[o * s.inner + i];
      }
    }
  };
  return g.apply(OpKind::kMax, {x}, fwd, bwd);
}

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  const BroadcastPlan plan(g.value(a).shape(), g.value(b).shape());
  auto fwd = [plan](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(plan.out);
    const T* ap = in[0]->ptr();
    const T* bp = in[1]->ptr();
    T* op = out.ptr();
    plan.run([&](std::int64_t o, std::int64_t ia, std::int64_t ib) { op[o] = ap[ia] + bp[ib]; });
    return out;
  };
  auto bwd = [plan](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout,
                    const typename Graph<T>::Saved&, typename Graph<T>::InputGrads gin) {
    const T* gy = gout.ptr();
    T* ga = gin[0] ? gin[0]->ptr() : nullptr;
    T* gb = gin[1] ? gin[1]->ptr() : nullptr;
    if (ga) plan.run([&](std::int64_t o, std::int64_t ia, std::int64_t) { ga[ia] += gy[o]; });
    if (gb) plan.run([&](std::int64_t o, std::int64_t, std::int64_t ib) { gb[ib] += gy[o]; });
  };
  return g.apply(OpKind::kAdd, {a, b}, fwd, bwd);
}

template <class T>
Var mul(Graph<T>& g, Var a, Var b) {
  const BroadcastPlan plan(g.value(a).shape(), g.value(b).shape());
  auto fwd = [plan](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(plan.out);
    const T* ap = in[0]->ptr();
    const T* bp = in[1]->ptr();
    T* op = out.ptr();
    plan.run([&](std::int64_t o, std::int64_t ia, std::int64_t ib) { op[o] = ap[ia] * bp[ib]; });
    return out;
  };
  auto bwd = [plan](typename Graph<T>::Inputs in, const Tensor<T>&, const Tensor<T>& gout,
                    const typename Graph<T>::Saved&, typename Graph<T>::InputGrads gin) {
    const T* ap = in[0]->ptr();
    const T* bp = in[1]->ptr();
    const T* gy = gout.ptr();
    T* ga = gin[0] ? gin[0]->ptr() : nullptr;
    T* gb = gin[1] ? gin[1]->ptr() : nullptr;
    if (ga) plan.run([&](std::int64_t o, std::int64_t ia, std::int64_t ib) { ga[ia] += gy[o] * bp[ib]; });
    if (gb) plan.run([&](std::int64_t o, std::int64_t ia, std::int64_t ib) { gb[ib] += gy[o] * ap[ia]; });
  };
  return g.apply(OpKind::kMul, {a, b}, fwd, bwd);
}

template <class T>
Var scale(Graph<T>& g, Var a, double s) {
  const T k = static_cast<T>(s);
  auto fwd = [k](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out = *in[0];
    for (auto& v : out.data()) v *= k;
    return out;
  };
  auto bwd = [k](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                 typename Graph<T>::InputGrads gin) {
    T* gx = gin[0]->ptr();
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += k * gout[i];
  };
  return g.apply(OpKind::kScale, {a}, fwd, bwd);
}

template <class T>
Var concat(Graph<T>& g, const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape first = g.value(parts[0]).shape();
  const int a = normalize_axis(axis, static_cast<int>(first.size()), "concat");
  Shape out_shape = first;
  out_shape[a] = 0;
  std::vector<std::int64_t> chunk;  // per-part contiguous block length
  for (const Var& p : parts) {
    const Shape s = g.value(p).shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (static_cast<int>(i) != a && s[i] != first[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s) + " off axis " +
                         std::to_string(a));
      }
    }
    out_shape[a] += s[a];
    chunk.push_back(prod(s, a, s.size()));
  }
  const std::int64_t outer = prod(first, 0, a);
  const std::int64_t row = prod(out_shape, a, out_shape.size());
  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
      T* dst = out.ptr() + o * row;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const T* src = in[k]->ptr() + o * chunk[k];
        std::copy(src, src + chunk[k], dst);
        dst += chunk[k];
      }
    }
    return out;
  };
  auto bwd = [=](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                 typename Graph<T>::InputGrads gin) {
    for (std::int64_t o = 0; o < outer; ++o) {
      const T* src = gout.ptr() + o * row;
      for (std::size_t k = 0; k < gin.size(); ++k) {
        if (gin[k]) {
          T* dst = gin[k]->ptr() + o * chunk[k];
          for (std::int64_t i = 0; i < chunk[k]; ++i) dst[i] += src[i];
        }
        src += chunk[k];
      }
    }
  };
  return g.apply(OpKind::kConcat, parts, fwd, bwd);
}

template <class T>
Var slice(Graph<T>& g, Var x, int axis, std::int64_t start, std::int64_t length) {
  const Shape xs = g.value(x).shape();
  const int a = normalize_axis(axis, static_cast<int>(xs.size()), "slice");
  if (start < 0 || length <= 0 || start + length > xs[a]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside axis " + std::to_string(a) + " of " + shape_str(xs));
  }
  Shape out_shape = xs;
  out_shape[a] = length;
  const std::int64_t outer = prod(xs, 0, a), inner = prod(xs, a + 1, xs.size());
  const std::int64_t src_row = xs[a] * inner, dst_row = length * inner, off = start * inner;
  auto fwd = [=](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
      const T* src = in[0]->ptr() + o * src_row + off;
      std::copy(src, src + dst_row, out.ptr() + o * dst_row);
    }
    return out;
  };
  auto bwd = [=](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                 typename Graph<T>::InputGrads gin) {
    for (std::int64_t o = 0; o < outer; ++o) {
      T* dst = gin[0]->ptr() + o * src_row + off;
      const T* src = gout.ptr() + o * dst_row;
      for (std::int64_t i = 0; i < dst_row; ++i) dst[i] += src[i];
    }
  };
  return g.apply(OpKind::kSlice, {x}, fwd, bwd);
}

template <class T>
Var reshape(Graph<T>& g, Var x, Shape shape) {
  const Shape xs = g.value(x).shape();
  if (numel(shape) != numel(xs)) throw ShapeError("reshape: cannot view " + shape_str(xs) + " as " + shape_str(shape));
  auto fwd = [shape](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) { return in[0]->reshaped(shape); };
  auto bwd = [](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                typename Graph<T>::InputGrads gin) {
    T* gx = gin[0]->ptr();
    for (std::size_t i = 0; i < gout.size(); ++i) gx[i] += gout[i];
  };
  return g.apply(OpKind::kReshape, {x}, fwd, bwd);
}

template <class T>
Var permute(Graph<T>& g, Var x, std::vector<int> perm) {
  const Shape xs = g.value(x).shape();
  if (perm.size() != xs.size()) throw ShapeError("permute: order length does not match shape " + shape_str(xs));
  std::vector<int> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(perm.size()) || seen[p]++) {
      throw ShapeError("permute: axis order is not a permutation of " + shape_str(xs));
    }
  }
  Shape out_shape(xs.size());
  const auto in_strides = strides_of(xs);
  std::vector<std::int64_t> gather(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out_shape[i] = xs[perm[i]];
    gather[i] = in_strides[perm[i]];
  }
  // Output-order walk; fn(o, src, n, stride) covers one run of the last axis.
  auto walk = [out_shape, gather](auto&& fn) {
    const std::size_t r = out_shape.size();
    const std::int64_t len = out_shape[r - 1], step = gather[r - 1];
    std::vector<std::int64_t> idx(r, 0);
    const std::int64_t n = numel(out_shape);
    std::int64_t src = 0;
    for (std::int64_t o = 0; o < n; o += len) {
      fn(o, src, len, step);
      for (int ax = static_cast<int>(r) - 2; ax >= 0; --ax) {
        if (++idx[ax] < out_shape[ax]) {
          src += gather[ax];
          break;
        }
        src -= gather[ax] * (out_shape[ax] - 1);
        idx[ax] = 0;
      }
    }
  };
  auto fwd = [out_shape, walk](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    Tensor<T> out(out_shape);
    const T* __restrict xp = in[0]->ptr();
    T* __restrict op = out.ptr();
    walk([&](std::int64_t o, std::int64_t s, std::int64_t n, std::int64_t st) {
      for (std::int64_t i = 0; i < n; ++i) op[o + i] = xp[s + i * st];
    });
    return out;
  };
  auto bwd = [walk](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                    typename Graph<T>::InputGrads gin) {
    T* __restrict gx = gin[0]->ptr();
    const T* __restrict gy = gout.ptr();
    walk([&](std::int64_t o, std::int64_t s, std::int64_t n, std::int64_t st) {
      for (std::int64_t i = 0; i < n; ++i) gx[s + i * st] += gy[o + i];
    });
  };
  return g.apply(OpKind::kPermute, {x}, fwd, bwd);
}

template <class T>
Var sum(Graph<T>& g, Var x) {
  auto fwd = [](typename Graph<T>::Inputs in, typename Graph<T>::Saved&) {
    T s{0};
    for (T v : in[0]->data()) s += v;
    return Tensor<T>::scalar(s);
  };
  auto bwd = [](typename Graph<T>::Inputs, const Tensor<T>&, const Tensor<T>& gout, const typename Graph<T>::Saved&,
                typename Graph<T>::InputGrads gin) {
    const T gy = gout[0];
    for (auto& v : gin[0]->data()) v += gy;
  };
  return g.apply(OpKind::kSum, {x}, fwd, bwd);
}

template <class T>
Var mean_all(Graph<T>& g, Var x) {
  const auto n = static_cast<double>(g.value(x).size());
  return scale(g, sum(g, x), 1.0 / n);
}

#define RGA_INSTANTIATE_OPS(T)                                                                             \
  template Var matmul<T>(Graph<T>&, Var, Var);                                                             \
  template Var conv1x1<T>(Graph<T>&, Var, Var);                                                            \
  template Var conv2d<T>(Graph<T>&, Var, Var, int, int);                                                   \
  template Var batch_norm<T>(Graph<T>&, Var, Var, Var, std::optional<Var>, std::optional<Var>, BatchNormAttrs); \
  template Var relu<T>(Graph<T>&, Var);                                                                    \
  template Var sigmoid<T>(Graph<T>&, Var);                                                                 \
  template Var softmax<T>(Graph<T>&, Var);                                                                 \
  template Var mean<T>(Graph<T>&, Var, int, bool);                                                         \
  template Var max<T>(Graph<T>&, Var, int, bool);                                                          \
  template Var add<T>(Graph<T>&, Var, Var);                                                                \
  template Var mul<T>(Graph<T>&, Var, Var);                                                                \
  template Var scale<T>(Graph<T>&, Var, double);                                                           \
  template Var concat<T>(Graph<T>&, const std::vector<Var>&, int);                                         \
  template Var slice<T>(Graph<T>&, Var, int, std::int64_t, std::int64_t);                                  \
  template Var reshape<T>(Graph<T>&, Var, Shape);                                                          \
  template Var permute<T>(Graph<T>&, Var, std::vector<int>);                                               \
  template Var sum<T>(Graph<T>&, Var);                                                                     \
  template Var mean_all<T>(Graph<T>&, Var);

RGA_INSTANTIATE_OPS(float)
RGA_INSTANTIATE_OPS(double)

}  // namespace rga::ops
