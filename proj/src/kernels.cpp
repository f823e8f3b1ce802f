#include "rehab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rehab::kernel {
namespace {

// Strides of `src` as seen from a broadcast `out` shape; broadcast axes get stride 0.
std::vector<std::size_t> aligned_strides(const Shape& src, const Shape& out) {
  const auto src_strides = row_major_strides(src);
  std::vector<std::size_t> s(out.size(), 0);
  const std::size_t lead = out.size() - src.size();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] != 1) s[lead + i] = src_strides[i];
  }
  return s;
}

// Calls fn(out_index, a_offset, b_offset) for every element of `out`.
template <class Fn>
void broadcast_walk(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
  const std::size_t rank = out.size();
  if (rank == 0) {
    fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const auto sa = aligned_strides(a, out);
  const auto sb = aligned_strides(b, out);
  const std::size_t inner = out[rank - 1];
  const std::size_t sa_in = sa[rank - 1];
  const std::size_t sb_in = sb[rank - 1];
  const std::size_t total = element_count(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t a_off = 0;
  std::size_t b_off = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) fn(o + j, a_off + j * sa_in, b_off + j * sb_in);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      a_off += sa[ax];
      b_off += sb[ax];
      if (idx[ax] < out[ax]) break;
      a_off -= sa[ax] * out[ax];
      b_off -= sb[ax] * out[ax];
      idx[ax] = 0;
    }
  }
}

template <class Op>
Tensor elementwise(const Tensor& a, const Tensor& b, Op op) {
  Tensor out(broadcast_shape(a.shape(), b.shape()));
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = op(x[i], y[i]);
    return out;
  }
  broadcast_walk(out.shape(), a.shape(), b.shape(),
                 [&](std::size_t i, std::size_t ia, std::size_t ib) { o[i] = op(x[ia], y[ib]); });
  return out;
}

Shape batch_part(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

void require_matrix_operands(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.shape()[a.rank() - 1] != b.shape()[b.rank() - 2]) {
    throw ShapeError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
}

struct Extent {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

Extent split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw std::invalid_argument("axis " + std::to_string(axis) + " invalid for shape " + to_string(s));
  }
  Extent e;
  for (std::size_t i = 0; i < axis; ++i) e.outer *= s[i];
  e.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) e.inner *= s[i];
  return e;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " do not broadcast");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

Tensor reduce_to_shape(const Tensor& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  if (broadcast_shape(target, grad.shape()) != grad.shape()) {
    throw ShapeError("cannot reduce " + to_string(grad.shape()) + " to " + to_string(target));
  }
  Tensor out(target);
  auto o = out.data();
  auto g = grad.data();
  broadcast_walk(grad.shape(), target, grad.shape(),
                 [&](std::size_t i, std::size_t it, std::size_t) { o[it] += g[i]; });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix_operands(a, b);
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t n = b.shape()[b.rank() - 1];
  const Shape ba = batch_part(a.shape());
  const Shape bb = batch_part(b.shape());
  Shape out_shape = broadcast_shape(ba, bb);
  const Shape batch = out_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  broadcast_walk(batch, ba, bb, [&](std::size_t bi, std::size_t ai, std::size_t bj) {
    const double* A = x.data() + ai * m * k;
    const double* B = y.data() + bj * k * n;
    double* C = o.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = A[i * k + p];
        if (av == 0.0) continue;
        const double* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
  return out;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a, Tensor* grad_b) {
  require_matrix_operands(a, b);
  const std::size_t m = a.shape()[a.rank() - 2];
  const std::size_t k = a.shape()[a.rank() - 1];
  const std::size_t n = b.shape()[b.rank() - 1];
  const Shape ba = batch_part(a.shape());
  const Shape bb = batch_part(b.shape());
  const Shape batch = broadcast_shape(ba, bb);
  if (grad_a) *grad_a = Tensor(a.shape());
  if (grad_b) *grad_b = Tensor(b.shape());
  auto x = a.data();
  auto y = b.data();
  auto g = grad_out.data();
  std::vector<double> bt(grad_a ? k * n : 0);
  broadcast_walk(batch, ba, bb, [&](std::size_t bi, std::size_t ai, std::size_t bj) {
    const double* A = x.data() + ai * m * k;
    const double* B = y.data() + bj * k * n;
    const double* G = g.data() + bi * m * n;
    if (grad_a) {
      // dA += G B^T, row-oriented over a transposed copy of B
      double* dA = grad_a->data().data() + ai * m * k;
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
      for (std::size_t i = 0; i < m; ++i) {
        double* drow = dA + i * k;
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = G[i * n + j];
          if (gv == 0.0) continue;
          const double* brow = bt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) drow[p] += gv * brow[p];
        }
      }
    }
    if (grad_b) {
      double* dB = grad_b->data().data() + bj * k * n;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
        }
      }
    }
  });
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> axes) {
  std::vector<std::size_t> inv(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inv[axes[i]] = i;
  return inv;
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
  const std::size_t rank = x.rank();
  std::vector<bool> seen(rank, false);
  if (axes.size() != rank) {
    throw ShapeError("permutation of length " + std::to_string(axes.size()) + " for shape " + to_string(x.shape()));
  }
  for (auto a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("invalid permutation for shape " + to_string(x.shape()));
    seen[a] = true;
  }
  Shape out_shape(rank);
  const auto in_strides = row_major_strides(x.shape());
  std::vector<std::size_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  Tensor out(out_shape);
  if (rank == 0) {
    out[0] = x[0];
    return out;
  }
  auto o = out.data();
  auto in = x.data();
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t s_in = src_stride[rank - 1];
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < o.size(); i += inner) {
    for (std::size_t j = 0; j < inner; ++j) o[i + j] = in[off + j * s_in];
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      off += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= src_stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + to_string(x.shape()));
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Extent e = split_at(x.shape(), axis);
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t a = 0; a < e.outer; ++a) {
    for (std::size_t c = 0; c < e.inner; ++c) {
      const std::size_t base = a * e.n * e.inner + c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < e.n; ++i) mx = std::max(mx, in[base + i * e.inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < e.n; ++i) {
        const double v = std::exp(in[base + i * e.inner] - mx);
        o[base + i * e.inner] = v;
        total += v;
      }
      for (std::size_t i = 0; i < e.n; ++i) o[base + i * e.inner] /= total;
    }
  }
  return out;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const Extent e = split_at(x.shape(), axis);
  Tensor out(x.shape());
  auto in = x.data();
  auto o = out.data();
  for (std::size_t a = 0; a < e.outer; ++a) {
    for (std::size_t c = 0; c < e.inner; ++c) {
      const std::size_t base = a * e.n * e.inner + c;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < e.n; ++i) mx = std::max(mx, in[base + i * e.inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < e.n; ++i) total += std::exp(in[base + i * e.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t i = 0; i < e.n; ++i) o[base + i * e.inner] = in[base + i * e.inner] - lse;
    }
  }
  return out;
}

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim) {
  const Extent e = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  Tensor out(out_shape);
  auto in = x.data();
  auto o = out.data();
  for (std::size_t a = 0; a < e.outer; ++a) {
    for (std::size_t i = 0; i < e.n; ++i) {
      const double* src = in.data() + (a * e.n + i) * e.inner;
      double* dst = o.data() + a * e.inner;
      for (std::size_t c = 0; c < e.inner; ++c) dst[c] += src[c];
    }
  }
  return out;
}

double sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return s;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw std::invalid_argument("concat axis out of range for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch: " + to_string(first) + " vs " + to_string(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat shape mismatch: " + to_string(first) + " vs " + to_string(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  const Extent e = split_at(out_shape, axis);
  Tensor out(out_shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t chunk = p.shape()[axis] * e.inner;
    auto src = p.data();
    for (std::size_t a = 0; a < e.outer; ++a) {
      std::copy_n(src.data() + a * chunk, chunk, o.data() + a * e.n * e.inner + offset);
    }
    offset += chunk;
  }
  return out;
}

std::size_t conv_output_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t dilation,
                             std::size_t padding) {
  const std::size_t span = dilation * (k - 1) + 1;
  if (stride == 0 || in + 2 * padding < span) return 0;
  return (in + 2 * padding - span) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& kernel, const Conv2dOptions& opts) {
  if (x.rank() != 4 || kernel.rank() != 4 || x.shape()[1] != kernel.shape()[1]) {
    throw ShapeError("conv2d shape mismatch: input " + to_string(x.shape()) + ", kernel " +
                     to_string(kernel.shape()));
  }
  ConvGeometry g{x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3], kernel.shape()[0], kernel.shape()[2],
                 kernel.shape()[3], 0, 0};
  g.oh = conv_output_size(g.h, g.kh, opts.stride[0], opts.dilation[0], opts.padding[0]);
  g.ow = conv_output_size(g.w, g.kw, opts.stride[1], opts.dilation[1], opts.padding[1]);
  if (g.oh == 0 || g.ow == 0) {
    throw ShapeError("conv2d kernel " + to_string(kernel.shape()) + " does not fit padded input " +
                     to_string(x.shape()));
  }
  return g;
}

// Four independent partial sums; fixed association order keeps results deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

bool is_pointwise(const ConvGeometry& g, const Conv2dOptions& o) {
  return g.kh == 1 && g.kw == 1 && o.stride[0] == 1 && o.stride[1] == 1 && o.padding[0] == 0 && o.padding[1] == 0;
}

// Kernel spans only the first spatial axis; rows map to rows one-to-one.
bool is_column(const ConvGeometry& g, const Conv2dOptions& opts) {
  return g.kw == 1 && opts.stride[1] == 1 && opts.padding[1] == 0;
}

// Input column for output column `ox` and kernel tap `kx`, or -1 when it lands in padding.
inline std::ptrdiff_t source_index(std::size_t out, std::size_t tap, std::size_t stride, std::size_t dilation,
                                   std::size_t padding) {
  return static_cast<std::ptrdiff_t>(out * stride + tap * dilation) - static_cast<std::ptrdiff_t>(padding);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Conv2dOptions& opts) {
  const ConvGeometry g = conv_geometry(x, kernel, opts);
  Tensor out({g.n, g.cout, g.oh, g.ow});
  auto in = x.data();
  auto w = kernel.data();
  auto o = out.data();
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.oh * g.ow;

  if (is_pointwise(g, opts)) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        double* dst = o.data() + (n * g.cout + co) * out_plane;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const double wv = w[co * g.cin + ci];
          const double* src = in.data() + (n * g.cin + ci) * in_plane;
          for (std::size_t p = 0; p < out_plane; ++p) dst[p] += wv * src[p];
        }
      }
    }
    return out;
  }

  if (is_column(g, opts)) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        double* dst = o.data() + (n * g.cout + co) * out_plane;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const double* src = in.data() + (n * g.cin + ci) * in_plane;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const double wv = w[(co * g.cin + ci) * g.kh + ky];
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const auto iy = source_index(oy, ky, opts.stride[0], opts.dilation[0], opts.padding[0]);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              const double* srow = src + static_cast<std::size_t>(iy) * g.w;
              double* drow = dst + oy * g.ow;
              for (std::size_t x = 0; x < g.w; ++x) drow[x] += wv * srow[x];
            }
          }
        }
      }
    }
    return out;
  }

  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      double* dst = o.data() + (n * g.cout + co) * out_plane;
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        const double* src = in.data() + (n * g.cin + ci) * in_plane;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = w[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const auto iy = source_index(oy, ky, opts.stride[0], opts.dilation[0], opts.padding[0]);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              const double* srow = src + static_cast<std::size_t>(iy) * g.w;
              double* drow = dst + oy * g.ow;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const auto ix = source_index(ox, kx, opts.stride[1], opts.dilation[1], opts.padding[1]);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                drow[ox] += wv * srow[ix];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& grad_out, const Conv2dOptions& opts,
                     Tensor* grad_x, Tensor* grad_kernel) {
  const ConvGeometry g = conv_geometry(x, kernel, opts);
  if (grad_x) *grad_x = Tensor(x.shape());
  if (grad_kernel) *grad_kernel = Tensor(kernel.shape());
  auto in = x.data();
  auto w = kernel.data();
  auto go = grad_out.data();
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.oh * g.ow;

  if (is_pointwise(g, opts)) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double* gsrc = go.data() + (n * g.cout + co) * out_plane;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const std::size_t wi = co * g.cin + ci;
          const double* src = in.data() + (n * g.cin + ci) * in_plane;
          if (grad_kernel) {
            (*grad_kernel)[wi] += dot(gsrc, src, out_plane);
          }
          if (grad_x) {
            double* dx = grad_x->data().data() + (n * g.cin + ci) * in_plane;
            const double wv = w[wi];
            for (std::size_t p = 0; p < out_plane; ++p) dx[p] += wv * gsrc[p];
          }
        }
      }
    }
    return;
  }

  if (is_column(g, opts)) {
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const double* gsrc = go.data() + (n * g.cout + co) * out_plane;
        for (std::size_t ci = 0; ci < g.cin; ++ci) {
          const double* src = in.data() + (n * g.cin + ci) * in_plane;
          double* dx = grad_x ? grad_x->data().data() + (n * g.cin + ci) * in_plane : nullptr;
          for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const std::size_t wi = (co * g.cin + ci) * g.kh + ky;
            const double wv = w[wi];
            double gw = 0.0;
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const auto iy = source_index(oy, ky, opts.stride[0], opts.dilation[0], opts.padding[0]);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              const std::size_t row = static_cast<std::size_t>(iy) * g.w;
              const double* grow = gsrc + oy * g.ow;
              gw += dot(grow, src + row, g.w);
              if (dx)
                for (std::size_t x = 0; x < g.w; ++x) dx[row + x] += wv * grow[x];
            }
            if (grad_kernel) (*grad_kernel)[wi] += gw;
          }
        }
      }
    }
    return;
  }

  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const double* gsrc = go.data() + (n * g.cout + co) * out_plane;
      for (std::size_t ci = 0; ci < g.cin; ++ci) {
        const double* src = in.data() + (n * g.cin + ci) * in_plane;
        double* dx = grad_x ? grad_x->data().data() + (n * g.cin + ci) * in_plane : nullptr;
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const std::size_t wi = ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
            const double wv = w[wi];
            double gw = 0.0;
            for (std::size_t oy = 0; oy < g.oh; ++oy) {
              const auto iy = source_index(oy, ky, opts.stride[0], opts.dilation[0], opts.padding[0]);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              const std::size_t row = static_cast<std::size_t>(iy) * g.w;
              const double* grow = gsrc + oy * g.ow;
              for (std::size_t ox = 0; ox < g.ow; ++ox) {
                const auto ix = source_index(ox, kx, opts.stride[1], opts.dilation[1], opts.padding[1]);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                gw += grow[ox] * src[row + static_cast<std::size_t>(ix)];
                if (dx) dx[row + static_cast<std::size_t>(ix)] += wv * grow[ox];
              }
            }
            if (grad_kernel) (*grad_kernel)[wi] += gw;
          }
        }
      }
    }
  }
}

Tensor max_pool2d(const Tensor& x, const Pool2dOptions& opts, std::vector<std::size_t>* argmax) {
  if (x.rank() != 4) throw ShapeError("max_pool2d expects [N,C,H,W], got " + to_string(x.shape()));
  for (int a = 0; a < 2; ++a) {
    if (opts.padding[a] >= opts.kernel[a] && opts.kernel[a] > 0) {
      throw std::invalid_argument("max_pool2d padding must be smaller than the window");
    }
  }
  const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const std::size_t oh = conv_output_size(h, opts.kernel[0], opts.stride[0], 1, opts.padding[0]);
  const std::size_t ow = conv_output_size(w, opts.kernel[1], opts.stride[1], 1, opts.padding[1]);
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2d window does not fit input " + to_string(x.shape()));
  Tensor out({n, c, oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  auto in = x.data();
  auto o = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = base;
        for (std::size_t ky = 0; ky < opts.kernel[0]; ++ky) {
          const auto iy = source_index(oy, ky, opts.stride[0], 1, opts.padding[0]);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < opts.kernel[1]; ++kx) {
            const auto ix = source_index(ox, kx, opts.stride[1], 1, opts.padding[1]);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t at = base + static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (in[at] > best) {
              best = in[at];
              best_at = at;
            }
          }
        }
        const std::size_t oi = (plane * oh + oy) * ow + ox;
        o[oi] = best;
        if (argmax) (*argmax)[oi] = best_at;
      }
    }
  }
  return out;
}

}  // namespace rehab::kernel
