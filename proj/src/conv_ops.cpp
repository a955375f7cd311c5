#include <algorithm>
#include <cmath>

#include "swinseg3d/gemm.hpp"
#include "swinseg3d/ops.hpp"

namespace swinseg3d::ops {

namespace {

struct Geometry {
  std::size_t channels;
  Index3 in;      // D, H, W
  Index3 kernel;  // kd, kh, kw
  Index3 stride;
  Index3 pad;
  Index3 out;

  std::size_t rows() const { return channels * kernel[0] * kernel[1] * kernel[2]; }
  std::size_t cols() const { return out[0] * out[1] * out[2]; }
  std::size_t in_voxels() const { return in[0] * in[1] * in[2]; }
};

// col[(c,kz,ky,kx), (oz,oy,ox)] = x[c, oz*s+kz-p, ...] or 0 outside.
template <typename T>
void im2col(const Geometry& g, const T* x, T* col) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          T* dst = col + row * g.cols();
          const T* src = x + c * g.in_voxels();
          for (std::size_t oz = 0; oz < g.out[0]; ++oz) {
            const long z = static_cast<long>(oz * g.stride[0] + kz) - static_cast<long>(g.pad[0]);
            for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
              const long y = static_cast<long>(oy * g.stride[1] + ky) - static_cast<long>(g.pad[1]);
              T* d = dst + (oz * g.out[1] + oy) * g.out[2];
              if (z < 0 || y < 0 || z >= static_cast<long>(g.in[0]) || y >= static_cast<long>(g.in[1])) {
                std::fill_n(d, g.out[2], T(0));
                continue;
              }
              const T* s = src + (static_cast<std::size_t>(z) * g.in[1] + static_cast<std::size_t>(y)) * g.in[2];
              for (std::size_t ox = 0; ox < g.out[2]; ++ox) {
                const long xx = static_cast<long>(ox * g.stride[2] + kx) - static_cast<long>(g.pad[2]);
                d[ox] = (xx < 0 || xx >= static_cast<long>(g.in[2])) ? T(0) : s[xx];
              }
            }
          }
        }
}

// Adjoint of im2col: accumulates col entries back into x.
template <typename T>
void col2im(const Geometry& g, const T* col, T* x) {
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          const T* src = col + row * g.cols();
          T* dst = x + c * g.in_voxels();
          for (std::size_t oz = 0; oz < g.out[0]; ++oz) {
            const long z = static_cast<long>(oz * g.stride[0] + kz) - static_cast<long>(g.pad[0]);
            if (z < 0 || z >= static_cast<long>(g.in[0])) continue;
            for (std::size_t oy = 0; oy < g.out[1]; ++oy) {
              const long y = static_cast<long>(oy * g.stride[1] + ky) - static_cast<long>(g.pad[1]);
              if (y < 0 || y >= static_cast<long>(g.in[1])) continue;
              const T* s = src + (oz * g.out[1] + oy) * g.out[2];
              T* d = dst + (static_cast<std::size_t>(z) * g.in[1] + static_cast<std::size_t>(y)) * g.in[2];
              for (std::size_t ox = 0; ox < g.out[2]; ++ox) {
                const long xx = static_cast<long>(ox * g.stride[2] + kx) - static_cast<long>(g.pad[2]);
                if (xx >= 0 && xx < static_cast<long>(g.in[2])) d[xx] += s[ox];
              }
            }
          }
        }
}

void check_positive(const Index3& v, const char* what) {
  for (std::size_t a : v)
    if (a == 0) throw ShapeError(std::string(what) + " must be >= 1");
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, Index3 stride,
                 Index3 padding) {
  if (x.rank() != 4 || kernel.rank() != 5 || kernel.dim(1) != x.dim(0)) {
    throw ShapeError("conv3d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                     shape_str(kernel.shape()));
  }
  check_positive(stride, "conv3d stride");
  Geometry g{x.dim(0), {x.dim(1), x.dim(2), x.dim(3)}, {kernel.dim(2), kernel.dim(3), kernel.dim(4)},
             stride, padding, {}};
  for (int a = 0; a < 3; ++a) {
    if (g.in[a] + 2 * g.pad[a] < g.kernel[a]) {
      throw ShapeError("conv3d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                       shape_str(x.shape()));
    }
    g.out[a] = (g.in[a] + 2 * g.pad[a] - g.kernel[a]) / g.stride[a] + 1;
  }
  const std::size_t c_out = kernel.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != c_out) throw ShapeError("conv3d: bias length mismatch");

  auto col = std::make_shared<std::vector<T>>(g.rows() * g.cols());
  im2col(g, x.values().data(), col->data());
  std::vector<T> out(c_out * g.cols(), T(0));
  if (has_bias)
    for (std::size_t o = 0; o < c_out; ++o)
      std::fill_n(out.begin() + o * g.cols(), g.cols(), bias.values()[o]);
  gemm<T>(false, false, c_out, g.cols(), g.rows(), T(1), kernel.values().data(), col->data(),
          has_bias ? T(1) : T(0), out.data());

  std::vector<Tensor<T>> parents{x, kernel};
  if (has_bias) parents.push_back(bias);
  const bool keep_col = kernel.requires_grad();
  if (!keep_col || !grad_enabled()) col.reset();
  return Tensor<T>::make_result({c_out, g.out[0], g.out[1], g.out[2]}, std::move(out), parents,
                                [g, c_out, col, has_bias](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pk = *n.parents[1];
    if (pk.requires_grad && col) {
      gemm<T>(false, true, c_out, g.rows(), g.cols(), T(1), n.grad.data(), col->data(), T(1), pk.grad.data());
    }
    if (px.requires_grad) {
      std::vector<T> dcol(g.rows() * g.cols());
      gemm<T>(true, false, g.rows(), g.cols(), c_out, T(1), pk.data.data(), n.grad.data(), T(0), dcol.data());
      col2im(g, dcol.data(), px.grad.data());
    }
    if (has_bias && n.parents[2]->requires_grad) {
      auto& pb = *n.parents[2];
      for (std::size_t o = 0; o < c_out; ++o) {
        T acc = 0;
        for (std::size_t i = 0; i < g.cols(); ++i) acc += n.grad[o * g.cols() + i];
        pb.grad[o] += acc;
      }
    }
  });
}

template <typename T>
Tensor<T> transposed_conv3d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                            Index3 stride) {
  if (x.rank() != 4 || kernel.rank() != 5 || kernel.dim(0) != x.dim(0)) {
    throw ShapeError("transposed_conv3d: input " + shape_str(x.shape()) + " incompatible with kernel " +
                     shape_str(kernel.shape()));
  }
  check_positive(stride, "transposed_conv3d stride");
  const std::size_t c_in = x.dim(0), c_out = kernel.dim(1);
  // Geometry of the forward conv this op is the adjoint of: output volume is
  // that conv's input, x is that conv's output.
  Geometry g{c_out, {}, {kernel.dim(2), kernel.dim(3), kernel.dim(4)}, stride, {0, 0, 0},
             {x.dim(1), x.dim(2), x.dim(3)}};
  for (int a = 0; a < 3; ++a) g.in[a] = (g.out[a] - 1) * g.stride[a] + g.kernel[a];
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != c_out) throw ShapeError("transposed_conv3d: bias length mismatch");

  // col[c_out*k3, P] = kernel^T[c_out*k3, c_in] @ x[c_in, P]
  std::vector<T> col(g.rows() * g.cols());
  gemm<T>(true, false, g.rows(), g.cols(), c_in, T(1), kernel.values().data(), x.values().data(), T(0),
          col.data());
  std::vector<T> out(c_out * g.in_voxels(), T(0));
  col2im(g, col.data(), out.data());
  if (has_bias)
    for (std::size_t o = 0; o < c_out; ++o)
      for (std::size_t i = 0; i < g.in_voxels(); ++i) out[o * g.in_voxels() + i] += bias.values()[o];

  std::vector<Tensor<T>> parents{x, kernel};
  if (has_bias) parents.push_back(bias);
  return Tensor<T>::make_result({c_out, g.in[0], g.in[1], g.in[2]}, std::move(out), parents,
                                [g, c_in, has_bias](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pk = *n.parents[1];
    std::vector<T> gcol(g.rows() * g.cols());
    im2col(g, n.grad.data(), gcol.data());
    if (px.requires_grad)
      gemm<T>(false, false, c_in, g.cols(), g.rows(), T(1), pk.data.data(), gcol.data(), T(1), px.grad.data());
    if (pk.requires_grad)
      gemm<T>(false, true, c_in, g.rows(), g.cols(), T(1), px.data.data(), gcol.data(), T(1), pk.grad.data());
    if (has_bias && n.parents[2]->requires_grad) {
      auto& pb = *n.parents[2];
      const std::size_t vox = g.in_voxels();
      for (std::size_t o = 0; o < g.channels; ++o) {
        T acc = 0;
        for (std::size_t i = 0; i < vox; ++i) acc += n.grad[o * vox + i];
        pb.grad[o] += acc;
      }
    }
  });
}

namespace {

// Linear interpolation taps along one axis for an integer upsampling factor.
struct Tap {
  std::size_t lo, hi;
  double w_hi;
};

std::vector<Tap> taps(std::size_t n, std::size_t factor) {
  std::vector<Tap> t(n * factor);
  for (std::size_t o = 0; o < t.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, n - 1);
    t[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> trilinear_upsample(const Tensor<T>& x, std::size_t factor) {
  if (x.rank() != 4) throw ShapeError("trilinear_upsample expects [C,D,H,W], got " + shape_str(x.shape()));
  if (factor == 0) throw ShapeError("trilinear_upsample factor must be >= 1");
  if (factor == 1) return x;
  const std::size_t c = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto tz = taps(d, factor), ty = taps(h, factor), tx = taps(w, factor);
  const std::size_t od = d * factor, oh = h * factor, ow = w * factor;
  std::vector<T> out(c * od * oh * ow);
  const auto& xv = x.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          T acc = 0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int e = 0; e < 2; ++e) {
                const T wz = static_cast<T>(a ? tz[z].w_hi : 1 - tz[z].w_hi);
                const T wy = static_cast<T>(b ? ty[y].w_hi : 1 - ty[y].w_hi);
                const T wx = static_cast<T>(e ? tx[xx].w_hi : 1 - tx[xx].w_hi);
                const std::size_t iz = a ? tz[z].hi : tz[z].lo, iy = b ? ty[y].hi : ty[y].lo,
                                  ix = e ? tx[xx].hi : tx[xx].lo;
                acc += wz * wy * wx * xv[((ch * d + iz) * h + iy) * w + ix];
              }
          out[((ch * od + z) * oh + y) * ow + xx] = acc;
        }
  return Tensor<T>::make_result({c, od, oh, ow}, std::move(out), {x},
                                [tz, ty, tx, c, d, h, w, od, oh, ow](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t z = 0; z < od; ++z)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const T g = n.grad[((ch * od + z) * oh + y) * ow + xx];
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int e = 0; e < 2; ++e) {
                  const T wz = static_cast<T>(a ? tz[z].w_hi : 1 - tz[z].w_hi);
                  const T wy = static_cast<T>(b ? ty[y].w_hi : 1 - ty[y].w_hi);
                  const T wx = static_cast<T>(e ? tx[xx].w_hi : 1 - tx[xx].w_hi);
                  const std::size_t iz = a ? tz[z].hi : tz[z].lo, iy = b ? ty[y].hi : ty[y].lo,
                                    ix = e ? tx[xx].hi : tx[xx].lo;
                  p.grad[((ch * d + iz) * h + iy) * w + ix] += g * wz * wy * wx;
                }
          }
  });
}

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("max_pool2 expects [C,D,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), d = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (d % 2 || h % 2 || w % 2) throw ShapeError("max_pool2 needs even spatial dims, got " + shape_str(x.shape()));
  const std::size_t od = d / 2, oh = h / 2, ow = w / 2;
  auto arg = std::make_shared<std::vector<std::size_t>>(c * od * oh * ow);
  std::vector<T> out(arg->size());
  const auto& xv = x.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          std::size_t best = ((ch * d + 2 * z) * h + 2 * y) * w + 2 * xx;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t e = 0; e < 2; ++e) {
                const std::size_t i = ((ch * d + 2 * z + a) * h + 2 * y + b) * w + 2 * xx + e;
                if (xv[i] > xv[best]) best = i;
              }
          const std::size_t o = ((ch * od + z) * oh + y) * ow + xx;
          (*arg)[o] = best;
          out[o] = xv[best];
        }
  return Tensor<T>::make_result({c, od, oh, ow}, std::move(out), {x}, [arg](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < arg->size(); ++i) p.grad[(*arg)[i]] += n.grad[i];
  });
}

template Tensor<float> conv3d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, Index3, Index3);
template Tensor<double> conv3d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, Index3, Index3);
template Tensor<float> transposed_conv3d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, Index3);
template Tensor<double> transposed_conv3d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, Index3);
template Tensor<float> trilinear_upsample(const Tensor<float>&, std::size_t);
template Tensor<double> trilinear_upsample(const Tensor<double>&, std::size_t);
template Tensor<float> max_pool2(const Tensor<float>&);
template Tensor<double> max_pool2(const Tensor<double>&);

}  // namespace swinseg3d::ops
