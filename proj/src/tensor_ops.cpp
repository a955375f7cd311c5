#include <algorithm>
#include <cmath>
#include <numeric>

#include "swinseg3d/gemm.hpp"
#include "swinseg3d/ops.hpp"

namespace swinseg3d::ops {

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` viewed at the broadcast rank, 0 on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const auto s = strides_of(in);
  std::vector<std::size_t> r(out.size(), 0);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) r[off + i] = in[i] == 1 ? 0 : s[i];
  return r;
}

// Maps each flat output index to the flat index of a broadcast input.
std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> idx(n);
  if (in == out) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  const auto bs = broadcast_strides(in, out);
  std::vector<std::size_t> counter(out.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = pos;
    for (std::size_t ax = out.size(); ax-- > 0;) {
      pos += bs[ax];
      if (++counter[ax] < out[ax]) break;
      pos -= bs[ax] * out[ax];
      counter[ax] = 0;
    }
  }
  return idx;
}

enum class BinOp { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinOp op) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto ia = std::make_shared<std::vector<std::size_t>>(broadcast_index(a.shape(), out_shape));
  auto ib = std::make_shared<std::vector<std::size_t>>(broadcast_index(b.shape(), out_shape));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<T> out(ia->size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[(*ia)[i]], y = bv[(*ib)[i]];
    out[i] = op == BinOp::Add ? x + y : op == BinOp::Sub ? x - y : x * y;
  }
  return Tensor<T>::make_result(out_shape, std::move(out), {a, b}, [ia, ib, op](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const T g = n.grad[i];
      if (pa.requires_grad) pa.grad[(*ia)[i]] += op == BinOp::Mul ? g * pb.data[(*ib)[i]] : g;
      if (pb.requires_grad) {
        pb.grad[(*ib)[i]] += op == BinOp::Mul ? g * pa.data[(*ia)[i]] : op == BinOp::Sub ? -g : g;
      }
    }
  });
}

// Elementwise unary op with derivative expressed from input and output.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D df) {
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [df](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * df(p.data[i], n.data[i]);
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::Add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::Sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, BinOp::Mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  return Tensor<T>::make_result({1}, {total}, {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    for (auto& g : p.grad) g += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  return unary(
      x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v))); },
      [](T v, T) {
        const T u = k * (v + c * v * v * v);
        const T t = std::tanh(u);
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= 0) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("softmax axis out of range for " + shape_str(x.shape()));
  const auto& s = x.shape();
  const std::size_t len = s[axis];
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const auto& xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = xv[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
      T z = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xv[base + j * inner] - mx);
        out[base + j * inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= z;
    }
  }
  return Tensor<T>::make_result(s, std::move(out), {x}, [outer, inner, len](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += n.grad[base + j * inner] * n.data[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t k = base + j * inner;
          p.grad[k] += n.data[k] * (n.grad[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::size_t c = x.shape().back();
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: gamma/beta length must equal " + std::to_string(c));
  }
  const std::size_t rows = x.numel() / c;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> out(xv.size());
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * c;
    T mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (row[j] - mu) * is;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x, gamma, beta},
                                [xhat, inv_std, rows, c](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pg = *n.parents[1];
    auto& pb = *n.parents[2];
    std::vector<T> dh(c);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = n.grad.data() + r * c;
      const T* h = xhat->data() + r * c;
      if (pg.requires_grad)
        for (std::size_t j = 0; j < c; ++j) pg.grad[j] += g[j] * h[j];
      if (pb.requires_grad)
        for (std::size_t j = 0; j < c; ++j) pb.grad[j] += g[j];
      if (!px.requires_grad) continue;
      T mean_dh = 0, mean_dh_h = 0;
      for (std::size_t j = 0; j < c; ++j) {
        dh[j] = g[j] * pg.data[j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * h[j];
      }
      mean_dh /= static_cast<T>(c);
      mean_dh_h /= static_cast<T>(c);
      for (std::size_t j = 0; j < c; ++j) {
        px.grad[r * c + j] += (*inv_std)[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[a.rank() - 2], k = a.shape().back();
  const std::size_t k2 = b.shape()[b.rank() - 2], n = b.shape().back();
  if (k != k2) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " @ " +
                     shape_str(b.shape()));
  }
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch;
  try {
    batch = broadcast_shape(batch_a, batch_b);
  } catch (const ShapeError&) {
    throw ShapeError("matmul batch dimensions not broadcastable: " + shape_str(a.shape()) + " @ " +
                     shape_str(b.shape()));
  }
  auto ia = std::make_shared<std::vector<std::size_t>>(broadcast_index(batch_a, batch));
  auto ib = std::make_shared<std::vector<std::size_t>>(broadcast_index(batch_b, batch));
  const std::size_t nb = ia->size();
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<T> out(nb * m * n, T(0));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::size_t bi = 0; bi < nb; ++bi) {
    const T* pa = av + (*ia)[bi] * m * k;
    const T* pb = bv + (*ib)[bi] * k * n;
    T* pc = out.data() + bi * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = pa[i * k + p];
        for (std::size_t j = 0; j < n; ++j) pc[i * n + j] += aip * pb[p * n + j];
      }
  }
  return Tensor<T>::make_result(out_shape, std::move(out), {a, b}, [ia, ib, m, k, n](Node<T>& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    for (std::size_t bi = 0; bi < ia->size(); ++bi) {
      const T* g = nd.grad.data() + bi * m * n;
      const std::size_t oa = (*ia)[bi] * m * k, ob = (*ib)[bi] * k * n;
      if (pa.requires_grad) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb.data[ob + p * n + j];
            pa.grad[oa + i * k + p] += acc;
          }
      }
      if (pb.requires_grad) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = pa.data[oa + i * k + p];
            for (std::size_t j = 0; j < n; ++j) pb.grad[ob + p * n + j] += aip * g[i * n + j];
          }
      }
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t in = weight.dim(1), out_f = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != out_f) throw ShapeError("linear: bias length mismatch");
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<T> out(rows * out_f, T(0));
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias.values().begin(), bias.values().end(), out.begin() + r * out_f);
  }
  gemm<T>(false, true, rows, out_f, in, T(1), x.values().data(), weight.values().data(),
          has_bias ? T(1) : T(0), out.data());
  std::vector<Tensor<T>> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor<T>::make_result(out_shape, std::move(out), parents,
                                [rows, in, out_f, has_bias](Node<T>& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    if (px.requires_grad)
      gemm<T>(false, false, rows, in, out_f, T(1), n.grad.data(), pw.data.data(), T(1), px.grad.data());
    if (pw.requires_grad)
      gemm<T>(true, false, out_f, in, rows, T(1), n.grad.data(), px.data.data(), T(1), pw.grad.data());
    if (has_bias && n.parents[2]->requires_grad) {
      auto& pb = *n.parents[2];
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out_f; ++j) pb.grad[j] += n.grad[r * out_f + j];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return Tensor<T>::make_result(std::move(shape), x.values(), {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  const auto& s = x.shape();
  if (axes.size() != s.size()) throw ShapeError("permute: axis count mismatch for " + shape_str(s));
  std::vector<bool> used(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || used[axes[i]]) throw ShapeError("permute: invalid axis list");
    used[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  // src_index[i] is the input flat index of output element i.
  const auto in_strides = strides_of(s);
  std::vector<std::size_t> ps(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) ps[i] = in_strides[axes[i]];
  const std::size_t total = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(s.size(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < total; ++i) {
    (*src)[i] = pos;
    for (std::size_t ax = out_shape.size(); ax-- > 0;) {
      pos += ps[ax];
      if (++counter[ax] < out_shape[ax]) break;
      pos -= ps[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
  const auto& xv = x.values();
  std::vector<T> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[(*src)[i]];
  return Tensor<T>::make_result(out_shape, std::move(out), {x}, [src](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[(*src)[i]] += n.grad[i];
  });
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
  std::vector<std::size_t> axes(x.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[x.rank() - 1], axes[x.rank() - 2]);
  return permute(x, axes);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  Shape out_shape = xs[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat axis out of range");
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    Shape a = t.shape(), b = xs[0].shape();
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat shape mismatch: " + shape_str(xs[0].shape()) + " vs " + shape_str(t.shape()));
    }
    out_shape[axis] += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  const std::size_t out_len = out_shape[axis];
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const std::size_t len = t.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.values().begin() + o * len * inner, len * inner,
                  out.begin() + (o * out_len + off) * inner);
    off += len;
  }
  return Tensor<T>::make_result(out_shape, std::move(out), xs, [offsets, outer, inner, out_len](Node<T>& n) {
    for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
      auto& p = *n.parents[pi];
      if (!p.requires_grad) continue;
      const std::size_t len = p.data.size() / (outer * inner);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < len * inner; ++j)
          p.grad[o * len * inner + j] += n.grad[(o * out_len + offsets[pi]) * inner + j];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis)) {
    throw ShapeError("slice out of range on " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= out_shape[i];
  for (std::size_t i = axis + 1; i < out_shape.size(); ++i) inner *= out_shape[i];
  const std::size_t in_len = x.dim(axis);
  std::vector<T> out(shape_numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.values().begin() + (o * in_len + start) * inner, length * inner,
                out.begin() + o * length * inner);
  return Tensor<T>::make_result(out_shape, std::move(out), {x}, [outer, inner, in_len, start, length](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < length * inner; ++j)
        p.grad[(o * in_len + start) * inner + j] += n.grad[o * length * inner + j];
  });
}

template <typename T>
Tensor<T> pad_end(const Tensor<T>& x, const std::vector<std::size_t>& after) {
  if (after.size() != x.rank()) throw ShapeError("pad_end: one pad amount per axis required");
  if (std::all_of(after.begin(), after.end(), [](std::size_t a) { return a == 0; })) return x;
  Shape out_shape = x.shape();
  for (std::size_t i = 0; i < after.size(); ++i) out_shape[i] += after[i];
  // dst[i] is the output flat index for input element i.
  const auto os = strides_of(out_shape);
  auto dst = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> counter(x.rank(), 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    (*dst)[i] = pos;
    for (std::size_t ax = x.rank(); ax-- > 0;) {
      pos += os[ax];
      if (++counter[ax] < x.dim(ax)) break;
      pos -= os[ax] * x.dim(ax);
      counter[ax] = 0;
    }
  }
  std::vector<T> out(shape_numel(out_shape), T(0));
  for (std::size_t i = 0; i < x.numel(); ++i) out[(*dst)[i]] = x.values()[i];
  return Tensor<T>::make_result(out_shape, std::move(out), {x}, [dst](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < dst->size(); ++i) p.grad[i] += n.grad[(*dst)[i]];
  });
}

template <typename T>
Tensor<T> roll(const Tensor<T>& x, const std::vector<long>& shifts) {
  if (shifts.size() != x.rank()) throw ShapeError("roll: one shift per axis required");
  if (std::all_of(shifts.begin(), shifts.end(), [](long s) { return s == 0; })) return x;
  const auto& s = x.shape();
  const auto st = strides_of(s);
  auto dst = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> counter(s.size(), 0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::size_t d = 0;
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      const long n = static_cast<long>(s[ax]);
      const long c = ((static_cast<long>(counter[ax]) + shifts[ax]) % n + n) % n;
      d += static_cast<std::size_t>(c) * st[ax];
    }
    (*dst)[i] = d;
    for (std::size_t ax = s.size(); ax-- > 0;) {
      if (++counter[ax] < s[ax]) break;
      counter[ax] = 0;
    }
  }
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) out[(*dst)[i]] = x.values()[i];
  return Tensor<T>::make_result(s, std::move(out), {x}, [dst](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < dst->size(); ++i) p.grad[i] += n.grad[(*dst)[i]];
  });
}

template <typename T>
Tensor<T> index_rows(const Tensor<T>& table, const std::vector<std::size_t>& rows) {
  if (table.rank() != 2) throw ShapeError("index_rows expects a 2-D table");
  const std::size_t w = table.dim(1);
  std::vector<T> out(rows.size() * w);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= table.dim(0)) throw ShapeError("index_rows: row index out of range");
    std::copy_n(table.values().begin() + rows[i] * w, w, out.begin() + i * w);
  }
  return Tensor<T>::make_result({rows.size(), w}, std::move(out), {table}, [rows, w](Node<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < w; ++j) p.grad[rows[i] * w + j] += n.grad[i * w + j];
  });
}

#define SWINSEG3D_INSTANTIATE(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                 \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                            \
  template Tensor<T> sum(const Tensor<T>&);                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                     \
  template Tensor<T> gelu(const Tensor<T>&);                                                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                           \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                 \
  template Tensor<T> transpose_last2(const Tensor<T>&);                                          \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                         \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);             \
  template Tensor<T> pad_end(const Tensor<T>&, const std::vector<std::size_t>&);                 \
  template Tensor<T> roll(const Tensor<T>&, const std::vector<long>&);                           \
  template Tensor<T> index_rows(const Tensor<T>&, const std::vector<std::size_t>&);

SWINSEG3D_INSTANTIATE(float)
SWINSEG3D_INSTANTIATE(double)

}  // namespace swinseg3d::ops
