#pragma once

#include <cmath>
#include <cstring>

#include "fcdx/autodiff.hpp"
#include "fcdx/gemm.hpp"

namespace fcdx {

namespace testing {
// Selftest hook: additive perturbation applied to softmax outputs so the
// row-stochastic invariant check can be demonstrated to fail.
inline float softmax_perturb = 0.0f;
}  // namespace testing

namespace detail {
template <class T>
void add_flat(TensorT<T>& dst, const TensorT<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  std::int64_t n = dst.numel();
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}
}  // namespace detail

template <class T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
  if (!a->value.same_shape(b->value))
    throw dimension_error("add: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  TensorT<T> out = a->value.clone();
  out.add_(b->value);
  return make_node<T>(std::move(out), {a, b},
                      [](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (pg[0]) detail::add_flat(*pg[0], g);
                        if (pg[1]) detail::add_flat(*pg[1], g);
                      });
}

template <class T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
  if (!a->value.same_shape(b->value))
    throw dimension_error("sub: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  TensorT<T> out = a->value.clone();
  {
    T* d = out.data();
    const T* s = b->value.data();
    for (std::int64_t i = 0; i < out.numel(); ++i) d[i] -= s[i];
  }
  return make_node<T>(std::move(out), {a, b},
                      [](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (pg[0]) detail::add_flat(*pg[0], g);
                        if (pg[1]) {
                          T* d = pg[1]->data();
                          const T* s = g.data();
                          for (std::int64_t i = 0; i < g.numel(); ++i) d[i] -= s[i];
                        }
                      });
}

template <class T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
  if (!a->value.same_shape(b->value))
    throw dimension_error("mul: " + shape_str(a->value.shape()) + " vs " + shape_str(b->value.shape()));
  TensorT<T> out(a->value.shape());
  const T* pa = a->value.data();
  const T* pb = b->value.data();
  T* d = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) d[i] = pa[i] * pb[i];
  TensorT<T> av = a->value, bv = b->value;
  return make_node<T>(std::move(out), {a, b},
                      [av, bv](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        const T* gp = g.data();
                        if (pg[0]) {
                          T* d0 = pg[0]->data();
                          const T* s = bv.data();
                          for (std::int64_t i = 0; i < g.numel(); ++i) d0[i] += gp[i] * s[i];
                        }
                        if (pg[1]) {
                          T* d1 = pg[1]->data();
                          const T* s = av.data();
                          for (std::int64_t i = 0; i < g.numel(); ++i) d1[i] += gp[i] * s[i];
                        }
                      });
}

template <class T>
VarT<T> scale(const VarT<T>& a, T s) {
  TensorT<T> out(a->value.shape());
  const T* pa = a->value.data();
  T* d = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) d[i] = pa[i] * s;
  return make_node<T>(std::move(out), {a},
                      [s](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i] * s;
                      });
}

template <class T>
VarT<T> sum(const VarT<T>& a) {
  double acc = 0;
  const T* pa = a->value.data();
  for (std::int64_t i = 0; i < a->value.numel(); ++i) acc += static_cast<double>(pa[i]);
  return make_node<T>(TensorT<T>::scalar(static_cast<T>(acc)), {a},
                      [](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T gv = g[0];
                        T* d = pg[0]->data();
                        for (std::int64_t i = 0; i < pg[0]->numel(); ++i) d[i] += gv;
                      });
}

template <class T>
VarT<T> mean(const VarT<T>& a) {
  return scale(sum(a), static_cast<T>(1.0 / static_cast<double>(a->value.numel())));
}

template <class T>
VarT<T> exp_op(const VarT<T>& a) {
  TensorT<T> out(a->value.shape());
  const T* pa = a->value.data();
  T* d = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) d[i] = std::exp(pa[i]);
  TensorT<T> y = out;
  return make_node<T>(std::move(out), {a},
                      [y](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        const T* yp = y.data();
                        for (std::int64_t i = 0; i < g.numel(); ++i) d[i] += gp[i] * yp[i];
                      });
}

template <class T>
VarT<T> relu(const VarT<T>& a) {
  TensorT<T> out(a->value.shape());
  const T* pa = a->value.data();
  T* d = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) d[i] = pa[i] > T(0) ? pa[i] : T(0);
  TensorT<T> y = out;
  return make_node<T>(std::move(out), {a},
                      [y](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        const T* yp = y.data();
                        for (std::int64_t i = 0; i < g.numel(); ++i)
                          if (yp[i] > T(0)) d[i] += gp[i];
                      });
}

// ELU with alpha = 1: x for x > 0, e^x - 1 otherwise.
template <class T>
VarT<T> elu(const VarT<T>& a) {
  TensorT<T> out(a->value.shape());
  const T* pa = a->value.data();
  T* d = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i)
    d[i] = pa[i] > T(0) ? pa[i] : static_cast<T>(std::expm1(static_cast<double>(pa[i])));
  TensorT<T> y = out;
  return make_node<T>(std::move(out), {a},
                      [y](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        const T* yp = y.data();
                        for (std::int64_t i = 0; i < g.numel(); ++i)
                          d[i] += gp[i] * (yp[i] > T(0) ? T(1) : yp[i] + T(1));
                      });
}

template <class T>
VarT<T> sigmoid(const VarT<T>& a) {
  TensorT<T> out(a->value.shape());
  const T* pa = a->value.data();
  T* d = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    T x = pa[i];
    if (x >= T(0)) {
      d[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      T e = std::exp(x);
      d[i] = e / (T(1) + e);
    }
  }
  TensorT<T> y = out;
  return make_node<T>(std::move(out), {a},
                      [y](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        const T* yp = y.data();
                        for (std::int64_t i = 0; i < g.numel(); ++i)
                          d[i] += gp[i] * yp[i] * (T(1) - yp[i]);
                      });
}

// Softmax along one axis, stabilized by max subtraction.
template <class T>
VarT<T> softmax(const VarT<T>& a, int axis) {
  const auto& shape = a->value.shape();
  int nd = a->value.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd) throw contract_error("softmax: axis out of range");
  std::int64_t inner = 1, outer = 1;
  for (int i = axis + 1; i < nd; ++i) inner *= shape[i];
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  std::int64_t n = shape[axis];

  TensorT<T> out(shape);
  const T* pa = a->value.data();
  T* d = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const T* src = pa + o * n * inner + in;
      T* dst = d + o * n * inner + in;
      T mx = src[0];
      for (std::int64_t k = 1; k < n; ++k) mx = std::max(mx, src[k * inner]);
      double denom = 0;
      for (std::int64_t k = 0; k < n; ++k) {
        T e = std::exp(src[k * inner] - mx);
        dst[k * inner] = e;
        denom += static_cast<double>(e);
      }
      T inv = static_cast<T>(1.0 / denom);
      for (std::int64_t k = 0; k < n; ++k) dst[k * inner] *= inv;
    }
  }
  if (testing::softmax_perturb != 0.0f) {
    T p = static_cast<T>(testing::softmax_perturb);
    for (std::int64_t i = 0; i < out.numel(); ++i) d[i] += p;
  }
  TensorT<T> y = out;
  return make_node<T>(std::move(out), {a},
                      [y, n, inner, outer](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        const T* gp = g.data();
                        const T* yp = y.data();
                        T* d = pg[0]->data();
                        for (std::int64_t o = 0; o < outer; ++o) {
                          for (std::int64_t in = 0; in < inner; ++in) {
                            std::int64_t base = o * n * inner + in;
                            double dot = 0;
                            for (std::int64_t k = 0; k < n; ++k)
                              dot += static_cast<double>(gp[base + k * inner]) * yp[base + k * inner];
                            for (std::int64_t k = 0; k < n; ++k)
                              d[base + k * inner] +=
                                  yp[base + k * inner] * (gp[base + k * inner] - static_cast<T>(dot));
                          }
                        }
                      });
}

// c[M x N] = a[M x K] * b[K x N]
template <class T>
VarT<T> matmul(const VarT<T>& a, const VarT<T>& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(0))
    throw dimension_error("matmul: " + shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
  int M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(1);
  TensorT<T> out({M, N});
  gemm_nn<T>(out.data(), N, M, K, a->value.data(), K, 1, b->value.data(), N, 1, N, 0);
  TensorT<T> av = a->value, bv = b->value;
  return make_node<T>(std::move(out), {a, b},
                      [av, bv, M, K, N](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (pg[0])  // ga += g * b^T
                          gemm_nt<T>(pg[0]->data(), K, 1, M, K, g.data(), N, bv.data(), N, 1, N, 0, 0);
                        if (pg[1])  // gb += a^T * g
                          gemm_nn<T>(pg[1]->data(), N, K, M, av.data(), 1, K, g.data(), N, 1, N, 0);
                      });
}

// c[M x N] = a[M x K] * b[N x K]^T
template <class T>
VarT<T> matmul_nt(const VarT<T>& a, const VarT<T>& b) {
  if (a->value.ndim() != 2 || b->value.ndim() != 2 || a->value.dim(1) != b->value.dim(1))
    throw dimension_error("matmul_nt: " + shape_str(a->value.shape()) + " x " + shape_str(b->value.shape()));
  int M = a->value.dim(0), K = a->value.dim(1), N = b->value.dim(0);
  TensorT<T> out({M, N});
  gemm_nt<T>(out.data(), N, 1, M, N, a->value.data(), K, b->value.data(), K, 1, K, 0, 0);
  TensorT<T> av = a->value, bv = b->value;
  return make_node<T>(std::move(out), {a, b},
                      [av, bv, M, K, N](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (pg[0])  // ga += g * b
                          gemm_nn<T>(pg[0]->data(), K, M, N, g.data(), N, 1, bv.data(), K, 1, K, 0);
                        if (pg[1])  // gb += g^T * a
                          gemm_nn<T>(pg[1]->data(), K, N, M, g.data(), 1, N, av.data(), K, 1, K, 0);
                      });
}

// y[out] = W[out x in] * x[in] + b[out]
template <class T>
VarT<T> linear(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b) {
  if (x->value.ndim() != 1 || w->value.ndim() != 2 || w->value.dim(1) != x->value.dim(0) ||
      b->value.ndim() != 1 || b->value.dim(0) != w->value.dim(0))
    throw dimension_error("linear: x=" + shape_str(x->value.shape()) + " w=" + shape_str(w->value.shape()));
  int out_n = w->value.dim(0), in_n = w->value.dim(1);
  TensorT<T> out({out_n});
  const T* xp = x->value.data();
  const T* wp = w->value.data();
  const T* bp = b->value.data();
  for (int o = 0; o < out_n; ++o) {
    double acc = bp[o];
    const T* row = wp + static_cast<std::int64_t>(o) * in_n;
    for (int i = 0; i < in_n; ++i) acc += static_cast<double>(row[i]) * xp[i];
    out[o] = static_cast<T>(acc);
  }
  TensorT<T> xv = x->value, wv = w->value;
  return make_node<T>(std::move(out), {x, w, b},
                      [xv, wv, out_n, in_n](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        const T* gp = g.data();
                        if (pg[0]) {
                          T* d = pg[0]->data();
                          for (int o = 0; o < out_n; ++o) {
                            const T* row = wv.data() + static_cast<std::int64_t>(o) * in_n;
                            for (int i = 0; i < in_n; ++i) d[i] += gp[o] * row[i];
                          }
                        }
                        if (pg[1]) {
                          T* d = pg[1]->data();
                          const T* xp = xv.data();
                          for (int o = 0; o < out_n; ++o)
                            for (int i = 0; i < in_n; ++i) d[static_cast<std::int64_t>(o) * in_n + i] += gp[o] * xp[i];
                        }
                        if (pg[2]) {
                          T* d = pg[2]->data();
                          for (int o = 0; o < out_n; ++o) d[o] += gp[o];
                        }
                      });
}

template <class T>
VarT<T> reshape(const VarT<T>& a, std::vector<int> shape) {
  TensorT<T> out = a->value.reshaped(std::move(shape));
  return make_node<T>(std::move(out), {a},
                      [](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (pg[0]) detail::add_flat(*pg[0], g.reshaped(pg[0]->shape()));
                      });
}

// Concatenate along axis 0 (covers channel concat of [C,D,H,W] maps and
// 1-d vector concat).
template <class T>
VarT<T> concat0(const std::vector<VarT<T>>& parts) {
  if (parts.empty()) throw contract_error("concat0: no inputs");
  auto shape = parts[0]->value.shape();
  std::int64_t rest = parts[0]->value.numel() / shape[0];
  int total = 0;
  for (const auto& p : parts) {
    auto s = p->value.shape();
    if (s.size() != shape.size()) throw dimension_error("concat0: rank mismatch");
    for (size_t i = 1; i < s.size(); ++i)
      if (s[i] != shape[i]) throw dimension_error("concat0: trailing extents differ");
    total += s[0];
  }
  shape[0] = total;
  TensorT<T> out(shape);
  T* d = out.data();
  std::vector<std::int64_t> sizes;
  for (const auto& p : parts) {
    std::int64_t n = p->value.numel();
    std::memcpy(d, p->value.data(), static_cast<size_t>(n) * sizeof(T));
    d += n;
    sizes.push_back(n);
  }
  (void)rest;
  return make_node<T>(std::move(out), parts,
                      [sizes](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        const T* gp = g.data();
                        for (size_t i = 0; i < sizes.size(); ++i) {
                          if (pg[i]) {
                            T* d = pg[i]->data();
                            for (std::int64_t k = 0; k < sizes[i]; ++k) d[k] += gp[k];
                          }
                          gp += sizes[i];
                        }
                      });
}

template <class T>
VarT<T> concat0(const VarT<T>& a, const VarT<T>& b) {
  return concat0<T>(std::vector<VarT<T>>{a, b});
}

// f[k] -> [k, D, H, W] tile; gradient sums over the tiled voxels.
template <class T>
VarT<T> broadcast_channels(const VarT<T>& f, int D, int H, int W) {
  if (f->value.ndim() != 1) throw dimension_error("broadcast_channels expects a vector");
  int k = f->value.dim(0);
  std::int64_t v = static_cast<std::int64_t>(D) * H * W;
  TensorT<T> out({k, D, H, W});
  T* d = out.data();
  for (int c = 0; c < k; ++c)
    for (std::int64_t i = 0; i < v; ++i) d[c * v + i] = f->value[c];
  return make_node<T>(std::move(out), {f},
                      [k, v](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        const T* gp = g.data();
                        for (int c = 0; c < k; ++c) {
                          double acc = 0;
                          for (std::int64_t i = 0; i < v; ++i) acc += static_cast<double>(gp[c * v + i]);
                          (*pg[0])[c] += static_cast<T>(acc);
                        }
                      });
}

// Rows of voxel features: out[n][c] = feat[c][index[n]]. Selection indices
// are data, not graph inputs; gradients scatter back into the feature map.
template <class T>
VarT<T> gather_voxels(const VarT<T>& feat, const std::vector<std::int64_t>& indices) {
  if (feat->value.ndim() != 4) throw dimension_error("gather_voxels expects [C,D,H,W]");
  int C = feat->value.dim(0);
  std::int64_t v = feat->value.numel() / C;
  std::int64_t N = static_cast<std::int64_t>(indices.size());
  if (N == 0) throw contract_error("gather_voxels: empty index set");
  TensorT<T> out({static_cast<int>(N), C});
  const T* fp = feat->value.data();
  T* d = out.data();
  for (std::int64_t n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) d[n * C + c] = fp[c * v + indices[n]];
  auto idx = indices;
  return make_node<T>(std::move(out), {feat},
                      [idx, C, v](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        std::int64_t N = static_cast<std::int64_t>(idx.size());
                        for (std::int64_t n = 0; n < N; ++n)
                          for (int c = 0; c < C; ++c) d[c * v + idx[n]] += gp[n * C + c];
                      });
}

// Mean over rows: [N x c] -> [c]
template <class T>
VarT<T> global_mean_rows(const VarT<T>& x) {
  if (x->value.ndim() != 2) throw dimension_error("global_mean_rows expects [N,c]");
  int N = x->value.dim(0), c = x->value.dim(1);
  TensorT<T> out({c});
  const T* xp = x->value.data();
  for (int j = 0; j < c; ++j) {
    double acc = 0;
    for (int i = 0; i < N; ++i) acc += static_cast<double>(xp[static_cast<std::int64_t>(i) * c + j]);
    out[j] = static_cast<T>(acc / N);
  }
  return make_node<T>(std::move(out), {x},
                      [N, c](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        T inv = static_cast<T>(1.0 / N);
                        for (int i = 0; i < N; ++i)
                          for (int j = 0; j < c; ++j) d[static_cast<std::int64_t>(i) * c + j] += g[j] * inv;
                      });
}

// Contiguous slice of a vector.
template <class T>
VarT<T> slice_vec(const VarT<T>& x, int begin, int len) {
  if (x->value.ndim() != 1 || begin < 0 || len <= 0 || begin + len > x->value.dim(0))
    throw dimension_error("slice_vec: [" + std::to_string(begin) + "," + std::to_string(begin + len) +
                          ") of " + shape_str(x->value.shape()));
  TensorT<T> out({len});
  std::memcpy(out.data(), x->value.data() + begin, static_cast<size_t>(len) * sizeof(T));
  return make_node<T>(std::move(out), {x},
                      [begin, len](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data() + begin;
                        for (int i = 0; i < len; ++i) d[i] += g[i];
                      });
}

// f[k] -> [N, k] with every row equal to f; gradient sums over rows.
template <class T>
VarT<T> broadcast_rows(const VarT<T>& f, int N) {
  if (f->value.ndim() != 1 || N <= 0) throw dimension_error("broadcast_rows expects a vector and N > 0");
  int k = f->value.dim(0);
  TensorT<T> out({N, k});
  for (int i = 0; i < N; ++i)
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * k, f->value.data(),
                static_cast<size_t>(k) * sizeof(T));
  return make_node<T>(std::move(out), {f},
                      [N, k](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        for (int i = 0; i < N; ++i)
                          for (int j = 0; j < k; ++j) d[j] += gp[static_cast<std::int64_t>(i) * k + j];
                      });
}

// Mean over the spatial axes: [C,D,H,W] -> [C]
template <class T>
VarT<T> spatial_mean(const VarT<T>& x) {
  if (x->value.ndim() != 4) throw dimension_error("spatial_mean expects [C,D,H,W]");
  int C = x->value.dim(0);
  std::int64_t v = x->value.numel() / C;
  TensorT<T> out({C});
  const T* xp = x->value.data();
  for (int c = 0; c < C; ++c) {
    double acc = 0;
    for (std::int64_t i = 0; i < v; ++i) acc += static_cast<double>(xp[c * v + i]);
    out[c] = static_cast<T>(acc / static_cast<double>(v));
  }
  return make_node<T>(std::move(out), {x},
                      [C, v](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        T inv = static_cast<T>(1.0 / static_cast<double>(v));
                        for (int c = 0; c < C; ++c)
                          for (std::int64_t i = 0; i < v; ++i) d[c * v + i] += g[c] * inv;
                      });
}

}  // namespace fcdx
