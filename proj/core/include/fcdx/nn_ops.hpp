#pragma once

#include <cmath>
#include <cstring>
#include <optional>

#include "fcdx/ops.hpp"

namespace fcdx {

namespace detail {

// Zero-pad a [C,D,H,W] volume by 1 voxel on each spatial side.
template <class T>
TensorT<T> pad1(const TensorT<T>& x) {
  int C = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Dp = D + 2, Hp = H + 2, Wp = W + 2;
  TensorT<T> out({C, Dp, Hp, Wp});
  const T* src = x.data();
  T* dst = out.data();
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < D; ++z)
      for (int h = 0; h < H; ++h)
        std::memcpy(dst + (((static_cast<std::int64_t>(c) * Dp + z + 1) * Hp + h + 1) * Wp + 1),
                    src + ((static_cast<std::int64_t>(c) * D + z) * H + h) * W,
                    static_cast<size_t>(W) * sizeof(T));
  return out;
}

}  // namespace detail

// 3-d convolution, stride 1. Kernel size comes from the weight shape
// [Co, Ci, k, k, k]; k = 3 implies padding 1 (same-size output), k = 1 is a
// pointwise channel mix. Bias is optional (convs followed by a norm layer
// don't carry one). Implemented as one GEMM per (depth slab, kernel offset)
// on the padded input, so no im2col buffer is materialized.
template <class T>
VarT<T> conv3d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b = nullptr) {
  if (x->value.ndim() != 4 || w->value.ndim() != 5)
    throw dimension_error("conv3d: x=" + shape_str(x->value.shape()) + " w=" + shape_str(w->value.shape()));
  int Ci = x->value.dim(0), D = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  int Co = w->value.dim(0), k = w->value.dim(2);
  if (w->value.dim(1) != Ci || w->value.dim(3) != k || w->value.dim(4) != k || (k != 1 && k != 3))
    throw dimension_error("conv3d: weight " + shape_str(w->value.shape()) + " does not match input " +
                          shape_str(x->value.shape()));
  if (b && (b->value.ndim() != 1 || b->value.dim(0) != Co))
    throw dimension_error("conv3d: bias " + shape_str(b->value.shape()));

  std::int64_t v = static_cast<std::int64_t>(D) * H * W;
  TensorT<T> out({Co, D, H, W});

  if (k == 1) {
    gemm_nn<T>(out.data(), v, Co, Ci, w->value.data(), Ci, 1, x->value.data(), v, 1, v, 0);
  } else {
    TensorT<T> xp = detail::pad1(x->value);
    int Hp = H + 2, Wp = W + 2;
    std::int64_t vp = static_cast<std::int64_t>(D + 2) * Hp * Wp;
    std::int64_t hw = static_cast<std::int64_t>(H) * W;
    for (int z = 0; z < D; ++z) {
      T* cz = out.data() + z * hw;
      for (int o = 0; o < 27; ++o) {
        int kz = o / 9, ky = (o / 3) % 3, kx = o % 3;
        const T* bz = xp.data() + (static_cast<std::int64_t>(z + kz) * Hp + ky) * Wp + kx;
        gemm_nn<T>(cz, v, Co, Ci, w->value.data() + o, static_cast<std::int64_t>(Ci) * 27, 27, bz, vp, H, W,
                   Wp);
      }
    }
  }
  if (b) {
    T* d = out.data();
    for (int c = 0; c < Co; ++c) {
      T bc = b->value[c];
      for (std::int64_t i = 0; i < v; ++i) d[c * v + i] += bc;
    }
  }

  TensorT<T> xv = x->value, wv = w->value;
  std::vector<VarT<T>> parents = b ? std::vector<VarT<T>>{x, w, b} : std::vector<VarT<T>>{x, w};
  return make_node<T>(
      std::move(out), parents,
      [xv, wv, Ci, Co, D, H, W, k, v](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
        if (k == 1) {
          if (pg[0])  // gx += w^T * g
            gemm_nn<T>(pg[0]->data(), v, Ci, Co, wv.data(), 1, Ci, g.data(), v, 1, v, 0);
          if (pg[1])  // gw += g * x^T
            gemm_nt<T>(pg[1]->data(), Ci, 1, Co, Ci, g.data(), v, xv.data(), v, 1, v, 0, 0);
        } else {
          int Hp = H + 2, Wp = W + 2;
          std::int64_t vp = static_cast<std::int64_t>(D + 2) * Hp * Wp;
          std::int64_t hw = static_cast<std::int64_t>(H) * W;
          if (pg[0]) {
            TensorT<T> gp = detail::pad1(g);
            for (int z = 0; z < D; ++z) {
              T* cz = pg[0]->data() + z * hw;
              for (int o = 0; o < 27; ++o) {
                int kz = o / 9, ky = (o / 3) % 3, kx = o % 3;
                const T* bz = gp.data() + (static_cast<std::int64_t>(z + kz) * Hp + ky) * Wp + kx;
                gemm_nn<T>(cz, v, Ci, Co, wv.data() + (26 - o), 27, static_cast<std::int64_t>(Ci) * 27, bz,
                           vp, H, W, Wp);
              }
            }
          }
          if (pg[1]) {
            TensorT<T> xp = detail::pad1(xv);
            for (int z = 0; z < D; ++z) {
              const T* gz = g.data() + z * hw;
              for (int o = 0; o < 27; ++o) {
                int kz = o / 9, ky = (o / 3) % 3, kx = o % 3;
                const T* bz = xp.data() + (static_cast<std::int64_t>(z + kz) * Hp + ky) * Wp + kx;
                gemm_nt<T>(pg[1]->data() + o, static_cast<std::int64_t>(Ci) * 27, 27, Co, Ci, gz, v, bz, vp,
                           H, W, W, Wp);
              }
            }
          }
        }
        if (pg.size() > 2 && pg[2]) {
          const T* gp = g.data();
          for (int c = 0; c < Co; ++c) {
            double acc = 0;
            for (std::int64_t i = 0; i < v; ++i) acc += static_cast<double>(gp[c * v + i]);
            (*pg[2])[c] += static_cast<T>(acc);
          }
        }
      });
}

// Running statistics for a batch-norm layer. Owned by the module, serialized
// with the model, never part of the gradient graph.
template <class T>
struct BNStateT {
  TensorT<T> running_mean;
  TensorT<T> running_var;
  explicit BNStateT(int channels) : running_mean({channels}), running_var({channels}) {
    running_var.fill(T(1));
  }
};
using BNState = BNStateT<float>;

// Batch normalization over every axis except the channel axis (axis 0 for
// [C,D,H,W], axis 1 for [B,C,...]). Training mode normalizes with the batch
// statistics computed here and folds them into the running estimates with momentum
// 0.9; eval mode uses the running estimates. A zero-variance channel yields
// beta exactly (x_hat is identically zero).
template <class T>
VarT<T> batchnorm(const VarT<T>& x, const VarT<T>& gamma, const VarT<T>& beta, BNStateT<T>& state,
                  bool training, T momentum = T(0.9), T eps = T(1e-5)) {
  int nd = x->value.ndim();
  if (nd < 2) throw dimension_error("batchnorm expects at least 2 dims, got " + shape_str(x->value.shape()));
  int B = nd >= 5 ? x->value.dim(0) : 1;
  int C = nd >= 5 ? x->value.dim(1) : x->value.dim(0);
  if (gamma->value.numel() != C || beta->value.numel() != C || state.running_mean.numel() != C)
    throw dimension_error("batchnorm: parameter size does not match " + std::to_string(C) + " channels");
  std::int64_t v = x->value.numel() / (static_cast<std::int64_t>(B) * C);
  std::int64_t n = static_cast<std::int64_t>(B) * v;

  TensorT<T> mu({C}), var({C});
  if (training) {
    const T* xp = x->value.data();
    for (int c = 0; c < C; ++c) {
      double acc = 0;
      for (int bb = 0; bb < B; ++bb) {
        const T* base = xp + (static_cast<std::int64_t>(bb) * C + c) * v;
        for (std::int64_t i = 0; i < v; ++i) acc += static_cast<double>(base[i]);
      }
      double m = acc / static_cast<double>(n);
      double acc2 = 0;
      for (int bb = 0; bb < B; ++bb) {
        const T* base = xp + (static_cast<std::int64_t>(bb) * C + c) * v;
        for (std::int64_t i = 0; i < v; ++i) {
          double d = static_cast<double>(base[i]) - m;
          acc2 += d * d;
        }
      }
      mu[c] = static_cast<T>(m);
      var[c] = static_cast<T>(acc2 / static_cast<double>(n));
      state.running_mean[c] = momentum * state.running_mean[c] + (T(1) - momentum) * mu[c];
      state.running_var[c] = momentum * state.running_var[c] + (T(1) - momentum) * var[c];
    }
  } else {
    mu = state.running_mean.clone();
    var = state.running_var.clone();
  }

  TensorT<T> out(x->value.shape());
  {
    const T* xp = x->value.data();
    T* d = out.data();
    for (int c = 0; c < C; ++c) {
      T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[c]) + static_cast<double>(eps)));
      T gsc = gamma->value[c] * s;
      T off = beta->value[c] - gsc * mu[c];
      for (int bb = 0; bb < B; ++bb) {
        std::int64_t base = (static_cast<std::int64_t>(bb) * C + c) * v;
        for (std::int64_t i = 0; i < v; ++i) d[base + i] = gsc * xp[base + i] + off;
      }
    }
  }

  TensorT<T> xv = x->value, gv = gamma->value;
  return make_node<T>(
      std::move(out), {x, gamma, beta},
      [xv, gv, mu, var, B, C, v, n, training, eps](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
        const T* xp = xv.data();
        const T* gp = g.data();
        for (int c = 0; c < C; ++c) {
          double s = 1.0 / std::sqrt(static_cast<double>(var[c]) + static_cast<double>(eps));
          double m = mu[c];
          double sum_g = 0, sum_gx = 0;
          for (int bb = 0; bb < B; ++bb) {
            std::int64_t base = (static_cast<std::int64_t>(bb) * C + c) * v;
            for (std::int64_t i = 0; i < v; ++i) {
              double gi = gp[base + i];
              sum_g += gi;
              sum_gx += gi * (static_cast<double>(xp[base + i]) - m) * s;
            }
          }
          if (pg[1]) (*pg[1])[c] += static_cast<T>(sum_gx);
          if (pg[2]) (*pg[2])[c] += static_cast<T>(sum_g);
          if (pg[0]) {
            T* d = pg[0]->data();
            double gs = static_cast<double>(gv[c]) * s;
            if (training) {
              double mg = sum_g / static_cast<double>(n);
              double mgx = sum_gx / static_cast<double>(n);
              for (int bb = 0; bb < B; ++bb) {
                std::int64_t base = (static_cast<std::int64_t>(bb) * C + c) * v;
                for (std::int64_t i = 0; i < v; ++i) {
                  double xh = (static_cast<double>(xp[base + i]) - m) * s;
                  d[base + i] += static_cast<T>(gs * (static_cast<double>(gp[base + i]) - mg - xh * mgx));
                }
              }
            } else {
              for (int bb = 0; bb < B; ++bb) {
                std::int64_t base = (static_cast<std::int64_t>(bb) * C + c) * v;
                for (std::int64_t i = 0; i < v; ++i)
                  d[base + i] += static_cast<T>(gs * static_cast<double>(gp[base + i]));
              }
            }
          }
        }
      });
}

// 2x2x2 average pooling, stride 2. Spatial extents must be even.
template <class T>
VarT<T> avgpool3d(const VarT<T>& x) {
  if (x->value.ndim() != 4) throw dimension_error("avgpool3d expects [C,D,H,W]");
  int C = x->value.dim(0), D = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  if (D % 2 || H % 2 || W % 2)
    throw dimension_error("avgpool3d: spatial extents must be even, got " + shape_str(x->value.shape()));
  int Do = D / 2, Ho = H / 2, Wo = W / 2;
  TensorT<T> out({C, Do, Ho, Wo});
  const T* xp = x->value.data();
  T* d = out.data();
  auto xat = [&](int c, int z, int h, int w) {
    return xp[((static_cast<std::int64_t>(c) * D + z) * H + h) * W + w];
  };
  for (int c = 0; c < C; ++c)
    for (int z = 0; z < Do; ++z)
      for (int h = 0; h < Ho; ++h)
        for (int w = 0; w < Wo; ++w) {
          double acc = 0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) acc += xat(c, 2 * z + dz, 2 * h + dy, 2 * w + dx);
          d[((static_cast<std::int64_t>(c) * Do + z) * Ho + h) * Wo + w] = static_cast<T>(acc / 8.0);
        }
  return make_node<T>(std::move(out), {x},
                      [C, D, H, W, Do, Ho, Wo](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T* d = pg[0]->data();
                        const T* gp = g.data();
                        for (int c = 0; c < C; ++c)
                          for (int z = 0; z < Do; ++z)
                            for (int h = 0; h < Ho; ++h)
                              for (int w = 0; w < Wo; ++w) {
                                T gv = gp[((static_cast<std::int64_t>(c) * Do + z) * Ho + h) * Wo + w] / T(8);
                                for (int dz = 0; dz < 2; ++dz)
                                  for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx)
                                      d[((static_cast<std::int64_t>(c) * D + 2 * z + dz) * H + 2 * h + dy) *
                                            W +
                                        2 * w + dx] += gv;
                              }
                      });
}

namespace detail {
struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<float> w1;  // weight of i1; weight of i0 is 1 - w1
};
// Half-pixel (align_corners = false) source coordinates, clamped to the edge.
inline LerpAxis lerp_axis(int out_n, int in_n, int factor) {
  LerpAxis ax;
  ax.i0.resize(out_n);
  ax.i1.resize(out_n);
  ax.w1.resize(out_n);
  for (int i = 0; i < out_n; ++i) {
    double src = (i + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    if (src > in_n - 1) src = in_n - 1;
    int lo = static_cast<int>(src);
    if (lo > in_n - 2) lo = in_n - 2;
    if (lo < 0) lo = 0;
    double w = src - lo;
    if (in_n == 1) {
      lo = 0;
      w = 0;
    }
    ax.i0[i] = lo;
    ax.i1[i] = in_n == 1 ? 0 : lo + 1;
    ax.w1[i] = static_cast<float>(w);
  }
  return ax;
}
}  // namespace detail

// Trilinear upsampling by an integer factor (half-pixel sampling, edges
// clamped). Factor 1 is the identity.
template <class T>
VarT<T> trilinear_upsample(const VarT<T>& x, int factor) {
  if (x->value.ndim() != 4) throw dimension_error("trilinear_upsample expects [C,D,H,W]");
  if (factor < 1) throw contract_error("trilinear_upsample: factor must be >= 1");
  if (factor == 1) {
    TensorT<T> out = x->value;
    return make_node<T>(std::move(out), {x},
                        [](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                          if (pg[0]) detail::add_flat(*pg[0], g);
                        });
  }
  int C = x->value.dim(0), D = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  int Do = D * factor, Ho = H * factor, Wo = W * factor;
  auto az = detail::lerp_axis(Do, D, factor);
  auto ay = detail::lerp_axis(Ho, H, factor);
  auto axx = detail::lerp_axis(Wo, W, factor);

  TensorT<T> out({C, Do, Ho, Wo});
  const T* xp = x->value.data();
  T* d = out.data();
  for (int c = 0; c < C; ++c) {
    const T* xc = xp + static_cast<std::int64_t>(c) * D * H * W;
    T* dc = d + static_cast<std::int64_t>(c) * Do * Ho * Wo;
    for (int z = 0; z < Do; ++z) {
      T wz = static_cast<T>(az.w1[z]);
      const T* p0 = xc + static_cast<std::int64_t>(az.i0[z]) * H * W;
      const T* p1 = xc + static_cast<std::int64_t>(az.i1[z]) * H * W;
      for (int h = 0; h < Ho; ++h) {
        T wy = static_cast<T>(ay.w1[h]);
        std::int64_t r0 = static_cast<std::int64_t>(ay.i0[h]) * W;
        std::int64_t r1 = static_cast<std::int64_t>(ay.i1[h]) * W;
        T* row = dc + (static_cast<std::int64_t>(z) * Ho + h) * Wo;
        for (int w = 0; w < Wo; ++w) {
          T wx = static_cast<T>(axx.w1[w]);
          int c0 = axx.i0[w], c1 = axx.i1[w];
          T v00 = (1 - wx) * p0[r0 + c0] + wx * p0[r0 + c1];
          T v01 = (1 - wx) * p0[r1 + c0] + wx * p0[r1 + c1];
          T v10 = (1 - wx) * p1[r0 + c0] + wx * p1[r0 + c1];
          T v11 = (1 - wx) * p1[r1 + c0] + wx * p1[r1 + c1];
          row[w] = (1 - wz) * ((1 - wy) * v00 + wy * v01) + wz * ((1 - wy) * v10 + wy * v11);
        }
      }
    }
  }
  return make_node<T>(
      std::move(out), {x},
      [C, D, H, W, Do, Ho, Wo, az, ay, axx](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
        if (!pg[0]) return;
        const T* gp = g.data();
        T* d = pg[0]->data();
        for (int c = 0; c < C; ++c) {
          T* dc = d + static_cast<std::int64_t>(c) * D * H * W;
          const T* gc = gp + static_cast<std::int64_t>(c) * Do * Ho * Wo;
          for (int z = 0; z < Do; ++z) {
            T wz = static_cast<T>(az.w1[z]);
            T* p0 = dc + static_cast<std::int64_t>(az.i0[z]) * H * W;
            T* p1 = dc + static_cast<std::int64_t>(az.i1[z]) * H * W;
            for (int h = 0; h < Ho; ++h) {
              T wy = static_cast<T>(ay.w1[h]);
              std::int64_t r0 = static_cast<std::int64_t>(ay.i0[h]) * W;
              std::int64_t r1 = static_cast<std::int64_t>(ay.i1[h]) * W;
              const T* grow = gc + (static_cast<std::int64_t>(z) * Ho + h) * Wo;
              for (int w = 0; w < Wo; ++w) {
                T wx = static_cast<T>(axx.w1[w]);
                int c0 = axx.i0[w], c1 = axx.i1[w];
                T gv = grow[w];
                p0[r0 + c0] += (1 - wz) * (1 - wy) * (1 - wx) * gv;
                p0[r0 + c1] += (1 - wz) * (1 - wy) * wx * gv;
                p0[r1 + c0] += (1 - wz) * wy * (1 - wx) * gv;
                p0[r1 + c1] += (1 - wz) * wy * wx * gv;
                p1[r0 + c0] += wz * (1 - wy) * (1 - wx) * gv;
                p1[r0 + c1] += wz * (1 - wy) * wx * gv;
                p1[r1 + c0] += wz * wy * (1 - wx) * gv;
                p1[r1 + c1] += wz * wy * wx * gv;
              }
            }
          }
        }
      });
}

// Row-batched affine map: y[N x out] = x[N x in] * W^T + b. Used wherever an
// MLP layer is applied to every row of a feature matrix.
template <class T>
VarT<T> linear_rows(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b = nullptr) {
  if (x->value.ndim() != 2 || w->value.ndim() != 2 || x->value.dim(1) != w->value.dim(1))
    throw dimension_error("linear_rows: x=" + shape_str(x->value.shape()) +
                          " w=" + shape_str(w->value.shape()));
  int N = x->value.dim(0), in_n = x->value.dim(1), out_n = w->value.dim(0);
  if (b && b->value.numel() != out_n) throw dimension_error("linear_rows: bias " + shape_str(b->value.shape()));
  TensorT<T> out({N, out_n});
  gemm_nt<T>(out.data(), out_n, 1, N, out_n, x->value.data(), in_n, w->value.data(), in_n, 1, in_n, 0, 0);
  if (b) {
    T* d = out.data();
    for (int i = 0; i < N; ++i)
      for (int o = 0; o < out_n; ++o) d[static_cast<std::int64_t>(i) * out_n + o] += b->value[o];
  }
  TensorT<T> xv = x->value, wv = w->value;
  std::vector<VarT<T>> parents = b ? std::vector<VarT<T>>{x, w, b} : std::vector<VarT<T>>{x, w};
  return make_node<T>(std::move(out), parents,
                      [xv, wv, N, in_n, out_n](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (pg[0])  // gx += g * W
                          gemm_nn<T>(pg[0]->data(), in_n, N, out_n, g.data(), out_n, 1, wv.data(), in_n, 1,
                                     in_n, 0);
                        if (pg[1])  // gW += g^T * x
                          gemm_nn<T>(pg[1]->data(), in_n, out_n, N, g.data(), 1, out_n, xv.data(), in_n, 1,
                                     in_n, 0);
                        if (pg.size() > 2 && pg[2]) {
                          const T* gp = g.data();
                          T* d = pg[2]->data();
                          for (int i = 0; i < N; ++i)
                            for (int o = 0; o < out_n; ++o) d[o] += gp[static_cast<std::int64_t>(i) * out_n + o];
                        }
                      });
}

// Concatenate matrices along columns: [N x c1], [N x c2], ... -> [N x sum(ci)].
template <class T>
VarT<T> concat_cols(const std::vector<VarT<T>>& parts) {
  if (parts.empty()) throw contract_error("concat_cols: no inputs");
  int N = parts[0]->value.dim(0);
  int total = 0;
  std::vector<int> widths;
  for (const auto& p : parts) {
    if (p->value.ndim() != 2 || p->value.dim(0) != N)
      throw dimension_error("concat_cols: row counts differ");
    widths.push_back(p->value.dim(1));
    total += p->value.dim(1);
  }
  TensorT<T> out({N, total});
  T* d = out.data();
  for (int i = 0; i < N; ++i) {
    std::int64_t off = static_cast<std::int64_t>(i) * total;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      int wdt = widths[pi];
      std::memcpy(d + off, parts[pi]->value.data() + static_cast<std::int64_t>(i) * wdt,
                  static_cast<size_t>(wdt) * sizeof(T));
      off += wdt;
    }
  }
  return make_node<T>(std::move(out), parts,
                      [widths, N, total](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        const T* gp = g.data();
                        for (int i = 0; i < N; ++i) {
                          std::int64_t off = static_cast<std::int64_t>(i) * total;
                          for (size_t pi = 0; pi < widths.size(); ++pi) {
                            if (pg[pi]) {
                              T* d = pg[pi]->data() + static_cast<std::int64_t>(i) * widths[pi];
                              for (int k = 0; k < widths[pi]; ++k) d[k] += gp[off + k];
                            }
                            off += widths[pi];
                          }
                        }
                      });
}

// Multiclass cross entropy directly on logits (log-sum-exp stabilized).
template <class T>
VarT<T> cross_entropy_logits(const VarT<T>& logits, int target) {
  if (logits->value.ndim() != 1) throw dimension_error("cross_entropy_logits expects a logit vector");
  int K = logits->value.dim(0);
  if (target < 0 || target >= K)
    throw contract_error("cross_entropy_logits: target " + std::to_string(target) + " out of range");
  const T* lp = logits->value.data();
  T mx = lp[0];
  for (int i = 1; i < K; ++i) mx = std::max(mx, lp[i]);
  double denom = 0;
  for (int i = 0; i < K; ++i) denom += std::exp(static_cast<double>(lp[i] - mx));
  double lse = static_cast<double>(mx) + std::log(denom);
  TensorT<T> lv = logits->value;
  return make_node<T>(TensorT<T>::scalar(static_cast<T>(lse - lp[target])), {logits},
                      [lv, K, target, mx, denom](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T gv = g[0];
                        T* d = pg[0]->data();
                        for (int i = 0; i < K; ++i) {
                          T p = static_cast<T>(std::exp(static_cast<double>(lv[i] - mx)) / denom);
                          d[i] += gv * (p - (i == target ? T(1) : T(0)));
                        }
                      });
}

// Soft dice loss on probabilities against a fixed binary mask:
//   1 - (2*sum(p*m) + eps) / (sum(p) + sum(m) + eps)
template <class T>
VarT<T> dice_loss(const VarT<T>& probs, const TensorT<T>& mask, T eps = T(1)) {
  if (probs->value.numel() != mask.numel())
    throw dimension_error("dice_loss: " + shape_str(probs->value.shape()) + " vs " + shape_str(mask.shape()));
  const T* pp = probs->value.data();
  const T* mp = mask.data();
  double inter = 0, sp = 0, sm = 0;
  for (std::int64_t i = 0; i < mask.numel(); ++i) {
    inter += static_cast<double>(pp[i]) * mp[i];
    sp += pp[i];
    sm += mp[i];
  }
  double num = 2 * inter + static_cast<double>(eps);
  double den = sp + sm + static_cast<double>(eps);
  TensorT<T> mv = mask;
  return make_node<T>(TensorT<T>::scalar(static_cast<T>(1.0 - num / den)), {probs},
                      [mv, num, den](const TensorT<T>& g, const std::vector<TensorT<T>*>& pg) {
                        if (!pg[0]) return;
                        T gv = g[0];
                        const T* mp = mv.data();
                        T* d = pg[0]->data();
                        double den2 = den * den;
                        for (std::int64_t i = 0; i < mv.numel(); ++i)
                          d[i] -= gv * static_cast<T>((2.0 * mp[i] * den - num) / den2);
                      });
}

}  // namespace fcdx
