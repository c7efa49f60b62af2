#pragma once

#include <cstddef>
#include <cstdint>

namespace fcdx {

// Shared building block for matmul and the shift-and-multiply 3D convolution.
// Both kernels accumulate (C +=) with a fixed summation order (ascending k/v,
// groups in order), so results are independent of how callers partition work.
//
// A "group" models the column structure of a padded-volume slab: the logical
// axis of size ngroups*glen where element (g, t) lives at float offset
// g*gstride + t within a row. A dense axis is one group with gstride == 0.

// C[M x N] (row stride ldc, dense columns) += A * B
//   A(i, k) = A[i*ars + k*acs]
//   B(k, j=(g,t)) = B[k*brs + g*bgs + t],  N = ngroups*glen
void gemm_nn_f32(float* C, std::ptrdiff_t ldc, int M, int K,
                 const float* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                 const float* B, std::ptrdiff_t brs,
                 int ngroups, int glen, std::ptrdiff_t bgs);

// C(i, j) = C[i*ldc + j*ccs] += sum_v A(i, v) * B(j, v)
// with the contraction axis grouped: v=(g,t), A offset i*ars + g*ags + t,
// B offset j*brs + g*bgs + t, V = ngroups*glen.
void gemm_nt_f32(float* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int M, int N,
                 const float* A, std::ptrdiff_t ars,
                 const float* B, std::ptrdiff_t brs,
                 int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs);

// Reference-order generic versions (used for double-precision gradient
// checking; also the fallback when AVX-512 is unavailable).
template <class T>
void gemm_nn_generic(T* C, std::ptrdiff_t ldc, int M, int K,
                     const T* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                     const T* B, std::ptrdiff_t brs,
                     int ngroups, int glen, std::ptrdiff_t bgs) {
  for (int i = 0; i < M; ++i) {
    T* crow = C + i * ldc;
    for (int k = 0; k < K; ++k) {
      T a = A[i * ars + k * acs];
      const T* brow = B + k * brs;
      std::int64_t j = 0;
      for (int g = 0; g < ngroups; ++g) {
        const T* bp = brow + g * bgs;
        for (int t = 0; t < glen; ++t) crow[j + t] += a * bp[t];
        j += glen;
      }
    }
  }
}

template <class T>
void gemm_nt_generic(T* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int M, int N,
                     const T* A, std::ptrdiff_t ars,
                     const T* B, std::ptrdiff_t brs,
                     int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j < N; ++j) {
      T acc = 0;
      for (int g = 0; g < ngroups; ++g) {
        const T* ap = A + i * ars + g * ags;
        const T* bp = B + j * brs + g * bgs;
        for (int t = 0; t < glen; ++t) acc += ap[t] * bp[t];
      }
      C[i * ldc + j * ccs] += acc;
    }
  }
}

template <class T>
void gemm_nn(T* C, std::ptrdiff_t ldc, int M, int K,
             const T* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
             const T* B, std::ptrdiff_t brs,
             int ngroups, int glen, std::ptrdiff_t bgs) {
  gemm_nn_generic(C, ldc, M, K, A, ars, acs, B, brs, ngroups, glen, bgs);
}
template <>
inline void gemm_nn<float>(float* C, std::ptrdiff_t ldc, int M, int K,
                           const float* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                           const float* B, std::ptrdiff_t brs,
                           int ngroups, int glen, std::ptrdiff_t bgs) {
  gemm_nn_f32(C, ldc, M, K, A, ars, acs, B, brs, ngroups, glen, bgs);
}

template <class T>
void gemm_nt(T* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int M, int N,
             const T* A, std::ptrdiff_t ars,
             const T* B, std::ptrdiff_t brs,
             int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  gemm_nt_generic(C, ldc, ccs, M, N, A, ars, B, brs, ngroups, glen, ags, bgs);
}
template <>
inline void gemm_nt<float>(float* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int M, int N,
                           const float* A, std::ptrdiff_t ars,
                           const float* B, std::ptrdiff_t brs,
                           int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  gemm_nt_f32(C, ldc, ccs, M, N, A, ars, B, brs, ngroups, glen, ags, bgs);
}

}  // namespace fcdx
