#include "fcdx/gemm.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace fcdx {

#if defined(__AVX512F__)

namespace {

// 8x32 microkernel: 16 zmm accumulators, B streamed, A broadcast per element.
// Column tile is two 16-lane vectors; tails use masked loads/stores.
template <int MR>
inline void nn_tile(float* C, std::ptrdiff_t ldc, int K,
                    const float* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                    const float* B, std::ptrdiff_t brs, int width) {
  __m512 acc0[MR], acc1[MR];
  if (width == 32) {
    for (int i = 0; i < MR; ++i) {
      acc0[i] = _mm512_loadu_ps(C + i * ldc);
      acc1[i] = _mm512_loadu_ps(C + i * ldc + 16);
    }
    for (int k = 0; k < K; ++k) {
      const float* bp = B + k * brs;
      __m512 b0 = _mm512_loadu_ps(bp);
      __m512 b1 = _mm512_loadu_ps(bp + 16);
      const float* ap = A + k * acs;
      for (int i = 0; i < MR; ++i) {
        __m512 a = _mm512_set1_ps(ap[i * ars]);
        acc0[i] = _mm512_fmadd_ps(a, b0, acc0[i]);
        acc1[i] = _mm512_fmadd_ps(a, b1, acc1[i]);
      }
    }
    for (int i = 0; i < MR; ++i) {
      _mm512_storeu_ps(C + i * ldc, acc0[i]);
      _mm512_storeu_ps(C + i * ldc + 16, acc1[i]);
    }
    return;
  }
  int w0 = width < 16 ? width : 16;
  int w1 = width - w0;
  __mmask16 m0 = static_cast<__mmask16>((1u << w0) - 1u);
  __mmask16 m1 = static_cast<__mmask16>(w1 >= 16 ? 0xffffu : (1u << w1) - 1u);
  for (int i = 0; i < MR; ++i) {
    acc0[i] = _mm512_maskz_loadu_ps(m0, C + i * ldc);
    acc1[i] = w1 > 0 ? _mm512_maskz_loadu_ps(m1, C + i * ldc + 16) : _mm512_setzero_ps();
  }
  for (int k = 0; k < K; ++k) {
    const float* bp = B + k * brs;
    __m512 b0 = _mm512_maskz_loadu_ps(m0, bp);
    __m512 b1 = w1 > 0 ? _mm512_maskz_loadu_ps(m1, bp + 16) : _mm512_setzero_ps();
    const float* ap = A + k * acs;
    for (int i = 0; i < MR; ++i) {
      __m512 a = _mm512_set1_ps(ap[i * ars]);
      acc0[i] = _mm512_fmadd_ps(a, b0, acc0[i]);
      acc1[i] = _mm512_fmadd_ps(a, b1, acc1[i]);
    }
  }
  for (int i = 0; i < MR; ++i) {
    _mm512_mask_storeu_ps(C + i * ldc, m0, acc0[i]);
    if (w1 > 0) _mm512_mask_storeu_ps(C + i * ldc + 16, m1, acc1[i]);
  }
}

inline void nn_rows(float* C, std::ptrdiff_t ldc, int mr, int K,
                    const float* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                    const float* B, std::ptrdiff_t brs, int width) {
  switch (mr) {
    case 8: nn_tile<8>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 7: nn_tile<7>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 6: nn_tile<6>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 5: nn_tile<5>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 4: nn_tile<4>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 3: nn_tile<3>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 2: nn_tile<2>(C, ldc, K, A, ars, acs, B, brs, width); break;
    case 1: nn_tile<1>(C, ldc, K, A, ars, acs, B, brs, width); break;
    default: break;
  }
}

inline float hsum(__m512 v) { return _mm512_reduce_add_ps(v); }

template <int MR, int NR>
inline void nt_tile(float* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs,
                    const float* A, std::ptrdiff_t ars,
                    const float* B, std::ptrdiff_t brs,
                    int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  __m512 acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = _mm512_setzero_ps();
  for (int g = 0; g < ngroups; ++g) {
    const float* ag = A + g * ags;
    const float* bg = B + g * bgs;
    int t = 0;
    for (; t + 16 <= glen; t += 16) {
      __m512 av[MR], bv[NR];
      for (int i = 0; i < MR; ++i) av[i] = _mm512_loadu_ps(ag + i * ars + t);
      for (int j = 0; j < NR; ++j) bv[j] = _mm512_loadu_ps(bg + j * brs + t);
      for (int i = 0; i < MR; ++i)
        for (int j = 0; j < NR; ++j) acc[i][j] = _mm512_fmadd_ps(av[i], bv[j], acc[i][j]);
    }
    if (t < glen) {
      __mmask16 m = static_cast<__mmask16>((1u << (glen - t)) - 1u);
      __m512 av[MR], bv[NR];
      for (int i = 0; i < MR; ++i) av[i] = _mm512_maskz_loadu_ps(m, ag + i * ars + t);
      for (int j = 0; j < NR; ++j) bv[j] = _mm512_maskz_loadu_ps(m, bg + j * brs + t);
      for (int i = 0; i < MR; ++i)
        for (int j = 0; j < NR; ++j) acc[i][j] = _mm512_fmadd_ps(av[i], bv[j], acc[i][j]);
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) C[i * ldc + j * ccs] += hsum(acc[i][j]);
}

template <int MR>
inline void nt_rows(float* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int N,
                    const float* A, std::ptrdiff_t ars,
                    const float* B, std::ptrdiff_t brs,
                    int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  int j = 0;
  for (; j + 4 <= N; j += 4)
    nt_tile<MR, 4>(C + j * ccs, ldc, ccs, A, ars, B + j * brs, brs, ngroups, glen, ags, bgs);
  for (; j < N; ++j)
    nt_tile<MR, 1>(C + j * ccs, ldc, ccs, A, ars, B + j * brs, brs, ngroups, glen, ags, bgs);
}

}  // namespace

void gemm_nn_f32(float* C, std::ptrdiff_t ldc, int M, int K,
                 const float* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                 const float* B, std::ptrdiff_t brs,
                 int ngroups, int glen, std::ptrdiff_t bgs) {
  for (int i0 = 0; i0 < M; i0 += 8) {
    int mr = M - i0 < 8 ? M - i0 : 8;
    std::int64_t col = 0;
    for (int g = 0; g < ngroups; ++g) {
      for (int t0 = 0; t0 < glen; t0 += 32) {
        int w = glen - t0 < 32 ? glen - t0 : 32;
        nn_rows(C + i0 * ldc + col + t0, ldc, mr, K, A + i0 * ars, ars, acs,
                B + g * bgs + t0, brs, w);
      }
      col += glen;
    }
  }
}

void gemm_nt_f32(float* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int M, int N,
                 const float* A, std::ptrdiff_t ars,
                 const float* B, std::ptrdiff_t brs,
                 int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  int i = 0;
  for (; i + 4 <= M; i += 4)
    nt_rows<4>(C + i * ldc, ldc, ccs, N, A + i * ars, ars, B, brs, ngroups, glen, ags, bgs);
  for (; i < M; ++i)
    nt_rows<1>(C + i * ldc, ldc, ccs, N, A + i * ars, ars, B, brs, ngroups, glen, ags, bgs);
}

#else  // no AVX-512: reference order

void gemm_nn_f32(float* C, std::ptrdiff_t ldc, int M, int K,
                 const float* A, std::ptrdiff_t ars, std::ptrdiff_t acs,
                 const float* B, std::ptrdiff_t brs,
                 int ngroups, int glen, std::ptrdiff_t bgs) {
  gemm_nn_generic(C, ldc, M, K, A, ars, acs, B, brs, ngroups, glen, bgs);
}

void gemm_nt_f32(float* C, std::ptrdiff_t ldc, std::ptrdiff_t ccs, int M, int N,
                 const float* A, std::ptrdiff_t ars,
                 const float* B, std::ptrdiff_t brs,
                 int ngroups, int glen, std::ptrdiff_t ags, std::ptrdiff_t bgs) {
  gemm_nt_generic(C, ldc, ccs, M, N, A, ars, B, brs, ngroups, glen, ags, bgs);
}

#endif

}  // namespace fcdx
