#pragma once

#include <cstddef>

namespace gf {

// Small row-major GEMM kernels. Accumulation order within one output row is
// fixed, so results are bitwise identical for any OpenMP thread count.

// C[M x N] += A[M x K] * B[K x N]
template <class S>
void gemm_nn_acc(int M, int N, int K, const S* A, const S* B, S* C) {
#pragma omp parallel for schedule(static) if (M > 1 && int64_t(M) * N * K > 1 << 14)
  for (int m = 0; m < M; ++m) {
    S* crow = C + size_t(m) * N;
    const S* arow = A + size_t(m) * K;
    for (int k = 0; k < K; ++k) {
      const S a = arow[k];
      if (a == S(0)) continue;
      const S* brow = B + size_t(k) * N;
      for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T
template <class S>
void gemm_nt_acc(int M, int N, int K, const S* A, const S* B, S* C) {
#pragma omp parallel for schedule(static) if (M > 1 && int64_t(M) * N * K > 1 << 14)
  for (int m = 0; m < M; ++m) {
    const S* arow = A + size_t(m) * K;
    S* crow = C + size_t(m) * N;
    for (int n = 0; n < N; ++n) {
      const S* brow = B + size_t(n) * K;
      S acc = S(0);
      for (int k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[n] += acc;
    }
  }
}

// C[M x N] += A[K x M]^T * B[K x N]
template <class S>
void gemm_tn_acc(int M, int N, int K, const S* A, const S* B, S* C) {
#pragma omp parallel for schedule(static) if (M > 1 && int64_t(M) * N * K > 1 << 14)
  for (int m = 0; m < M; ++m) {
    S* crow = C + size_t(m) * N;
    for (int k = 0; k < K; ++k) {
      const S a = A[size_t(k) * M + m];
      if (a == S(0)) continue;
      const S* brow = B + size_t(k) * N;
      for (int n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

// Unrolls conv patches into a [C*k*k, Ho*Wo] column matrix (zero padding).
template <class S>
void im2col(const S* im, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            S* col) {
  const int N = Ho * Wo;
#pragma omp parallel for schedule(static) if (C * k * k > 8)
  for (int r = 0; r < C * k * k; ++r) {
    const int c = r / (k * k);
    const int ky = (r / k) % k;
    const int kx = r % k;
    const S* src = im + size_t(c) * H * W;
    S* dst = col + size_t(r) * N;
    for (int oy = 0; oy < Ho; ++oy) {
      const int iy = oy * stride + ky - pad;
      if (iy < 0 || iy >= H) {
        for (int ox = 0; ox < Wo; ++ox) dst[oy * Wo + ox] = S(0);
        continue;
      }
      const S* srow = src + size_t(iy) * W;
      for (int ox = 0; ox < Wo; ++ox) {
        const int ix = ox * stride + kx - pad;
        dst[oy * Wo + ox] = (ix >= 0 && ix < W) ? srow[ix] : S(0);
      }
    }
  }
}

// Scatter-adds a column matrix back onto the image grid. Parallel across
// channels only; within a channel the accumulation order is fixed.
template <class S>
void col2im_acc(const S* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
                S* im) {
  const int N = Ho * Wo;
#pragma omp parallel for schedule(static) if (C > 1)
  for (int c = 0; c < C; ++c) {
    S* dst = im + size_t(c) * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* src = col + size_t((c * k + ky) * k + kx) * N;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[size_t(iy) * W + ix] += src[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace gf
