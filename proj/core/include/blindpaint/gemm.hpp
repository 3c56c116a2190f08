// Packed-panel GEMM used by the convolution layers.
//
// C[M,N] (+)= op(A)[M,K] * op(B)[K,N]
//
// Every output element accumulates its K products in one serial chain, and
// threads only ever split along N, so results are bit-identical across runs
// and thread counts.
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "blindpaint/parallel.hpp"

namespace blindpaint {
namespace detail {

template <typename T>
struct GemmTile;

#if defined(__AVX512F__)
template <>
struct GemmTile<float> {
  static constexpr int MR = 6, NR = 32;
};
template <>
struct GemmTile<double> {
  static constexpr int MR = 6, NR = 16;
};
#else
template <>
struct GemmTile<float> {
  static constexpr int MR = 6, NR = 16;
};
template <>
struct GemmTile<double> {
  static constexpr int MR = 6, NR = 8;
};
#endif

template <typename T, int MR, int NR>
inline void gemm_micro(std::int64_t k, const T* ap, const T* bp, T* acc) {
  for (std::int64_t p = 0; p < k; ++p) {
    const T* a = ap + p * MR;
    const T* b = bp + p * NR;
    for (int i = 0; i < MR; ++i) {
      const T av = a[i];
      for (int j = 0; j < NR; ++j) acc[i * NR + j] += av * b[j];
    }
  }
}

template <typename T>
std::vector<T>& gemm_pack_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

}  // namespace detail

// op(A)[i,p] = trans_a ? A[p*lda + i] : A[i*lda + p]; likewise for B.
// accumulate=false overwrites C, accumulate=true adds onto it.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          const T* a, std::int64_t lda, const T* b, std::int64_t ldb, T* c, std::int64_t ldc,
          bool accumulate) {
  if (m <= 0 || n <= 0) return;
  constexpr int MR = detail::GemmTile<T>::MR;
  constexpr int NR = detail::GemmTile<T>::NR;
  const std::int64_t m_panels = (m + MR - 1) / MR;
  const std::int64_t n_panels = (n + NR - 1) / NR;

  // A packed once per call: panel mp holds rows [mp*MR, mp*MR+MR) column-major
  // by k, zero padded past m.
  std::vector<T> apack(static_cast<std::size_t>(m_panels * k * MR));
  for (std::int64_t mp = 0; mp < m_panels; ++mp) {
    const std::int64_t m0 = mp * MR;
    T* dst = apack.data() + mp * k * MR;
    for (std::int64_t p = 0; p < k; ++p) {
      for (int i = 0; i < MR; ++i) {
        const std::int64_t mi = m0 + i;
        dst[p * MR + i] =
            (mi < m) ? (trans_a ? a[p * lda + mi] : a[mi * lda + p]) : T(0);
      }
    }
  }

  parallel_for(n_panels, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<T>& bbuf = detail::gemm_pack_scratch<T>();
    bbuf.resize(static_cast<std::size_t>(k * NR));
    alignas(64) T acc[MR * NR];

    for (std::int64_t np = lo; np < hi; ++np) {
      const std::int64_t n0 = np * NR;
      const int nn = static_cast<int>(std::min<std::int64_t>(NR, n - n0));

      if (!trans_b) {
        for (std::int64_t p = 0; p < k; ++p) {
          const T* src = b + p * ldb + n0;
          T* dst = bbuf.data() + p * NR;
          for (int j = 0; j < nn; ++j) dst[j] = src[j];
          for (int j = nn; j < NR; ++j) dst[j] = T(0);
        }
      } else {
        for (int j = 0; j < nn; ++j) {
          const T* src = b + (n0 + j) * ldb;
          for (std::int64_t p = 0; p < k; ++p) bbuf[p * NR + j] = src[p];
        }
        for (int j = nn; j < NR; ++j) {
          for (std::int64_t p = 0; p < k; ++p) bbuf[p * NR + j] = T(0);
        }
      }

      for (std::int64_t mp = 0; mp < m_panels; ++mp) {
        const std::int64_t m0 = mp * MR;
        const int mm = static_cast<int>(std::min<std::int64_t>(MR, m - m0));
        for (int i = 0; i < MR * NR; ++i) acc[i] = T(0);
        detail::gemm_micro<T, MR, NR>(k, apack.data() + mp * k * MR, bbuf.data(), acc);
        for (int i = 0; i < mm; ++i) {
          T* crow = c + (m0 + i) * ldc + n0;
          const T* arow = acc + i * NR;
          if (accumulate) {
            for (int j = 0; j < nn; ++j) crow[j] += arow[j];
          } else {
            for (int j = 0; j < nn; ++j) crow[j] = arow[j];
          }
        }
      }
    }
  });
}

}  // namespace blindpaint
