#include "minaf/nn/kernel.hpp"

#include <cmath>
#include <cstring>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace minaf::nn {

template <typename T>
PackedAffine<T> PackedAffine<T>::pack(const T* w, const T* b, std::size_t out, std::size_t in) {
  PackedAffine p;
  p.in = in;
  p.out = out;
  p.out_pad = (out + 15) / 16 * 16;
  p.wt.assign(in * p.out_pad, T(0));
  p.bias.assign(p.out_pad, T(0));
  for (std::size_t j = 0; j < out; ++j) {
    for (std::size_t k = 0; k < in; ++k) p.wt[k * p.out_pad + j] = w[j * in + k];
    if (b != nullptr) p.bias[j] = b[j];
  }
  return p;
}

namespace {

template <typename T>
void generic_rows(const PackedAffine<T>& p, const T* x, std::size_t rows, T* y) {
  std::vector<T> acc(p.out_pad);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * p.in;
    std::memcpy(acc.data(), p.bias.data(), p.out_pad * sizeof(T));
    for (std::size_t k = 0; k < p.in; ++k) {
      const T xv = xr[k];
      const T* wk = p.wt.data() + k * p.out_pad;
      for (std::size_t j = 0; j < p.out_pad; ++j) acc[j] = std::fma(xv, wk[j], acc[j]);
    }
    std::memcpy(y + r * p.out, acc.data(), p.out * sizeof(T));
  }
}

#if defined(__AVX512F__)

// R rows x Q vectors of 16 outputs starting at column j0.
template <int R, int Q>
inline void block(const PackedAffine<float>& p, const float* x, std::size_t j0, float* out_pad_rows) {
  __m512 acc[R][Q];
  for (int q = 0; q < Q; ++q) {
    const __m512 b = _mm512_loadu_ps(p.bias.data() + j0 + 16 * q);
    for (int r = 0; r < R; ++r) acc[r][q] = b;
  }
  const float* wcol = p.wt.data() + j0;
  for (std::size_t k = 0; k < p.in; ++k) {
    __m512 w[Q];
    for (int q = 0; q < Q; ++q) w[q] = _mm512_loadu_ps(wcol + k * p.out_pad + 16 * q);
    for (int r = 0; r < R; ++r) {
      const __m512 xv = _mm512_set1_ps(x[static_cast<std::size_t>(r) * p.in + k]);
      for (int q = 0; q < Q; ++q) acc[r][q] = _mm512_fmadd_ps(xv, w[q], acc[r][q]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int q = 0; q < Q; ++q) {
      _mm512_storeu_ps(out_pad_rows + static_cast<std::size_t>(r) * p.out_pad + j0 + 16 * q, acc[r][q]);
    }
  }
}

// 6 rows x 64 outputs with named accumulators (arrays get spilled by GCC).
inline void block6x4(const PackedAffine<float>& p, const float* x, std::size_t j0, float* out) {
  const std::size_t in = p.in;
  const float* b = p.bias.data() + j0;
#define MINAF_ROW(r) __m512 a##r##0 = _mm512_loadu_ps(b), a##r##1 = _mm512_loadu_ps(b + 16), \
    a##r##2 = _mm512_loadu_ps(b + 32), a##r##3 = _mm512_loadu_ps(b + 48);
  MINAF_ROW(0) MINAF_ROW(1) MINAF_ROW(2) MINAF_ROW(3) MINAF_ROW(4) MINAF_ROW(5)
#undef MINAF_ROW
  const float* w = p.wt.data() + j0;
  for (std::size_t k = 0; k < in; ++k, w += p.out_pad) {
    const __m512 w0 = _mm512_loadu_ps(w), w1 = _mm512_loadu_ps(w + 16), w2 = _mm512_loadu_ps(w + 32),
                 w3 = _mm512_loadu_ps(w + 48);
#define MINAF_FMA(r)                                  \
  {                                                   \
    const __m512 xv = _mm512_set1_ps(x[(r) * in + k]); \
    a##r##0 = _mm512_fmadd_ps(xv, w0, a##r##0);       \
    a##r##1 = _mm512_fmadd_ps(xv, w1, a##r##1);       \
    a##r##2 = _mm512_fmadd_ps(xv, w2, a##r##2);       \
    a##r##3 = _mm512_fmadd_ps(xv, w3, a##r##3);       \
  }
    MINAF_FMA(0) MINAF_FMA(1) MINAF_FMA(2) MINAF_FMA(3) MINAF_FMA(4) MINAF_FMA(5)
#undef MINAF_FMA
  }
#define MINAF_STORE(r)                                        \
  {                                                           \
    float* o = out + (r) * p.out_pad + j0;                    \
    _mm512_storeu_ps(o, a##r##0);                             \
    _mm512_storeu_ps(o + 16, a##r##1);                        \
    _mm512_storeu_ps(o + 32, a##r##2);                        \
    _mm512_storeu_ps(o + 48, a##r##3);                        \
  }
  MINAF_STORE(0) MINAF_STORE(1) MINAF_STORE(2) MINAF_STORE(3) MINAF_STORE(4) MINAF_STORE(5)
#undef MINAF_STORE
}

template <int Q>
void column_panel(const PackedAffine<float>& p, const float* x, std::size_t rows, std::size_t j0, float* tmp) {
  constexpr std::size_t kRows = 6;
  std::size_t r = 0;
  for (; r + kRows <= rows; r += kRows) {
    if constexpr (Q == 4) {
      block6x4(p, x + r * p.in, j0, tmp + r * p.out_pad);
    } else {
      block<kRows, Q>(p, x + r * p.in, j0, tmp + r * p.out_pad);
    }
  }
  for (; r < rows; ++r) block<1, Q>(p, x + r * p.in, j0, tmp + r * p.out_pad);
}

void simd_rows(const PackedAffine<float>& p, const float* x, std::size_t rows, float* y) {
  // Column panels outermost so each weight panel stays in cache across rows.
  std::vector<float> tmp(rows * p.out_pad);
  std::size_t j0 = 0;
  for (; j0 + 64 <= p.out_pad; j0 += 64) column_panel<4>(p, x, rows, j0, tmp.data());
  for (; j0 < p.out_pad; j0 += 16) column_panel<1>(p, x, rows, j0, tmp.data());
  for (std::size_t r = 0; r < rows; ++r) std::memcpy(y + r * p.out, tmp.data() + r * p.out_pad, p.out * sizeof(float));
}

#endif

}  // namespace

template <typename T>
void affine_forward(const PackedAffine<T>& p, const T* x, std::size_t rows, T* y) {
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    simd_rows(p, x, rows, y);
    return;
  }
#endif
  generic_rows(p, x, rows, y);
}

template struct PackedAffine<float>;
template struct PackedAffine<double>;
template void affine_forward<float>(const PackedAffine<float>&, const float*, std::size_t, float*);
template void affine_forward<double>(const PackedAffine<double>&, const double*, std::size_t, double*);

}  // namespace minaf::nn
