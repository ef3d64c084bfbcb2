#pragma once

// Forward accumulation kernel shared by dense, LSTM and convolution.
//
//   out[r][j] += sum_{q = 0..depth-1} a[r][q] * v(q)[j]
//
// Every output element is accumulated in ascending q with the same madd()
// step on every path, so an element's value depends only on its own row of
// `a`, never on how many rows are processed together or which code path
// (vector tile or scalar tail) handles it. madd() is a fused multiply-add when
// the target has FMA and a separate multiply and add otherwise; the library is
// built with -ffp-contract=off so the compiler never mixes the two.

#include <cmath>
#include <cstddef>
#include <cstring>

#if defined(__FMA__)
#include <immintrin.h>
#endif

namespace dlarc::nc::kernels {

typedef double v8 __attribute__((vector_size(64)));

inline v8 load8(const double* p) {
  v8 r;
  std::memcpy(&r, p, sizeof(r));
  return r;
}

inline void store8(double* p, v8 x) { std::memcpy(p, &x, sizeof(x)); }

inline v8 splat8(double x) { return v8{x, x, x, x, x, x, x, x}; }

#if defined(__FMA__)
inline double madd(double c, double a, double b) { return std::fma(a, b, c); }
inline v8 madd(v8 c, v8 a, v8 b) {
#if defined(__AVX512F__)
  return _mm512_fmadd_pd(a, b, c);
#else
  __m256d a0, a1, b0, b1, c0, c1;
  std::memcpy(&a0, &a, 32), std::memcpy(&a1, reinterpret_cast<const char*>(&a) + 32, 32);
  std::memcpy(&b0, &b, 32), std::memcpy(&b1, reinterpret_cast<const char*>(&b) + 32, 32);
  std::memcpy(&c0, &c, 32), std::memcpy(&c1, reinterpret_cast<const char*>(&c) + 32, 32);
  c0 = _mm256_fmadd_pd(a0, b0, c0);
  c1 = _mm256_fmadd_pd(a1, b1, c1);
  v8 r;
  std::memcpy(&r, &c0, 32), std::memcpy(reinterpret_cast<char*>(&r) + 32, &c1, 32);
  return r;
#endif
}
#else
inline double madd(double c, double a, double b) { return c + a * b; }
inline v8 madd(v8 c, v8 a, v8 b) { return c + a * b; }
#endif

/// One depth block [q0, q0+depth) over all rows and columns.
template <typename VRow>
void accumulate_block(const double* a, std::size_t lda, std::size_t rows, std::size_t q0, std::size_t depth,
                      VRow vrow, std::size_t n, double* out, std::size_t ldo) {
  constexpr std::size_t RB = 4;
  std::size_t r = 0;
  for (; r + RB <= rows; r += RB) {
    const double* a0 = a + (r + 0) * lda + q0;
    const double* a1 = a + (r + 1) * lda + q0;
    const double* a2 = a + (r + 2) * lda + q0;
    const double* a3 = a + (r + 3) * lda + q0;
    double* o0 = out + (r + 0) * ldo;
    double* o1 = out + (r + 1) * ldo;
    double* o2 = out + (r + 2) * ldo;
    double* o3 = out + (r + 3) * ldo;
    std::size_t j = 0;
    for (; j + 32 <= n; j += 32) {
      v8 c00 = load8(o0 + j), c01 = load8(o0 + j + 8), c02 = load8(o0 + j + 16), c03 = load8(o0 + j + 24);
      v8 c10 = load8(o1 + j), c11 = load8(o1 + j + 8), c12 = load8(o1 + j + 16), c13 = load8(o1 + j + 24);
      v8 c20 = load8(o2 + j), c21 = load8(o2 + j + 8), c22 = load8(o2 + j + 16), c23 = load8(o2 + j + 24);
      v8 c30 = load8(o3 + j), c31 = load8(o3 + j + 8), c32 = load8(o3 + j + 16), c33 = load8(o3 + j + 24);
      for (std::size_t q = 0; q < depth; ++q) {
        const double* v = vrow(q0 + q) + j;
        const v8 w0 = load8(v), w1 = load8(v + 8), w2 = load8(v + 16), w3 = load8(v + 24);
        const v8 s0 = splat8(a0[q]), s1 = splat8(a1[q]), s2 = splat8(a2[q]), s3 = splat8(a3[q]);
        c00 = madd(c00, s0, w0), c01 = madd(c01, s0, w1), c02 = madd(c02, s0, w2), c03 = madd(c03, s0, w3);
        c10 = madd(c10, s1, w0), c11 = madd(c11, s1, w1), c12 = madd(c12, s1, w2), c13 = madd(c13, s1, w3);
        c20 = madd(c20, s2, w0), c21 = madd(c21, s2, w1), c22 = madd(c22, s2, w2), c23 = madd(c23, s2, w3);
        c30 = madd(c30, s3, w0), c31 = madd(c31, s3, w1), c32 = madd(c32, s3, w2), c33 = madd(c33, s3, w3);
      }
      store8(o0 + j, c00); store8(o0 + j + 8, c01); store8(o0 + j + 16, c02); store8(o0 + j + 24, c03);
      store8(o1 + j, c10); store8(o1 + j + 8, c11); store8(o1 + j + 16, c12); store8(o1 + j + 24, c13);
      store8(o2 + j, c20); store8(o2 + j + 8, c21); store8(o2 + j + 16, c22); store8(o2 + j + 24, c23);
      store8(o3 + j, c30); store8(o3 + j + 8, c31); store8(o3 + j + 16, c32); store8(o3 + j + 24, c33);
    }
    for (; j + 8 <= n; j += 8) {
      v8 c0 = load8(o0 + j), c1 = load8(o1 + j), c2 = load8(o2 + j), c3 = load8(o3 + j);
      for (std::size_t q = 0; q < depth; ++q) {
        const v8 w = load8(vrow(q0 + q) + j);
        c0 = madd(c0, splat8(a0[q]), w);
        c1 = madd(c1, splat8(a1[q]), w);
        c2 = madd(c2, splat8(a2[q]), w);
        c3 = madd(c3, splat8(a3[q]), w);
      }
      store8(o0 + j, c0); store8(o1 + j, c1); store8(o2 + j, c2); store8(o3 + j, c3);
    }
    for (; j < n; ++j) {
      double c0 = o0[j], c1 = o1[j], c2 = o2[j], c3 = o3[j];
      for (std::size_t q = 0; q < depth; ++q) {
        const double w = vrow(q0 + q)[j];
        c0 = madd(c0, a0[q], w);
        c1 = madd(c1, a1[q], w);
        c2 = madd(c2, a2[q], w);
        c3 = madd(c3, a3[q], w);
      }
      o0[j] = c0; o1[j] = c1; o2[j] = c2; o3[j] = c3;
    }
  }
  for (; r < rows; ++r) {
    const double* ar = a + r * lda + q0;
    double* o = out + r * ldo;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      v8 c = load8(o + j);
      for (std::size_t q = 0; q < depth; ++q) c = madd(c, splat8(ar[q]), load8(vrow(q0 + q) + j));
      store8(o + j, c);
    }
    for (; j < n; ++j) {
      double c = o[j];
      for (std::size_t q = 0; q < depth; ++q) c = madd(c, ar[q], vrow(q0 + q)[j]);
      o[j] = c;
    }
  }
}

/// `vrow(q)` returns a pointer to n contiguous doubles. The depth is processed
/// in blocks so the rows of v being reused stay cache resident; partial sums
/// pass through `out` as plain doubles, which leaves the order unchanged.
template <typename VRow>
void accumulate(const double* a, std::size_t lda, std::size_t rows, std::size_t depth, VRow vrow, std::size_t n,
                double* out, std::size_t ldo) {
  constexpr std::size_t QB = 64;
  for (std::size_t q0 = 0; q0 < depth; q0 += QB) {
    accumulate_block(a, lda, rows, q0, depth - q0 < QB ? depth - q0 : QB, vrow, n, out, ldo);
  }
}

}  // namespace dlarc::nc::kernels
