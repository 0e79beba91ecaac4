// src/kernels_avx2.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// AVX2 variants of the kernel table. Element-wise kernels use plain
// mul/add/sub (no FMA) so results match the scalar reference exactly.
// Reductions keep four lane accumulators and fold at the end; their order is
// fixed for a given n, so outputs are deterministic but not scalar-identical.

#include "maskbook/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace maskbook::kernels {

namespace avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuffled = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuffled));
}

}  // namespace

void mul(const double* a, const double* b, double* dst, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void add(const double* a, const double* b, double* dst, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* dst, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double result = hsum(acc);
  for (; i < n; ++i) result += a[i] * b[i];
  return result;
}

double sum(const double* a, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double result = hsum(acc);
  for (; i < n; ++i) result += a[i];
  return result;
}

double sumsq(const double* a, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(a + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
  }
  double result = hsum(acc);
  for (; i < n; ++i) result += a[i] * a[i];
  return result;
}

double sum_abs_diff(const double* a, const double* b, size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, d));
  }
  double result = hsum(acc);
  for (; i < n; ++i) result += std::fabs(a[i] - b[i]);
  return result;
}

double sum_sq_diff(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double result = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    result += d * d;
  }
  return result;
}

namespace {

// Two interleaved complex values per 256-bit vector:
// [ar0 ai0 ar1 ai1] * [br0 bi0 br1 bi1]
inline __m256d cmul_vec(__m256d va, __m256d vb) {
  const __m256d a_re = _mm256_movedup_pd(va);             // [ar ar ar ar]
  const __m256d a_im = _mm256_permute_pd(va, 0xF);        // [ai ai ai ai]
  const __m256d b_swap = _mm256_permute_pd(vb, 0x5);      // [bi br bi br]
  const __m256d t1 = _mm256_mul_pd(a_re, vb);             // [ar*br ar*bi]
  const __m256d t2 = _mm256_mul_pd(a_im, b_swap);         // [ai*bi ai*br]
  return _mm256_addsub_pd(t1, t2);                        // [ar*br-ai*bi ar*bi+ai*br]
}

inline void cmul_tail(const cdouble* a, const cdouble* b, cdouble* dst, size_t i, size_t n) {
  for (; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    dst[i] = cdouble(ar * br - ai * bi, ar * bi + ai * br);
  }
}

}  // namespace

void cmul(const cdouble* a, const cdouble* b, cdouble* dst, size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  double* pd = reinterpret_cast<double*>(dst);
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    _mm256_storeu_pd(pd + 2 * i, cmul_vec(_mm256_loadu_pd(pa + 2 * i), _mm256_loadu_pd(pb + 2 * i)));
  cmul_tail(a, b, dst, i, n);
}

void cmul_conj(const cdouble* a, const cdouble* b, cdouble* dst, size_t n) {
  const __m256d conj_mask = _mm256_setr_pd(0.0, -0.0, 0.0, -0.0);
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  double* pd = reinterpret_cast<double*>(dst);
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vb = _mm256_xor_pd(_mm256_loadu_pd(pb + 2 * i), conj_mask);
    _mm256_storeu_pd(pd + 2 * i, cmul_vec(_mm256_loadu_pd(pa + 2 * i), vb));
  }
  for (; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = -b[i].imag();
    dst[i] = cdouble(ar * br - ai * bi, ar * bi + ai * br);
  }
}

namespace {

// |z|^2 for two complex values -> [m0 m1] in a 128-bit vector.
inline __m128d cabs2_pair(__m256d v) {
  const __m256d sq = _mm256_mul_pd(v, v);
  const __m256d swapped = _mm256_permute_pd(sq, 0x5);
  const __m256d sums = _mm256_add_pd(sq, swapped);  // [m0 m0 m1 m1]
  return _mm_unpacklo_pd(_mm256_castpd256_pd128(sums),
                         _mm256_extractf128_pd(sums, 1));
}

}  // namespace

double sum_cabs(const cdouble* a, size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  __m128d acc = _mm_setzero_pd();
  size_t i = 0;
  for (; i + 2 <= n; i += 2)
    acc = _mm_add_pd(acc, _mm_sqrt_pd(cabs2_pair(_mm256_loadu_pd(pa + 2 * i))));
  double result = _mm_cvtsd_f64(acc) + _mm_cvtsd_f64(_mm_unpackhi_pd(acc, acc));
  for (; i < n; ++i) {
    const double re = a[i].real(), im = a[i].imag();
    result += std::sqrt(re * re + im * im);
  }
  return result;
}

double sum_cabs2(const cdouble* a, size_t n) {
  return sumsq(reinterpret_cast<const double*>(a), 2 * n);
}

double sum_cabs_diff(const cdouble* a, const cdouble* b, size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);
  __m128d acc = _mm_setzero_pd();
  size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(pa + 2 * i), _mm256_loadu_pd(pb + 2 * i));
    acc = _mm_add_pd(acc, _mm_sqrt_pd(cabs2_pair(d)));
  }
  double result = _mm_cvtsd_f64(acc) + _mm_cvtsd_f64(_mm_unpackhi_pd(acc, acc));
  for (; i < n; ++i) {
    const double re = a[i].real() - b[i].real();
    const double im = a[i].imag() - b[i].imag();
    result += std::sqrt(re * re + im * im);
  }
  return result;
}

double sum_cabs2_diff(const cdouble* a, const cdouble* b, size_t n) {
  return sum_sq_diff(reinterpret_cast<const double*>(a),
                     reinterpret_cast<const double*>(b), 2 * n);
}

}  // namespace avx2

bool avx2_supported() {
#if defined(__GNUC__) || defined(__clang__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Ops& avx2_ops() {
  static const Ops table = {
      "avx2",
      avx2::mul,
      avx2::add,
      avx2::sub,
      avx2::axpy,
      avx2::dot,
      avx2::sum,
      avx2::sumsq,
      avx2::sum_abs_diff,
      avx2::sum_sq_diff,
      avx2::cmul,
      avx2::cmul_conj,
      avx2::sum_cabs,
      avx2::sum_cabs2,
      avx2::sum_cabs_diff,
      avx2::sum_cabs2_diff,
  };
  return table;
}

}  // namespace maskbook::kernels
