// src/kernels.cpp

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

#include "maskbook/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace maskbook::kernels {

namespace scalar {

void mul(const double* a, const double* b, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void add(const double* a, const double* b, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void axpy(double alpha, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double sumsq(const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * a[i];
  return acc;
}

double sum_abs_diff(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += std::fabs(a[i] - b[i]);
  return acc;
}

double sum_sq_diff(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Plain (ar*br - ai*bi, ar*bi + ai*br); deliberately not std::complex
// operator* so the SIMD variants can match it bit for bit.
void cmul(const cdouble* a, const cdouble* b, cdouble* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = b[i].imag();
    dst[i] = cdouble(ar * br - ai * bi, ar * bi + ai * br);
  }
}

void cmul_conj(const cdouble* a, const cdouble* b, cdouble* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    const double ar = a[i].real(), ai = a[i].imag();
    const double br = b[i].real(), bi = -b[i].imag();
    dst[i] = cdouble(ar * br - ai * bi, ar * bi + ai * br);
  }
}

double sum_cabs(const cdouble* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double re = a[i].real(), im = a[i].imag();
    acc += std::sqrt(re * re + im * im);
  }
  return acc;
}

double sum_cabs2(const cdouble* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double re = a[i].real(), im = a[i].imag();
    acc += re * re + im * im;
  }
  return acc;
}

double sum_cabs_diff(const cdouble* a, const cdouble* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double re = a[i].real() - b[i].real();
    const double im = a[i].imag() - b[i].imag();
    acc += std::sqrt(re * re + im * im);
  }
  return acc;
}

double sum_cabs2_diff(const cdouble* a, const cdouble* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double re = a[i].real() - b[i].real();
    const double im = a[i].imag() - b[i].imag();
    acc += re * re + im * im;
  }
  return acc;
}

}  // namespace scalar

const Ops& scalar_ops() {
  static const Ops table = {
      "scalar",
      scalar::mul,
      scalar::add,
      scalar::sub,
      scalar::axpy,
      scalar::dot,
      scalar::sum,
      scalar::sumsq,
      scalar::sum_abs_diff,
      scalar::sum_sq_diff,
      scalar::cmul,
      scalar::cmul_conj,
      scalar::sum_cabs,
      scalar::sum_cabs2,
      scalar::sum_cabs_diff,
      scalar::sum_cabs2_diff,
  };
  return table;
}

namespace {

std::atomic<const Ops*> g_active{nullptr};

const Ops& pick_default() {
  const char* env = std::getenv("MASKBOOK_SIMD");
  const std::string requested = env ? env : "auto";
#if defined(MASKBOOK_HAVE_AVX2)
  if (requested == "avx2") {
    if (!avx2_supported()) fail("MASKBOOK_SIMD=avx2 but this CPU lacks AVX2");
    return avx2_ops();
  }
  if (requested != "scalar" && avx2_supported()) return avx2_ops();
#else
  if (requested == "avx2") fail("this build has no AVX2 backend");
#endif
  return scalar_ops();
}

}  // namespace

const Ops& active() {
  const Ops* ops = g_active.load(std::memory_order_acquire);
  if (!ops) {
    ops = &pick_default();
    g_active.store(ops, std::memory_order_release);
  }
  return *ops;
}

void select_backend(Backend backend) {
  switch (backend) {
    case Backend::Auto:
      g_active.store(nullptr, std::memory_order_release);
      (void)active();
      return;
    case Backend::Scalar:
      g_active.store(&scalar_ops(), std::memory_order_release);
      return;
    case Backend::Avx2:
#if defined(MASKBOOK_HAVE_AVX2)
      if (!avx2_supported()) fail("AVX2 backend requested but not supported by this CPU");
      g_active.store(&avx2_ops(), std::memory_order_release);
      return;
#else
      fail("AVX2 backend not compiled in");
#endif
  }
}

}  // namespace maskbook::kernels
