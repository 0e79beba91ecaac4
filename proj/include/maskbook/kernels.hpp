// maskbook/kernels.hpp

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

#pragma once

#include <cstddef>

#include "maskbook/common.hpp"

namespace maskbook::kernels {

// Data-parallel inner loops behind function pointers selected at runtime.
// The scalar table is the reference: element-wise kernels in any backend are
// bit-identical to it (same operations per element, no FMA contraction);
// reduction kernels may reorder the accumulation and are equivalence-tested
// against scalar to tight tolerances.
//
// Complex arrays are interleaved (re, im) doubles; |z| is sqrt(re^2 + im^2).
struct Ops {
  const char* name;

  void (*mul)(const double* a, const double* b, double* dst, size_t n);
  void (*add)(const double* a, const double* b, double* dst, size_t n);
  void (*sub)(const double* a, const double* b, double* dst, size_t n);
  void (*axpy)(double alpha, const double* x, double* y, size_t n);  // y += alpha*x

  double (*dot)(const double* a, const double* b, size_t n);
  double (*sum)(const double* a, size_t n);
  double (*sumsq)(const double* a, size_t n);
  double (*sum_abs_diff)(const double* a, const double* b, size_t n);
  double (*sum_sq_diff)(const double* a, const double* b, size_t n);

  void (*cmul)(const cdouble* a, const cdouble* b, cdouble* dst, size_t n);
  void (*cmul_conj)(const cdouble* a, const cdouble* b, cdouble* dst, size_t n);  // a*conj(b)
  double (*sum_cabs)(const cdouble* a, size_t n);
  double (*sum_cabs2)(const cdouble* a, size_t n);
  double (*sum_cabs_diff)(const cdouble* a, const cdouble* b, size_t n);
  double (*sum_cabs2_diff)(const cdouble* a, const cdouble* b, size_t n);
};

enum class Backend { Auto, Scalar, Avx2 };

const Ops& scalar_ops();

#if defined(MASKBOOK_HAVE_AVX2)
const Ops& avx2_ops();
bool avx2_supported();
#endif

/// Active table. Picked once from the backend selected via select_backend()
/// or the MASKBOOK_SIMD environment variable (scalar|avx2|auto), falling back
/// to scalar when the requested ISA is unavailable.
const Ops& active();

/// Override the backend (mainly for tests and benchmarking). Throws if the
/// requested backend is not available on this machine.
void select_backend(Backend backend);

}  // namespace maskbook::kernels
