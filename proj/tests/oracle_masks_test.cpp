// tests/oracle_masks_test.cpp

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

#include <doctest.h>

#include "maskbook/oracle_masks.hpp"

using namespace maskbook;

namespace {

Spectrogram from_values(const std::vector<cdouble>& values, int rows, int cols) {
  Spectrogram spec;
  spec.bins = CplxMat(rows, cols);
  std::copy(values.begin(), values.end(), spec.bins.data.begin());
  return spec;
}

// Single-bin helper: masks are bin-wise, so a 1x1 spectrogram exercises the
// formulas directly.
struct BinCase {
  Spectrogram s, n, x;
  BinCase(cdouble source, cdouble interference) {
    s = from_values({source}, 1, 1);
    n = from_values({interference}, 1, 1);
    x = from_values({source + interference}, 1, 1);
  }
};

Spectrogram random_spec(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Spectrogram spec;
  spec.bins = CplxMat(rows, cols);
  for (auto& v : spec.bins.data) v = cdouble(rng.normal(), rng.normal());
  return spec;
}

}  // namespace

TEST_SUITE_BEGIN("oracle_masks");

TEST_CASE("equal source and interference energy: IRM and WF are 0.5, IBM is 0") {
  BinCase c(cdouble(1.0, 0.0), cdouble(0.0, 1.0));  // |s| == |n| == 1
  CHECK(oracle_mask(MaskKind::IRM, c.s, c.n, c.x).real(0, 0) == doctest::Approx(0.5));
  CHECK(oracle_mask(MaskKind::WF, c.s, c.n, c.x).real(0, 0) == doctest::Approx(0.5));
  CHECK(oracle_mask(MaskKind::IBM, c.s, c.n, c.x).real(0, 0) == 0.0);  // tie resolves to 0
}

TEST_CASE("phase inversion: PSF is -1 and TPSF clamps to 0") {
  // s = -x with |s| == |x|: interference n = x - s = 2x.
  Spectrogram x = from_values({cdouble(0.7, -0.2)}, 1, 1);
  Spectrogram s = from_values({-x.bins(0, 0)}, 1, 1);
  Spectrogram n = from_values({x.bins(0, 0) - s.bins(0, 0)}, 1, 1);
  CHECK(oracle_mask(MaskKind::PSF, s, n, x).real(0, 0) == doctest::Approx(-1.0));
  CHECK(oracle_mask(MaskKind::TPSF, s, n, x).real(0, 0) == 0.0);
}

TEST_CASE("IAM clamps to r_max") {
  Spectrogram x = from_values({cdouble(1.0, 0.0)}, 1, 1);
  Spectrogram s = from_values({cdouble(3.0, 0.0)}, 1, 1);
  Spectrogram n = from_values({cdouble(-2.0, 0.0)}, 1, 1);
  CHECK(oracle_mask(MaskKind::IAM, s, n, x, 2.0).real(0, 0) == doctest::Approx(2.0));
  CHECK(oracle_mask(MaskKind::IAM, s, n, x, kUnboundedRmax).real(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("phase_difference range and conventions") {
  Spectrogram x = random_spec(2, 3, 31);
  Spectrogram same = x;
  const RealMat zero = phase_difference(same, x);
  for (double v : zero.data) CHECK(v == doctest::Approx(0.0));

  Spectrogram rotated = x;
  for (auto& v : rotated.bins.data) v *= cdouble(0.0, 1.0);
  const RealMat quarter = phase_difference(rotated, x);
  for (double v : quarter.data) CHECK(v == doctest::Approx(kPi / 2));

  Spectrogram flipped = x;
  for (auto& v : flipped.bins.data) v = -v;
  const RealMat half = phase_difference(flipped, x);
  for (double v : half.data) CHECK(v == kPi);  // +pi, never -pi
}

TEST_CASE("ICM applied to the mixture reproduces the source") {
  Spectrogram x = random_spec(4, 5, 32);
  Spectrogram s = random_spec(4, 5, 33);
  Spectrogram n = x;
  for (size_t b = 0; b < n.bins.size(); ++b) n.bins.data[b] = x.bins.data[b] - s.bins.data[b];
  const auto icm = oracle_mask(MaskKind::ICM, s, n, x, kUnboundedRmax);
  const Spectrogram rebuilt = apply_mask(icm.complex_, x);
  for (size_t b = 0; b < s.bins.size(); ++b)
    CHECK(std::abs(rebuilt.bins.data[b] - s.bins.data[b]) < 1e-12);
}

TEST_CASE("TPSF equals clamped PSF; ratio masks stay in range") {
  Spectrogram x = random_spec(6, 7, 34);
  Spectrogram s = random_spec(6, 7, 35);
  Spectrogram n = x;
  for (size_t b = 0; b < n.bins.size(); ++b) n.bins.data[b] = x.bins.data[b] - s.bins.data[b];

  const auto psf = oracle_mask(MaskKind::PSF, s, n, x);
  const auto tpsf = oracle_mask(MaskKind::TPSF, s, n, x);
  const auto irm = oracle_mask(MaskKind::IRM, s, n, x);
  const auto wf = oracle_mask(MaskKind::WF, s, n, x);
  const auto ibm = oracle_mask(MaskKind::IBM, s, n, x);
  for (size_t b = 0; b < psf.real.size(); ++b) {
    CHECK(tpsf.real.data[b] == std::clamp(psf.real.data[b], 0.0, 1.0));
    CHECK(irm.real.data[b] >= 0.0);
    CHECK(irm.real.data[b] <= 1.0);
    CHECK(wf.real.data[b] >= 0.0);
    CHECK(wf.real.data[b] <= 1.0);
    CHECK((ibm.real.data[b] == 0.0 || ibm.real.data[b] == 1.0));
  }
}

TEST_CASE("masks are invariant to joint complex rescaling of S and X") {
  Spectrogram x = random_spec(3, 4, 36);
  Spectrogram s = random_spec(3, 4, 37);
  Spectrogram n = x;
  for (size_t b = 0; b < n.bins.size(); ++b) n.bins.data[b] = x.bins.data[b] - s.bins.data[b];

  const cdouble scale(1.3, -0.8);
  Spectrogram xs = x, ss = s, ns = n;
  for (size_t b = 0; b < x.bins.size(); ++b) {
    xs.bins.data[b] *= scale;
    ss.bins.data[b] *= scale;
    ns.bins.data[b] *= scale;
  }

  for (MaskKind kind : {MaskKind::IAM, MaskKind::IRM, MaskKind::WF, MaskKind::IBM, MaskKind::PSF}) {
    const auto base = oracle_mask(kind, s, n, x);
    const auto scaled = oracle_mask(kind, ss, ns, xs);
    for (size_t b = 0; b < base.real.size(); ++b)
      CHECK(scaled.real.data[b] == doctest::Approx(base.real.data[b]).epsilon(1e-10));
  }
  const auto icm = oracle_mask(MaskKind::ICM, s, n, x, kUnboundedRmax);
  const auto icm_scaled = oracle_mask(MaskKind::ICM, ss, ns, xs, kUnboundedRmax);
  for (size_t b = 0; b < icm.complex_.size(); ++b)
    CHECK(std::abs(icm_scaled.complex_.data[b] - icm.complex_.data[b]) < 1e-10);
}

TEST_CASE("zero-mixture bins are guarded and counted") {
  Spectrogram x = from_values({cdouble(0.0, 0.0), cdouble(1.0, 0.0)}, 1, 2);
  Spectrogram s = from_values({cdouble(0.5, 0.0), cdouble(0.5, 0.0)}, 1, 2);
  Spectrogram n = from_values({cdouble(-0.5, 0.0), cdouble(0.5, 0.0)}, 1, 2);
  const auto iam = oracle_mask(MaskKind::IAM, s, n, x);
  CHECK(iam.guarded_bins == 1);
  CHECK(iam.real(0, 0) == 0.0);
  int guarded = 0;
  phase_difference(s, x, &guarded);
  CHECK(guarded == 1);
}

TEST_CASE("shape mismatches throw") {
  Spectrogram x = random_spec(2, 3, 38);
  Spectrogram s = random_spec(2, 4, 39);
  CHECK_THROWS(oracle_mask(MaskKind::IAM, s, s, x));
  CHECK_THROWS(phase_difference(s, x));
  CHECK_THROWS(apply_mask(RealMat(5, 5, 1.0), x));
}

TEST_SUITE_END();
