// src/oracle_masks.cpp

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

#include "maskbook/oracle_masks.hpp"

#include "maskbook/kernels.hpp"

namespace maskbook {

MaskKind mask_kind_from_string(std::string_view name) {
  if (name == "IBM" || name == "ibm") return MaskKind::IBM;
  if (name == "IRM" || name == "irm") return MaskKind::IRM;
  if (name == "WF" || name == "wf") return MaskKind::WF;
  if (name == "IAM" || name == "iam") return MaskKind::IAM;
  if (name == "PSF" || name == "psf") return MaskKind::PSF;
  if (name == "TPSF" || name == "tpsf") return MaskKind::TPSF;
  if (name == "ICM" || name == "icm") return MaskKind::ICM;
  fail("unknown mask kind: " + std::string(name));
}

const char* to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::IBM: return "IBM";
    case MaskKind::IRM: return "IRM";
    case MaskKind::WF: return "WF";
    case MaskKind::IAM: return "IAM";
    case MaskKind::PSF: return "PSF";
    case MaskKind::TPSF: return "TPSF";
    case MaskKind::ICM: return "ICM";
  }
  return "?";
}

namespace {

void require_same_shape(const Spectrogram& a, const Spectrogram& b, const char* what) {
  require(a.bins.same_shape(b.bins), std::string("oracle_mask: shape mismatch (") + what + ")");
}

}  // namespace

OracleMaskResult oracle_mask(MaskKind kind, const Spectrogram& source,
                             const Spectrogram& interference, const Spectrogram& mixture,
                             double r_max) {
  require_same_shape(source, mixture, "source vs mixture");
  require_same_shape(interference, mixture, "interference vs mixture");
  require(r_max > 0.0, "oracle_mask: r_max must be positive");

  const int rows = mixture.frames();
  const int cols = mixture.freq_bins();
  OracleMaskResult result;
  result.kind = kind;
  result.r_max = r_max;
  if (kind == MaskKind::ICM)
    result.complex_ = CplxMat(rows, cols);
  else
    result.real = RealMat(rows, cols);

  for (int t = 0; t < rows; ++t) {
    for (int f = 0; f < cols; ++f) {
      const cdouble s = source.bins(t, f);
      const cdouble n = interference.bins(t, f);
      const cdouble x = mixture.bins(t, f);
      const double abs_s = std::abs(s);
      const double abs_n = std::abs(n);
      const double abs_x = std::abs(x);
      const bool guarded = abs_x < kZeroMixtureGuard;

      switch (kind) {
        case MaskKind::IBM:
          // Ties resolve to 0 so results are deterministic.
          result.real(t, f) = abs_s > abs_n ? 1.0 : 0.0;
          break;
        case MaskKind::IRM: {
          const double denom = abs_s + abs_n;
          result.real(t, f) = denom > 0.0 ? abs_s / denom : 0.0;
          break;
        }
        case MaskKind::WF: {
          const double denom = abs_s * abs_s + abs_n * abs_n;
          result.real(t, f) = denom > 0.0 ? abs_s * abs_s / denom : 0.0;
          break;
        }
        case MaskKind::IAM:
          if (guarded) {
            result.real(t, f) = 0.0;
            ++result.guarded_bins;
          } else {
            result.real(t, f) = std::min(abs_s / abs_x, r_max);
          }
          break;
        case MaskKind::PSF:
        case MaskKind::TPSF:
          if (guarded) {
            result.real(t, f) = 0.0;
            ++result.guarded_bins;
          } else {
            // cos(theta) * |s| / |x| == Re(s * conj(x)) / |x|^2
            const cdouble sxc = s * std::conj(x);
            double value = sxc.real() / (abs_x * abs_x);
            if (kind == MaskKind::TPSF) value = std::clamp(value, 0.0, 1.0);
            result.real(t, f) = value;
          }
          break;
        case MaskKind::ICM:
          if (guarded) {
            result.complex_(t, f) = cdouble(0.0, 0.0);
            ++result.guarded_bins;
          } else {
            cdouble ratio = s / x;
            const double mag = std::abs(ratio);
            if (mag > r_max) ratio *= r_max / mag;
            result.complex_(t, f) = ratio;
          }
          break;
      }
    }
  }
  return result;
}

RealMat phase_difference(const Spectrogram& source, const Spectrogram& mixture,
                         int* guarded_bins) {
  require(source.bins.same_shape(mixture.bins), "phase_difference: shape mismatch");
  const int rows = mixture.frames();
  const int cols = mixture.freq_bins();
  RealMat theta(rows, cols);
  int guarded = 0;
  for (int t = 0; t < rows; ++t) {
    for (int f = 0; f < cols; ++f) {
      const cdouble x = mixture.bins(t, f);
      if (std::abs(x) < kZeroMixtureGuard) {
        theta(t, f) = 0.0;
        ++guarded;
        continue;
      }
      // angle(s/x) == angle(s * conj(x)); atan2 yields [-pi, pi], fold the
      // -pi edge onto +pi so s == -x lands exactly on pi.
      const cdouble z = source.bins(t, f) * std::conj(x);
      double angle = std::atan2(z.imag(), z.real());
      if (angle == -kPi) angle = kPi;
      theta(t, f) = angle;
    }
  }
  if (guarded_bins) *guarded_bins = guarded;
  return theta;
}

Spectrogram apply_mask(const CplxMat& mask, const Spectrogram& mixture) {
  require(mask.same_shape(mixture.bins), "apply_mask: shape mismatch");
  Spectrogram result;
  result.config = mixture.config;
  result.bins = CplxMat(mask.rows, mask.cols);
  kernels::active().cmul(mask.data.data(), mixture.bins.data.data(), result.bins.data.data(),
                         mask.size());
  return result;
}

Spectrogram apply_mask(const RealMat& mask, const Spectrogram& mixture) {
  require(mask.rows == mixture.bins.rows && mask.cols == mixture.bins.cols,
          "apply_mask: shape mismatch");
  Spectrogram result;
  result.config = mixture.config;
  result.bins = CplxMat(mask.rows, mask.cols);
  for (size_t i = 0; i < mask.size(); ++i)
    result.bins.data[i] = mixture.bins.data[i] * mask.data[i];
  return result;
}

}  // namespace maskbook
