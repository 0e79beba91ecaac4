// maskbook/oracle_masks.hpp

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

#include <limits>
#include <string_view>

#include "maskbook/signal.hpp"

namespace maskbook {

enum class MaskKind { IBM, IRM, WF, IAM, PSF, TPSF, ICM };

MaskKind mask_kind_from_string(std::string_view name);
const char* to_string(MaskKind kind);

inline constexpr double kUnboundedRmax = std::numeric_limits<double>::infinity();

/// Mixture bins with |x| below this are treated as silent: ratio masks are 0
/// there and the phase difference is 0.
inline constexpr double kZeroMixtureGuard = 1e-12;

struct OracleMaskResult {
  MaskKind kind;
  RealMat real;      // all kinds except ICM
  CplxMat complex_;  // ICM only
  double r_max = kUnboundedRmax;
  int guarded_bins = 0;  // bins hit by the zero-mixture guard

  bool is_complex() const { return kind == MaskKind::ICM; }
};

/// Per-bin oracle mask from source S, interference N, and mixture X
/// spectrograms (same shape). r_max truncates IAM to [0, r_max] and the ICM
/// magnitude to r_max (phase preserved); it is ignored for the other kinds.
/// PSF is signed; TPSF clamps it to [0, 1].
OracleMaskResult oracle_mask(MaskKind kind, const Spectrogram& source,
                             const Spectrogram& interference, const Spectrogram& mixture,
                             double r_max = 2.0);

/// angle(s / x) per bin in (-pi, pi], computed as angle(s * conj(x)) so no
/// division is involved. Bins where |x| < kZeroMixtureGuard give 0 and are
/// counted in *guarded_bins when provided.
RealMat phase_difference(const Spectrogram& source, const Spectrogram& mixture,
                         int* guarded_bins = nullptr);

/// Bin-wise complex product mask .* X.
Spectrogram apply_mask(const CplxMat& mask, const Spectrogram& mixture);
Spectrogram apply_mask(const RealMat& mask, const Spectrogram& mixture);

}  // namespace maskbook
