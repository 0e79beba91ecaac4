// maskbook/misi.hpp

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

#include "maskbook/signal.hpp"

namespace maskbook {

// Multiple input spectrogram inversion: joint iterative phase reconstruction
// for all sources under the constraint that the estimates sum to the mixture.
// Magnitudes are fixed throughout; each iteration re-synthesizes every
// source, splits the mixture residual uniformly across sources, re-analyzes,
// and keeps only the phase. After the final iteration the residual is
// redistributed once more so the outputs sum to the mixture exactly.

struct MisiOptions {
  int iterations = 0;
  /// With zero iterations the default output is the plain masked iSTFT; this
  /// flag applies the final error redistribution even then (ablation).
  bool redistribute_at_k0 = false;
};

struct MisiResult {
  std::vector<Waveform> sources;
  int iterations = 0;
};

MisiResult misi(const std::vector<RealMat>& magnitudes, const std::vector<RealMat>& init_phases,
                const Waveform& mixture, const StftConfig& config,
                const MisiOptions& options = {});

/// Convenience wrapper: magnitudes |S_i| and initial phases angle(S_i) taken
/// from masked spectrograms.
MisiResult misi_from_spectrograms(const std::vector<Spectrogram>& masked, const Waveform& mixture,
                                  const MisiOptions& options = {});

}  // namespace maskbook
