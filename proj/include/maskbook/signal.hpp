// maskbook/signal.hpp

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

#include <string_view>
#include <vector>

#include "maskbook/common.hpp"

namespace maskbook {

enum class WindowKind { SqrtHann, Hann };

WindowKind window_kind_from_string(std::string_view name);
const char* to_string(WindowKind kind);

/// Analysis/synthesis configuration. The defaults are 32 ms windows with
/// 8 ms hop at 8 kHz and a 256-point DFT (one-sided spectrum, 129 bins).
struct StftConfig {
  int win_length = 256;
  int hop = 64;
  int dft_size = 256;
  WindowKind window = WindowKind::SqrtHann;
  int sample_rate = 8000;

  int freq_bins() const { return dft_size / 2 + 1; }
  /// Zero padding prepended and appended so every input sample is covered by
  /// the full complement of overlapping frames.
  int edge_pad() const { return win_length - hop; }
};

void validate(const StftConfig& config);

struct Spectrogram {
  CplxMat bins;  // frames x freq_bins
  StftConfig config;

  int frames() const { return bins.rows; }
  int freq_bins() const { return bins.cols; }
};

/// Analysis window coefficients. SqrtHann is the square root of the periodic
/// Hann window.
std::vector<double> make_window(WindowKind kind, int length);

/// Synthesis window dual to `analysis` under overlap-add at the given hop:
/// sum_k analysis[n - k*hop] * synthesis[n - k*hop] == 1 at every fully
/// overlapped sample.
std::vector<double> make_synthesis_window(const std::vector<double>& analysis, int hop);

int stft_frame_count(int num_samples, const StftConfig& config);

Spectrogram stft(const Waveform& waveform, const StftConfig& config);

/// Inverse STFT with conjugate symmetry enforced (imaginary parts of the DC
/// and Nyquist bins are discarded). Output is trimmed to target_length.
Waveform istft(const Spectrogram& spectrogram, int target_length);
Waveform istft(const CplxMat& bins, const StftConfig& config, int target_length);

// Adjoint operators of the real-linear maps stft / istft, with complex arrays
// viewed as pairs of reals. These are what reverse-mode differentiation of
// any pipeline containing the transforms needs:
//   <istft(Z), g>_time == <Z, istft_adjoint(g)>_spec   (real inner products)
//   <stft(x), G>_spec  == <x, stft_adjoint(G)>_time
CplxMat istft_adjoint(const std::vector<double>& grad_time, const StftConfig& config,
                      int target_length);
std::vector<double> stft_adjoint(const CplxMat& grad_spec, const StftConfig& config,
                                 int num_samples);

/// One-sided spectrogram energy with the weights that make Parseval hold:
/// sum_t (|X_0|^2 + |X_{N/2}|^2 + 2 sum_{0<k<N/2} |X_k|^2) / N.
double spectrogram_energy(const Spectrogram& spectrogram);

namespace fft {

/// In-place complex FFT. Radix-2 for power-of-two sizes, O(n^2) DFT otherwise.
void forward(std::vector<cdouble>& buffer);
void inverse(std::vector<cdouble>& buffer);

}  // namespace fft

}  // namespace maskbook
