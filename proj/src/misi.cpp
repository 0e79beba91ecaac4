// src/misi.cpp

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

#include "maskbook/misi.hpp"

#include "maskbook/kernels.hpp"

namespace maskbook {

namespace {

CplxMat polar_spectrogram(const RealMat& magnitudes, const RealMat& phases) {
  CplxMat spec(magnitudes.rows, magnitudes.cols);
  for (size_t i = 0; i < spec.size(); ++i)
    spec.data[i] = polar_md(magnitudes.data[i], phases.data[i]);
  return spec;
}

}  // namespace

MisiResult misi(const std::vector<RealMat>& magnitudes, const std::vector<RealMat>& init_phases,
                const Waveform& mixture, const StftConfig& config, const MisiOptions& options) {
  const int num_sources = static_cast<int>(magnitudes.size());
  require(num_sources >= 1, "misi: need at least one source");
  require(init_phases.size() == magnitudes.size(), "misi: phases/magnitudes count mismatch");
  require(options.iterations >= 0, "misi: negative iteration count");
  const int length = mixture.length();
  require(length > 0, "misi: empty mixture");
  const int frames = stft_frame_count(length, config);
  for (int i = 0; i < num_sources; ++i) {
    require(magnitudes[i].rows == frames && magnitudes[i].cols == config.freq_bins(),
            "misi: magnitude shape does not match the mixture length");
    require(magnitudes[i].same_shape(init_phases[i]), "misi: phase shape mismatch");
  }

  const auto& ops = kernels::active();
  std::vector<RealMat> phases = init_phases;
  std::vector<std::vector<double>> signals(num_sources);
  for (int i = 0; i < num_sources; ++i)
    signals[i] = istft(polar_spectrogram(magnitudes[i], phases[i]), config, length).samples;

  std::vector<double> residual(length);
  auto compute_residual = [&] {
    residual = mixture.samples;
    for (int i = 0; i < num_sources; ++i) ops.axpy(-1.0, signals[i].data(), residual.data(), length);
  };

  const double split = 1.0 / num_sources;
  for (int iter = 0; iter < options.iterations; ++iter) {
    compute_residual();
    for (int i = 0; i < num_sources; ++i) {
      Waveform corrected;
      corrected.sample_rate = mixture.sample_rate;
      corrected.samples = signals[i];
      ops.axpy(split, residual.data(), corrected.samples.data(), length);
      const Spectrogram reanalyzed = stft(corrected, config);
      for (size_t b = 0; b < phases[i].size(); ++b) {
        const cdouble z = reanalyzed.bins.data[b];
        if (z.real() != 0.0 || z.imag() != 0.0)
          phases[i].data[b] = std::atan2(z.imag(), z.real());
        // zero re-analysis bins keep their previous phase
      }
      signals[i] = istft(polar_spectrogram(magnitudes[i], phases[i]), config, length).samples;
    }
  }

  MisiResult result;
  result.iterations = options.iterations;
  result.sources.resize(num_sources);
  const bool redistribute = options.iterations > 0 || options.redistribute_at_k0;
  if (redistribute) compute_residual();
  for (int i = 0; i < num_sources; ++i) {
    result.sources[i].sample_rate = mixture.sample_rate;
    result.sources[i].samples = std::move(signals[i]);
    if (redistribute)
      ops.axpy(split, residual.data(), result.sources[i].samples.data(), length);
  }
  return result;
}

MisiResult misi_from_spectrograms(const std::vector<Spectrogram>& masked, const Waveform& mixture,
                                  const MisiOptions& options) {
  require(!masked.empty(), "misi: need at least one source");
  std::vector<RealMat> magnitudes, phases;
  for (const auto& spec : masked) {
    RealMat mag(spec.frames(), spec.freq_bins());
    RealMat phase(spec.frames(), spec.freq_bins());
    for (size_t b = 0; b < spec.bins.size(); ++b) {
      const cdouble z = spec.bins.data[b];
      mag.data[b] = std::abs(z);
      phase.data[b] = (z.real() != 0.0 || z.imag() != 0.0) ? std::atan2(z.imag(), z.real()) : 0.0;
    }
    magnitudes.push_back(std::move(mag));
    phases.push_back(std::move(phase));
  }
  return misi(magnitudes, phases, mixture, masked.front().config, options);
}

}  // namespace maskbook
