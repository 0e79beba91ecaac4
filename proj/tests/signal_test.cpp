// tests/signal_test.cpp

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

#include "maskbook/signal.hpp"

using namespace maskbook;

namespace {

Waveform random_waveform(int length, uint64_t seed, int sample_rate = 8000) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(length);
  for (auto& x : w.samples) x = rng.normal();
  return w;
}

double rel_l2_error(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_SUITE_BEGIN("signal");

TEST_CASE("sqrt-Hann window: midpoint of length 4 is 1, energy positive") {
  const auto window = make_window(WindowKind::SqrtHann, 4);
  CHECK(window[2] == doctest::Approx(1.0));  // sqrt of the Hann peak
  double energy = 0.0;
  for (double v : window) energy += v * v;
  CHECK(energy > 0.0);
  CHECK_THROWS(make_window(WindowKind::SqrtHann, 0));
}

TEST_CASE("analysis/synthesis product overlap-adds to one") {
  // Direct-summation oracle over every hop offset.
  for (int hop : {32, 64, 96}) {
    const auto analysis = make_window(WindowKind::SqrtHann, 256);
    const auto synthesis = make_synthesis_window(analysis, hop);
    for (int offset = 0; offset < hop; ++offset) {
      double sum = 0.0;
      for (int m = offset; m < 256; m += hop) sum += analysis[m] * synthesis[m];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("stft of zeros is zero; empty input throws") {
  StftConfig cfg;
  Waveform zeros;
  zeros.samples.assign(4000, 0.0);
  const Spectrogram spec = stft(zeros, cfg);
  for (const auto& v : spec.bins.data) CHECK(std::abs(v) == 0.0);
  Waveform empty;
  CHECK_THROWS(stft(empty, cfg));
}

TEST_CASE("stft is linear") {
  StftConfig cfg;
  const Waveform x = random_waveform(3000, 1);
  const Waveform y = random_waveform(3000, 2);
  Waveform combo;
  combo.samples.resize(3000);
  for (int i = 0; i < 3000; ++i) combo.samples[i] = 2.5 * x.samples[i] - 0.75 * y.samples[i];

  const Spectrogram sx = stft(x, cfg);
  const Spectrogram sy = stft(y, cfg);
  const Spectrogram sc = stft(combo, cfg);
  double worst = 0.0;
  for (size_t b = 0; b < sc.bins.size(); ++b)
    worst = std::max(worst,
                     std::abs(sc.bins.data[b] - (2.5 * sx.bins.data[b] - 0.75 * sy.bins.data[b])));
  CHECK(worst < 1e-12 * 3000);
}

TEST_CASE("a bin-centered sinusoid concentrates energy in its bin") {
  StftConfig cfg;
  const int bin = 32;  // 1 kHz at 8 kHz / 256-point DFT
  Waveform tone;
  tone.samples.resize(4096);
  for (size_t i = 0; i < tone.samples.size(); ++i)
    tone.samples[i] = std::sin(2.0 * kPi * bin * static_cast<double>(i) / cfg.dft_size);
  const Spectrogram spec = stft(tone, cfg);
  // interior frames only; edge frames see the zero padding
  for (int t = 8; t < spec.frames() - 8; ++t) {
    int argmax = 0;
    for (int f = 1; f < spec.freq_bins(); ++f)
      if (std::abs(spec.bins(t, f)) > std::abs(spec.bins(t, argmax))) argmax = f;
    CHECK(argmax == bin);
  }
}

TEST_CASE("istft(stft(x)) reconstructs x") {
  StftConfig cfg;
  for (int length : {500, 1777, 8000}) {
    const Waveform x = random_waveform(length, 100 + length);
    const Waveform back = istft(stft(x, cfg), length);
    CHECK(rel_l2_error(back.samples, x.samples) < 1e-10);
  }
}

TEST_CASE("istft handles the all-zero spectrogram, linearity, and shape errors") {
  StftConfig cfg;
  const Waveform x = random_waveform(2000, 5);
  Spectrogram spec = stft(x, cfg);

  CplxMat zeros(spec.frames(), spec.freq_bins());
  const Waveform silent = istft(zeros, cfg, 2000);
  for (double v : silent.samples) CHECK(v == 0.0);

  const Waveform y = random_waveform(2000, 6);
  const Spectrogram sy = stft(y, cfg);
  CplxMat sum(spec.frames(), spec.freq_bins());
  for (size_t b = 0; b < sum.size(); ++b) sum.data[b] = spec.bins.data[b] + sy.bins.data[b];
  const Waveform both = istft(sum, cfg, 2000);
  const Waveform xa = istft(spec, 2000);
  const Waveform ya = istft(sy, 2000);
  for (int i = 0; i < 2000; ++i)
    CHECK(both.samples[i] ==
          doctest::Approx(xa.samples[i] + ya.samples[i]).epsilon(1e-12));

  CplxMat bad(3, spec.freq_bins() + 1);
  CHECK_THROWS(istft(bad, cfg, 100));
}

TEST_CASE("Parseval consistency of the one-sided spectrogram") {
  StftConfig cfg;
  const Waveform x = random_waveform(5000, 7);
  const Spectrogram spec = stft(x, cfg);

  // windowed-signal energy, frame by frame
  const auto window = make_window(cfg.window, cfg.win_length);
  const int pad = cfg.edge_pad();
  std::vector<double> padded(pad, 0.0);
  padded.insert(padded.end(), x.samples.begin(), x.samples.end());
  padded.resize((spec.frames() - 1) * cfg.hop + cfg.win_length, 0.0);
  double time_energy = 0.0;
  for (int t = 0; t < spec.frames(); ++t)
    for (int n = 0; n < cfg.win_length; ++n) {
      const double v = padded[t * cfg.hop + n] * window[n];
      time_energy += v * v;
    }

  const double spec_energy = spectrogram_energy(spec);
  CHECK(std::abs(spec_energy - time_energy) < 1e-8 * time_energy);
}

TEST_CASE("istft_adjoint satisfies the inner-product identity") {
  StftConfig cfg;
  cfg.win_length = 32;
  cfg.hop = 8;
  cfg.dft_size = 32;
  const int length = 200;
  Rng rng(21);

  const int frames = stft_frame_count(length, cfg);
  CplxMat z(frames, cfg.freq_bins());
  for (auto& v : z.data) v = cdouble(rng.normal(), rng.normal());
  std::vector<double> g(length);
  for (auto& v : g) v = rng.normal();

  const Waveform synth = istft(z, cfg, length);
  double lhs = 0.0;
  for (int l = 0; l < length; ++l) lhs += synth.samples[l] * g[l];

  const CplxMat adj = istft_adjoint(g, cfg, length);
  double rhs = 0.0;
  for (size_t b = 0; b < z.size(); ++b)
    rhs += z.data[b].real() * adj.data[b].real() + z.data[b].imag() * adj.data[b].imag();

  // The identity only holds on the subspace the inverse actually reads
  // (DC/Nyquist imaginary parts are discarded), so zero them in z first.
  CplxMat z2 = z;
  for (int t = 0; t < frames; ++t) {
    z2(t, 0) = cdouble(z2(t, 0).real(), 0.0);
    z2(t, cfg.freq_bins() - 1) = cdouble(z2(t, cfg.freq_bins() - 1).real(), 0.0);
  }
  const Waveform synth2 = istft(z2, cfg, length);
  double lhs2 = 0.0;
  for (int l = 0; l < length; ++l) lhs2 += synth2.samples[l] * g[l];
  double rhs2 = 0.0;
  for (size_t b = 0; b < z2.size(); ++b)
    rhs2 += z2.data[b].real() * adj.data[b].real() + z2.data[b].imag() * adj.data[b].imag();
  CHECK(lhs2 == doctest::Approx(rhs2).epsilon(1e-12));
  CHECK(lhs == doctest::Approx(lhs2).epsilon(1e-12));  // imag(DC/Nyq) never contributes
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("stft_adjoint satisfies the inner-product identity") {
  StftConfig cfg;
  cfg.win_length = 32;
  cfg.hop = 8;
  cfg.dft_size = 32;
  const int length = 150;
  Rng rng(22);

  const Waveform x = random_waveform(length, 23);
  const int frames = stft_frame_count(length, cfg);
  CplxMat g(frames, cfg.freq_bins());
  for (auto& v : g.data) v = cdouble(rng.normal(), rng.normal());

  const Spectrogram spec = stft(x, cfg);
  double lhs = 0.0;
  for (size_t b = 0; b < g.size(); ++b)
    lhs += spec.bins.data[b].real() * g.data[b].real() +
           spec.bins.data[b].imag() * g.data[b].imag();

  const auto adj = stft_adjoint(g, cfg, length);
  double rhs = 0.0;
  for (int l = 0; l < length; ++l) rhs += x.samples[l] * adj[l];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("fft round-trips for power-of-two and general sizes") {
  for (int n : {16, 12, 10, 37}) {
    Rng rng(40 + n);
    std::vector<cdouble> data(n);
    for (auto& v : data) v = cdouble(rng.normal(), rng.normal());
    auto copy = data;
    fft::forward(copy);
    fft::inverse(copy);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(copy[i] - data[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("bad configurations are rejected") {
  StftConfig cfg;
  cfg.hop = 300;  // > win_length
  CHECK_THROWS(validate(cfg));
  cfg = StftConfig{};
  cfg.dft_size = 128;  // < win_length
  CHECK_THROWS(validate(cfg));
  cfg = StftConfig{};
  cfg.win_length = 255;
  cfg.dft_size = 255;  // odd: no real Nyquist bin in the one-sided layout
  CHECK_THROWS(validate(cfg));
  CHECK_THROWS(window_kind_from_string("kaiser"));
}

TEST_SUITE_END();
