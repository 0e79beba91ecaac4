// src/signal.cpp

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

#include "maskbook/signal.hpp"

#include <unordered_map>

#include "maskbook/kernels.hpp"

namespace maskbook {

namespace fft {

namespace {

struct Plan {
  int n = 0;
  bool pow2 = false;
  std::vector<int> bitrev;
  std::vector<cdouble> twiddle;      // e^{-2 pi j k / n}, k in [0, n/2)
  std::vector<cdouble> dft_twiddle;  // full table for the O(n^2) fallback
};

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

const Plan& plan_for(int n) {
  thread_local std::unordered_map<int, Plan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  Plan plan;
  plan.n = n;
  plan.pow2 = is_pow2(n);
  if (plan.pow2) {
    plan.bitrev.resize(n);
    int log2n = 0;
    while ((1 << log2n) < n) ++log2n;
    for (int i = 0; i < n; ++i) {
      int rev = 0;
      for (int b = 0; b < log2n; ++b)
        if (i & (1 << b)) rev |= 1 << (log2n - 1 - b);
      plan.bitrev[i] = rev;
    }
    plan.twiddle.resize(n / 2);
    for (int k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * kPi * k / n;
      plan.twiddle[k] = cdouble(std::cos(angle), std::sin(angle));
    }
  } else {
    plan.dft_twiddle.resize(n);
    for (int k = 0; k < n; ++k) {
      const double angle = -2.0 * kPi * k / n;
      plan.dft_twiddle[k] = cdouble(std::cos(angle), std::sin(angle));
    }
  }
  return cache.emplace(n, std::move(plan)).first->second;
}

void transform(std::vector<cdouble>& buffer, bool inverse_dir) {
  const int n = static_cast<int>(buffer.size());
  if (n <= 1) return;
  const Plan& plan = plan_for(n);

  if (!plan.pow2) {
    std::vector<cdouble> out(n, cdouble(0.0, 0.0));
    for (int k = 0; k < n; ++k) {
      cdouble acc(0.0, 0.0);
      for (int m = 0; m < n; ++m) {
        cdouble w = plan.dft_twiddle[static_cast<int>((static_cast<long long>(k) * m) % n)];
        if (inverse_dir) w = std::conj(w);
        acc += buffer[m] * w;
      }
      out[k] = acc;
    }
    if (inverse_dir) {
      const double scale = 1.0 / n;
      for (auto& v : out) v *= scale;
    }
    buffer = std::move(out);
    return;
  }

  for (int i = 0; i < n; ++i) {
    const int j = plan.bitrev[i];
    if (j > i) std::swap(buffer[i], buffer[j]);
  }

  for (int len = 2; len <= n; len <<= 1) {
    const int half = len >> 1;
    const int stride = n / len;
    for (int start = 0; start < n; start += len) {
      for (int k = 0; k < half; ++k) {
        cdouble w = plan.twiddle[static_cast<size_t>(k) * stride];
        if (inverse_dir) w = std::conj(w);
        const cdouble odd = buffer[start + k + half] * w;
        const cdouble even = buffer[start + k];
        buffer[start + k] = even + odd;
        buffer[start + k + half] = even - odd;
      }
    }
  }

  if (inverse_dir) {
    const double scale = 1.0 / n;
    for (auto& v : buffer) v *= scale;
  }
}

}  // namespace

void forward(std::vector<cdouble>& buffer) { transform(buffer, false); }
void inverse(std::vector<cdouble>& buffer) { transform(buffer, true); }

}  // namespace fft

WindowKind window_kind_from_string(std::string_view name) {
  if (name == "sqrt_hann" || name == "sqrthann" || name == "sqrt-hann") return WindowKind::SqrtHann;
  if (name == "hann") return WindowKind::Hann;
  fail("unsupported window kind: " + std::string(name));
}

const char* to_string(WindowKind kind) {
  switch (kind) {
    case WindowKind::SqrtHann: return "sqrt_hann";
    case WindowKind::Hann: return "hann";
  }
  return "?";
}

void validate(const StftConfig& config) {
  require(config.win_length > 0, "StftConfig: win_length must be positive");
  require(config.hop > 0, "StftConfig: hop must be positive");
  require(config.hop <= config.win_length, "StftConfig: hop must not exceed win_length");
  require(config.win_length <= config.dft_size, "StftConfig: win_length must not exceed dft_size");
  // the one-sided layout (F = dft/2 + 1 with a real Nyquist bin) needs an
  // even transform size
  require(config.dft_size % 2 == 0, "StftConfig: dft_size must be even");
  require(config.sample_rate > 0, "StftConfig: sample_rate must be positive");
}

std::vector<double> make_window(WindowKind kind, int length) {
  require(length > 0, "make_window: length must be positive");
  std::vector<double> window(length);
  // Periodic Hann so hop-periodic overlap-add sums are flat.
  for (int n = 0; n < length; ++n) {
    const double hann = 0.5 * (1.0 - std::cos(2.0 * kPi * n / length));
    window[n] = kind == WindowKind::SqrtHann ? std::sqrt(hann) : hann;
  }
  return window;
}

std::vector<double> make_synthesis_window(const std::vector<double>& analysis, int hop) {
  const int win = static_cast<int>(analysis.size());
  require(hop > 0 && hop < win, "make_synthesis_window: need 0 < hop < win_length");
  // Overlap-added analysis^2 is hop-periodic; dividing by it makes
  // sum_k analysis[n-kh] * synthesis[n-kh] == 1 wherever frames fully overlap.
  std::vector<double> denom(hop, 0.0);
  for (int n = 0; n < win; ++n) denom[n % hop] += analysis[n] * analysis[n];
  for (int j = 0; j < hop; ++j)
    require(denom[j] > 1e-12, "make_synthesis_window: window/hop pair is not invertible");
  std::vector<double> synthesis(win);
  for (int n = 0; n < win; ++n) synthesis[n] = analysis[n] / denom[n % hop];
  return synthesis;
}

namespace {

struct FrameLayout {
  int pad = 0;      // zeros on each side
  int frames = 0;
  int total = 0;    // (frames-1)*hop + win
};

FrameLayout layout_for(int num_samples, const StftConfig& config) {
  require(num_samples > 0, "stft: empty input");
  FrameLayout layout;
  layout.pad = config.edge_pad();
  const int padded = num_samples + 2 * layout.pad;
  require(padded >= config.win_length,
          "stft: input too short for this window/hop configuration");
  layout.frames = (padded - config.win_length + config.hop - 1) / config.hop + 1;
  layout.total = (layout.frames - 1) * config.hop + config.win_length;
  return layout;
}

}  // namespace

int stft_frame_count(int num_samples, const StftConfig& config) {
  validate(config);
  return layout_for(num_samples, config).frames;
}

Spectrogram stft(const Waveform& waveform, const StftConfig& config) {
  validate(config);
  require(!waveform.samples.empty(), "stft: empty input");
  require(all_finite(waveform.samples.data(), waveform.samples.size()),
          "stft: non-finite samples");
  require(waveform.sample_rate == config.sample_rate,
          "stft: waveform sample rate does not match the config");
  const int length = waveform.length();
  const FrameLayout layout = layout_for(length, config);
  const int win = config.win_length;
  const int dft = config.dft_size;
  const int freq_bins = config.freq_bins();

  const std::vector<double> window = make_window(config.window, win);

  std::vector<double> padded(layout.total, 0.0);
  std::copy(waveform.samples.begin(), waveform.samples.end(), padded.begin() + layout.pad);

  Spectrogram spec;
  spec.config = config;
  spec.bins = CplxMat(layout.frames, freq_bins);

  std::vector<double> windowed(win);
  std::vector<cdouble> buffer(dft);
  for (int t = 0; t < layout.frames; ++t) {
    kernels::active().mul(padded.data() + static_cast<size_t>(t) * config.hop, window.data(),
                          windowed.data(), win);
    for (int n = 0; n < win; ++n) buffer[n] = cdouble(windowed[n], 0.0);
    for (int n = win; n < dft; ++n) buffer[n] = cdouble(0.0, 0.0);
    fft::forward(buffer);
    for (int f = 0; f < freq_bins; ++f) spec.bins(t, f) = buffer[f];
  }
  return spec;
}

Waveform istft(const Spectrogram& spectrogram, int target_length) {
  return istft(spectrogram.bins, spectrogram.config, target_length);
}

Waveform istft(const CplxMat& bins, const StftConfig& config, int target_length) {
  validate(config);
  require(bins.cols == config.freq_bins(), "istft: spectrogram shape does not match config");
  require(bins.rows > 0, "istft: empty spectrogram");
  require(target_length >= 0, "istft: negative target length");

  const int frames = bins.rows;
  const int win = config.win_length;
  const int dft = config.dft_size;
  const int freq_bins = config.freq_bins();
  const int pad = config.edge_pad();
  const int total = (frames - 1) * config.hop + win;

  const std::vector<double> analysis = make_window(config.window, win);
  const std::vector<double> synthesis = make_synthesis_window(analysis, config.hop);

  std::vector<double> assembled(total, 0.0);
  std::vector<cdouble> buffer(dft);
  for (int t = 0; t < frames; ++t) {
    buffer[0] = cdouble(bins(t, 0).real(), 0.0);
    for (int f = 1; f < freq_bins - 1; ++f) {
      buffer[f] = bins(t, f);
      buffer[dft - f] = std::conj(bins(t, f));
    }
    buffer[dft / 2] = cdouble(bins(t, freq_bins - 1).real(), 0.0);
    fft::inverse(buffer);
    double* out = assembled.data() + static_cast<size_t>(t) * config.hop;
    for (int n = 0; n < win; ++n) out[n] += buffer[n].real() * synthesis[n];
  }

  Waveform result;
  result.sample_rate = config.sample_rate;
  result.samples.assign(target_length, 0.0);
  const int available = std::max(0, std::min(target_length, total - pad));
  for (int l = 0; l < available; ++l) result.samples[l] = assembled[pad + l];
  return result;
}

CplxMat istft_adjoint(const std::vector<double>& grad_time, const StftConfig& config,
                      int target_length) {
  validate(config);
  require(static_cast<int>(grad_time.size()) == target_length,
          "istft_adjoint: gradient length mismatch");
  const FrameLayout layout = layout_for(target_length, config);
  const int win = config.win_length;
  const int dft = config.dft_size;
  const int freq_bins = config.freq_bins();

  const std::vector<double> analysis = make_window(config.window, win);
  const std::vector<double> synthesis = make_synthesis_window(analysis, config.hop);

  std::vector<double> assembled(layout.total, 0.0);
  const int available = std::max(0, std::min(target_length, layout.total - layout.pad));
  for (int l = 0; l < available; ++l) assembled[layout.pad + l] = grad_time[l];

  CplxMat grad_spec(layout.frames, freq_bins);
  std::vector<cdouble> buffer(dft);
  for (int t = 0; t < layout.frames; ++t) {
    const double* seg = assembled.data() + static_cast<size_t>(t) * config.hop;
    for (int n = 0; n < win; ++n) buffer[n] = cdouble(seg[n] * synthesis[n], 0.0);
    for (int n = win; n < dft; ++n) buffer[n] = cdouble(0.0, 0.0);
    fft::forward(buffer);
    // d irfft / d Z_k transposed: weight 1/N on DC and Nyquist, 2/N inside,
    // with the unused imaginary parts of DC/Nyquist pinned to zero.
    grad_spec(t, 0) = cdouble(buffer[0].real() / dft, 0.0);
    for (int f = 1; f < freq_bins - 1; ++f) grad_spec(t, f) = buffer[f] * (2.0 / dft);
    grad_spec(t, freq_bins - 1) = cdouble(buffer[dft / 2].real() / dft, 0.0);
  }
  return grad_spec;
}

std::vector<double> stft_adjoint(const CplxMat& grad_spec, const StftConfig& config,
                                 int num_samples) {
  validate(config);
  require(grad_spec.cols == config.freq_bins(), "stft_adjoint: shape mismatch");
  const FrameLayout layout = layout_for(num_samples, config);
  require(grad_spec.rows == layout.frames, "stft_adjoint: frame count mismatch");
  const int win = config.win_length;
  const int dft = config.dft_size;
  const int freq_bins = config.freq_bins();

  const std::vector<double> window = make_window(config.window, win);

  std::vector<double> assembled(layout.total, 0.0);
  std::vector<cdouble> buffer(dft);
  for (int t = 0; t < layout.frames; ++t) {
    for (int f = 0; f < freq_bins; ++f) buffer[f] = grad_spec(t, f);
    for (int f = freq_bins; f < dft; ++f) buffer[f] = cdouble(0.0, 0.0);
    // Re(sum_{k<=N/2} G_k e^{+2 pi j k n / N}) is the transpose of the
    // one-sided forward DFT; computed as N * inverse FFT of the zero-extended
    // gradient.
    fft::inverse(buffer);
    double* out = assembled.data() + static_cast<size_t>(t) * config.hop;
    for (int n = 0; n < win; ++n) out[n] += buffer[n].real() * dft * window[n];
  }

  std::vector<double> grad_time(num_samples, 0.0);
  for (int l = 0; l < num_samples; ++l) grad_time[l] = assembled[layout.pad + l];
  return grad_time;
}

double spectrogram_energy(const Spectrogram& spectrogram) {
  const int frames = spectrogram.frames();
  const int freq_bins = spectrogram.freq_bins();
  const int dft = spectrogram.config.dft_size;
  double energy = 0.0;
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f < freq_bins; ++f) {
      const double weight = (f == 0 || f == freq_bins - 1) ? 1.0 : 2.0;
      energy += weight * std::norm(spectrogram.bins(t, f));
    }
  }
  return energy / dft;
}

}  // namespace maskbook
