// maskbook/common.hpp

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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace maskbook {

using cdouble = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;

inline void require(bool condition, const std::string& message) {
  if (!condition) throw std::invalid_argument(message);
}

[[noreturn]] inline void fail(const std::string& message) {
  throw std::runtime_error(message);
}

/// Row-major matrix. Rows index time frames, columns frequency bins,
/// unless a function documents otherwise.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c, T fill = T{})
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {
    require(r >= 0 && c >= 0, "Mat: negative dimensions");
  }

  T& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  const T& operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  size_t size() const { return data.size(); }
  bool same_shape(const Mat& other) const { return rows == other.rows && cols == other.cols; }
};

using RealMat = Mat<double>;
using CplxMat = Mat<cdouble>;

/// T x F x K tensor with the K (codebook) axis contiguous per (t, f) bin.
struct Field3 {
  int frames = 0;
  int bins = 0;
  int depth = 0;
  std::vector<double> data;

  Field3() = default;
  Field3(int t, int f, int k, double fill = 0.0)
      : frames(t), bins(f), depth(k),
        data(static_cast<size_t>(t) * f * k, fill) {
    require(t >= 0 && f >= 0 && k >= 1, "Field3: bad dimensions");
  }

  double* bin(int t, int f) {
    return data.data() + (static_cast<size_t>(t) * bins + f) * depth;
  }
  const double* bin(int t, int f) const {
    return data.data() + (static_cast<size_t>(t) * bins + f) * depth;
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Field3& o) const {
    return frames == o.frames && bins == o.bins && depth == o.depth;
  }
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;

  int length() const { return static_cast<int>(samples.size()); }
};

inline bool all_finite(const double* v, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

inline bool all_finite(const cdouble* v, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) return false;
  return true;
}

/// Wrap an angle into (-pi, pi].
inline double wrap_angle(double theta) {
  double t = std::remainder(theta, 2.0 * kPi);
  if (t <= -kPi) t += 2.0 * kPi;
  return t;
}

/// m * e^{j theta} spelled out so every call site computes the identical
/// floating-point value (std::polar has platform-dependent edge behavior).
inline cdouble polar_md(double magnitude, double theta) {
  return cdouble(magnitude * std::cos(theta), magnitude * std::sin(theta));
}

// ---------------------------------------------------------------------------
// Deterministic RNG (xoshiro256++ seeded by splitmix64). Self-contained so
// results are identical across standard libraries.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
    spare_valid_ = false;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    spare_valid_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  int uniform_int(int lo, int hi_inclusive) {
    const uint64_t span = static_cast<uint64_t>(hi_inclusive - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  /// Derive an independent stream, e.g. one per corpus entry.
  Rng fork(uint64_t stream) const {
    uint64_t sm = state_[0] ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    return Rng(splitmix64_next(sm));
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4] = {};
  double spare_ = 0.0;
  bool spare_valid_ = false;
};

/// Draw an index from a categorical distribution given by `probs[0..k)`.
/// Probabilities are trusted to sum to ~1; the last index absorbs any
/// numerical remainder.
inline int sample_categorical(const double* probs, int k, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (int i = 0; i < k; ++i) {
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return k - 1;
}

// ---------------------------------------------------------------------------
// Minimal logging controlled by the MASKBOOK_LOG environment variable.
// ---------------------------------------------------------------------------

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("MASKBOOK_LOG");
    if (!env) return LogLevel::Warn;
    const std::string value(env);
    if (value == "error") return LogLevel::Error;
    if (value == "warn") return LogLevel::Warn;
    if (value == "info") return LogLevel::Info;
    if (value == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

inline void log_message(LogLevel level, const std::string& message) {
  if (level > log_level()) return;
  const char* tag = level == LogLevel::Error  ? "error"
                    : level == LogLevel::Warn ? "warn"
                    : level == LogLevel::Info ? "info"
                                              : "debug";
  std::fprintf(stderr, "[maskbook %s] %s\n", tag, message.c_str());
}

/// Run fn(i) for i in [0, n) on up to `jobs` threads. Results must be written
/// to per-index slots; chunking is deterministic.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& worker : workers) worker.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
}

}  // namespace maskbook
