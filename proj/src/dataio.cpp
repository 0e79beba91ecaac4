// src/dataio.cpp

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

#include "maskbook/dataio.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maskbook/signal.hpp"

namespace maskbook {

// Binary layouts below assume a little-endian host.

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(T)), "truncated file: " + path);
  return value;
}

}  // namespace

// --- WAV ---------------------------------------------------------------------

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open WAV file: " + path);

  char riff[4];
  in.read(riff, 4);
  require(in.gcount() == 4 && std::memcmp(riff, "RIFF", 4) == 0, "not a RIFF file: " + path);
  (void)read_raw<uint32_t>(in, path);  // overall size, unused
  char wave[4];
  in.read(wave, 4);
  require(in.gcount() == 4 && std::memcmp(wave, "WAVE", 4) == 0, "not a WAVE file: " + path);

  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  std::vector<char> payload;
  bool have_fmt = false, have_data = false;

  while (in.good()) {
    char chunk_id[4];
    in.read(chunk_id, 4);
    if (in.gcount() < 4) break;
    const uint32_t chunk_size = read_raw<uint32_t>(in, path);
    if (std::memcmp(chunk_id, "fmt ", 4) == 0) {
      require(chunk_size >= 16, "bad fmt chunk: " + path);
      audio_format = read_raw<uint16_t>(in, path);
      channels = read_raw<uint16_t>(in, path);
      sample_rate = read_raw<uint32_t>(in, path);
      (void)read_raw<uint32_t>(in, path);  // byte rate
      (void)read_raw<uint16_t>(in, path);  // block align
      bits = read_raw<uint16_t>(in, path);
      in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(chunk_id, "data", 4) == 0) {
      payload.resize(chunk_size);
      in.read(payload.data(), chunk_size);
      require(in.gcount() == static_cast<std::streamsize>(chunk_size),
              "truncated data chunk: " + path);
      have_data = true;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }

  require(have_fmt && have_data, "missing fmt/data chunk: " + path);
  require(channels == 1, "only mono WAV is supported: " + path);

  Waveform waveform;
  waveform.sample_rate = static_cast<int>(sample_rate);
  if (audio_format == 1 && bits == 16) {
    const size_t n = payload.size() / 2;
    require(n > 0, "empty WAV file: " + path);
    waveform.samples.resize(n);
    const int16_t* samples = reinterpret_cast<const int16_t*>(payload.data());
    for (size_t i = 0; i < n; ++i) waveform.samples[i] = samples[i] / 32768.0;
  } else if (audio_format == 3 && bits == 32) {
    const size_t n = payload.size() / 4;
    require(n > 0, "empty WAV file: " + path);
    waveform.samples.resize(n);
    const float* samples = reinterpret_cast<const float*>(payload.data());
    for (size_t i = 0; i < n; ++i) waveform.samples[i] = samples[i];
  } else {
    fail("unsupported WAV format (need 16-bit PCM or 32-bit float mono): " + path);
  }
  return waveform;
}

void write_wav(const std::string& path, const Waveform& waveform, WavFormat format) {
  require(!waveform.samples.empty(), "write_wav: empty waveform");
  require(waveform.sample_rate > 0, "write_wav: bad sample rate");

  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path);

  const uint16_t channels = 1;
  const uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const uint16_t audio_format = format == WavFormat::Pcm16 ? 1 : 3;
  const uint32_t byte_rate = waveform.sample_rate * channels * bits / 8;
  const uint16_t block_align = channels * bits / 8;
  const uint32_t data_size = static_cast<uint32_t>(waveform.samples.size()) * block_align;

  out.write("RIFF", 4);
  write_raw<uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_raw<uint32_t>(out, 16);
  write_raw<uint16_t>(out, audio_format);
  write_raw<uint16_t>(out, channels);
  write_raw<uint32_t>(out, static_cast<uint32_t>(waveform.sample_rate));
  write_raw<uint32_t>(out, byte_rate);
  write_raw<uint16_t>(out, block_align);
  write_raw<uint16_t>(out, bits);
  out.write("data", 4);
  write_raw<uint32_t>(out, data_size);

  if (format == WavFormat::Pcm16) {
    for (double sample : waveform.samples) {
      // Round to nearest, no dithering; symmetric clip so full scale maps to
      // +/- 32767 / 32768.
      double scaled = std::nearbyint(sample * 32768.0);
      scaled = std::clamp(scaled, -32767.0, 32767.0);
      write_raw<int16_t>(out, static_cast<int16_t>(scaled));
    }
  } else {
    for (double sample : waveform.samples) write_raw<float>(out, static_cast<float>(sample));
  }
  require(out.good(), "write failed: " + path);
}

// --- manifests -----------------------------------------------------------------

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open manifest: " + path);
  CorpusManifest manifest;
  bool rate_seen = false;
  std::string line;
  const auto base = std::filesystem::path(path).parent_path();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("sample_rate=");
      if (pos != std::string::npos) {
        manifest.sample_rate = std::stoi(line.substr(pos + 12));
        rate_seen = true;
      }
      continue;
    }
    std::istringstream stream(line);
    ManifestEntry entry;
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(stream, field, '\t')) fields.push_back(field);
    require(fields.size() >= 3, "manifest line needs id, mixture, and sources: " + line);
    entry.id = fields[0];
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    entry.mixture_path = resolve(fields[1]);
    for (size_t i = 2; i < fields.size(); ++i) entry.source_paths.push_back(resolve(fields[i]));
    manifest.entries.push_back(std::move(entry));
  }
  require(!manifest.entries.empty(), "empty manifest: " + path);
  if (!rate_seen) {
    manifest.sample_rate = read_wav(manifest.entries.front().mixture_path).sample_rate;
  }
  return manifest;
}

void save_manifest(const std::string& path, const CorpusManifest& manifest) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path);
  out << "# sample_rate=" << manifest.sample_rate << "\n";
  for (const auto& entry : manifest.entries) {
    out << entry.id << '\t' << entry.mixture_path;
    for (const auto& src : entry.source_paths) out << '\t' << src;
    out << '\n';
  }
  require(out.good(), "write failed: " + path);
}

MixtureRecord load_record(const ManifestEntry& entry, int expected_sample_rate) {
  MixtureRecord record;
  record.id = entry.id;
  record.mixture = read_wav(entry.mixture_path);
  require(record.mixture.sample_rate == expected_sample_rate,
          "sample rate mismatch in " + entry.mixture_path);
  for (const auto& src : entry.source_paths) {
    record.sources.push_back(read_wav(src));
    require(record.sources.back().sample_rate == expected_sample_rate,
            "sample rate mismatch in " + src);
    require(record.sources.back().length() == record.mixture.length(),
            "length mismatch in " + src);
  }
  // Mixtures are built as exact sums; allow 16-bit quantization on disk.
  double worst = 0.0;
  for (int l = 0; l < record.mixture.length(); ++l) {
    double sum = 0.0;
    for (const auto& src : record.sources) sum += src.samples[l];
    worst = std::max(worst, std::abs(sum - record.mixture.samples[l]));
  }
  require(worst < 1e-4, "mixture is not the sum of its sources: " + entry.id);
  return record;
}

// --- synthetic corpus -------------------------------------------------------------

SourceType source_type_from_string(std::string_view name) {
  if (name == "sinusoid_bank" || name == "sinusoids") return SourceType::SinusoidBank;
  if (name == "chirp") return SourceType::Chirp;
  if (name == "filtered_noise" || name == "noise") return SourceType::FilteredNoise;
  if (name == "speech_like_am" || name == "am") return SourceType::SpeechLikeAm;
  fail("unknown source type: " + std::string(name));
}

const char* to_string(SourceType type) {
  switch (type) {
    case SourceType::SinusoidBank: return "sinusoid_bank";
    case SourceType::Chirp: return "chirp";
    case SourceType::FilteredNoise: return "filtered_noise";
    case SourceType::SpeechLikeAm: return "speech_like_am";
  }
  return "?";
}

void validate(const SynthSpec& spec) {
  require(spec.count > 0, "SynthSpec: count must be positive");
  require(spec.duration_s > 0.05, "SynthSpec: duration too short");
  require(spec.sample_rate > 0, "SynthSpec: bad sample rate");
  require(!spec.types.empty(), "SynthSpec: at least one source type");
  require(spec.snr_min_db <= spec.snr_max_db, "SynthSpec: SNR range inverted");
}

namespace {

struct Band {
  double lo_hz;
  double hi_hz;
};

double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / std::max<size_t>(1, v.size()));
}

void normalize_rms(std::vector<double>& v, double target) {
  const double current = rms(v);
  if (current <= 0.0) return;
  const double gain = target / current;
  for (double& x : v) x *= gain;
}

std::vector<double> gen_sinusoid_bank(int n, int fs, const Band& band, Rng& rng) {
  std::vector<double> out(n, 0.0);
  const int partials = rng.uniform_int(3, 8);
  for (int p = 0; p < partials; ++p) {
    const double freq = rng.uniform(band.lo_hz, band.hi_hz);
    const double amp = rng.uniform(0.3, 1.0) / (1.0 + p);
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double omega = 2.0 * kPi * freq / fs;
    for (int i = 0; i < n; ++i) out[i] += amp * std::sin(omega * i + phase);
  }
  return out;
}

std::vector<double> gen_chirp(int n, int fs, const Band& band, Rng& rng) {
  std::vector<double> out(n);
  const double f0 = rng.uniform(band.lo_hz, 0.5 * (band.lo_hz + band.hi_hz));
  const double f1 = rng.uniform(0.5 * (band.lo_hz + band.hi_hz), band.hi_hz);
  const double phase0 = rng.uniform(0.0, 2.0 * kPi);
  const double rate = (f1 - f0) / (2.0 * n);
  for (int i = 0; i < n; ++i) {
    const double phase = phase0 + 2.0 * kPi * (f0 * i + rate * static_cast<double>(i) * i) / fs;
    out[i] = std::sin(phase) + 0.25 * std::sin(2.0 * phase);
  }
  const int fade = std::min(n / 8, fs / 100);
  for (int i = 0; i < fade; ++i) {
    const double g = 0.5 * (1.0 - std::cos(kPi * i / fade));
    out[i] *= g;
    out[n - 1 - i] *= g;
  }
  return out;
}

std::vector<double> gen_filtered_noise(int n, int fs, const Band& band, Rng& rng) {
  int padded = 1;
  while (padded < n) padded <<= 1;
  std::vector<cdouble> buffer(padded);
  for (int i = 0; i < n; ++i) buffer[i] = cdouble(rng.normal(), 0.0);
  for (int i = n; i < padded; ++i) buffer[i] = cdouble(0.0, 0.0);
  fft::forward(buffer);
  const double hz_per_bin = static_cast<double>(fs) / padded;
  for (int k = 0; k <= padded / 2; ++k) {
    const double freq = k * hz_per_bin;
    double gain = (freq >= band.lo_hz && freq <= band.hi_hz) ? 1.0 : 0.0;
    // Soft 100 Hz edges keep the band from ringing.
    const double edge = 100.0;
    if (gain == 0.0 && freq > band.lo_hz - edge && freq < band.lo_hz)
      gain = 0.5 * (1.0 + std::cos(kPi * (band.lo_hz - freq) / edge)) * 0.5;
    if (gain == 0.0 && freq > band.hi_hz && freq < band.hi_hz + edge)
      gain = 0.5 * (1.0 + std::cos(kPi * (freq - band.hi_hz) / edge)) * 0.5;
    buffer[k] *= gain;
    if (k > 0 && k < padded / 2) buffer[padded - k] *= gain;
  }
  fft::inverse(buffer);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = buffer[i].real();
  return out;
}

std::vector<double> gen_speech_like_am(int n, int fs, const Band& band, Rng& rng) {
  std::vector<double> out(n, 0.0);
  const double f0 = rng.uniform(90.0, 220.0);
  const double formants[3] = {rng.uniform(300.0, 800.0), rng.uniform(900.0, 1800.0),
                              rng.uniform(2000.0, 3200.0)};
  const int harmonics = static_cast<int>(std::min(band.hi_hz, 0.47 * fs) / f0);
  for (int h = 1; h <= harmonics; ++h) {
    const double freq = h * f0;
    if (freq < band.lo_hz) continue;
    double weight = 0.05;
    for (double formant : formants) {
      const double d = (freq - formant) / 200.0;
      weight += std::exp(-0.5 * d * d);
    }
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    const double omega = 2.0 * kPi * freq / fs;
    for (int i = 0; i < n; ++i) out[i] += weight * std::sin(omega * i + phase);
  }
  // Syllabic gating around 4 Hz with random pauses.
  const double syllable_hz = rng.uniform(3.0, 5.0);
  const int period = static_cast<int>(fs / syllable_hz);
  std::vector<double> envelope(n, 0.0);
  int pos = -rng.uniform_int(0, period / 2);
  while (pos < n) {
    const int len = static_cast<int>(period * rng.uniform(0.5, 0.9));
    if (rng.uniform() > 0.2) {
      for (int i = std::max(0, pos); i < std::min(n, pos + len); ++i)
        envelope[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * (i - pos) / len));
    }
    pos += period;
  }
  for (int i = 0; i < n; ++i) out[i] *= 0.1 + envelope[i];
  return out;
}

std::vector<double> gen_source(SourceType type, int n, int fs, const Band& band, Rng& rng) {
  std::vector<double> samples;
  switch (type) {
    case SourceType::SinusoidBank: samples = gen_sinusoid_bank(n, fs, band, rng); break;
    case SourceType::Chirp: samples = gen_chirp(n, fs, band, rng); break;
    case SourceType::FilteredNoise: samples = gen_filtered_noise(n, fs, band, rng); break;
    case SourceType::SpeechLikeAm: samples = gen_speech_like_am(n, fs, band, rng); break;
  }
  normalize_rms(samples, 0.1);
  return samples;
}

}  // namespace

std::vector<MixtureRecord> synth_mixtures(const SynthSpec& spec, uint64_t seed) {
  validate(spec);
  const int n = static_cast<int>(spec.duration_s * spec.sample_rate);
  const double nyquist = 0.5 * spec.sample_rate;
  require(nyquist > 400.0, "SynthSpec: sample rate too low for the generators");

  std::vector<MixtureRecord> records;
  records.reserve(spec.count);
  Rng corpus_rng(seed);

  for (int e = 0; e < spec.count; ++e) {
    Rng rng = corpus_rng.fork(e);
    MixtureRecord record;
    record.id = "synth" + std::to_string(e);

    Band bands[2];
    if (spec.disjoint_bands) {
      bands[0] = {0.05 * nyquist, 0.42 * nyquist};
      bands[1] = {0.55 * nyquist, 0.92 * nyquist};
    } else {
      // Varied spectral overlap: anything from near-disjoint to fully shared.
      for (auto& band : bands) {
        const double lo = rng.uniform(0.03 * nyquist, 0.35 * nyquist);
        const double hi = rng.uniform(lo + 0.25 * nyquist, 0.95 * nyquist);
        band = {lo, hi};
      }
    }

    std::vector<double> s1 =
        gen_source(spec.types[rng.uniform_int(0, static_cast<int>(spec.types.size()) - 1)], n,
                   spec.sample_rate, bands[0], rng);
    std::vector<double> s2 =
        gen_source(spec.types[rng.uniform_int(0, static_cast<int>(spec.types.size()) - 1)], n,
                   spec.sample_rate, bands[1], rng);

    // Scale source 2 for the drawn SNR of source 1 relative to source 2.
    const double snr_db = rng.uniform(spec.snr_min_db, spec.snr_max_db);
    const double e1 = rms(s1), e2 = rms(s2);
    if (e2 > 0.0) {
      const double gain = e1 / e2 * std::pow(10.0, -snr_db / 20.0);
      for (double& x : s2) x *= gain;
    }

    std::vector<double> mix(n);
    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
      mix[i] = s1[i] + s2[i];
      peak = std::max(peak, std::abs(mix[i]));
    }
    if (peak > 0.99) {
      const double gain = 0.9 / peak;
      for (int i = 0; i < n; ++i) {
        s1[i] *= gain;
        s2[i] *= gain;
        mix[i] = s1[i] + s2[i];  // re-sum so the mixture stays exact
      }
    }

    record.sources.resize(2);
    record.sources[0].samples = std::move(s1);
    record.sources[0].sample_rate = spec.sample_rate;
    record.sources[1].samples = std::move(s2);
    record.sources[1].sample_rate = spec.sample_rate;
    record.mixture.samples = std::move(mix);
    record.mixture.sample_rate = spec.sample_rate;
    records.push_back(std::move(record));
  }
  return records;
}

CorpusManifest synth_corpus(const SynthSpec& spec, uint64_t seed, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto records = synth_mixtures(spec, seed);
  CorpusManifest manifest;
  manifest.sample_rate = spec.sample_rate;
  for (const auto& record : records) {
    ManifestEntry entry;
    entry.id = record.id;
    const auto dir = std::filesystem::path(out_dir);
    entry.mixture_path = (dir / (record.id + "_mix.wav")).string();
    write_wav(entry.mixture_path, record.mixture);
    for (size_t s = 0; s < record.sources.size(); ++s) {
      entry.source_paths.push_back(
          (dir / (record.id + "_s" + std::to_string(s + 1) + ".wav")).string());
      write_wav(entry.source_paths.back(), record.sources[s]);
    }
    manifest.entries.push_back(std::move(entry));
  }
  save_manifest((std::filesystem::path(out_dir) / "corpus.tsv").string(), manifest);
  return manifest;
}

// --- binary matrices ---------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'M', 'B', 'K', 'M', 'A', 'T', '0', '0'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeReal = 1;
constexpr uint32_t kDtypeComplex = 2;

// header layout: magic, version, rows (T), cols (F), dtype
void write_header(std::ofstream& out, uint32_t dtype, int rows, int cols) {
  out.write(kMagic, sizeof(kMagic));
  write_raw<uint32_t>(out, kVersion);
  write_raw<uint32_t>(out, static_cast<uint32_t>(rows));
  write_raw<uint32_t>(out, static_cast<uint32_t>(cols));
  write_raw<uint32_t>(out, dtype);
}

struct MatHeader {
  uint32_t dtype = 0;
  int rows = 0;
  int cols = 0;
};

MatHeader read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in.gcount() == sizeof(magic) && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
          "bad magic in matrix file: " + path);
  const uint32_t version = read_raw<uint32_t>(in, path);
  require(version == kVersion, "unsupported matrix file version: " + path);
  MatHeader header;
  header.rows = static_cast<int>(read_raw<uint32_t>(in, path));
  header.cols = static_cast<int>(read_raw<uint32_t>(in, path));
  header.dtype = read_raw<uint32_t>(in, path);
  require(header.rows > 0 && header.cols > 0, "degenerate matrix dimensions: " + path);
  return header;
}

}  // namespace

void save_matrix(const std::string& path, const RealMat& matrix) {
  require(matrix.rows > 0 && matrix.cols > 0, "save_matrix: empty matrix");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path);
  write_header(out, kDtypeReal, matrix.rows, matrix.cols);
  out.write(reinterpret_cast<const char*>(matrix.data.data()),
            static_cast<std::streamsize>(matrix.size() * sizeof(double)));
  require(out.good(), "write failed: " + path);
}

void save_matrix(const std::string& path, const CplxMat& matrix) {
  require(matrix.rows > 0 && matrix.cols > 0, "save_matrix: empty matrix");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open for writing: " + path);
  write_header(out, kDtypeComplex, matrix.rows, matrix.cols);
  out.write(reinterpret_cast<const char*>(matrix.data.data()),
            static_cast<std::streamsize>(matrix.size() * sizeof(cdouble)));
  require(out.good(), "write failed: " + path);
}

RealMat load_real_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open matrix file: " + path);
  const MatHeader header = read_header(in, path);
  require(header.dtype == kDtypeReal, "expected a real matrix: " + path);
  RealMat matrix(header.rows, header.cols);
  in.read(reinterpret_cast<char*>(matrix.data.data()),
          static_cast<std::streamsize>(matrix.size() * sizeof(double)));
  require(in.gcount() == static_cast<std::streamsize>(matrix.size() * sizeof(double)),
          "truncated matrix file: " + path);
  return matrix;
}

CplxMat load_complex_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open matrix file: " + path);
  const MatHeader header = read_header(in, path);
  require(header.dtype == kDtypeComplex, "expected a complex matrix: " + path);
  CplxMat matrix(header.rows, header.cols);
  in.read(reinterpret_cast<char*>(matrix.data.data()),
          static_cast<std::streamsize>(matrix.size() * sizeof(cdouble)));
  require(in.gcount() == static_cast<std::streamsize>(matrix.size() * sizeof(cdouble)),
          "truncated matrix file: " + path);
  return matrix;
}

}  // namespace maskbook
