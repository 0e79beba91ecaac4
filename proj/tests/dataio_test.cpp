// tests/dataio_test.cpp

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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "maskbook/dataio.hpp"
#include "maskbook/metrics.hpp"
#include "maskbook/oracle_masks.hpp"

using namespace maskbook;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / "maskbook_dataio_test") {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_SUITE_BEGIN("dataio");

TEST_CASE("float32 WAV round-trips the float-cast samples exactly") {
  TempDir dir;
  Rng rng(1);
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 321; ++i) w.samples.push_back(0.25 * rng.normal());
  write_wav(dir.file("f32.wav"), w, WavFormat::Float32);
  const Waveform back = read_wav(dir.file("f32.wav"));
  REQUIRE(back.length() == w.length());
  CHECK(back.sample_rate == 8000);
  for (int i = 0; i < w.length(); ++i)
    CHECK(back.samples[i] == static_cast<double>(static_cast<float>(w.samples[i])));

  // write -> read -> write produces identical bytes
  write_wav(dir.file("f32b.wav"), back, WavFormat::Float32);
  std::ifstream a(dir.file("f32.wav"), std::ios::binary);
  std::ifstream b(dir.file("f32b.wav"), std::ios::binary);
  std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);
}

TEST_CASE("16-bit PCM scaling convention") {
  TempDir dir;
  Waveform sine;
  sine.sample_rate = 8000;
  for (int i = 0; i < 800; ++i) sine.samples.push_back(std::sin(2.0 * kPi * i / 80.0));
  write_wav(dir.file("pcm.wav"), sine, WavFormat::Pcm16);
  const Waveform back = read_wav(dir.file("pcm.wav"));
  double peak = 0.0;
  for (double v : back.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(32767.0 / 32768.0));
  // one LSB of error, inclusive: +1.0 itself clips to 32767
  for (int i = 0; i < 800; ++i)
    CHECK(std::abs(back.samples[i] - sine.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("WAV error paths: missing, empty, unsupported") {
  TempDir dir;
  CHECK_THROWS(read_wav(dir.file("missing.wav")));
  std::ofstream(dir.file("empty.wav")).close();
  CHECK_THROWS(read_wav(dir.file("empty.wav")));
  Waveform empty;
  CHECK_THROWS(write_wav(dir.file("bad.wav"), empty));
}

TEST_CASE("manifest round trip and record validation") {
  TempDir dir;
  SynthSpec spec;
  spec.count = 3;
  spec.duration_s = 0.25;
  const CorpusManifest manifest = synth_corpus(spec, 7, dir.file("corpus"));
  CHECK(manifest.entries.size() == 3);

  const CorpusManifest loaded = load_manifest(dir.file("corpus") + "/corpus.tsv");
  CHECK(loaded.sample_rate == 8000);
  REQUIRE(loaded.entries.size() == 3);
  const MixtureRecord record = load_record(loaded.entries[1], loaded.sample_rate);
  CHECK(record.sources.size() == 2);
  CHECK(record.mixture.length() == record.sources[0].length());
}

TEST_CASE("synthesis is deterministic and respects the SNR draw") {
  SynthSpec spec;
  spec.count = 4;
  spec.duration_s = 0.5;
  spec.snr_min_db = 0.0;
  spec.snr_max_db = 0.0;
  const auto first = synth_mixtures(spec, 99);
  const auto second = synth_mixtures(spec, 99);
  REQUIRE(first.size() == second.size());
  for (size_t e = 0; e < first.size(); ++e) {
    CHECK(first[e].mixture.samples == second[e].mixture.samples);
    for (int s = 0; s < 2; ++s)
      CHECK(first[e].sources[s].samples == second[e].sources[s].samples);
  }

  for (const auto& record : first) {
    double e1 = 0.0, e2 = 0.0;
    for (double v : record.sources[0].samples) e1 += v * v;
    for (double v : record.sources[1].samples) e2 += v * v;
    CHECK(std::abs(10.0 * std::log10(e1 / e2)) < 0.1);  // 0 dB by construction
    for (int l = 0; l < record.mixture.length(); ++l)
      CHECK(record.mixture.samples[l] ==
            record.sources[0].samples[l] + record.sources[1].samples[l]);
  }
}

TEST_CASE("disjoint frequency bands make the IBM oracle nearly perfect") {
  SynthSpec spec;
  spec.count = 3;
  spec.duration_s = 1.0;
  spec.disjoint_bands = true;
  spec.types = {SourceType::SinusoidBank};
  const auto records = synth_mixtures(spec, 5);

  StftConfig cfg;
  for (const auto& record : records) {
    const Spectrogram x = stft(record.mixture, cfg);
    for (int i = 0; i < 2; ++i) {
      const Spectrogram s = stft(record.sources[i], cfg);
      Spectrogram n = x;
      for (size_t b = 0; b < n.bins.size(); ++b)
        n.bins.data[b] = x.bins.data[b] - s.bins.data[b];
      const auto ibm = oracle_mask(MaskKind::IBM, s, n, x);
      const Waveform est = istft(apply_mask(ibm.real, x), record.mixture.length());
      const double improvement =
          si_sdr(est, record.sources[i]) - si_sdr(record.mixture, record.sources[i]);
      CHECK(improvement > 40.0);
    }
  }
}

TEST_CASE("binary matrices round-trip bit-exactly and reject corruption") {
  TempDir dir;
  Rng rng(2);
  RealMat real(5, 7);
  for (auto& v : real.data) v = rng.normal();
  CplxMat cplx(4, 3);
  for (auto& v : cplx.data) v = cdouble(rng.normal(), rng.normal());

  save_matrix(dir.file("real.mbk"), real);
  save_matrix(dir.file("cplx.mbk"), cplx);
  const RealMat real_back = load_real_matrix(dir.file("real.mbk"));
  const CplxMat cplx_back = load_complex_matrix(dir.file("cplx.mbk"));
  CHECK(real_back.data == real.data);
  CHECK(cplx_back.data == cplx.data);
  CHECK_THROWS(load_complex_matrix(dir.file("real.mbk")));  // dtype mismatch

  // corrupt the magic
  {
    std::fstream f(dir.file("real.mbk"), std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XX", 2);
  }
  CHECK_THROWS(load_real_matrix(dir.file("real.mbk")));

  // truncation
  save_matrix(dir.file("trunc.mbk"), real);
  std::filesystem::resize_file(dir.file("trunc.mbk"), 40);
  CHECK_THROWS(load_real_matrix(dir.file("trunc.mbk")));

  CHECK_THROWS(save_matrix(dir.file("zero.mbk"), RealMat(0, 4)));
}

TEST_SUITE_END();
