// maskbook/dataio.hpp

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

#include <string>

#include "maskbook/common.hpp"

namespace maskbook {

// --- WAV (RIFF, mono, PCM16 or IEEE float32) ---------------------------------

enum class WavFormat { Pcm16, Float32 };

Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& waveform,
               WavFormat format = WavFormat::Float32);

// --- mixtures and manifests ---------------------------------------------------

struct MixtureRecord {
  std::string id;
  Waveform mixture;
  std::vector<Waveform> sources;
};

struct ManifestEntry {
  std::string id;
  std::string mixture_path;
  std::vector<std::string> source_paths;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  int sample_rate = 8000;
};

/// Line-oriented text: id<TAB>mix<TAB>src1<TAB>src2..., '#' comments allowed;
/// the writer emits a "# sample_rate=<hz>" comment the loader honors.
CorpusManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const CorpusManifest& manifest);

MixtureRecord load_record(const ManifestEntry& entry, int expected_sample_rate);

// --- synthetic desk-scale corpus -----------------------------------------------

enum class SourceType { SinusoidBank, Chirp, FilteredNoise, SpeechLikeAm };

SourceType source_type_from_string(std::string_view name);
const char* to_string(SourceType type);

struct SynthSpec {
  int count = 50;
  double duration_s = 2.0;
  int sample_rate = 8000;
  std::vector<SourceType> types = {SourceType::SinusoidBank, SourceType::Chirp,
                                   SourceType::FilteredNoise, SourceType::SpeechLikeAm};
  double snr_min_db = -3.0;
  double snr_max_db = 3.0;
  /// When set, the two sources of every pair occupy disjoint frequency bands.
  bool disjoint_bands = false;
};

void validate(const SynthSpec& spec);

/// Deterministic two-source mixtures; the mixture is the exact sample-wise
/// sum of the sources.
std::vector<MixtureRecord> synth_mixtures(const SynthSpec& spec, uint64_t seed);

/// synth_mixtures + WAV/manifest output under out_dir. Returns the manifest
/// (paths relative to out_dir are made absolute on load).
CorpusManifest synth_corpus(const SynthSpec& spec, uint64_t seed, const std::string& out_dir);

// --- binary matrix files --------------------------------------------------------
//
// Header: magic "MBKMAT00" (8 bytes), u32 version, u32 dtype (1 = float64,
// 2 = complex128), u32 rows, u32 cols; row-major little-endian payload.

void save_matrix(const std::string& path, const RealMat& matrix);
void save_matrix(const std::string& path, const CplxMat& matrix);
RealMat load_real_matrix(const std::string& path);
CplxMat load_complex_matrix(const std::string& path);

}  // namespace maskbook
