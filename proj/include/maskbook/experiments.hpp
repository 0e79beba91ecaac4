// maskbook/experiments.hpp

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

#include "maskbook/codebook_opt.hpp"
#include "maskbook/config.hpp"
#include "maskbook/dataio.hpp"
#include "maskbook/grad.hpp"
#include "maskbook/metrics.hpp"
#include "maskbook/misi.hpp"

namespace maskbook {

struct CommonOptions {
  std::string out_dir = "out";
  uint64_t seed = 0;
  int jobs = 1;
};

/// Invariant-guard tallies accumulated by a command. The exit code is 0 only
/// when the flagged fraction stays below flags.max_flag_fraction (default 1).
struct FlagCounters {
  long degenerate = 0;
  long guarded = 0;
  long floored = 0;
  long total_bins = 0;

  double fraction() const {
    return total_bins > 0 ? static_cast<double>(degenerate + guarded + floored) / total_bins
                          : 0.0;
  }
};

StftConfig stft_from_config(const ConfigFile& config);
SynthSpec synth_from_config(const ConfigFile& config);

/// Corpus from [corpus] manifest=..., falling back to in-memory synthesis
/// from the [synth] section.
std::vector<MixtureRecord> load_corpus(const ConfigFile& config, uint64_t seed);

// --- oracle study -----------------------------------------------------------------

struct OracleStudyOptions {
  std::vector<MaskKind> masks = {MaskKind::IAM, MaskKind::IBM,  MaskKind::IRM,
                                 MaskKind::WF,  MaskKind::PSF, MaskKind::TPSF};
  std::vector<double> r_max_values = {1.0, 1.5, 2.0};
  bool include_noisy = true;
  bool include_true = true;
  std::vector<int> phasebook_sizes = {2, 4, 8};
  bool optimize_phasebooks = true;
  int epochs = 40;
};

OracleStudyOptions oracle_study_from_config(const ConfigFile& config);

struct OracleStudyCell {
  MaskKind mask;
  double r_max = 0.0;
  std::string phase;       // noisy | true | phasebook | intrinsic
  int phasebook_size = 0;  // 0 unless phase == phasebook
  double mean_sisdri_db = 0.0;
  double median_sisdri_db = 0.0;
};

struct OracleStudyResult {
  std::vector<OracleStudyCell> cells;
  FlagCounters flags;

  const OracleStudyCell* find(MaskKind mask, double r_max, const std::string& phase,
                              int phasebook_size = 0) const;
};

/// Grid over (mask x r_max x phase source x phasebook size) on a two-source
/// corpus. Phase semantics per cell, with m the (signed) mask value and
/// theta the oracle phase difference:
///   noisy:     m x
///   true:      |m| e^{j theta} x          (optimal phase for the magnitude)
///   phasebook: m e^{j theta_k} x, k = argmax_j m cos(theta_j - theta)
/// Phasebooks are optimized per (mask, r_max, P) on the same corpus when
/// requested, matching how the oracle bounds are read.
OracleStudyResult run_oracle_study(const std::vector<MixtureRecord>& corpus,
                                   const StftConfig& stft_config,
                                   const OracleStudyOptions& options, int jobs = 1);

void write_oracle_study_csv(const std::string& path, const OracleStudyResult& result);

// --- command entry points (return process exit codes) ---------------------------------

int cmd_synth(const ConfigFile& config, const CommonOptions& common);
int cmd_oracle_study(const ConfigFile& config, const CommonOptions& common);
int cmd_optimize_codebook(const ConfigFile& config, const CommonOptions& common);
int cmd_fit(const ConfigFile& config, const CommonOptions& common);
int cmd_eval(const ConfigFile& config, const CommonOptions& common);
int cmd_gradcheck(const ConfigFile& config, const CommonOptions& common);

/// Tiny two-source random problem (8 frames x 9 bins, 16-point DFT) with
/// seeded random logits; shared by the gradcheck command and the test suites.
std::pair<GradProblem, std::vector<LogitHeads>> make_random_grad_problem(HeadKind head,
                                                                         uint64_t seed,
                                                                         bool train_atoms);

struct MisiCmdArgs {
  std::string mixture_wav;
  std::vector<std::string> magnitude_files;  // binary matrix files, one per source
  std::vector<std::string> phase_files;      // only with init == provided
  int iterations = 5;
  std::string init = "noisy";  // noisy | zero | provided
  bool redistribute_at_k0 = false;
};

int cmd_misi(const ConfigFile& config, const CommonOptions& common, const MisiCmdArgs& args);

}  // namespace maskbook
