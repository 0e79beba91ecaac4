// maskbook/metrics.hpp

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

/// Numerically perfect estimates cap at +120 dB, empty/degenerate ones at
/// -120 dB, so CSV aggregation never sees infinities.
inline constexpr double kSiSdrCapDb = 120.0;

/// Scale-invariant SDR in dB: project the estimate onto the reference
/// (alpha = <e, r> / ||r||^2) and compare the projection energy with the
/// residual energy.
double si_sdr(const std::vector<double>& estimate, const std::vector<double>& reference);
double si_sdr(const Waveform& estimate, const Waveform& reference);

struct UtteranceEval {
  std::string id;
  std::vector<double> sisdr_db;   // per source, under the chosen permutation
  std::vector<double> sisdri_db;  // improvement over the mixture baseline
  std::vector<int> permutation;   // estimate index assigned to each reference
};

struct EvalReport {
  std::vector<UtteranceEval> utterances;
  double mean_sisdr_db = 0.0;
  double median_sisdr_db = 0.0;
  double mean_sisdri_db = 0.0;
  double median_sisdri_db = 0.0;
};

/// Per utterance, score under the source permutation maximizing total SI-SDR
/// (exhaustive, source counts up to 4). Improvement is relative to scoring
/// the raw mixture against each reference.
EvalReport evaluate_corpus(const std::vector<std::vector<Waveform>>& estimates,
                           const std::vector<std::vector<Waveform>>& references,
                           const std::vector<Waveform>& mixtures,
                           const std::vector<std::string>& ids = {});

double mean(const std::vector<double>& values);
double median(std::vector<double> values);

}  // namespace maskbook
