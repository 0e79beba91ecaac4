// src/metrics.cpp

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

#include "maskbook/metrics.hpp"

#include <numeric>

#include "maskbook/kernels.hpp"

namespace maskbook {

double si_sdr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  require(estimate.size() == reference.size(), "si_sdr: length mismatch");
  require(!reference.empty(), "si_sdr: empty signals");
  const auto& ops = kernels::active();
  const size_t n = reference.size();

  const double ref_energy = ops.sumsq(reference.data(), n);
  require(ref_energy > 0.0, "si_sdr: zero reference");

  const double alpha = ops.dot(estimate.data(), reference.data(), n) / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;

  double residual = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = alpha * reference[i] - estimate[i];
    residual += d * d;
  }

  if (target_energy <= 0.0) return -kSiSdrCapDb;
  if (residual <= 1e-24 * target_energy) return kSiSdrCapDb;
  const double value = 10.0 * std::log10(target_energy / residual);
  return std::clamp(value, -kSiSdrCapDb, kSiSdrCapDb);
}

double si_sdr(const Waveform& estimate, const Waveform& reference) {
  return si_sdr(estimate.samples, reference.samples);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / values.size();
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  if (values.size() % 2 == 1) return values[mid];
  const double upper = values[mid];
  std::nth_element(values.begin(), values.begin() + mid - 1, values.end());
  return 0.5 * (values[mid - 1] + upper);
}

namespace {

void permutations_of(int n, std::vector<std::vector<int>>& out) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
}

}  // namespace

EvalReport evaluate_corpus(const std::vector<std::vector<Waveform>>& estimates,
                           const std::vector<std::vector<Waveform>>& references,
                           const std::vector<Waveform>& mixtures,
                           const std::vector<std::string>& ids) {
  require(estimates.size() == references.size() && estimates.size() == mixtures.size(),
          "evaluate_corpus: list length mismatch");
  require(ids.empty() || ids.size() == estimates.size(), "evaluate_corpus: id list mismatch");

  EvalReport report;
  std::vector<double> all_sisdr, all_sisdri;

  for (size_t u = 0; u < estimates.size(); ++u) {
    const auto& est = estimates[u];
    const auto& ref = references[u];
    require(est.size() == ref.size(), "evaluate_corpus: source count mismatch");
    const int sources = static_cast<int>(ref.size());
    require(sources >= 1 && sources <= 4, "evaluate_corpus: supports 1..4 sources");

    // Pairwise scores, then exhaustive assignment.
    Mat<double> pair_sisdr(sources, sources);
    for (int e = 0; e < sources; ++e)
      for (int r = 0; r < sources; ++r) pair_sisdr(e, r) = si_sdr(est[e], ref[r]);

    std::vector<std::vector<int>> perms;
    permutations_of(sources, perms);
    int best = 0;
    double best_total = -1e300;
    for (int p = 0; p < static_cast<int>(perms.size()); ++p) {
      double total = 0.0;
      for (int r = 0; r < sources; ++r) total += pair_sisdr(perms[p][r], r);
      if (total > best_total) {
        best_total = total;
        best = p;
      }
    }

    UtteranceEval eval;
    eval.id = ids.empty() ? "utt" + std::to_string(u) : ids[u];
    eval.permutation = perms[best];
    for (int r = 0; r < sources; ++r) {
      const double value = pair_sisdr(perms[best][r], r);
      const double baseline = si_sdr(mixtures[u], ref[r]);
      eval.sisdr_db.push_back(value);
      eval.sisdri_db.push_back(value - baseline);
      all_sisdr.push_back(value);
      all_sisdri.push_back(value - baseline);
    }
    report.utterances.push_back(std::move(eval));
  }

  report.mean_sisdr_db = mean(all_sisdr);
  report.median_sisdr_db = median(all_sisdr);
  report.mean_sisdri_db = mean(all_sisdri);
  report.median_sisdri_db = median(all_sisdri);
  return report;
}

}  // namespace maskbook
