// maskbook/codebook_opt.hpp

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

#include "maskbook/codebook.hpp"

namespace maskbook {

// Offline codebook optimization. Phasebooks are fit with an EM-style loop on
// the weighted squared masking error
//     sum_bins | m e^{j theta^(j)} x - s |^2,
// magbook/phasebook pairs with four-way coordinate descent, and combooks with
// weighted k-means on the (clamped) complex ratio points s/x.

/// Objective value after every update step, starting from the initial
/// assignment. Non-increasing by construction; the acceptance suite asserts
/// it.
struct OptReport {
  std::vector<double> trace;
  std::vector<double> per_epoch;
  /// Atom values at the end of each epoch (complex atoms flattened re, im).
  std::vector<std::vector<double>> atoms_per_epoch;
  int epochs_run = 0;
  bool converged = false;
};

/// Per-bin quantities flattened over a corpus: z = s * conj(x) carries both
/// the phase difference and the |s||x| scale, weight = |x|^2, mag is the
/// magnitude-mask estimate paired with the phasebook, s2 = |s|^2 completes
/// the objective, ratio holds clamped s/x points for combook k-means.
struct MaskTrainingSet {
  std::vector<double> z_re, z_im;
  std::vector<double> weight;
  std::vector<double> mag;
  std::vector<double> s2;
  std::vector<cdouble> ratio;

  size_t size() const { return weight.size(); }
};

/// Build the training set from source/mixture spectrogram pairs. When
/// `magnitudes` is null the oracle IAM (clamped to mag_clamp, infinity for
/// unclamped) supplies the per-bin magnitude estimate. ratio_clamp truncates
/// the combook points.
MaskTrainingSet make_training_set(const std::vector<Spectrogram>& sources,
                                  const std::vector<Spectrogram>& mixtures,
                                  const std::vector<RealMat>* magnitudes = nullptr,
                                  double mag_clamp = kUnboundedRmax,
                                  double ratio_clamp = 2.0);

/// Uniform partition of the circle including 0: {2 pi p / P}, wrapped into
/// (-pi, pi].
Phasebook uniform_phasebook(int size);

/// {0} plus C-1 points on the unit circle (a manual-initialization
/// convention; the reference is k-means from data).
Combook uniform_combook(int size);

Phasebook random_phasebook(const MaskTrainingSet& data, int size, uint64_t seed);
Magbook random_magbook(const MaskTrainingSet& data, int size, uint64_t seed);
Combook random_combook(const MaskTrainingSet& data, int size, uint64_t seed);

/// Per-bin best atom: argmax_j cos(theta_j - angle(s/x)), equivalently the
/// distance-minimizing atom for any fixed nonnegative magnitude. Lowest index
/// wins ties; zero-mixture bins get index 0.
Mat<int32_t> phasebook_assign(const Phasebook& book, const Spectrogram& source,
                              const Spectrogram& mixture);

/// M-step update for one utterance: every used atom moves to
/// angle(sum_assigned m |x|^2 s/x); unused atoms stay.
Phasebook phasebook_update(const Phasebook& book, const Mat<int32_t>& assignments,
                           const Spectrogram& source, const Spectrogram& mixture,
                           const RealMat& magnitude_estimate);

std::pair<Phasebook, OptReport> optimize_phasebook(const Phasebook& init,
                                                   const MaskTrainingSet& data, int epochs = 40);

struct JointBooks {
  Magbook magbook;
  Phasebook phasebook;
};

/// Coordinate descent looping over magbook values, magbook assignments,
/// phasebook assignments, phasebook values (in that order) each epoch.
std::pair<JointBooks, OptReport> optimize_magbook_phasebook(const Magbook& init_mag,
                                                            const Phasebook& init_phase,
                                                            const MaskTrainingSet& data,
                                                            int epochs = 40);

/// Weighted k-means on the clamped ratio points; empty clusters re-seed to
/// the farthest point.
std::pair<Combook, OptReport> optimize_combook(const Combook& init, const MaskTrainingSet& data,
                                               int epochs = 40);

/// Masking-error objective of a phasebook on the training set, with the
/// per-bin minimum over atoms built in.
double phasebook_objective(const Phasebook& book, const MaskTrainingSet& data);

}  // namespace maskbook
