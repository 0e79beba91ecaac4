// maskbook/losses.hpp

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
#include "maskbook/misi.hpp"
#include "maskbook/oracle_masks.hpp"

namespace maskbook {

/// Every regression loss takes either the L1 norm or the squared L2 norm of
/// its per-bin (or per-sample) residual. Reductions are sums, not means.
enum class Norm { L1, L2Sq };

Norm norm_from_string(std::string_view name);
const char* to_string(Norm norm);

inline double norm_term(double residual, Norm norm) {
  return norm == Norm::L1 ? std::fabs(residual) : residual * residual;
}

/// One multiplication convention shared by every complex loss path, so that
/// e.g. the expected CSA loss under one-hot probabilities reproduces the CSA
/// loss bit for bit.
inline cdouble cmul1(cdouble a, cdouble b) {
  return cdouble(a.real() * b.real() - a.imag() * b.imag(),
                 a.real() * b.imag() + a.imag() * b.real());
}

inline double cabs1(cdouble z) {
  return std::sqrt(z.real() * z.real() + z.imag() * z.imag());
}

inline double cnorm_term(cdouble residual, Norm norm) {
  const double sq = residual.real() * residual.real() + residual.imag() * residual.imag();
  return norm == Norm::L1 ? std::sqrt(sq) : sq;
}

/// |c * x - s| (or its square) for one bin; the CSA and expected-CSA paths
/// both go through here.
inline double csa_bin_term(cdouble c, cdouble x, cdouble s, Norm norm) {
  return cnorm_term(cmul1(c, x) - s, norm);
}

// --- reference indices -------------------------------------------------------

/// Optimal magbook index per bin given the phase-mask values `theta` that
/// will be paired with the magnitude: argmin_i |m_i - Re((s/x) e^{-j theta})|
/// with lowest-index tie-break. Zero-mixture bins pick the atom closest to 0.
Mat<int32_t> magnitude_ref_index(const Magbook& book, const Spectrogram& source,
                                 const Spectrogram& mixture, const RealMat& theta);

/// Which phase mask the magnitude cross-entropy references assume. The
/// default pairs them with the fixed oracle phase difference.
enum class CeRefPhasePolicy { Zero, FixedReference, CurrentEstimate };

RealMat ce_reference_phase(CeRefPhasePolicy policy, const Spectrogram& source,
                           const Spectrogram& mixture,
                           const RealMat* current_estimate = nullptr);

/// Nearest combook atom to the ratio mask s/x per bin (L2 distance).
Mat<int32_t> combook_ref_index(const Combook& book, const Spectrogram& source,
                               const Spectrogram& mixture);

/// -sum log p(reference atom). Probabilities below 1e-30 are floored before
/// the log; *floored_bins counts how often.
double cross_entropy_loss(const MaskProbabilities& probs, const Mat<int32_t>& ref_indices,
                          int* floored_bins = nullptr);

// --- T-F domain losses ---------------------------------------------------------

enum class SpectralLossKind { MA, MSA, PSA };

/// MA:  sum |m_out - m_ref|                (m_ref defaults to unclamped IAM)
/// MSA: sum |m_out |x| - |s||
/// PSA: sum |m_out |x| - |s| cos(theta)|,  theta = angle(s/x)
double spectral_loss(SpectralLossKind kind, Norm norm, const RealMat& m_out,
                     const Spectrogram& mixture, const Spectrogram& source,
                     const RealMat* m_ref = nullptr);

enum class ComplexLossKind { CMA, CSA };

/// CMA: sum |c_out - c_ref|                (c_ref defaults to s/x, guarded)
/// CSA: sum |c_out x - s|
double complex_loss(ComplexLossKind kind, Norm norm, const CplxMat& c_out,
                    const Spectrogram& mixture, const Spectrogram& source,
                    const CplxMat* c_ref = nullptr);

/// Exact marginalization of the CSA loss over independent magbook/phasebook
/// softmaxes: sum_{t,f} sum_i sum_j p(m_i) p(theta_j) |m_i e^{j theta_j} x - s|.
double expected_csa_loss(const MaskProbabilities& mag_probs,
                         const MaskProbabilities& phase_probs, const Magbook& magbook,
                         const Phasebook& phasebook, const Spectrogram& mixture,
                         const Spectrogram& source, Norm norm = Norm::L1);

// --- time-domain losses -----------------------------------------------------------

/// Waveform approximation with zero MISI iterations: sum_l |istft(c .* X) - s|.
double wa_loss(const CplxMat& mask, const Spectrogram& mixture_spec, const Waveform& reference,
               Norm norm);

struct WaMisiResult {
  double total = 0.0;
  std::vector<double> per_source;
  std::vector<Waveform> estimates;
};

/// Waveform approximation through K unfolded MISI iterations (joint over all
/// sources). K = 0 reduces to plain masked-iSTFT reconstruction per source.
WaMisiResult wa_misi_loss(const std::vector<CplxMat>& masks, const Spectrogram& mixture_spec,
                          const Waveform& mixture, const std::vector<Waveform>& references,
                          Norm norm, int misi_iters, bool redistribute_at_k0 = false);

// --- deep clustering / chimera -------------------------------------------------------

/// Whitened k-means loss D - tr((V^T V)^-1 V^T Y (Y^T Y)^-1 Y^T V) with
/// embeddings V (TF x D) and one-hot labels Y (TF x S). Rank-deficient V^T V
/// gets a 1e-9 ridge; *ridged reports whether it was needed.
double dc_whitened_kmeans_loss(const RealMat& embeddings, const RealMat& labels,
                               bool* ridged = nullptr);

/// alpha * dc + (1 - alpha) * mi, 0 <= alpha <= 1 (chimera-style multitask).
double chimera_loss(double dc_loss, double mi_loss, double alpha = 0.975);

// --- permutation-free wrapping ----------------------------------------------------------

struct PermutationResult {
  double loss = 0.0;
  std::vector<int> permutation;  // estimate index assigned to each reference
};

/// Minimum over all assignments of estimates to references of the summed
/// pair losses; exhaustive, source counts up to 4.
PermutationResult permutation_min(int sources,
                                  const std::function<double(int est, int ref)>& pair_loss);

}  // namespace maskbook
