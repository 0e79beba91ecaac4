// src/losses.cpp

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

#include "maskbook/losses.hpp"

#include <numeric>

#include "maskbook/kernels.hpp"

namespace maskbook {

Norm norm_from_string(std::string_view name) {
  if (name == "l1" || name == "L1") return Norm::L1;
  if (name == "l2sq" || name == "L2sq" || name == "l2" || name == "L2") return Norm::L2Sq;
  fail("unknown norm: " + std::string(name));
}

const char* to_string(Norm norm) { return norm == Norm::L1 ? "l1" : "l2sq"; }

Mat<int32_t> magnitude_ref_index(const Magbook& book, const Spectrogram& source,
                                 const Spectrogram& mixture, const RealMat& theta) {
  require(book.size() >= 1, "magnitude_ref_index: empty magbook");
  require(source.bins.same_shape(mixture.bins), "magnitude_ref_index: shape mismatch");
  require(theta.rows == mixture.bins.rows && theta.cols == mixture.bins.cols,
          "magnitude_ref_index: theta shape mismatch");

  Mat<int32_t> refs(theta.rows, theta.cols);
  for (int t = 0; t < theta.rows; ++t) {
    for (int f = 0; f < theta.cols; ++f) {
      const cdouble x = mixture.bins(t, f);
      double target = 0.0;
      if (std::abs(x) >= kZeroMixtureGuard) {
        // Re((s/x) e^{-j theta}) without the division: Re(s conj(x) e^{-j
        // theta}) / |x|^2.
        const cdouble z = source.bins(t, f) * std::conj(x);
        target = (z.real() * std::cos(theta(t, f)) + z.imag() * std::sin(theta(t, f))) /
                 std::norm(x);
      }
      int best = 0;
      double best_dist = std::abs(book.atoms[0] - target);
      for (int i = 1; i < book.size(); ++i) {
        const double dist = std::abs(book.atoms[i] - target);
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      refs(t, f) = best;
    }
  }
  return refs;
}

RealMat ce_reference_phase(CeRefPhasePolicy policy, const Spectrogram& source,
                           const Spectrogram& mixture, const RealMat* current_estimate) {
  switch (policy) {
    case CeRefPhasePolicy::Zero:
      return RealMat(mixture.frames(), mixture.freq_bins(), 0.0);
    case CeRefPhasePolicy::FixedReference:
      return phase_difference(source, mixture);
    case CeRefPhasePolicy::CurrentEstimate:
      require(current_estimate != nullptr,
              "ce_reference_phase: the current-estimate policy needs an estimate");
      return *current_estimate;
  }
  fail("ce_reference_phase: bad policy");
}

Mat<int32_t> combook_ref_index(const Combook& book, const Spectrogram& source,
                               const Spectrogram& mixture) {
  require(book.size() >= 1, "combook_ref_index: empty combook");
  require(source.bins.same_shape(mixture.bins), "combook_ref_index: shape mismatch");
  Mat<int32_t> refs(mixture.bins.rows, mixture.bins.cols);
  for (int t = 0; t < refs.rows; ++t) {
    for (int f = 0; f < refs.cols; ++f) {
      const cdouble x = mixture.bins(t, f);
      const cdouble ratio =
          std::abs(x) >= kZeroMixtureGuard ? source.bins(t, f) / x : cdouble(0.0, 0.0);
      int best = 0;
      double best_dist = std::norm(book.atoms[0] - ratio);
      for (int k = 1; k < book.size(); ++k) {
        const double dist = std::norm(book.atoms[k] - ratio);
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      refs(t, f) = best;
    }
  }
  return refs;
}

double cross_entropy_loss(const MaskProbabilities& probs, const Mat<int32_t>& ref_indices,
                          int* floored_bins) {
  require(probs.frames == ref_indices.rows && probs.bins == ref_indices.cols,
          "cross_entropy_loss: shape mismatch");
  int floored = 0;
  double loss = 0.0;
  for (int t = 0; t < probs.frames; ++t) {
    for (int f = 0; f < probs.bins; ++f) {
      const int32_t ref = ref_indices(t, f);
      require(ref >= 0 && ref < probs.depth, "cross_entropy_loss: reference index out of range");
      double p = probs.bin(t, f)[ref];
      if (p < 1e-30) {
        p = 1e-30;
        ++floored;
      }
      loss -= std::log(p);
    }
  }
  if (floored_bins) *floored_bins = floored;
  if (floored > 0)
    log_message(LogLevel::Warn,
                "cross_entropy_loss floored " + std::to_string(floored) + " bins");
  return loss;
}

double spectral_loss(SpectralLossKind kind, Norm norm, const RealMat& m_out,
                     const Spectrogram& mixture, const Spectrogram& source,
                     const RealMat* m_ref) {
  require(source.bins.same_shape(mixture.bins), "spectral_loss: S/X shape mismatch");
  require(m_out.rows == mixture.bins.rows && m_out.cols == mixture.bins.cols,
          "spectral_loss: mask shape mismatch");

  RealMat default_ref;
  if (kind == SpectralLossKind::MA && !m_ref) {
    // Default mask-approximation reference: unclamped IAM.
    default_ref = RealMat(m_out.rows, m_out.cols);
    for (size_t i = 0; i < default_ref.size(); ++i) {
      const double ax = std::abs(mixture.bins.data[i]);
      default_ref.data[i] = ax >= kZeroMixtureGuard ? std::abs(source.bins.data[i]) / ax : 0.0;
    }
    m_ref = &default_ref;
  }
  if (m_ref)
    require(m_ref->rows == m_out.rows && m_ref->cols == m_out.cols,
            "spectral_loss: reference shape mismatch");

  double loss = 0.0;
  for (size_t i = 0; i < m_out.size(); ++i) {
    const double ax = std::abs(mixture.bins.data[i]);
    double residual = 0.0;
    switch (kind) {
      case SpectralLossKind::MA:
        residual = m_out.data[i] - m_ref->data[i];
        break;
      case SpectralLossKind::MSA:
        residual = m_out.data[i] * ax - std::abs(source.bins.data[i]);
        break;
      case SpectralLossKind::PSA: {
        // |s| cos(angle(s/x)) == Re(s conj(x)) / |x|, 0 at guarded bins.
        const double target =
            ax >= kZeroMixtureGuard
                ? (source.bins.data[i] * std::conj(mixture.bins.data[i])).real() / ax
                : 0.0;
        residual = m_out.data[i] * ax - target;
        break;
      }
    }
    loss += norm_term(residual, norm);
  }
  return loss;
}

double complex_loss(ComplexLossKind kind, Norm norm, const CplxMat& c_out,
                    const Spectrogram& mixture, const Spectrogram& source,
                    const CplxMat* c_ref) {
  require(source.bins.same_shape(mixture.bins), "complex_loss: S/X shape mismatch");
  require(c_out.rows == mixture.bins.rows && c_out.cols == mixture.bins.cols,
          "complex_loss: mask shape mismatch");

  CplxMat default_ref;
  if (kind == ComplexLossKind::CMA && !c_ref) {
    default_ref = CplxMat(c_out.rows, c_out.cols);
    for (size_t i = 0; i < default_ref.size(); ++i) {
      const cdouble x = mixture.bins.data[i];
      default_ref.data[i] =
          std::abs(x) >= kZeroMixtureGuard ? source.bins.data[i] / x : cdouble(0.0, 0.0);
    }
    c_ref = &default_ref;
  }
  if (c_ref)
    require(c_ref->rows == c_out.rows && c_ref->cols == c_out.cols,
            "complex_loss: reference shape mismatch");

  double loss = 0.0;
  for (size_t i = 0; i < c_out.size(); ++i) {
    if (kind == ComplexLossKind::CMA) {
      loss += cnorm_term(c_out.data[i] - c_ref->data[i], norm);
    } else {
      loss += csa_bin_term(c_out.data[i], mixture.bins.data[i], source.bins.data[i], norm);
    }
  }
  return loss;
}

double expected_csa_loss(const MaskProbabilities& mag_probs,
                         const MaskProbabilities& phase_probs, const Magbook& magbook,
                         const Phasebook& phasebook, const Spectrogram& mixture,
                         const Spectrogram& source, Norm norm) {
  require(mag_probs.frames == mixture.bins.rows && mag_probs.bins == mixture.bins.cols,
          "expected_csa_loss: magnitude probability shape mismatch");
  require(phase_probs.frames == mixture.bins.rows && phase_probs.bins == mixture.bins.cols,
          "expected_csa_loss: phase probability shape mismatch");
  require(mag_probs.depth == magbook.size(), "expected_csa_loss: magbook size mismatch");
  require(phase_probs.depth == phasebook.size(), "expected_csa_loss: phasebook size mismatch");
  require(source.bins.same_shape(mixture.bins), "expected_csa_loss: S/X shape mismatch");

  const int M = magbook.size();
  const int P = phasebook.size();
  std::vector<cdouble> atoms(static_cast<size_t>(M) * P);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < P; ++j)
      atoms[static_cast<size_t>(i) * P + j] = polar_md(magbook.atoms[i], phasebook.atoms[j]);

  double loss = 0.0;
  for (int t = 0; t < mag_probs.frames; ++t) {
    for (int f = 0; f < mag_probs.bins; ++f) {
      const double* pm = mag_probs.bin(t, f);
      const double* pp = phase_probs.bin(t, f);
      const cdouble x = mixture.bins(t, f);
      const cdouble s = source.bins(t, f);
      double bin_loss = 0.0;
      for (int i = 0; i < M; ++i) {
        for (int j = 0; j < P; ++j) {
          const double weight = pm[i] * pp[j];
          bin_loss += weight * csa_bin_term(atoms[static_cast<size_t>(i) * P + j], x, s, norm);
        }
      }
      loss += bin_loss;
    }
  }
  return loss;
}

double wa_loss(const CplxMat& mask, const Spectrogram& mixture_spec, const Waveform& reference,
               Norm norm) {
  require(mask.same_shape(mixture_spec.bins), "wa_loss: mask shape mismatch");
  Spectrogram masked = apply_mask(mask, mixture_spec);
  const Waveform estimate = istft(masked, reference.length());
  const auto& ops = kernels::active();
  if (norm == Norm::L1)
    return ops.sum_abs_diff(estimate.samples.data(), reference.samples.data(),
                            reference.samples.size());
  return ops.sum_sq_diff(estimate.samples.data(), reference.samples.data(),
                         reference.samples.size());
}

WaMisiResult wa_misi_loss(const std::vector<CplxMat>& masks, const Spectrogram& mixture_spec,
                          const Waveform& mixture, const std::vector<Waveform>& references,
                          Norm norm, int misi_iters, bool redistribute_at_k0) {
  require(!masks.empty(), "wa_misi_loss: no masks");
  require(masks.size() == references.size(), "wa_misi_loss: masks/references count mismatch");
  for (const auto& ref : references)
    require(ref.length() == mixture.length(), "wa_misi_loss: reference length mismatch");

  std::vector<Spectrogram> masked;
  masked.reserve(masks.size());
  for (const auto& mask : masks) masked.push_back(apply_mask(mask, mixture_spec));

  MisiOptions options;
  options.iterations = misi_iters;
  options.redistribute_at_k0 = redistribute_at_k0;
  MisiResult reconstructed = misi_from_spectrograms(masked, mixture, options);

  WaMisiResult result;
  result.estimates = std::move(reconstructed.sources);
  const auto& ops = kernels::active();
  for (size_t i = 0; i < result.estimates.size(); ++i) {
    const auto& est = result.estimates[i].samples;
    const auto& ref = references[i].samples;
    const double value = norm == Norm::L1 ? ops.sum_abs_diff(est.data(), ref.data(), ref.size())
                                          : ops.sum_sq_diff(est.data(), ref.data(), ref.size());
    result.per_source.push_back(value);
    result.total += value;
  }
  return result;
}

namespace {

// Dense SPD solve via Cholesky; returns false when the factorization breaks
// down (matrix not positive definite to working precision).
bool cholesky_solve(std::vector<double>& a, int n, std::vector<double>& rhs, int nrhs) {
  for (int j = 0; j < n; ++j) {
    double diag = a[static_cast<size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) {
      const double l = a[static_cast<size_t>(j) * n + k];
      diag -= l * l;
    }
    if (diag <= 0.0 || !std::isfinite(diag)) return false;
    const double root = std::sqrt(diag);
    a[static_cast<size_t>(j) * n + j] = root;
    for (int i = j + 1; i < n; ++i) {
      double value = a[static_cast<size_t>(i) * n + j];
      for (int k = 0; k < j; ++k)
        value -= a[static_cast<size_t>(i) * n + k] * a[static_cast<size_t>(j) * n + k];
      a[static_cast<size_t>(i) * n + j] = value / root;
    }
  }
  // forward then backward substitution, column by column
  for (int c = 0; c < nrhs; ++c) {
    double* b = rhs.data() + static_cast<size_t>(c) * n;
    for (int i = 0; i < n; ++i) {
      double value = b[i];
      for (int k = 0; k < i; ++k) value -= a[static_cast<size_t>(i) * n + k] * b[k];
      b[i] = value / a[static_cast<size_t>(i) * n + i];
    }
    for (int i = n - 1; i >= 0; --i) {
      double value = b[i];
      for (int k = i + 1; k < n; ++k) value -= a[static_cast<size_t>(k) * n + i] * b[k];
      b[i] = value / a[static_cast<size_t>(i) * n + i];
    }
  }
  return true;
}

}  // namespace

double dc_whitened_kmeans_loss(const RealMat& embeddings, const RealMat& labels, bool* ridged) {
  const int tf = embeddings.rows;
  const int dim = embeddings.cols;
  const int sources = labels.cols;
  require(tf == labels.rows, "dc_whitened_kmeans_loss: row count mismatch");
  require(dim >= 1 && sources >= 1, "dc_whitened_kmeans_loss: empty dimensions");
  for (int r = 0; r < tf; ++r) {
    double row_sum = 0.0;
    for (int s = 0; s < sources; ++s) {
      const double y = labels(r, s);
      require(y == 0.0 || y == 1.0, "dc_whitened_kmeans_loss: labels must be one-hot");
      row_sum += y;
    }
    require(row_sum == 1.0, "dc_whitened_kmeans_loss: each label row needs exactly one 1");
  }

  // A = V^T V (dim x dim), B = V^T Y (dim x sources), counts = diag(Y^T Y).
  std::vector<double> a(static_cast<size_t>(dim) * dim, 0.0);
  for (int r = 0; r < tf; ++r)
    for (int i = 0; i < dim; ++i) {
      const double vi = embeddings(r, i);
      for (int j = 0; j <= i; ++j) a[static_cast<size_t>(i) * dim + j] += vi * embeddings(r, j);
    }
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j)
      a[static_cast<size_t>(i) * dim + j] = a[static_cast<size_t>(j) * dim + i];

  std::vector<double> b(static_cast<size_t>(dim) * sources, 0.0);  // column-major per source
  std::vector<double> counts(sources, 0.0);
  for (int r = 0; r < tf; ++r)
    for (int s = 0; s < sources; ++s) {
      if (labels(r, s) == 0.0) continue;
      counts[s] += 1.0;
      for (int i = 0; i < dim; ++i) b[static_cast<size_t>(s) * dim + i] += embeddings(r, i);
    }

  std::vector<double> solved = b;
  std::vector<double> factor = a;
  bool used_ridge = false;
  if (!cholesky_solve(factor, dim, solved, sources)) {
    used_ridge = true;
    factor = a;
    for (int i = 0; i < dim; ++i) factor[static_cast<size_t>(i) * dim + i] += 1e-9;
    solved = b;
    require(cholesky_solve(factor, dim, solved, sources),
            "dc_whitened_kmeans_loss: V^T V singular even with ridge");
    log_message(LogLevel::Warn, "dc_whitened_kmeans_loss: added 1e-9 ridge to V^T V");
  }
  if (ridged) *ridged = used_ridge;

  double trace = 0.0;
  for (int s = 0; s < sources; ++s) {
    if (counts[s] == 0.0) continue;  // empty class contributes nothing
    for (int i = 0; i < dim; ++i)
      trace += solved[static_cast<size_t>(s) * dim + i] * b[static_cast<size_t>(s) * dim + i] /
               counts[s];
  }
  return dim - trace;
}

double chimera_loss(double dc_loss, double mi_loss, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "chimera_loss: alpha must lie in [0, 1]");
  return alpha * dc_loss + (1.0 - alpha) * mi_loss;
}

PermutationResult permutation_min(int sources,
                                  const std::function<double(int est, int ref)>& pair_loss) {
  require(sources >= 1 && sources <= 4, "permutation_min: supports 1..4 sources");
  Mat<double> pair(sources, sources);
  for (int e = 0; e < sources; ++e)
    for (int r = 0; r < sources; ++r) pair(e, r) = pair_loss(e, r);

  std::vector<int> perm(sources);
  std::iota(perm.begin(), perm.end(), 0);
  PermutationResult best;
  best.loss = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int r = 0; r < sources; ++r) total += pair(perm[r], r);
    if (total < best.loss) {
      best.loss = total;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace maskbook
