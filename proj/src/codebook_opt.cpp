// src/codebook_opt.cpp

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

#include "maskbook/codebook_opt.hpp"

#include <numeric>

namespace maskbook {

MaskTrainingSet make_training_set(const std::vector<Spectrogram>& sources,
                                  const std::vector<Spectrogram>& mixtures,
                                  const std::vector<RealMat>* magnitudes, double mag_clamp,
                                  double ratio_clamp) {
  require(!sources.empty(), "make_training_set: empty corpus");
  require(sources.size() == mixtures.size(), "make_training_set: corpus size mismatch");
  if (magnitudes)
    require(magnitudes->size() == sources.size(), "make_training_set: magnitude count mismatch");
  require(mag_clamp > 0.0 && ratio_clamp > 0.0, "make_training_set: clamps must be positive");

  MaskTrainingSet data;
  for (size_t u = 0; u < sources.size(); ++u) {
    const auto& s_spec = sources[u].bins;
    const auto& x_spec = mixtures[u].bins;
    require(s_spec.same_shape(x_spec), "make_training_set: shape mismatch in utterance");
    if (magnitudes)
      require((*magnitudes)[u].rows == x_spec.rows && (*magnitudes)[u].cols == x_spec.cols,
              "make_training_set: magnitude shape mismatch");
    for (size_t b = 0; b < x_spec.size(); ++b) {
      const cdouble s = s_spec.data[b];
      const cdouble x = x_spec.data[b];
      const cdouble z = s * std::conj(x);
      const double w = std::norm(x);
      const bool live = std::abs(x) >= kZeroMixtureGuard;
      data.z_re.push_back(z.real());
      data.z_im.push_back(z.imag());
      data.weight.push_back(w);
      data.s2.push_back(std::norm(s));
      double m = 0.0;
      if (magnitudes) {
        m = (*magnitudes)[u].data[b];
      } else if (live) {
        m = std::min(std::abs(s) / std::abs(x), mag_clamp);
      }
      data.mag.push_back(m);
      cdouble ratio = live ? s / x : cdouble(0.0, 0.0);
      const double rmag = std::abs(ratio);
      if (rmag > ratio_clamp) ratio *= ratio_clamp / rmag;
      data.ratio.push_back(ratio);
    }
  }
  return data;
}

Phasebook uniform_phasebook(int size) {
  require(size >= 2, "uniform_phasebook: size must be >= 2");
  Phasebook book;
  book.atoms.resize(size);
  for (int p = 0; p < size; ++p) book.atoms[p] = wrap_angle(2.0 * kPi * p / size);
  return book;
}

Combook uniform_combook(int size) {
  require(size >= 2, "uniform_combook: size must be >= 2");
  Combook book;
  book.atoms.emplace_back(0.0, 0.0);
  for (int p = 0; p + 1 < size; ++p) {
    const double angle = 2.0 * kPi * p / (size - 1);
    book.atoms.emplace_back(std::cos(angle), std::sin(angle));
  }
  return book;
}

namespace {

std::vector<size_t> live_bins(const MaskTrainingSet& data) {
  std::vector<size_t> indices;
  for (size_t b = 0; b < data.size(); ++b)
    if (data.weight[b] > 0.0) indices.push_back(b);
  require(!indices.empty(), "codebook_opt: training set has no non-silent bins");
  return indices;
}

}  // namespace

Phasebook random_phasebook(const MaskTrainingSet& data, int size, uint64_t seed) {
  require(size >= 2, "random_phasebook: size must be >= 2");
  const auto live = live_bins(data);
  Rng rng(seed);
  Phasebook book;
  int attempts = 0;
  while (book.size() < size) {
    const size_t b = live[rng.uniform_int(0, static_cast<int>(live.size()) - 1)];
    const double angle = std::atan2(data.z_im[b], data.z_re[b]);
    bool distinct = true;
    for (double atom : book.atoms)
      if (std::abs(wrap_angle(atom - angle)) < 1e-6) distinct = false;
    if (distinct) book.atoms.push_back(angle);
    require(++attempts < 100000, "random_phasebook: could not draw distinct atoms");
  }
  return book;
}

Magbook random_magbook(const MaskTrainingSet& data, int size, uint64_t seed) {
  require(size >= 2, "random_magbook: size must be >= 2");
  const auto live = live_bins(data);
  Rng rng(seed);
  Magbook book;
  int attempts = 0;
  while (book.size() < size) {
    const size_t b = live[rng.uniform_int(0, static_cast<int>(live.size()) - 1)];
    const double value = std::min(std::abs(data.ratio[b]), 4.0);
    bool distinct = true;
    for (double atom : book.atoms)
      if (std::abs(atom - value) < 1e-9) distinct = false;
    if (distinct) book.atoms.push_back(value);
    require(++attempts < 100000, "random_magbook: could not draw distinct atoms");
  }
  return book;
}

Combook random_combook(const MaskTrainingSet& data, int size, uint64_t seed) {
  require(size >= 2, "random_combook: size must be >= 2");
  const auto live = live_bins(data);
  Rng rng(seed);
  Combook book;
  int attempts = 0;
  while (book.size() < size) {
    const size_t b = live[rng.uniform_int(0, static_cast<int>(live.size()) - 1)];
    const cdouble value = data.ratio[b];
    bool distinct = true;
    for (const cdouble& atom : book.atoms)
      if (std::abs(atom - value) < 1e-9) distinct = false;
    if (distinct) book.atoms.push_back(value);
    require(++attempts < 100000, "random_combook: could not draw distinct atoms");
  }
  return book;
}

namespace {

struct AtomTrig {
  std::vector<double> cos_atoms;
  std::vector<double> sin_atoms;

  explicit AtomTrig(const Phasebook& book) {
    cos_atoms.resize(book.size());
    sin_atoms.resize(book.size());
    for (int j = 0; j < book.size(); ++j) {
      cos_atoms[j] = std::cos(book.atoms[j]);
      sin_atoms[j] = std::sin(book.atoms[j]);
    }
  }
};

// Per-bin squared masking error |m e^{j theta} x - s|^2 expressed with the
// training-set quantities: m^2 w + |s|^2 - 2 m (cos(theta) z_re + sin(theta)
// z_im). Exact at silent bins too (reduces to |s|^2).
inline double bin_error(double m, double cos_t, double sin_t, double w, double s2, double z_re,
                        double z_im) {
  return m * m * w + s2 - 2.0 * m * (cos_t * z_re + sin_t * z_im);
}

// argmax_j sign(m) * (cos_j * z_re + sin_j * z_im), lowest index on ties.
inline int assign_phase_bin(double m, double z_re, double z_im, const AtomTrig& trig) {
  const int count = static_cast<int>(trig.cos_atoms.size());
  int best = 0;
  double best_score = m * (trig.cos_atoms[0] * z_re + trig.sin_atoms[0] * z_im);
  for (int j = 1; j < count; ++j) {
    const double score = m * (trig.cos_atoms[j] * z_re + trig.sin_atoms[j] * z_im);
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

double objective_with_assignments(const MaskTrainingSet& data, const std::vector<double>& mags,
                                  const std::vector<int32_t>& phase_idx, const AtomTrig& trig) {
  double total = 0.0;
  for (size_t b = 0; b < data.size(); ++b) {
    const int j = phase_idx[b];
    total += bin_error(mags[b], trig.cos_atoms[j], trig.sin_atoms[j], data.weight[b], data.s2[b],
                       data.z_re[b], data.z_im[b]);
  }
  return total;
}

void finalize_report(OptReport& report) {
  report.converged = false;
  if (report.per_epoch.size() >= 2) {
    const double last = report.per_epoch.back();
    const double prev = report.per_epoch[report.per_epoch.size() - 2];
    report.converged = std::abs(prev - last) <= 1e-10 * (1.0 + std::abs(last));
  }
}

}  // namespace

Mat<int32_t> phasebook_assign(const Phasebook& book, const Spectrogram& source,
                              const Spectrogram& mixture) {
  require(book.size() >= 1, "phasebook_assign: empty codebook");
  require(source.bins.same_shape(mixture.bins), "phasebook_assign: shape mismatch");
  const AtomTrig trig(book);
  Mat<int32_t> assignments(mixture.bins.rows, mixture.bins.cols);
  for (size_t b = 0; b < mixture.bins.size(); ++b) {
    const cdouble z = source.bins.data[b] * std::conj(mixture.bins.data[b]);
    assignments.data[b] = assign_phase_bin(1.0, z.real(), z.imag(), trig);
  }
  return assignments;
}

Phasebook phasebook_update(const Phasebook& book, const Mat<int32_t>& assignments,
                           const Spectrogram& source, const Spectrogram& mixture,
                           const RealMat& magnitude_estimate) {
  require(source.bins.same_shape(mixture.bins), "phasebook_update: shape mismatch");
  require(assignments.rows == mixture.bins.rows && assignments.cols == mixture.bins.cols,
          "phasebook_update: assignment shape mismatch");
  require(magnitude_estimate.rows == mixture.bins.rows &&
              magnitude_estimate.cols == mixture.bins.cols,
          "phasebook_update: magnitude shape mismatch");

  std::vector<cdouble> sums(book.size(), cdouble(0.0, 0.0));
  for (size_t b = 0; b < mixture.bins.size(); ++b) {
    const int32_t j = assignments.data[b];
    require(j >= 0 && j < book.size(), "phasebook_update: assignment out of range");
    // m |x|^2 (s/x) == m s conj(x)
    sums[j] += magnitude_estimate.data[b] *
               (source.bins.data[b] * std::conj(mixture.bins.data[b]));
  }
  Phasebook updated = book;
  for (int j = 0; j < book.size(); ++j) {
    if (sums[j].real() != 0.0 || sums[j].imag() != 0.0)
      updated.atoms[j] = std::atan2(sums[j].imag(), sums[j].real());
  }
  return updated;
}

double phasebook_objective(const Phasebook& book, const MaskTrainingSet& data) {
  const AtomTrig trig(book);
  double total = 0.0;
  for (size_t b = 0; b < data.size(); ++b) {
    const int j = assign_phase_bin(data.mag[b], data.z_re[b], data.z_im[b], trig);
    total += bin_error(data.mag[b], trig.cos_atoms[j], trig.sin_atoms[j], data.weight[b],
                       data.s2[b], data.z_re[b], data.z_im[b]);
  }
  return total;
}

std::pair<Phasebook, OptReport> optimize_phasebook(const Phasebook& init,
                                                   const MaskTrainingSet& data, int epochs) {
  validate(init);
  require(epochs >= 1, "optimize_phasebook: epochs must be >= 1");
  require(data.size() > 0, "optimize_phasebook: empty training set");

  Phasebook book = init;
  OptReport report;
  std::vector<int32_t> assignments(data.size(), 0);

  AtomTrig trig(book);
  auto e_step = [&] {
    for (size_t b = 0; b < data.size(); ++b)
      assignments[b] = assign_phase_bin(data.mag[b], data.z_re[b], data.z_im[b], trig);
  };

  e_step();
  report.trace.push_back(objective_with_assignments(data, data.mag, assignments, trig));

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // M-step: every used atom moves to the angle of its weighted resultant.
    std::vector<cdouble> sums(book.size(), cdouble(0.0, 0.0));
    for (size_t b = 0; b < data.size(); ++b)
      sums[assignments[b]] += data.mag[b] * cdouble(data.z_re[b], data.z_im[b]);
    for (int j = 0; j < book.size(); ++j) {
      if (sums[j].real() != 0.0 || sums[j].imag() != 0.0)
        book.atoms[j] = std::atan2(sums[j].imag(), sums[j].real());
    }
    trig = AtomTrig(book);
    report.trace.push_back(objective_with_assignments(data, data.mag, assignments, trig));

    e_step();
    report.trace.push_back(objective_with_assignments(data, data.mag, assignments, trig));
    report.per_epoch.push_back(report.trace.back());
    report.atoms_per_epoch.push_back(book.atoms);
    ++report.epochs_run;
  }
  finalize_report(report);
  return {book, report};
}

std::pair<JointBooks, OptReport> optimize_magbook_phasebook(const Magbook& init_mag,
                                                            const Phasebook& init_phase,
                                                            const MaskTrainingSet& data,
                                                            int epochs) {
  validate(init_mag);
  validate(init_phase);
  require(epochs >= 1, "optimize_magbook_phasebook: epochs must be >= 1");
  require(data.size() > 0, "optimize_magbook_phasebook: empty training set");

  Magbook magbook = init_mag;
  Phasebook phasebook = init_phase;
  AtomTrig trig(phasebook);
  const size_t n = data.size();

  std::vector<int32_t> phase_idx(n, 0);
  std::vector<int32_t> mag_idx(n, 0);

  // rho = Re((s/x) e^{-j theta}) for the currently assigned phase atom.
  auto rho_for = [&](size_t b, int j) {
    if (data.weight[b] < kZeroMixtureGuard * kZeroMixtureGuard) return 0.0;
    return (trig.cos_atoms[j] * data.z_re[b] + trig.sin_atoms[j] * data.z_im[b]) / data.weight[b];
  };

  auto assign_mags = [&] {
    for (size_t b = 0; b < n; ++b) {
      const double target = rho_for(b, phase_idx[b]);
      int best = 0;
      double best_dist = std::abs(magbook.atoms[0] - target);
      for (int i = 1; i < magbook.size(); ++i) {
        const double dist = std::abs(magbook.atoms[i] - target);
        if (dist < best_dist) {
          best_dist = dist;
          best = i;
        }
      }
      mag_idx[b] = best;
    }
  };

  auto current_objective = [&] {
    double total = 0.0;
    for (size_t b = 0; b < n; ++b) {
      const int j = phase_idx[b];
      total += bin_error(magbook.atoms[mag_idx[b]], trig.cos_atoms[j], trig.sin_atoms[j],
                         data.weight[b], data.s2[b], data.z_re[b], data.z_im[b]);
    }
    return total;
  };

  OptReport report;
  // Bootstrap: nonnegative-magnitude phase assignment, then magnitudes.
  for (size_t b = 0; b < n; ++b)
    phase_idx[b] = assign_phase_bin(1.0, data.z_re[b], data.z_im[b], trig);
  assign_mags();
  report.trace.push_back(current_objective());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    // 1. magbook values: weighted mean of rho per cluster.
    {
      std::vector<double> num(magbook.size(), 0.0), den(magbook.size(), 0.0);
      for (size_t b = 0; b < n; ++b) {
        const int j = phase_idx[b];
        num[mag_idx[b]] += trig.cos_atoms[j] * data.z_re[b] + trig.sin_atoms[j] * data.z_im[b];
        den[mag_idx[b]] += data.weight[b];
      }
      for (int i = 0; i < magbook.size(); ++i)
        if (den[i] > 0.0) magbook.atoms[i] = num[i] / den[i];
    }
    report.trace.push_back(current_objective());

    // 2. magbook assignments.
    assign_mags();
    report.trace.push_back(current_objective());

    // 3. phasebook assignments (sign-aware: negative magnitudes flip the
    //    preferred direction).
    for (size_t b = 0; b < n; ++b)
      phase_idx[b] =
          assign_phase_bin(magbook.atoms[mag_idx[b]], data.z_re[b], data.z_im[b], trig);
    report.trace.push_back(current_objective());

    // 4. phasebook values.
    {
      std::vector<cdouble> sums(phasebook.size(), cdouble(0.0, 0.0));
      for (size_t b = 0; b < n; ++b)
        sums[phase_idx[b]] +=
            magbook.atoms[mag_idx[b]] * cdouble(data.z_re[b], data.z_im[b]);
      for (int j = 0; j < phasebook.size(); ++j) {
        if (sums[j].real() != 0.0 || sums[j].imag() != 0.0)
          phasebook.atoms[j] = std::atan2(sums[j].imag(), sums[j].real());
      }
      trig = AtomTrig(phasebook);
    }
    report.trace.push_back(current_objective());
    report.per_epoch.push_back(report.trace.back());
    std::vector<double> snapshot = magbook.atoms;
    snapshot.insert(snapshot.end(), phasebook.atoms.begin(), phasebook.atoms.end());
    report.atoms_per_epoch.push_back(std::move(snapshot));
    ++report.epochs_run;
  }
  finalize_report(report);
  return {JointBooks{magbook, phasebook}, report};
}

std::pair<Combook, OptReport> optimize_combook(const Combook& init, const MaskTrainingSet& data,
                                               int epochs) {
  // C == 1 is allowed here (plain weighted centroid); full books get the
  // usual distinctness checks.
  require(init.size() >= 1, "optimize_combook: empty codebook");
  if (init.size() >= 2) validate(init);
  require(epochs >= 1, "optimize_combook: epochs must be >= 1");
  require(data.size() > 0, "optimize_combook: empty training set");

  Combook book = init;
  const size_t n = data.size();
  std::vector<int32_t> assignments(n, 0);

  auto e_step = [&] {
    for (size_t b = 0; b < n; ++b) {
      int best = 0;
      double best_dist = std::norm(data.ratio[b] - book.atoms[0]);
      for (int k = 1; k < book.size(); ++k) {
        const double dist = std::norm(data.ratio[b] - book.atoms[k]);
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      assignments[b] = best;
    }
  };

  auto objective = [&] {
    double total = 0.0;
    for (size_t b = 0; b < n; ++b)
      total += data.weight[b] * std::norm(data.ratio[b] - book.atoms[assignments[b]]);
    return total;
  };

  OptReport report;
  e_step();
  report.trace.push_back(objective());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<cdouble> sums(book.size(), cdouble(0.0, 0.0));
    std::vector<double> weights(book.size(), 0.0);
    for (size_t b = 0; b < n; ++b) {
      sums[assignments[b]] += data.weight[b] * data.ratio[b];
      weights[assignments[b]] += data.weight[b];
    }
    std::vector<char> used(n, 0);
    for (int k = 0; k < book.size(); ++k) {
      if (weights[k] > 0.0) {
        book.atoms[k] = sums[k] / weights[k];
      } else {
        // Re-seed an empty cluster to the (unclaimed) farthest point.
        size_t farthest = 0;
        double worst = -1.0;
        for (size_t b = 0; b < n; ++b) {
          if (used[b]) continue;
          const double dist = data.weight[b] * std::norm(data.ratio[b] - book.atoms[assignments[b]]);
          if (dist > worst) {
            worst = dist;
            farthest = b;
          }
        }
        used[farthest] = 1;
        book.atoms[k] = data.ratio[farthest];
      }
    }
    report.trace.push_back(objective());

    e_step();
    report.trace.push_back(objective());
    report.per_epoch.push_back(report.trace.back());
    std::vector<double> snapshot;
    for (const cdouble& atom : book.atoms) {
      snapshot.push_back(atom.real());
      snapshot.push_back(atom.imag());
    }
    report.atoms_per_epoch.push_back(std::move(snapshot));
    ++report.epochs_run;
  }
  finalize_report(report);
  return {book, report};
}

}  // namespace maskbook
