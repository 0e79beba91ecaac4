// tests/losses_test.cpp

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

#include "maskbook/codebook_opt.hpp"
#include "maskbook/losses.hpp"

using namespace maskbook;

namespace {

struct RandomScene {
  Spectrogram s, n, x;
};

RandomScene random_scene(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  RandomScene scene;
  scene.s.bins = CplxMat(rows, cols);
  scene.n.bins = CplxMat(rows, cols);
  scene.x.bins = CplxMat(rows, cols);
  for (size_t b = 0; b < scene.x.bins.size(); ++b) {
    scene.s.bins.data[b] = cdouble(rng.normal(), rng.normal());
    scene.n.bins.data[b] = cdouble(rng.normal(), rng.normal());
    scene.x.bins.data[b] = scene.s.bins.data[b] + scene.n.bins.data[b];
  }
  return scene;
}

MaskProbabilities one_hot_field(int rows, int cols, int depth,
                                const Mat<int32_t>& indices) {
  MaskProbabilities probs(rows, cols, depth);
  for (int t = 0; t < rows; ++t)
    for (int f = 0; f < cols; ++f) probs.bin(t, f)[indices(t, f)] = 1.0;
  return probs;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("magnitude_ref_index follows the projected ratio") {
  const Magbook book{{0.0, 1.0, 2.0}};
  RandomScene identity = random_scene(2, 3, 1);
  identity.s = identity.x;  // s == x -> rho == 1
  const auto refs = magnitude_ref_index(book, identity.s, identity.x, RealMat(2, 3, 0.0));
  for (const auto idx : refs.data) CHECK(idx == 1);

  RandomScene silent = random_scene(2, 3, 2);
  for (auto& v : silent.s.bins.data) v = cdouble(0.0, 0.0);
  const auto zero_refs = magnitude_ref_index(book, silent.s, silent.x, RealMat(2, 3, 0.0));
  for (const auto idx : zero_refs.data) CHECK(idx == 0);
}

TEST_CASE("magnitude_ref_index minimizes |m e^{j theta} x - s| (brute force oracle)") {
  const Magbook book{{0.0, 0.7, 1.3, 2.4}};
  const RandomScene scene = random_scene(5, 6, 3);
  const RealMat theta = phase_difference(scene.s, scene.x);
  const auto refs = magnitude_ref_index(book, scene.s, scene.x, theta);
  for (int t = 0; t < 5; ++t) {
    for (int f = 0; f < 6; ++f) {
      double best = 1e300;
      int brute = 0;
      for (int i = 0; i < book.size(); ++i) {
        const double dist = std::abs(polar_md(book.atoms[i], theta(t, f)) * scene.x.bins(t, f) -
                                     scene.s.bins(t, f));
        if (dist < best) {
          best = dist;
          brute = i;
        }
      }
      CHECK(refs(t, f) == brute);
    }
  }
}

TEST_CASE("CE reference-phase policies") {
  const RandomScene scene = random_scene(3, 4, 21);
  const RealMat zero = ce_reference_phase(CeRefPhasePolicy::Zero, scene.s, scene.x);
  for (double v : zero.data) CHECK(v == 0.0);
  const RealMat fixed = ce_reference_phase(CeRefPhasePolicy::FixedReference, scene.s, scene.x);
  const RealMat oracle = phase_difference(scene.s, scene.x);
  CHECK(fixed.data == oracle.data);
  RealMat estimate(3, 4, 0.5);
  const RealMat current =
      ce_reference_phase(CeRefPhasePolicy::CurrentEstimate, scene.s, scene.x, &estimate);
  CHECK(current.data == estimate.data);
  CHECK_THROWS(ce_reference_phase(CeRefPhasePolicy::CurrentEstimate, scene.s, scene.x));
}

TEST_CASE("cross-entropy basics and the floored-log guard") {
  Mat<int32_t> refs(2, 2);
  refs(0, 0) = 0;
  refs(0, 1) = 1;
  refs(1, 0) = 2;
  refs(1, 1) = 0;
  const auto match = one_hot_field(2, 2, 3, refs);
  CHECK(cross_entropy_loss(match, refs) == 0.0);

  MaskProbabilities uniform(2, 2, 3, 1.0 / 3.0);
  CHECK(cross_entropy_loss(uniform, refs) == doctest::Approx(4.0 * std::log(3.0)));

  Mat<int32_t> wrong(2, 2);
  wrong(0, 0) = 1;
  wrong(0, 1) = 0;
  wrong(1, 0) = 0;
  wrong(1, 1) = 1;
  int floored = 0;
  const double loss = cross_entropy_loss(match, wrong, &floored);
  CHECK(floored == 4);
  CHECK(loss == doctest::Approx(-4.0 * std::log(1e-30)));
}

TEST_CASE("spectral losses vanish at their oracle targets") {
  const RandomScene scene = random_scene(4, 5, 4);
  const auto iam = oracle_mask(MaskKind::IAM, scene.s, scene.n, scene.x, kUnboundedRmax);
  CHECK(spectral_loss(SpectralLossKind::MSA, Norm::L1, iam.real, scene.x, scene.s) <
        1e-10);
  CHECK(spectral_loss(SpectralLossKind::MA, Norm::L1, iam.real, scene.x, scene.s) < 1e-10);

  const auto psf = oracle_mask(MaskKind::PSF, scene.s, scene.n, scene.x);
  CHECK(spectral_loss(SpectralLossKind::PSA, Norm::L1, psf.real, scene.x, scene.s) < 1e-10);

  double sum_abs_s = 0.0;
  for (const auto& v : scene.s.bins.data) sum_abs_s += std::abs(v);
  CHECK(spectral_loss(SpectralLossKind::MSA, Norm::L1, RealMat(4, 5, 0.0), scene.x, scene.s) ==
        doctest::Approx(sum_abs_s));
}

TEST_CASE("PSF minimizes the PSA loss among random perturbations") {
  const RandomScene scene = random_scene(4, 5, 5);
  const auto psf = oracle_mask(MaskKind::PSF, scene.s, scene.n, scene.x);
  const double base =
      spectral_loss(SpectralLossKind::PSA, Norm::L2Sq, psf.real, scene.x, scene.s);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    RealMat perturbed = psf.real;
    for (auto& v : perturbed.data) v += 0.1 * rng.normal();
    CHECK(base <= spectral_loss(SpectralLossKind::PSA, Norm::L2Sq, perturbed, scene.x,
                                scene.s));
  }
}

TEST_CASE("complex losses vanish at the ratio mask; CSA weights CMA by |x|") {
  const RandomScene scene = random_scene(4, 5, 7);
  CplxMat ratio(4, 5);
  for (size_t b = 0; b < ratio.size(); ++b)
    ratio.data[b] = scene.s.bins.data[b] / scene.x.bins.data[b];
  CHECK(complex_loss(ComplexLossKind::CMA, Norm::L1, ratio, scene.x, scene.s) < 1e-10);
  CHECK(complex_loss(ComplexLossKind::CSA, Norm::L1, ratio, scene.x, scene.s) < 1e-10);

  double sum_abs_s = 0.0;
  for (const auto& v : scene.s.bins.data) sum_abs_s += std::abs(v);
  CHECK(complex_loss(ComplexLossKind::CSA, Norm::L1, CplxMat(4, 5), scene.x, scene.s) ==
        doctest::Approx(sum_abs_s));

  Rng rng(8);
  CplxMat c_out(4, 5);
  for (auto& v : c_out.data) v = cdouble(rng.normal(), rng.normal());
  double weighted_cma = 0.0;
  for (size_t b = 0; b < c_out.size(); ++b)
    weighted_cma += std::abs(scene.x.bins.data[b]) * std::abs(c_out.data[b] - ratio.data[b]);
  CHECK(complex_loss(ComplexLossKind::CSA, Norm::L1, c_out, scene.x, scene.s) ==
        doctest::Approx(weighted_cma).epsilon(1e-10));
}

TEST_CASE("expected CSA: one-hot collapse, Jensen bound, Monte-Carlo agreement") {
  const Magbook magbook{{0.0, 1.0, 2.0}};
  const Phasebook phasebook = uniform_phasebook(4);
  const RandomScene scene = random_scene(3, 4, 9);

  // one-hot probabilities collapse to the CSA of the selected atoms, exactly
  Rng rng(10);
  Mat<int32_t> mag_sel(3, 4), phase_sel(3, 4);
  for (auto& v : mag_sel.data) v = rng.uniform_int(0, 2);
  for (auto& v : phase_sel.data) v = rng.uniform_int(0, 3);
  const auto mag_probs = one_hot_field(3, 4, 3, mag_sel);
  const auto phase_probs = one_hot_field(3, 4, 4, phase_sel);

  const double expected =
      expected_csa_loss(mag_probs, phase_probs, magbook, phasebook, scene.x, scene.s);
  const CplxMat composed = compose_complex_mask(infer_argmax(mag_probs, magbook),
                                                infer_argmax(phase_probs, phasebook));
  const double csa = complex_loss(ComplexLossKind::CSA, Norm::L1, composed, scene.x, scene.s);
  CHECK(expected == csa);  // bit-exact by construction

  // Jensen: the expected loss dominates the loss of the expected mask.
  MaskProbabilities soft_mag(3, 4, 3);
  MaskProbabilities soft_phase(3, 4, 4);
  for (int t = 0; t < 3; ++t)
    for (int f = 0; f < 4; ++f) {
      double mag_total = 0.0, phase_total = 0.0;
      for (int k = 0; k < 3; ++k) mag_total += soft_mag.bin(t, f)[k] = rng.uniform() + 0.1;
      for (int k = 0; k < 4; ++k) phase_total += soft_phase.bin(t, f)[k] = rng.uniform() + 0.1;
      for (int k = 0; k < 3; ++k) soft_mag.bin(t, f)[k] /= mag_total;
      for (int k = 0; k < 4; ++k) soft_phase.bin(t, f)[k] /= phase_total;
    }
  const double soft_expected =
      expected_csa_loss(soft_mag, soft_phase, magbook, phasebook, scene.x, scene.s);
  const auto phase_interp = infer_interpolate(soft_phase, phasebook);
  const CplxMat interp_mask =
      compose_complex_mask(infer_interpolate(soft_mag, magbook), phase_interp.angles);
  const double interp_csa =
      complex_loss(ComplexLossKind::CSA, Norm::L1, interp_mask, scene.x, scene.s);
  CHECK(soft_expected >= interp_csa - 1e-12);

  // Monte-Carlo sampling oracle.
  Rng sampler(11);
  const int draws = 20000;
  double average = 0.0;
  for (int d = 0; d < draws; ++d) {
    double total = 0.0;
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 4; ++f) {
        const int i = sample_categorical(soft_mag.bin(t, f), 3, sampler);
        const int j = sample_categorical(soft_phase.bin(t, f), 4, sampler);
        total += std::abs(polar_md(magbook.atoms[i], phasebook.atoms[j]) * scene.x.bins(t, f) -
                          scene.s.bins(t, f));
      }
    average += total;
  }
  average /= draws;
  CHECK(std::abs(average - soft_expected) < 0.01 * soft_expected);
}

TEST_CASE("waveform losses: oracle mask gives zero, empty mask gives sum |s|") {
  StftConfig cfg;
  cfg.win_length = 64;
  cfg.hop = 16;
  cfg.dft_size = 64;
  Rng rng(12);
  Waveform s1, s2;
  s1.sample_rate = s2.sample_rate = cfg.sample_rate;
  for (int l = 0; l < 700; ++l) {
    s1.samples.push_back(rng.normal());
    s2.samples.push_back(rng.normal());
  }
  Waveform mix;
  mix.sample_rate = cfg.sample_rate;
  for (int l = 0; l < 700; ++l) mix.samples.push_back(s1.samples[l] + s2.samples[l]);

  const Spectrogram X = stft(mix, cfg);
  const Spectrogram S1 = stft(s1, cfg);
  Spectrogram N1 = X;
  for (size_t b = 0; b < N1.bins.size(); ++b)
    N1.bins.data[b] = X.bins.data[b] - S1.bins.data[b];

  const auto icm = oracle_mask(MaskKind::ICM, S1, N1, X, kUnboundedRmax);
  CHECK(wa_loss(icm.complex_, X, s1, Norm::L1) < 1e-8);

  double sum_abs = 0.0;
  for (double v : s1.samples) sum_abs += std::abs(v);
  CHECK(wa_loss(CplxMat(X.frames(), X.freq_bins()), X, s1, Norm::L1) ==
        doctest::Approx(sum_abs));

  // joint WA-MISI outputs stay mixture-consistent
  const Spectrogram S2 = stft(s2, cfg);
  Spectrogram N2 = X;
  for (size_t b = 0; b < N2.bins.size(); ++b)
    N2.bins.data[b] = X.bins.data[b] - S2.bins.data[b];
  const auto icm2 = oracle_mask(MaskKind::ICM, S2, N2, X, kUnboundedRmax);
  const auto result = wa_misi_loss({icm.complex_, icm2.complex_}, X, mix, {s1, s2},
                                   Norm::L1, 3);
  for (int l = 0; l < 700; ++l) {
    const double total = result.estimates[0].samples[l] + result.estimates[1].samples[l];
    CHECK(std::abs(total - mix.samples[l]) < 1e-12);
  }
}

TEST_CASE("whitened k-means loss identities") {
  // V == Y gives 0.
  RealMat labels(8, 2);
  for (int r = 0; r < 8; ++r) labels(r, r % 2) = 1.0;
  CHECK(dc_whitened_kmeans_loss(labels, labels) == doctest::Approx(0.0).epsilon(1e-12));

  // V orthogonal to Y's columns gives D: center V within each class.
  Rng rng(13);
  const int dim = 4;
  RealMat embeddings(8, dim);
  for (auto& v : embeddings.data) v = rng.normal();
  for (int s = 0; s < 2; ++s)
    for (int d = 0; d < dim; ++d) {
      double mean = 0.0;
      int count = 0;
      for (int r = 0; r < 8; ++r)
        if (labels(r, s) == 1.0) {
          mean += embeddings(r, d);
          ++count;
        }
      mean /= count;
      for (int r = 0; r < 8; ++r)
        if (labels(r, s) == 1.0) embeddings(r, d) -= mean;
    }
  CHECK(dc_whitened_kmeans_loss(embeddings, labels) == doctest::Approx(dim).epsilon(1e-10));

  // invariance to invertible recombination of the embedding columns
  RealMat random_v(8, dim);
  for (auto& v : random_v.data) v = rng.normal();
  const double base = dc_whitened_kmeans_loss(random_v, labels);
  RealMat mixer(dim, dim);
  for (int i = 0; i < dim; ++i) mixer(i, i) = 1.0;
  for (auto& v : mixer.data) v += 0.3 * rng.normal();
  RealMat recombined(8, dim);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (int k = 0; k < dim; ++k) acc += random_v(r, k) * mixer(k, c);
      recombined(r, c) = acc;
    }
  CHECK(dc_whitened_kmeans_loss(recombined, labels) ==
        doctest::Approx(base).epsilon(1e-8));

  // rank deficiency triggers the ridge and the flag
  RealMat deficient(8, 3);
  for (int r = 0; r < 8; ++r) {
    deficient(r, 0) = rng.normal();
    deficient(r, 1) = 2.0 * deficient(r, 0);
    deficient(r, 2) = -deficient(r, 0);
  }
  bool ridged = false;
  (void)dc_whitened_kmeans_loss(deficient, labels, &ridged);
  CHECK(ridged);

  RealMat bad_labels(8, 2, 0.5);
  CHECK_THROWS(dc_whitened_kmeans_loss(random_v, bad_labels));
}

TEST_CASE("whitened k-means loss of random embeddings obeys the trace bound") {
  // rank(Y projection) <= S, so the loss lives in [D - S, D]
  Rng rng(15);
  RealMat labels(40, 2);
  for (int r = 0; r < 40; ++r) labels(r, r % 2) = 1.0;
  for (int trial = 0; trial < 10; ++trial) {
    RealMat embeddings(40, 20);
    for (auto& v : embeddings.data) v = rng.normal();
    const double loss = dc_whitened_kmeans_loss(embeddings, labels);
    CHECK(loss >= 18.0 - 1e-9);
    CHECK(loss <= 20.0 + 1e-9);
  }
}

TEST_CASE("chimera loss is the stated convex combination") {
  CHECK(chimera_loss(2.0, 4.0, 0.0) == 4.0);
  CHECK(chimera_loss(2.0, 4.0, 1.0) == 2.0);
  CHECK(chimera_loss(2.0, 4.0, 0.5) == 3.0);
  CHECK_THROWS(chimera_loss(1.0, 1.0, 1.5));
}

TEST_CASE("permutation_min matches exhaustive enumeration") {
  // swapped references recover the swap with zero loss
  Mat<double> pair(2, 2);
  pair(0, 0) = 5.0;
  pair(0, 1) = 0.0;
  pair(1, 0) = 0.0;
  pair(1, 1) = 5.0;
  const auto swapped =
      permutation_min(2, [&](int e, int r) { return pair(e, r); });
  CHECK(swapped.loss == 0.0);
  CHECK(swapped.permutation == std::vector<int>{1, 0});

  const auto identity = permutation_min(1, [](int, int) { return 3.0; });
  CHECK(identity.permutation == std::vector<int>{0});

  // random 3-source cases against a recursive brute-force oracle
  Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    Mat<double> costs(3, 3);
    for (auto& v : costs.data) v = rng.uniform();
    const auto got = permutation_min(3, [&](int e, int r) { return costs(e, r); });

    double best = 1e300;
    std::vector<int> est{0, 1, 2};
    // independent enumeration: all 6 assignments by explicit recursion
    std::function<void(std::vector<int>&, std::vector<bool>&, double)> recurse =
        [&](std::vector<int>& chosen, std::vector<bool>& used, double acc) {
          const int r = static_cast<int>(chosen.size());
          if (r == 3) {
            best = std::min(best, acc);
            return;
          }
          for (int e = 0; e < 3; ++e) {
            if (used[e]) continue;
            used[e] = true;
            chosen.push_back(e);
            recurse(chosen, used, acc + costs(e, r));
            chosen.pop_back();
            used[e] = false;
          }
        };
    std::vector<int> chosen;
    std::vector<bool> used(3, false);
    recurse(chosen, used, 0.0);
    CHECK(got.loss == doctest::Approx(best).epsilon(1e-14));
  }
}

TEST_SUITE_END();
