// tests/codebook_test.cpp

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

#include "maskbook/codebook.hpp"
#include "maskbook/codebook_opt.hpp"

using namespace maskbook;

namespace {

MaskProbabilities single_bin(const std::vector<double>& probs) {
  MaskProbabilities field(1, 1, static_cast<int>(probs.size()));
  std::copy(probs.begin(), probs.end(), field.bin(0, 0));
  return field;
}

}  // namespace

TEST_SUITE_BEGIN("codebook");

TEST_CASE("argmax picks the most probable atom, ties to the lowest index") {
  const Magbook book{{0.0, 1.0, 2.0}};
  CHECK(infer_argmax(single_bin({0.1, 0.7, 0.2}), book)(0, 0) == 1.0);
  CHECK(infer_argmax(single_bin({0.0, 0.0, 1.0}), book)(0, 0) == 2.0);
  CHECK(infer_argmax(single_bin({0.5, 0.5, 0.0}), book)(0, 0) == 0.0);
}

TEST_CASE("sampling is deterministic per seed and respects one-hot") {
  const Magbook book{{0.0, 1.0}};
  for (uint64_t seed : {1ULL, 99ULL})
    CHECK(infer_sample(single_bin({0.0, 1.0}), book, seed)(0, 0) == 1.0);

  MaskProbabilities probs(20, 25, 2, 0.5);
  const RealMat draw1 = infer_sample(probs, book, 1234);
  const RealMat draw2 = infer_sample(probs, book, 1234);
  CHECK(draw1.data == draw2.data);
}

TEST_CASE("sampling follows the distribution (Monte-Carlo oracle)") {
  const Magbook book{{0.0, 1.0}};
  // 10^5 fair draws: mean 0.5 +/- 0.01 is a ~6 sigma bound.
  MaskProbabilities probs(250, 400, 2, 0.5);
  const RealMat draws = infer_sample(probs, book, 31337);
  double mean = 0.0;
  for (double v : draws.data) mean += v;
  mean /= draws.size();
  CHECK(std::abs(mean - 0.5) < 0.01);
}

TEST_CASE("interpolation: magnitude expectation and phase circular mean") {
  const Magbook magbook{{0.0, 1.0, 2.0}};
  CHECK(infer_interpolate(single_bin({0.25, 0.5, 0.25}), magbook)(0, 0) ==
        doctest::Approx(1.0));

  const Phasebook quarter{{0.0, kPi / 2}};
  const auto interp = infer_interpolate(single_bin({0.5, 0.5}), quarter);
  CHECK(interp.angles(0, 0) == doctest::Approx(kPi / 4));
  CHECK(interp.degenerate_count == 0);

  const Phasebook antipodal{{0.0, kPi}};
  const auto cancelled = infer_interpolate(single_bin({0.5, 0.5}), antipodal);
  CHECK(cancelled.degenerate_count == 1);
  CHECK(cancelled.angles(0, 0) == 0.0);
}

TEST_CASE("phase interpolation respects wrapping: rotating atoms rotates the output") {
  Rng rng(77);
  const Phasebook book = uniform_phasebook(8);
  for (int trial = 0; trial < 25; ++trial) {
    MaskProbabilities probs(1, 1, 8);
    double total = 0.0;
    for (int k = 0; k < 8; ++k) {
      probs.bin(0, 0)[k] = rng.uniform() + 0.05;
      total += probs.bin(0, 0)[k];
    }
    for (int k = 0; k < 8; ++k) probs.bin(0, 0)[k] /= total;

    const double delta = rng.uniform(-3.0, 3.0);
    Phasebook rotated = book;
    for (double& atom : rotated.atoms) atom += delta;

    const double base = infer_interpolate(probs, book).angles(0, 0);
    const double turned = infer_interpolate(probs, rotated).angles(0, 0);
    CHECK(std::abs(wrap_angle(turned - base - delta)) < 1e-10);
  }
}

TEST_CASE("phase interpolation is invariant to adding 2*pi to an atom") {
  const Phasebook book{{0.3, -1.1, 2.0}};
  Phasebook shifted = book;
  shifted.atoms[1] += 2.0 * kPi;
  const auto probs = single_bin({0.2, 0.5, 0.3});
  CHECK(infer_interpolate(probs, book).angles(0, 0) ==
        doctest::Approx(infer_interpolate(probs, shifted).angles(0, 0)).epsilon(1e-12));
}

TEST_CASE("one-hot interpolation equals argmax; interpolation stays in the hull") {
  Rng rng(78);
  const Magbook book{{-0.5, 0.7, 2.0, 3.1}};
  for (int trial = 0; trial < 20; ++trial) {
    MaskProbabilities one_hot(1, 1, 4);
    one_hot.bin(0, 0)[trial % 4] = 1.0;
    CHECK(infer_interpolate(one_hot, book)(0, 0) == infer_argmax(one_hot, book)(0, 0));

    MaskProbabilities probs(1, 1, 4);
    double total = 0.0;
    for (int k = 0; k < 4; ++k) {
      probs.bin(0, 0)[k] = rng.uniform();
      total += probs.bin(0, 0)[k];
    }
    for (int k = 0; k < 4; ++k) probs.bin(0, 0)[k] /= total;
    const double value = infer_interpolate(probs, book)(0, 0);
    CHECK(value >= -0.5 - 1e-12);
    CHECK(value <= 3.1 + 1e-12);
  }
}

TEST_CASE("uniform magbook 2 with probs (1-s, s) interpolates to s") {
  const Magbook sigmoid_pair = uniform_magbook(2);
  for (double s : {0.0, 0.25, 0.5, 0.9, 1.0})
    CHECK(infer_interpolate(single_bin({1.0 - s, s}), sigmoid_pair)(0, 0) ==
          doctest::Approx(s));
}

TEST_CASE("compose_complex_mask basics") {
  RealMat mags(1, 3);
  RealMat phases(1, 3);
  mags(0, 0) = 1.0;
  phases(0, 0) = 0.0;
  mags(0, 1) = 2.0;
  phases(0, 1) = kPi;
  mags(0, 2) = 0.0;
  phases(0, 2) = 1.234;
  const CplxMat mask = compose_complex_mask(mags, phases);
  CHECK(mask(0, 0) == cdouble(1.0, 0.0));
  CHECK(mask(0, 1).real() == doctest::Approx(-2.0));
  CHECK(std::abs(mask(0, 1).imag()) < 1e-15);
  CHECK(std::abs(mask(0, 2)) == 0.0);
}

TEST_CASE("apply_mask identity and zero") {
  Rng rng(79);
  Spectrogram x;
  x.bins = CplxMat(3, 4);
  for (auto& v : x.bins.data) v = cdouble(rng.normal(), rng.normal());

  const Spectrogram same = apply_mask(RealMat(3, 4, 1.0), x);
  for (size_t b = 0; b < x.bins.size(); ++b) CHECK(same.bins.data[b] == x.bins.data[b]);

  const Spectrogram silent = apply_mask(CplxMat(3, 4), x);
  for (const auto& v : silent.bins.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("codebook text round-trips are bit-exact") {
  Rng rng(80);
  Magbook magbook;
  Phasebook phasebook;
  Combook combook;
  for (int i = 0; i < 7; ++i) {
    magbook.atoms.push_back(rng.normal() * 1.7);
    phasebook.atoms.push_back(wrap_angle(rng.normal()));
    combook.atoms.push_back(cdouble(rng.normal(), rng.normal()));
  }
  const std::string dir = "codebook_io_test";
  save_codebook(dir + "_mag.txt", magbook);
  save_codebook(dir + "_phase.txt", phasebook);
  save_codebook(dir + "_com.txt", combook);
  CHECK(load_magbook(dir + "_mag.txt").atoms == magbook.atoms);
  CHECK(load_phasebook(dir + "_phase.txt").atoms == phasebook.atoms);
  CHECK(load_combook(dir + "_com.txt").atoms == combook.atoms);
  std::remove((dir + "_mag.txt").c_str());
  std::remove((dir + "_phase.txt").c_str());
  std::remove((dir + "_com.txt").c_str());
}

TEST_CASE("validation catches bad books and bad probabilities") {
  CHECK_THROWS(validate(Magbook{{1.0}}));
  CHECK_THROWS(validate(Magbook{{1.0, 1.0}}));
  CHECK_THROWS(validate(Phasebook{{0.0, 2.0 * kPi}}));  // equal modulo 2 pi
  CHECK_THROWS(validate(Combook{{cdouble(1, 0), cdouble(1, 0)}}));

  MaskProbabilities bad(1, 1, 2);
  bad.bin(0, 0)[0] = 0.7;
  bad.bin(0, 0)[1] = 0.2;
  CHECK_THROWS(validate_simplex(bad));
  CHECK_THROWS(infer_argmax(single_bin({0.5, 0.5}), Magbook{{0.0, 1.0, 2.0}}));
}

TEST_SUITE_END();
