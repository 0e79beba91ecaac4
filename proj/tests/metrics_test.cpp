// tests/metrics_test.cpp

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

#include "maskbook/metrics.hpp"

using namespace maskbook;

namespace {

std::vector<double> random_signal(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("caps: perfect and scaled estimates hit +120 dB, zero estimates -120 dB") {
  const auto ref = random_signal(500, 1);
  CHECK(si_sdr(ref, ref) == kSiSdrCapDb);
  auto twice = ref;
  for (auto& v : twice) v *= 2.0;
  CHECK(si_sdr(twice, ref) == kSiSdrCapDb);
  CHECK(si_sdr(std::vector<double>(500, 0.0), ref) == -kSiSdrCapDb);
}

TEST_CASE("orthogonal equal-energy noise gives exactly 0 dB") {
  // reference on even samples, noise on odd samples, equal energy
  std::vector<double> ref(400, 0.0), noise(400, 0.0);
  Rng rng(2);
  for (int i = 0; i < 400; i += 2) ref[i] = rng.normal();
  double ref_energy = 0.0;
  for (double v : ref) ref_energy += v * v;
  for (int i = 1; i < 400; i += 2) noise[i] = rng.normal();
  double noise_energy = 0.0;
  for (double v : noise) noise_energy += v * v;
  const double scale = std::sqrt(ref_energy / noise_energy);
  std::vector<double> est(400);
  for (int i = 0; i < 400; ++i) est[i] = ref[i] + scale * noise[i];
  CHECK(si_sdr(est, ref) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("scale invariance of the estimate") {
  const auto ref = random_signal(300, 3);
  auto est = random_signal(300, 4);
  const double base = si_sdr(est, ref);
  for (double c : {0.25, -3.0, 1e4}) {
    auto scaled = est;
    for (auto& v : scaled) v *= c;
    CHECK(si_sdr(scaled, ref) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("si_sdr is invariant under joint scaling of estimate and reference") {
  const auto ref = random_signal(250, 30);
  const auto est = random_signal(250, 31);
  const double base = si_sdr(est, ref);
  for (double c : {0.5, -2.0, 300.0}) {
    auto scaled_est = est;
    auto scaled_ref = ref;
    for (auto& v : scaled_est) v *= c;
    for (auto& v : scaled_ref) v *= c;
    CHECK(si_sdr(scaled_est, scaled_ref) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("zero reference is rejected") {
  CHECK_THROWS(si_sdr(random_signal(100, 5), std::vector<double>(100, 0.0)));
  CHECK_THROWS(si_sdr(random_signal(100, 6), random_signal(99, 7)));
}

TEST_CASE("evaluate_corpus recovers permutations and scores improvements") {
  Waveform s1, s2, mix;
  s1.samples = random_signal(600, 8);
  s2.samples = random_signal(600, 9);
  mix.samples.resize(600);
  for (int i = 0; i < 600; ++i) mix.samples[i] = s1.samples[i] + s2.samples[i];

  // estimates == references in swapped order
  EvalReport report = evaluate_corpus({{s2, s1}}, {{s1, s2}}, {mix});
  REQUIRE(report.utterances.size() == 1);
  CHECK(report.utterances[0].permutation == std::vector<int>{1, 0});
  CHECK(report.utterances[0].sisdr_db[0] == kSiSdrCapDb);
  CHECK(report.utterances[0].sisdr_db[1] == kSiSdrCapDb);

  // estimates == mixture for both sources -> improvement exactly 0
  report = evaluate_corpus({{mix, mix}}, {{s1, s2}}, {mix});
  CHECK(report.utterances[0].sisdri_db[0] == doctest::Approx(0.0));
  CHECK(report.utterances[0].sisdri_db[1] == doctest::Approx(0.0));
}

TEST_CASE("chosen permutation matches 2-way brute force on random cases") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Waveform s1, s2, mix, e1, e2;
    s1.samples = random_signal(300, 100 + seed * 4);
    s2.samples = random_signal(300, 101 + seed * 4);
    e1.samples = random_signal(300, 102 + seed * 4);
    e2.samples = random_signal(300, 103 + seed * 4);
    mix.samples.resize(300);
    for (int i = 0; i < 300; ++i) mix.samples[i] = s1.samples[i] + s2.samples[i];

    const EvalReport report = evaluate_corpus({{e1, e2}}, {{s1, s2}}, {mix});
    const double identity = si_sdr(e1, s1) + si_sdr(e2, s2);
    const double swapped = si_sdr(e2, s1) + si_sdr(e1, s2);
    const double chosen =
        report.utterances[0].sisdr_db[0] + report.utterances[0].sisdr_db[1];
    CHECK(chosen == doctest::Approx(std::max(identity, swapped)).epsilon(1e-12));
    CHECK(chosen >= identity - 1e-12);
  }
}

TEST_CASE("mean and median helpers") {
  CHECK(mean({1.0, 2.0, 6.0}) == doctest::Approx(3.0));
  CHECK(median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
}

TEST_SUITE_END();
