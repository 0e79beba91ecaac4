// maskbook/codebook.hpp

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

#include "maskbook/oracle_masks.hpp"
#include "maskbook/signal.hpp"

namespace maskbook {

// Scalar codebooks combined per T-F bin with softmax probabilities.
// Magbook atoms are mask magnitudes, phasebook atoms are phase-mask angles
// in (-pi, pi], combook atoms are complex mask values.

struct Magbook {
  std::vector<double> atoms;
  int size() const { return static_cast<int>(atoms.size()); }
};

struct Phasebook {
  std::vector<double> atoms;
  int size() const { return static_cast<int>(atoms.size()); }
};

struct Combook {
  std::vector<cdouble> atoms;
  int size() const { return static_cast<int>(atoms.size()); }
};

void validate(const Magbook& book);
void validate(const Phasebook& book);
void validate(const Combook& book);

/// {0, 1, ..., M-1}; size 2 is the classical sigmoid pair {0, 1} and size 3
/// the convex-softmax triple {0, 1, 2}.
Magbook uniform_magbook(int size);

/// Per-bin probabilities over one codebook, each (t, f) slice on the
/// (depth-1)-simplex.
using MaskProbabilities = Field3;

/// Checks the simplex invariant to the stated tolerance (sum within 1e-9 of
/// 1, entries nonnegative). Throws when violated.
void validate_simplex(const MaskProbabilities& probs, double tolerance = 1e-9);

// --- inference schemes -----------------------------------------------------

RealMat infer_argmax(const MaskProbabilities& probs, const Magbook& book);
RealMat infer_argmax(const MaskProbabilities& probs, const Phasebook& book);
CplxMat infer_argmax(const MaskProbabilities& probs, const Combook& book);

RealMat infer_sample(const MaskProbabilities& probs, const Magbook& book, uint64_t seed);
RealMat infer_sample(const MaskProbabilities& probs, const Phasebook& book, uint64_t seed);
CplxMat infer_sample(const MaskProbabilities& probs, const Combook& book, uint64_t seed);

RealMat infer_interpolate(const MaskProbabilities& probs, const Magbook& book);
CplxMat infer_interpolate(const MaskProbabilities& probs, const Combook& book);

/// Phase interpolation happens on the unit circle: angle(sum_j p_j e^{j
/// theta_j}). Bins where that sum nearly cancels (magnitude < 1e-12) return 0
/// and are flagged.
struct PhaseInterpolation {
  RealMat angles;
  std::vector<uint8_t> degenerate;  // row-major flags, 1 = cancelled bin
  int degenerate_count = 0;
};

PhaseInterpolation infer_interpolate(const MaskProbabilities& probs, const Phasebook& book);

inline constexpr double kPhaseInterpDegenerate = 1e-12;

/// m .* e^{j theta} per bin.
CplxMat compose_complex_mask(const RealMat& magnitudes, const RealMat& phases);

// --- plain-text serialization (one atom per line, 17 significant digits;
// complex atoms as "re im") ---------------------------------------------------

void save_codebook(const std::string& path, const Magbook& book);
void save_codebook(const std::string& path, const Phasebook& book);
void save_codebook(const std::string& path, const Combook& book);

Magbook load_magbook(const std::string& path);
Phasebook load_phasebook(const std::string& path);
Combook load_combook(const std::string& path);

}  // namespace maskbook
