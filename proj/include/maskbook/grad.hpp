// maskbook/grad.hpp

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

#include "maskbook/losses.hpp"

namespace maskbook {

// Reverse-mode differentiation through
//   logits -> softmax -> interpolation -> complex mask -> masked spectrogram
//   -> { T-F losses | iSTFT -> unfolded MISI -> waveform losses }
// with exact analytic adjoints for every stage, plus a direct per-bin logit
// trainer that stands in for a mask-estimation network at desk scale.

enum class HeadKind { MagPhase, Com };

enum class GradLoss { MA, MSA, PSA, CMA, CSA, ECSA, WA };

GradLoss grad_loss_from_string(std::string_view name);
const char* to_string(GradLoss loss);

struct GradLossSpec {
  GradLoss loss = GradLoss::CSA;
  Norm norm = Norm::L1;
  int misi_iters = 0;           // WA only: 0 = plain masked iSTFT
  bool redistribute_at_k0 = false;
  /// Route WA with zero iterations through the unfolded-MISI graph instead of
  /// the direct path; gradients agree, which the tests assert.
  bool unfolded_k0 = false;
};

/// Per-source trainable logits; `mag`/`phase` are used by MagPhase heads,
/// `com` by Com heads.
struct LogitHeads {
  Field3 mag;
  Field3 phase;
  Field3 com;
};

struct GradProblem {
  Spectrogram mixture_spec;
  Waveform mixture;
  std::vector<Spectrogram> ref_specs;
  std::vector<Waveform> ref_times;
  Magbook magbook;
  Phasebook phasebook;
  Combook combook;
  HeadKind head = HeadKind::MagPhase;
  bool train_mag_atoms = false;
  bool train_phase_atoms = false;
  bool train_com_atoms = false;

  int sources() const { return static_cast<int>(ref_specs.size()); }
};

struct HeadGradients {
  Field3 mag;
  Field3 phase;
  Field3 com;
};

struct Gradients {
  std::vector<HeadGradients> heads;
  std::vector<double> mag_atoms;    // filled only when the atoms are trainable
  std::vector<double> phase_atoms;
  std::vector<cdouble> com_atoms;
  /// Bins excluded from the backward pass: phase interpolation with
  /// |sum p e^{j theta}| < 1e-8, or a zero masked bin feeding |.| / angle.
  int degenerate_bins = 0;
};

inline constexpr double kPhaseGradDegenerate = 1e-8;

struct ForwardBackward {
  double loss = 0.0;
  Gradients grads;
};

/// Loss under interpolation inference. ref_order maps each estimated source
/// to the reference it is scored against (identity when empty).
double forward_loss(const std::vector<LogitHeads>& logits, const GradProblem& problem,
                    const GradLossSpec& spec, const std::vector<int>& ref_order = {});

ForwardBackward forward_backward(const std::vector<LogitHeads>& logits,
                                 const GradProblem& problem, const GradLossSpec& spec,
                                 const std::vector<int>& ref_order = {});

// --- direct per-bin logit fitting ------------------------------------------------

struct FitOptions {
  int iterations = 2000;
  double step = 1.0;
  double armijo_c = 1e-4;
  double step_grow = 1.5;
  double step_shrink = 0.5;
  int max_backtracks = 60;
  /// Trust-region cap on the infinity norm of one update. Logits pushed tens
  /// of units deep into softmax saturation cannot recover in double
  /// precision, so single steps are kept to this many logit units.
  double max_update = 2.0;
  bool permutation_free = true;
};

struct FitTracePoint {
  int iter = 0;
  double loss = 0.0;
  double sisdr_mean_db = 0.0;
  double step = 0.0;
};

struct FitResult {
  std::vector<LogitHeads> logits;
  Magbook magbook;
  Phasebook phasebook;
  Combook combook;
  std::vector<FitTracePoint> trace;  // non-increasing loss under backtracking
  std::vector<int> permutation;      // final reference assignment
  bool diverged = false;
  bool stalled = false;              // line search could not make progress
};

/// Plain gradient descent with backtracking line search on the chosen loss,
/// permutation-free when enabled. Zero iterations returns the init unchanged.
FitResult fit_logits(const std::vector<LogitHeads>& init, const GradProblem& problem,
                     const GradLossSpec& spec, const FitOptions& options);

/// Estimated waveforms for the given logits (masked iSTFT, or MISI outputs
/// when the loss spec unfolds).
std::vector<Waveform> reconstruct(const std::vector<LogitHeads>& logits,
                                  const GradProblem& problem, const GradLossSpec& spec);

// --- finite-difference checking ----------------------------------------------------

struct GradCheckSegment {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  double step = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<GradCheckSegment> segments;
};

/// Central differences of `fn` against the supplied analytic gradient.
/// Relative error uses max(|fd|, |analytic|, 0.01 * max|analytic|, 1e-12)
/// as the denominator so zero-gradient coordinates are judged against the
/// problem's gradient scale.
GradCheckReport grad_check(const std::function<double(const double*)>& fn,
                           std::vector<double> params, const std::vector<double>& analytic,
                           double step, double tolerance,
                           const std::vector<std::pair<std::string, size_t>>& segments = {});

/// Flattens logits (and trainable atoms) of a pipeline problem and runs the
/// finite-difference check against forward_backward.
GradCheckReport grad_check_pipeline(const std::vector<LogitHeads>& logits,
                                    const GradProblem& problem, const GradLossSpec& spec,
                                    double step = 1e-5, double tolerance = 1e-5);

}  // namespace maskbook
