// src/grad.cpp

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

#include "maskbook/grad.hpp"

#include <numeric>

#include "maskbook/kernels.hpp"
#include "maskbook/metrics.hpp"

namespace maskbook {

GradLoss grad_loss_from_string(std::string_view name) {
  if (name == "MA" || name == "ma") return GradLoss::MA;
  if (name == "MSA" || name == "msa") return GradLoss::MSA;
  if (name == "PSA" || name == "psa") return GradLoss::PSA;
  if (name == "CMA" || name == "cma") return GradLoss::CMA;
  if (name == "CSA" || name == "csa") return GradLoss::CSA;
  if (name == "eCSA" || name == "ecsa" || name == "ECSA") return GradLoss::ECSA;
  if (name == "WA" || name == "wa") return GradLoss::WA;
  fail("unknown loss: " + std::string(name));
}

const char* to_string(GradLoss loss) {
  switch (loss) {
    case GradLoss::MA: return "MA";
    case GradLoss::MSA: return "MSA";
    case GradLoss::PSA: return "PSA";
    case GradLoss::CMA: return "CMA";
    case GradLoss::CSA: return "CSA";
    case GradLoss::ECSA: return "eCSA";
    case GradLoss::WA: return "WA";
  }
  return "?";
}

namespace {

// --- residual derivatives ----------------------------------------------------

inline double norm_backward(double residual, Norm norm) {
  if (norm == Norm::L2Sq) return 2.0 * residual;
  return residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);  // L1 subgradient, 0 at the kink
}

inline cdouble cnorm_backward(cdouble residual, Norm norm) {
  if (norm == Norm::L2Sq) return 2.0 * residual;
  const double mag = cabs1(residual);
  return mag > 0.0 ? cdouble(residual.real() / mag, residual.imag() / mag) : cdouble(0.0, 0.0);
}

// --- softmax -------------------------------------------------------------------

void softmax_field(const Field3& logits, Field3& probs) {
  probs = Field3(logits.frames, logits.bins, logits.depth);
  for (int t = 0; t < logits.frames; ++t) {
    for (int f = 0; f < logits.bins; ++f) {
      const double* in = logits.bin(t, f);
      double* out = probs.bin(t, f);
      double peak = in[0];
      for (int k = 1; k < logits.depth; ++k) peak = std::max(peak, in[k]);
      double total = 0.0;
      for (int k = 0; k < logits.depth; ++k) {
        out[k] = std::exp(in[k] - peak);
        total += out[k];
      }
      for (int k = 0; k < logits.depth; ++k) out[k] /= total;
    }
  }
}

// adj_logits_k = p_k * (adj_p_k - sum_i p_i adj_p_i); accumulates into out.
void softmax_backward_field(const Field3& probs, const Field3& adj_probs, Field3& out) {
  for (int t = 0; t < probs.frames; ++t) {
    for (int f = 0; f < probs.bins; ++f) {
      const double* p = probs.bin(t, f);
      const double* g = adj_probs.bin(t, f);
      double* o = out.bin(t, f);
      double inner = 0.0;
      for (int k = 0; k < probs.depth; ++k) inner += p[k] * g[k];
      for (int k = 0; k < probs.depth; ++k) o[k] += p[k] * (g[k] - inner);
    }
  }
}

// --- per-source forward state -----------------------------------------------------

struct SourceState {
  Field3 pm, pp, pc;
  RealMat m_out;
  RealMat theta;
  CplxMat zsum;  // phase interpolation resultant per bin
  CplxMat c;     // complex mask (MagPhase composed, or Com interpolated)
  CplxMat shat;  // c .* X, filled for waveform losses only
};

void check_field(const Field3& field, const GradProblem& p, int depth, const char* what) {
  require(field.frames == p.mixture_spec.frames() && field.bins == p.mixture_spec.freq_bins(),
          std::string("grad: logit field shape mismatch (") + what + ")");
  require(field.depth == depth, std::string("grad: logit depth mismatch (") + what + ")");
}

SourceState head_forward(const LogitHeads& logits, const GradProblem& p, bool need_shat) {
  SourceState st;
  const int rows = p.mixture_spec.frames();
  const int cols = p.mixture_spec.freq_bins();

  if (p.head == HeadKind::MagPhase) {
    check_field(logits.mag, p, p.magbook.size(), "mag");
    check_field(logits.phase, p, p.phasebook.size(), "phase");
    softmax_field(logits.mag, st.pm);
    softmax_field(logits.phase, st.pp);

    st.m_out = RealMat(rows, cols);
    st.theta = RealMat(rows, cols);
    st.zsum = CplxMat(rows, cols);
    const int M = p.magbook.size();
    const int P = p.phasebook.size();
    std::vector<double> cos_atoms(P), sin_atoms(P);
    for (int j = 0; j < P; ++j) {
      cos_atoms[j] = std::cos(p.phasebook.atoms[j]);
      sin_atoms[j] = std::sin(p.phasebook.atoms[j]);
    }
    for (int t = 0; t < rows; ++t) {
      for (int f = 0; f < cols; ++f) {
        const double* pm = st.pm.bin(t, f);
        double m = 0.0;
        for (int i = 0; i < M; ++i) m += pm[i] * p.magbook.atoms[i];
        st.m_out(t, f) = m;

        const double* pp = st.pp.bin(t, f);
        double re = 0.0, im = 0.0;
        for (int j = 0; j < P; ++j) {
          re += pp[j] * cos_atoms[j];
          im += pp[j] * sin_atoms[j];
        }
        st.zsum(t, f) = cdouble(re, im);
        st.theta(t, f) =
            std::sqrt(re * re + im * im) < kPhaseInterpDegenerate ? 0.0 : std::atan2(im, re);
      }
    }
    st.c = CplxMat(rows, cols);
    for (size_t b = 0; b < st.c.size(); ++b)
      st.c.data[b] = polar_md(st.m_out.data[b], st.theta.data[b]);
  } else {
    check_field(logits.com, p, p.combook.size(), "com");
    softmax_field(logits.com, st.pc);
    st.c = CplxMat(rows, cols);
    const int C = p.combook.size();
    for (int t = 0; t < rows; ++t) {
      for (int f = 0; f < cols; ++f) {
        const double* pc = st.pc.bin(t, f);
        cdouble value(0.0, 0.0);
        for (int k = 0; k < C; ++k) value += pc[k] * p.combook.atoms[k];
        st.c(t, f) = value;
      }
    }
  }

  if (need_shat) {
    st.shat = CplxMat(rows, cols);
    for (size_t b = 0; b < st.shat.size(); ++b)
      st.shat.data[b] = cmul1(st.c.data[b], p.mixture_spec.bins.data[b]);
  }
  return st;
}

// --- unfolded MISI -------------------------------------------------------------------

// Differentiable replica of misi(): magnitude/phase split of the masked
// spectrograms, K phase-update iterations, final residual redistribution.
// Keeps every intermediate needed by the reverse sweep.
struct UnfoldedMisi {
  const GradProblem* p = nullptr;
  int iterations = 0;
  int num_sources = 0;
  int length = 0;
  bool redistribute = false;

  std::vector<RealMat> amp;   // fixed magnitudes |shat|
  std::vector<RealMat> phi0;  // initial phases angle(shat)
  std::vector<std::vector<CplxMat>> z;     // [iter][src] re-analysis before angle
  std::vector<std::vector<RealMat>> phi;   // [iter][src] phases after update
  std::vector<std::vector<std::vector<double>>> sig;  // [iter 0..K][src]
  std::vector<std::vector<double>> outputs;

  void forward(const std::vector<SourceState>& states, const GradLossSpec& spec) {
    num_sources = static_cast<int>(states.size());
    iterations = spec.misi_iters;
    length = p->mixture.length();
    redistribute = iterations > 0 || spec.redistribute_at_k0;
    const StftConfig& cfg = p->mixture_spec.config;
    const auto& ops = kernels::active();

    amp.clear();
    phi0.clear();
    for (const auto& st : states) {
      RealMat a(st.shat.rows, st.shat.cols);
      RealMat ph(st.shat.rows, st.shat.cols);
      for (size_t b = 0; b < st.shat.size(); ++b) {
        const cdouble v = st.shat.data[b];
        a.data[b] = std::abs(v);
        ph.data[b] = (v.real() != 0.0 || v.imag() != 0.0) ? std::atan2(v.imag(), v.real()) : 0.0;
      }
      amp.push_back(std::move(a));
      phi0.push_back(std::move(ph));
    }

    sig.assign(iterations + 1, {});
    z.assign(iterations, {});
    phi.assign(iterations, {});
    sig[0].resize(num_sources);
    for (int i = 0; i < num_sources; ++i)
      sig[0][i] = istft(compose_complex_mask(amp[i], phi0[i]), cfg, length).samples;

    std::vector<double> residual(length);
    auto compute_residual = [&](const std::vector<std::vector<double>>& signals) {
      residual = p->mixture.samples;
      for (int i = 0; i < num_sources; ++i)
        ops.axpy(-1.0, signals[i].data(), residual.data(), length);
    };

    const double split = 1.0 / num_sources;
    for (int k = 0; k < iterations; ++k) {
      compute_residual(sig[k]);
      z[k].resize(num_sources);
      phi[k].resize(num_sources);
      sig[k + 1].resize(num_sources);
      for (int i = 0; i < num_sources; ++i) {
        Waveform corrected;
        corrected.sample_rate = p->mixture.sample_rate;
        corrected.samples = sig[k][i];
        ops.axpy(split, residual.data(), corrected.samples.data(), length);
        const Spectrogram reanalyzed = stft(corrected, cfg);
        z[k][i] = reanalyzed.bins;
        RealMat new_phase = k == 0 ? phi0[i] : phi[k - 1][i];
        for (size_t b = 0; b < new_phase.size(); ++b) {
          const cdouble v = z[k][i].data[b];
          if (v.real() != 0.0 || v.imag() != 0.0)
            new_phase.data[b] = std::atan2(v.imag(), v.real());
        }
        phi[k][i] = std::move(new_phase);
        sig[k + 1][i] = istft(compose_complex_mask(amp[i], phi[k][i]), cfg, length).samples;
      }
    }

    outputs = sig[iterations];
    if (redistribute) {
      compute_residual(sig[iterations]);
      for (int i = 0; i < num_sources; ++i)
        ops.axpy(split, residual.data(), outputs[i].data(), length);
    }
  }

  // adj_outputs -> adjoints of the fixed magnitudes and initial phases.
  void backward(const std::vector<std::vector<double>>& adj_outputs,
                std::vector<RealMat>& adj_amp, std::vector<RealMat>& adj_phi0) const {
    const StftConfig& cfg = p->mixture_spec.config;
    const double split = 1.0 / num_sources;
    const int rows = amp[0].rows, cols = amp[0].cols;

    adj_amp.assign(num_sources, RealMat(rows, cols));
    std::vector<RealMat> adj_phase(num_sources, RealMat(rows, cols));  // of phi[k] at current k

    // Adjoint of the signals entering the stage being processed.
    std::vector<std::vector<double>> adj_sig(num_sources, std::vector<double>(length, 0.0));
    if (redistribute) {
      std::vector<double> mean_adj(length, 0.0);
      for (int i = 0; i < num_sources; ++i)
        for (int l = 0; l < length; ++l) mean_adj[l] += adj_outputs[i][l];
      for (int l = 0; l < length; ++l) mean_adj[l] *= split;
      for (int i = 0; i < num_sources; ++i)
        for (int l = 0; l < length; ++l) adj_sig[i][l] = adj_outputs[i][l] - mean_adj[l];
    } else {
      for (int i = 0; i < num_sources; ++i) adj_sig[i] = adj_outputs[i];
    }

    for (int k = iterations - 1; k >= -1; --k) {
      // Stage k produced sig[k+1] = istft(amp e^{j phi_k}); k == -1 stands for
      // the initial synthesis from phi0.
      std::vector<std::vector<double>> adj_prev_sig;
      if (k >= 0)
        adj_prev_sig.assign(num_sources, std::vector<double>(length, 0.0));

      for (int i = 0; i < num_sources; ++i) {
        const RealMat& phase = k >= 0 ? phi[k][i] : phi0[i];
        const CplxMat adj_spec = istft_adjoint(adj_sig[i], cfg, length);
        RealMat adj_phase_here(rows, cols);
        for (size_t b = 0; b < adj_spec.size(); ++b) {
          const double gr = adj_spec.data[b].real();
          const double gi = adj_spec.data[b].imag();
          const double ct = std::cos(phase.data[b]);
          const double stn = std::sin(phase.data[b]);
          adj_amp[i].data[b] += gr * ct + gi * stn;
          adj_phase_here.data[b] = amp[i].data[b] * (gi * ct - gr * stn);
        }
        // phases carried from later iterations (zero-|z| bins) plus this stage
        for (size_t b = 0; b < adj_phase_here.size(); ++b)
          adj_phase_here.data[b] += adj_phase[i].data[b];

        if (k >= 0) {
          // phi_k = angle(z_k) except where z_k == 0 (phase carried through).
          CplxMat adj_z(rows, cols);
          RealMat carried(rows, cols);
          for (size_t b = 0; b < adj_z.size(); ++b) {
            const cdouble v = z[k][i].data[b];
            const double mag2 = v.real() * v.real() + v.imag() * v.imag();
            if (mag2 > 0.0) {
              adj_z.data[b] = cdouble(-v.imag() / mag2, v.real() / mag2) * adj_phase_here.data[b];
            } else {
              carried.data[b] = adj_phase_here.data[b];
            }
          }
          adj_phase[i] = std::move(carried);

          const std::vector<double> adj_corrected = stft_adjoint(adj_z, cfg, length);
          for (int l = 0; l < length; ++l) adj_prev_sig[i][l] += adj_corrected[l];
        } else {
          adj_phi0.push_back(std::move(adj_phase_here));
        }
      }

      if (k >= 0) {
        // corrected_i = sig_k[i] + (x - sum_j sig_k[j]) / I
        std::vector<double> mean_adj(length, 0.0);
        for (int i = 0; i < num_sources; ++i)
          for (int l = 0; l < length; ++l) mean_adj[l] += adj_prev_sig[i][l];
        for (int l = 0; l < length; ++l) mean_adj[l] *= split;
        for (int i = 0; i < num_sources; ++i)
          for (int l = 0; l < length; ++l) adj_sig[i][l] = adj_prev_sig[i][l] - mean_adj[l];
      }
    }
  }
};

// --- reference helpers ----------------------------------------------------------------

RealMat iam_reference(const Spectrogram& source, const Spectrogram& mixture) {
  RealMat ref(mixture.frames(), mixture.freq_bins());
  for (size_t b = 0; b < ref.size(); ++b) {
    const double ax = std::abs(mixture.bins.data[b]);
    ref.data[b] = ax >= kZeroMixtureGuard ? std::abs(source.bins.data[b]) / ax : 0.0;
  }
  return ref;
}

RealMat psa_reference(const Spectrogram& source, const Spectrogram& mixture) {
  RealMat ref(mixture.frames(), mixture.freq_bins());
  for (size_t b = 0; b < ref.size(); ++b) {
    const double ax = std::abs(mixture.bins.data[b]);
    ref.data[b] = ax >= kZeroMixtureGuard
                      ? (source.bins.data[b] * std::conj(mixture.bins.data[b])).real() / ax
                      : 0.0;
  }
  return ref;
}

CplxMat ratio_reference(const Spectrogram& source, const Spectrogram& mixture) {
  CplxMat ref(mixture.frames(), mixture.freq_bins());
  for (size_t b = 0; b < ref.size(); ++b) {
    const cdouble x = mixture.bins.data[b];
    ref.data[b] = std::abs(x) >= kZeroMixtureGuard ? source.bins.data[b] / x : cdouble(0.0, 0.0);
  }
  return ref;
}

std::vector<int> resolve_order(const std::vector<int>& ref_order, int sources) {
  if (ref_order.empty()) {
    std::vector<int> identity(sources);
    std::iota(identity.begin(), identity.end(), 0);
    return identity;
  }
  require(static_cast<int>(ref_order.size()) == sources, "grad: ref_order size mismatch");
  return ref_order;
}

bool is_waveform_loss(const GradLossSpec& spec) { return spec.loss == GradLoss::WA; }

bool uses_unfolded(const GradLossSpec& spec) {
  return spec.loss == GradLoss::WA && (spec.misi_iters > 0 || spec.unfolded_k0);
}

void validate_spec(const GradProblem& p, const GradLossSpec& spec) {
  require(p.sources() >= 1, "grad: problem has no sources");
  require(static_cast<int>(p.ref_times.size()) == p.sources(), "grad: reference list mismatch");
  require(spec.misi_iters >= 0, "grad: negative MISI iterations");
  if (spec.loss == GradLoss::MA || spec.loss == GradLoss::MSA || spec.loss == GradLoss::PSA ||
      spec.loss == GradLoss::ECSA)
    require(p.head == HeadKind::MagPhase,
            "grad: this loss needs the magbook/phasebook head");
  for (const auto& ref : p.ref_times)
    require(ref.length() == p.mixture.length(), "grad: reference length mismatch");
  for (const auto& ref : p.ref_specs)
    require(ref.bins.same_shape(p.mixture_spec.bins), "grad: reference spectrogram mismatch");
}

// T-F domain pair loss of one source state against one reference.
double tf_pair_loss(const SourceState& st, const GradProblem& p, const GradLossSpec& spec,
                    int ref) {
  const Spectrogram& S = p.ref_specs[ref];
  const Spectrogram& X = p.mixture_spec;
  switch (spec.loss) {
    case GradLoss::MA: {
      const RealMat m_ref = iam_reference(S, X);
      double loss = 0.0;
      for (size_t b = 0; b < st.m_out.size(); ++b)
        loss += norm_term(st.m_out.data[b] - m_ref.data[b], spec.norm);
      return loss;
    }
    case GradLoss::MSA: {
      double loss = 0.0;
      for (size_t b = 0; b < st.m_out.size(); ++b) {
        const double ax = std::abs(X.bins.data[b]);
        loss += norm_term(st.m_out.data[b] * ax - std::abs(S.bins.data[b]), spec.norm);
      }
      return loss;
    }
    case GradLoss::PSA: {
      const RealMat target = psa_reference(S, X);
      double loss = 0.0;
      for (size_t b = 0; b < st.m_out.size(); ++b) {
        const double ax = std::abs(X.bins.data[b]);
        loss += norm_term(st.m_out.data[b] * ax - target.data[b], spec.norm);
      }
      return loss;
    }
    case GradLoss::CMA: {
      const CplxMat c_ref = ratio_reference(S, X);
      double loss = 0.0;
      for (size_t b = 0; b < st.c.size(); ++b)
        loss += cnorm_term(st.c.data[b] - c_ref.data[b], spec.norm);
      return loss;
    }
    case GradLoss::CSA: {
      double loss = 0.0;
      for (size_t b = 0; b < st.c.size(); ++b)
        loss += csa_bin_term(st.c.data[b], X.bins.data[b], S.bins.data[b], spec.norm);
      return loss;
    }
    case GradLoss::ECSA:
      return expected_csa_loss(st.pm, st.pp, p.magbook, p.phasebook, X, S, spec.norm);
    default:
      fail("tf_pair_loss: not a T-F loss");
  }
}

double waveform_pair_loss(const std::vector<double>& estimate, const Waveform& reference,
                          Norm norm) {
  const auto& ops = kernels::active();
  if (norm == Norm::L1)
    return ops.sum_abs_diff(estimate.data(), reference.samples.data(), estimate.size());
  return ops.sum_sq_diff(estimate.data(), reference.samples.data(), estimate.size());
}

struct ForwardState {
  std::vector<SourceState> states;
  std::vector<std::vector<double>> estimates;  // waveform losses only
  UnfoldedMisi misi;
};

ForwardState run_forward(const std::vector<LogitHeads>& logits, const GradProblem& p,
                         const GradLossSpec& spec) {
  require(static_cast<int>(logits.size()) == p.sources(), "grad: one logit head per source");
  ForwardState fs;
  const bool waveform = is_waveform_loss(spec);
  for (const auto& head : logits) fs.states.push_back(head_forward(head, p, waveform));

  if (!waveform) return fs;

  if (uses_unfolded(spec)) {
    fs.misi.p = &p;
    fs.misi.forward(fs.states, spec);
    fs.estimates = fs.misi.outputs;
  } else {
    for (const auto& st : fs.states)
      fs.estimates.push_back(
          istft(st.shat, p.mixture_spec.config, p.mixture.length()).samples);
  }
  return fs;
}

double loss_of(const ForwardState& fs, const GradProblem& p, const GradLossSpec& spec,
               const std::vector<int>& order) {
  double total = 0.0;
  for (int i = 0; i < p.sources(); ++i) {
    if (is_waveform_loss(spec))
      total += waveform_pair_loss(fs.estimates[i], p.ref_times[order[i]], spec.norm);
    else
      total += tf_pair_loss(fs.states[i], p, spec, order[i]);
  }
  return total;
}

// --- backward stages --------------------------------------------------------------------

struct SourceAdjoints {
  RealMat adj_m;      // MagPhase
  RealMat adj_theta;  // MagPhase
  CplxMat adj_c;      // both head kinds
  bool has_mask_adj = false;  // adj_c live (complex/waveform losses)
};

// From the complex-mask adjoint down to logits and atom gradients.
void head_backward(const SourceState& st, const GradProblem& p, SourceAdjoints& adj,
                   HeadGradients& out, Gradients& grads) {
  const int rows = p.mixture_spec.frames();
  const int cols = p.mixture_spec.freq_bins();

  if (p.head == HeadKind::Com) {
    require(adj.has_mask_adj, "head_backward: complex adjoint required for combook heads");
    Field3 adj_pc(rows, cols, p.combook.size());
    const int C = p.combook.size();
    for (int t = 0; t < rows; ++t) {
      for (int f = 0; f < cols; ++f) {
        const cdouble g = adj.adj_c(t, f);
        const double* pc = st.pc.bin(t, f);
        double* o = adj_pc.bin(t, f);
        for (int k = 0; k < C; ++k) {
          const cdouble atom = p.combook.atoms[k];
          o[k] = g.real() * atom.real() + g.imag() * atom.imag();
          if (p.train_com_atoms) grads.com_atoms[k] += pc[k] * g;
        }
      }
    }
    softmax_backward_field(st.pc, adj_pc, out.com);
    return;
  }

  // MagPhase: fold the complex-mask adjoint into the magnitude/phase ones.
  RealMat adj_m = adj.adj_m.size() ? std::move(adj.adj_m) : RealMat(rows, cols);
  RealMat adj_theta = adj.adj_theta.size() ? std::move(adj.adj_theta) : RealMat(rows, cols);
  if (adj.has_mask_adj) {
    for (int t = 0; t < rows; ++t) {
      for (int f = 0; f < cols; ++f) {
        const cdouble g = adj.adj_c(t, f);
        const double ct = std::cos(st.theta(t, f));
        const double stn = std::sin(st.theta(t, f));
        adj_m(t, f) += g.real() * ct + g.imag() * stn;
        adj_theta(t, f) += st.m_out(t, f) * (g.imag() * ct - g.real() * stn);
      }
    }
  }

  const int M = p.magbook.size();
  const int P = p.phasebook.size();
  Field3 adj_pm(rows, cols, M);
  Field3 adj_pp(rows, cols, P);
  std::vector<double> cos_atoms(P), sin_atoms(P);
  for (int j = 0; j < P; ++j) {
    cos_atoms[j] = std::cos(p.phasebook.atoms[j]);
    sin_atoms[j] = std::sin(p.phasebook.atoms[j]);
  }

  for (int t = 0; t < rows; ++t) {
    for (int f = 0; f < cols; ++f) {
      const double gm = adj_m(t, f);
      const double* pm = st.pm.bin(t, f);
      double* om = adj_pm.bin(t, f);
      for (int i = 0; i < M; ++i) {
        om[i] = gm * p.magbook.atoms[i];
        if (p.train_mag_atoms) grads.mag_atoms[i] += gm * pm[i];
      }

      const double gt = adj_theta(t, f);
      const cdouble z = st.zsum(t, f);
      const double mag2 = z.real() * z.real() + z.imag() * z.imag();
      if (mag2 < kPhaseGradDegenerate * kPhaseGradDegenerate) {
        if (gt != 0.0) ++grads.degenerate_bins;
        continue;  // angle not differentiable near cancellation
      }
      const double* pp = st.pp.bin(t, f);
      double* op = adj_pp.bin(t, f);
      for (int j = 0; j < P; ++j) {
        op[j] = gt * (z.real() * sin_atoms[j] - z.imag() * cos_atoms[j]) / mag2;
        if (p.train_phase_atoms)
          grads.phase_atoms[j] +=
              gt * pp[j] * (z.real() * cos_atoms[j] + z.imag() * sin_atoms[j]) / mag2;
      }
    }
  }

  softmax_backward_field(st.pm, adj_pm, out.mag);
  softmax_backward_field(st.pp, adj_pp, out.phase);
}

// eCSA differentiates through the probabilities directly (no interpolation).
void ecsa_backward(const SourceState& st, const GradProblem& p, const GradLossSpec& spec,
                   int ref, HeadGradients& out, Gradients& grads) {
  const Spectrogram& S = p.ref_specs[ref];
  const Spectrogram& X = p.mixture_spec;
  const int rows = X.frames(), cols = X.freq_bins();
  const int M = p.magbook.size();
  const int P = p.phasebook.size();

  std::vector<cdouble> unit(P);
  for (int j = 0; j < P; ++j) unit[j] = polar_md(1.0, p.phasebook.atoms[j]);

  Field3 adj_pm(rows, cols, M);
  Field3 adj_pp(rows, cols, P);

  for (int t = 0; t < rows; ++t) {
    for (int f = 0; f < cols; ++f) {
      const cdouble x = X.bins(t, f);
      const cdouble s = S.bins(t, f);
      const double* pm = st.pm.bin(t, f);
      const double* pp = st.pp.bin(t, f);
      double* om = adj_pm.bin(t, f);
      double* op = adj_pp.bin(t, f);
      for (int i = 0; i < M; ++i) {
        const double m = p.magbook.atoms[i];
        for (int j = 0; j < P; ++j) {
          const cdouble cx = cmul1(cdouble(m * unit[j].real(), m * unit[j].imag()), x);
          const cdouble u = cx - s;
          const double d = cnorm_term(u, spec.norm);
          om[i] += pp[j] * d;
          op[j] += pm[i] * d;
          const double weight = pm[i] * pp[j];
          if (weight == 0.0 || (!p.train_mag_atoms && !p.train_phase_atoms)) continue;
          const cdouble du = cnorm_backward(u, spec.norm);
          if (p.train_mag_atoms) {
            const cdouble dudm = cmul1(unit[j], x);
            grads.mag_atoms[i] += weight * (du.real() * dudm.real() + du.imag() * dudm.imag());
          }
          if (p.train_phase_atoms) {
            // du/dtheta_j = j * (m e^{j theta_j} x)
            grads.phase_atoms[j] += weight * (cx.real() * du.imag() - cx.imag() * du.real());
          }
        }
      }
    }
  }

  softmax_backward_field(st.pm, adj_pm, out.mag);
  softmax_backward_field(st.pp, adj_pp, out.phase);
}

}  // namespace

double forward_loss(const std::vector<LogitHeads>& logits, const GradProblem& problem,
                    const GradLossSpec& spec, const std::vector<int>& ref_order) {
  validate_spec(problem, spec);
  const auto order = resolve_order(ref_order, problem.sources());
  const ForwardState fs = run_forward(logits, problem, spec);
  return loss_of(fs, problem, spec, order);
}

ForwardBackward forward_backward(const std::vector<LogitHeads>& logits,
                                 const GradProblem& problem, const GradLossSpec& spec,
                                 const std::vector<int>& ref_order) {
  validate_spec(problem, spec);
  const auto order = resolve_order(ref_order, problem.sources());
  const int rows = problem.mixture_spec.frames();
  const int cols = problem.mixture_spec.freq_bins();
  const int sources = problem.sources();

  ForwardState fs = run_forward(logits, problem, spec);

  ForwardBackward result;
  result.loss = loss_of(fs, problem, spec, order);
  Gradients& grads = result.grads;
  grads.heads.resize(sources);
  for (int i = 0; i < sources; ++i) {
    if (problem.head == HeadKind::MagPhase) {
      grads.heads[i].mag = Field3(rows, cols, problem.magbook.size());
      grads.heads[i].phase = Field3(rows, cols, problem.phasebook.size());
    } else {
      grads.heads[i].com = Field3(rows, cols, problem.combook.size());
    }
  }
  if (problem.train_mag_atoms) grads.mag_atoms.assign(problem.magbook.size(), 0.0);
  if (problem.train_phase_atoms) grads.phase_atoms.assign(problem.phasebook.size(), 0.0);
  if (problem.train_com_atoms) grads.com_atoms.assign(problem.combook.size(), cdouble(0, 0));

  const Spectrogram& X = problem.mixture_spec;

  // Waveform losses need the joint backward through (unfolded) reconstruction
  // before the per-head stages.
  std::vector<CplxMat> adj_shat;
  if (is_waveform_loss(spec)) {
    std::vector<std::vector<double>> adj_out(sources);
    for (int i = 0; i < sources; ++i) {
      const auto& ref = problem.ref_times[order[i]].samples;
      adj_out[i].resize(ref.size());
      for (size_t l = 0; l < ref.size(); ++l)
        adj_out[i][l] = norm_backward(fs.estimates[i][l] - ref[l], spec.norm);
    }

    adj_shat.assign(sources, CplxMat(rows, cols));
    if (uses_unfolded(spec)) {
      std::vector<RealMat> adj_amp;
      std::vector<RealMat> adj_phi0;
      fs.misi.backward(adj_out, adj_amp, adj_phi0);
      for (int i = 0; i < sources; ++i) {
        for (size_t b = 0; b < adj_shat[i].size(); ++b) {
          const cdouble v = fs.states[i].shat.data[b];
          const double mag = std::abs(v);
          if (mag == 0.0) {
            // |.| and angle are not differentiable at 0; such bins are
            // excluded. Only count ones the mask zeroed (not dark mixture
            // bins, whose gradient is structurally zero anyway).
            if (std::abs(X.bins.data[b]) >= kZeroMixtureGuard) ++grads.degenerate_bins;
            continue;
          }
          const double ga = adj_amp[i].data[b];
          const double gp = adj_phi0[i].data[b];
          adj_shat[i].data[b] = cdouble(ga * v.real() / mag - gp * v.imag() / (mag * mag),
                                        ga * v.imag() / mag + gp * v.real() / (mag * mag));
        }
      }
    } else {
      for (int i = 0; i < sources; ++i)
        adj_shat[i] = istft_adjoint(adj_out[i], X.config, problem.mixture.length());
    }
  }

  for (int i = 0; i < sources; ++i) {
    SourceState& st = fs.states[i];
    const int ref = order[i];

    if (spec.loss == GradLoss::ECSA) {
      ecsa_backward(st, problem, spec, ref, grads.heads[i], grads);
      continue;
    }

    SourceAdjoints adj;
    switch (spec.loss) {
      case GradLoss::MA: {
        const RealMat m_ref = iam_reference(problem.ref_specs[ref], X);
        adj.adj_m = RealMat(rows, cols);
        for (size_t b = 0; b < adj.adj_m.size(); ++b)
          adj.adj_m.data[b] = norm_backward(st.m_out.data[b] - m_ref.data[b], spec.norm);
        break;
      }
      case GradLoss::MSA: {
        adj.adj_m = RealMat(rows, cols);
        for (size_t b = 0; b < adj.adj_m.size(); ++b) {
          const double ax = std::abs(X.bins.data[b]);
          adj.adj_m.data[b] =
              norm_backward(st.m_out.data[b] * ax - std::abs(problem.ref_specs[ref].bins.data[b]),
                            spec.norm) *
              ax;
        }
        break;
      }
      case GradLoss::PSA: {
        const RealMat target = psa_reference(problem.ref_specs[ref], X);
        adj.adj_m = RealMat(rows, cols);
        for (size_t b = 0; b < adj.adj_m.size(); ++b) {
          const double ax = std::abs(X.bins.data[b]);
          adj.adj_m.data[b] =
              norm_backward(st.m_out.data[b] * ax - target.data[b], spec.norm) * ax;
        }
        break;
      }
      case GradLoss::CMA: {
        const CplxMat c_ref = ratio_reference(problem.ref_specs[ref], X);
        adj.adj_c = CplxMat(rows, cols);
        for (size_t b = 0; b < adj.adj_c.size(); ++b)
          adj.adj_c.data[b] = cnorm_backward(st.c.data[b] - c_ref.data[b], spec.norm);
        adj.has_mask_adj = true;
        break;
      }
      case GradLoss::CSA: {
        adj.adj_c = CplxMat(rows, cols);
        for (size_t b = 0; b < adj.adj_c.size(); ++b) {
          const cdouble x = X.bins.data[b];
          const cdouble u = cmul1(st.c.data[b], x) - problem.ref_specs[ref].bins.data[b];
          const cdouble du = cnorm_backward(u, spec.norm);
          adj.adj_c.data[b] = cmul1(std::conj(x), du);
        }
        adj.has_mask_adj = true;
        break;
      }
      case GradLoss::WA: {
        adj.adj_c = CplxMat(rows, cols);
        const auto& ops = kernels::active();
        ops.cmul_conj(adj_shat[i].data.data(), X.bins.data.data(), adj.adj_c.data.data(),
                      adj.adj_c.size());
        adj.has_mask_adj = true;
        break;
      }
      case GradLoss::ECSA:
        break;  // handled above
    }

    head_backward(st, problem, adj, grads.heads[i], grads);
  }

  return result;
}

std::vector<Waveform> reconstruct(const std::vector<LogitHeads>& logits,
                                  const GradProblem& problem, const GradLossSpec& spec) {
  GradLossSpec wa = spec;
  wa.loss = GradLoss::WA;  // reconstruction always goes through the waveform path
  const ForwardState fs = run_forward(logits, problem, wa);
  std::vector<Waveform> out(problem.sources());
  for (int i = 0; i < problem.sources(); ++i) {
    out[i].sample_rate = problem.mixture.sample_rate;
    out[i].samples = fs.estimates[i];
  }
  return out;
}

// --- parameter packing -----------------------------------------------------------------

namespace {

struct ParamLayout {
  std::vector<std::pair<std::string, size_t>> segments;
  size_t total = 0;
};

ParamLayout layout_of(const std::vector<LogitHeads>& logits, const GradProblem& p) {
  ParamLayout layout;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (p.head == HeadKind::MagPhase) {
      layout.segments.emplace_back("src" + std::to_string(i) + ".mag", logits[i].mag.size());
      layout.segments.emplace_back("src" + std::to_string(i) + ".phase", logits[i].phase.size());
    } else {
      layout.segments.emplace_back("src" + std::to_string(i) + ".com", logits[i].com.size());
    }
  }
  if (p.train_mag_atoms) layout.segments.emplace_back("magbook", p.magbook.size());
  if (p.train_phase_atoms) layout.segments.emplace_back("phasebook", p.phasebook.size());
  if (p.train_com_atoms)
    layout.segments.emplace_back("combook", 2 * static_cast<size_t>(p.combook.size()));
  for (const auto& [name, size] : layout.segments) layout.total += size;
  return layout;
}

void pack_params(const std::vector<LogitHeads>& logits, const GradProblem& p,
                 std::vector<double>& out) {
  out.clear();
  for (const auto& head : logits) {
    if (p.head == HeadKind::MagPhase) {
      out.insert(out.end(), head.mag.data.begin(), head.mag.data.end());
      out.insert(out.end(), head.phase.data.begin(), head.phase.data.end());
    } else {
      out.insert(out.end(), head.com.data.begin(), head.com.data.end());
    }
  }
  if (p.train_mag_atoms)
    out.insert(out.end(), p.magbook.atoms.begin(), p.magbook.atoms.end());
  if (p.train_phase_atoms)
    out.insert(out.end(), p.phasebook.atoms.begin(), p.phasebook.atoms.end());
  if (p.train_com_atoms)
    for (const cdouble& atom : p.combook.atoms) {
      out.push_back(atom.real());
      out.push_back(atom.imag());
    }
}

void unpack_params(const double* v, std::vector<LogitHeads>& logits, GradProblem& p) {
  size_t pos = 0;
  for (auto& head : logits) {
    if (p.head == HeadKind::MagPhase) {
      std::copy(v + pos, v + pos + head.mag.size(), head.mag.data.begin());
      pos += head.mag.size();
      std::copy(v + pos, v + pos + head.phase.size(), head.phase.data.begin());
      pos += head.phase.size();
    } else {
      std::copy(v + pos, v + pos + head.com.size(), head.com.data.begin());
      pos += head.com.size();
    }
  }
  if (p.train_mag_atoms) {
    std::copy(v + pos, v + pos + p.magbook.atoms.size(), p.magbook.atoms.begin());
    pos += p.magbook.atoms.size();
  }
  if (p.train_phase_atoms) {
    std::copy(v + pos, v + pos + p.phasebook.atoms.size(), p.phasebook.atoms.begin());
    pos += p.phasebook.atoms.size();
  }
  if (p.train_com_atoms) {
    for (auto& atom : p.combook.atoms) {
      atom = cdouble(v[pos], v[pos + 1]);
      pos += 2;
    }
  }
}

void pack_grads(const Gradients& grads, const GradProblem& p, std::vector<double>& out) {
  out.clear();
  for (const auto& head : grads.heads) {
    if (p.head == HeadKind::MagPhase) {
      out.insert(out.end(), head.mag.data.begin(), head.mag.data.end());
      out.insert(out.end(), head.phase.data.begin(), head.phase.data.end());
    } else {
      out.insert(out.end(), head.com.data.begin(), head.com.data.end());
    }
  }
  out.insert(out.end(), grads.mag_atoms.begin(), grads.mag_atoms.end());
  out.insert(out.end(), grads.phase_atoms.begin(), grads.phase_atoms.end());
  for (const cdouble& g : grads.com_atoms) {
    out.push_back(g.real());
    out.push_back(g.imag());
  }
}

}  // namespace

GradCheckReport grad_check(const std::function<double(const double*)>& fn,
                           std::vector<double> params, const std::vector<double>& analytic,
                           double step, double tolerance,
                           const std::vector<std::pair<std::string, size_t>>& segments) {
  require(step > 0.0, "grad_check: step must be positive");
  require(params.size() == analytic.size(), "grad_check: size mismatch");

  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;

  double gmax = 0.0;
  for (double g : analytic) gmax = std::max(gmax, std::abs(g));

  std::vector<double> rel_errors(params.size(), 0.0);
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double plus = fn(params.data());
    params[i] = saved - step;
    const double minus = fn(params.data());
    params[i] = saved;
    const double fd = (plus - minus) / (2.0 * step);
    const double denom =
        std::max({std::abs(fd), std::abs(analytic[i]), 0.01 * gmax, 1e-12});
    rel_errors[i] = std::abs(fd - analytic[i]) / denom;
    report.max_rel_err = std::max(report.max_rel_err, rel_errors[i]);
  }

  size_t offset = 0;
  for (const auto& [name, size] : segments) {
    GradCheckSegment segment;
    segment.name = name;
    for (size_t i = offset; i < std::min(offset + size, rel_errors.size()); ++i)
      segment.max_rel_err = std::max(segment.max_rel_err, rel_errors[i]);
    report.segments.push_back(std::move(segment));
    offset += size;
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

GradCheckReport grad_check_pipeline(const std::vector<LogitHeads>& logits,
                                    const GradProblem& problem, const GradLossSpec& spec,
                                    double step, double tolerance) {
  const ForwardBackward fb = forward_backward(logits, problem, spec);
  std::vector<double> params, analytic;
  pack_params(logits, problem, params);
  pack_grads(fb.grads, problem, analytic);
  require(params.size() == analytic.size(), "grad_check_pipeline: packing mismatch");

  std::vector<LogitHeads> work_logits = logits;
  GradProblem work_problem = problem;
  const auto fn = [&](const double* v) {
    unpack_params(v, work_logits, work_problem);
    return forward_loss(work_logits, work_problem, spec);
  };
  const ParamLayout layout = layout_of(logits, problem);
  return grad_check(fn, params, analytic, step, tolerance, layout.segments);
}

// --- direct logit fitting -------------------------------------------------------------------

namespace {

double grad_norm_sq(const std::vector<double>& grads) {
  return kernels::active().dot(grads.data(), grads.data(), grads.size());
}

std::vector<int> best_permutation(const ForwardState& fs, const GradProblem& p,
                                  const GradLossSpec& spec) {
  const int sources = p.sources();
  const auto result = permutation_min(sources, [&](int est, int ref) {
    if (is_waveform_loss(spec))
      return waveform_pair_loss(fs.estimates[est], p.ref_times[ref], spec.norm);
    return tf_pair_loss(fs.states[est], p, spec, ref);
  });
  // permutation_min maps references to estimates; invert to per-estimate order.
  std::vector<int> order(sources);
  for (int r = 0; r < sources; ++r) order[result.permutation[r]] = r;
  return order;
}

double mean_sisdr(const std::vector<std::vector<double>>& estimates, const GradProblem& p,
                  const std::vector<int>& order) {
  std::vector<double> values;
  for (size_t i = 0; i < estimates.size(); ++i)
    values.push_back(si_sdr(estimates[i], p.ref_times[order[i]].samples));
  return mean(values);
}

}  // namespace

FitResult fit_logits(const std::vector<LogitHeads>& init, const GradProblem& problem,
                     const GradLossSpec& spec, const FitOptions& options) {
  validate_spec(problem, spec);
  require(options.iterations >= 0, "fit_logits: negative iteration count");

  FitResult result;
  result.logits = init;
  result.magbook = problem.magbook;
  result.phasebook = problem.phasebook;
  result.combook = problem.combook;
  GradProblem work = problem;

  std::vector<int> order = resolve_order({}, problem.sources());
  if (options.iterations == 0) {
    result.permutation = order;
    return result;
  }

  double step = options.step;
  std::vector<double> params, grads_flat;

  for (int iter = 0; iter < options.iterations; ++iter) {
    work.magbook = result.magbook;
    work.phasebook = result.phasebook;
    work.combook = result.combook;

    ForwardState fs = run_forward(result.logits, work, spec);
    if (options.permutation_free) order = best_permutation(fs, work, spec);
    const double loss = loss_of(fs, work, spec, order);
    if (!std::isfinite(loss)) {
      result.diverged = true;
      log_message(LogLevel::Error, "fit_logits: non-finite loss at iteration " +
                                       std::to_string(iter));
      break;
    }

    const ForwardBackward fb = forward_backward(result.logits, work, spec, order);
    pack_params(result.logits, work, params);
    pack_grads(fb.grads, work, grads_flat);
    const double gg = grad_norm_sq(grads_flat);

    FitTracePoint point;
    point.iter = iter;
    point.loss = loss;
    point.step = step;
    point.sisdr_mean_db = std::numeric_limits<double>::quiet_NaN();
    try {
      if (is_waveform_loss(spec)) {
        point.sisdr_mean_db = mean_sisdr(fs.estimates, work, order);
      } else {
        // score the masked iSTFT reconstruction; synthetic T-F-only problems
        // without a resynthesizable config simply skip the column
        std::vector<std::vector<double>> estimates;
        for (auto& st : fs.states) {
          CplxMat shat(st.c.rows, st.c.cols);
          kernels::active().cmul(st.c.data.data(), work.mixture_spec.bins.data.data(),
                                 shat.data.data(), shat.size());
          estimates.push_back(
              istft(shat, work.mixture_spec.config, work.mixture.length()).samples);
        }
        point.sisdr_mean_db = mean_sisdr(estimates, work, order);
      }
    } catch (const std::exception&) {
      // leave NaN
    }
    result.trace.push_back(point);

    if (gg == 0.0) break;  // stationary

    double max_abs_grad = 0.0;
    for (double g : grads_flat) max_abs_grad = std::max(max_abs_grad, std::abs(g));
    const double step_cap =
        max_abs_grad > 0.0 ? options.max_update / max_abs_grad : step;

    // Backtracking line search on the fixed permutation.
    std::vector<double> candidate(params.size());
    bool accepted = false;
    for (int attempt = 0; attempt < options.max_backtracks; ++attempt) {
      const double trial = std::min(step, step_cap);
      for (size_t j = 0; j < params.size(); ++j)
        candidate[j] = params[j] - trial * grads_flat[j];
      unpack_params(candidate.data(), result.logits, work);
      const double candidate_loss = forward_loss(result.logits, work, spec, order);
      if (std::isfinite(candidate_loss) &&
          candidate_loss <= loss - options.armijo_c * trial * gg) {
        accepted = true;
        step = trial * options.step_grow;
        break;
      }
      step = trial * options.step_shrink;
    }
    if (!accepted) {
      // restore the best-known parameters and stop
      unpack_params(params.data(), result.logits, work);
      result.stalled = true;
      break;
    }
    result.magbook = work.magbook;
    result.phasebook = work.phasebook;
    result.combook = work.combook;
  }

  result.permutation = order;
  return result;
}

}  // namespace maskbook
