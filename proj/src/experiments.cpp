// src/experiments.cpp

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

#include "maskbook/experiments.hpp"

#include <filesystem>
#include <fstream>

namespace maskbook {

namespace fs = std::filesystem;

StftConfig stft_from_config(const ConfigFile& config) {
  StftConfig stft;
  stft.win_length = config.get_int("stft.win_length", stft.win_length);
  stft.hop = config.get_int("stft.hop", stft.hop);
  stft.dft_size = config.get_int("stft.dft_size", stft.dft_size);
  stft.sample_rate = config.get_int("stft.sample_rate", stft.sample_rate);
  stft.window = window_kind_from_string(config.get_string("stft.window", "sqrt_hann"));
  validate(stft);
  return stft;
}

SynthSpec synth_from_config(const ConfigFile& config) {
  SynthSpec spec;
  spec.count = config.get_int("synth.count", spec.count);
  spec.duration_s = config.get_double("synth.duration_s", spec.duration_s);
  spec.sample_rate = config.get_int("synth.sample_rate", spec.sample_rate);
  spec.snr_min_db = config.get_double("synth.snr_min_db", spec.snr_min_db);
  spec.snr_max_db = config.get_double("synth.snr_max_db", spec.snr_max_db);
  spec.disjoint_bands = config.get_bool("synth.disjoint_bands", spec.disjoint_bands);
  if (config.has("synth.types")) {
    spec.types.clear();
    for (const auto& name : config.get_list("synth.types", {}))
      spec.types.push_back(source_type_from_string(name));
  }
  validate(spec);
  return spec;
}

std::vector<MixtureRecord> load_corpus(const ConfigFile& config, uint64_t seed) {
  if (config.has("corpus.manifest")) {
    const CorpusManifest manifest = load_manifest(config.require_string("corpus.manifest"));
    std::vector<MixtureRecord> records;
    for (const auto& entry : manifest.entries)
      records.push_back(load_record(entry, manifest.sample_rate));
    return records;
  }
  return synth_mixtures(synth_from_config(config), seed);
}

OracleStudyOptions oracle_study_from_config(const ConfigFile& config) {
  OracleStudyOptions options;
  if (config.has("oracle_study.masks")) {
    options.masks.clear();
    for (const auto& name : config.get_list("oracle_study.masks", {}))
      options.masks.push_back(mask_kind_from_string(name));
  }
  options.r_max_values = config.get_double_list("oracle_study.r_max", options.r_max_values);
  const auto phases =
      config.get_list("oracle_study.phase", {"noisy", "true", "phasebook"});
  options.include_noisy = std::find(phases.begin(), phases.end(), "noisy") != phases.end();
  options.include_true = std::find(phases.begin(), phases.end(), "true") != phases.end();
  if (std::find(phases.begin(), phases.end(), "phasebook") == phases.end())
    options.phasebook_sizes.clear();
  else
    options.phasebook_sizes =
        config.get_int_list("oracle_study.phasebook_sizes", options.phasebook_sizes);
  options.optimize_phasebooks =
      config.get_bool("oracle_study.optimize_phasebooks", options.optimize_phasebooks);
  options.epochs = config.get_int("oracle_study.epochs", options.epochs);
  return options;
}

const OracleStudyCell* OracleStudyResult::find(MaskKind mask, double r_max,
                                               const std::string& phase,
                                               int phasebook_size) const {
  for (const auto& cell : cells) {
    if (cell.mask == mask && cell.phase == phase && cell.phasebook_size == phasebook_size &&
        (cell.r_max == r_max ||
         (std::isinf(cell.r_max) && std::isinf(r_max))))
      return &cell;
  }
  return nullptr;
}

namespace {

struct UttSpectra {
  Spectrogram mixture;
  std::vector<Spectrogram> sources;
  std::vector<Spectrogram> interference;
  std::vector<RealMat> theta;
  std::vector<double> base_sisdr;
  int guarded = 0;
};

UttSpectra analyze(const MixtureRecord& record, const StftConfig& cfg) {
  UttSpectra utt;
  utt.mixture = stft(record.mixture, cfg);
  for (size_t i = 0; i < record.sources.size(); ++i) {
    utt.sources.push_back(stft(record.sources[i], cfg));
    Spectrogram interference;
    interference.config = cfg;
    interference.bins = CplxMat(utt.mixture.frames(), utt.mixture.freq_bins());
    for (size_t b = 0; b < interference.bins.size(); ++b)
      interference.bins.data[b] = utt.mixture.bins.data[b] - utt.sources[i].bins.data[b];
    utt.interference.push_back(std::move(interference));
    int guarded = 0;
    utt.theta.push_back(phase_difference(utt.sources[i], utt.mixture, &guarded));
    utt.guarded += guarded;
    utt.base_sisdr.push_back(si_sdr(record.mixture, record.sources[i]));
  }
  return utt;
}

// Sign-aware nearest phase atom: argmax_j m (cos(theta_j) z_re + sin(theta_j) z_im).
int nearest_phase_atom(double m, cdouble z, const std::vector<double>& cos_atoms,
                       const std::vector<double>& sin_atoms) {
  int best = 0;
  double best_score = m * (cos_atoms[0] * z.real() + sin_atoms[0] * z.imag());
  for (size_t j = 1; j < cos_atoms.size(); ++j) {
    const double score = m * (cos_atoms[j] * z.real() + sin_atoms[j] * z.imag());
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(j);
    }
  }
  return best;
}

struct CellScore {
  std::vector<double> sisdri;
};

}  // namespace

OracleStudyResult run_oracle_study(const std::vector<MixtureRecord>& corpus,
                                   const StftConfig& stft_config,
                                   const OracleStudyOptions& options, int jobs) {
  require(!corpus.empty(), "oracle study: empty corpus");
  for (const auto& record : corpus)
    require(record.sources.size() == 2, "oracle study: expects two-source mixtures");

  const int utterances = static_cast<int>(corpus.size());
  std::vector<UttSpectra> spectra(utterances);
  parallel_for(utterances, jobs,
               [&](int u) { spectra[u] = analyze(corpus[u], stft_config); });

  OracleStudyResult result;
  for (const auto& utt : spectra) {
    result.flags.guarded += utt.guarded;
    result.flags.total_bins +=
        2L * utt.mixture.frames() * utt.mixture.freq_bins();
  }

  for (MaskKind kind : options.masks) {
    for (double r_max : options.r_max_values) {
      // Masks for this grid row.
      std::vector<std::vector<OracleMaskResult>> masks(utterances);
      parallel_for(utterances, jobs, [&](int u) {
        for (int i = 0; i < 2; ++i)
          masks[u].push_back(oracle_mask(kind, spectra[u].sources[i],
                                         spectra[u].interference[i], spectra[u].mixture, r_max));
      });
      for (const auto& utt_masks : masks)
        for (const auto& mask : utt_masks) result.flags.guarded += mask.guarded_bins;

      if (kind == MaskKind::ICM) {
        std::vector<CellScore> scores(utterances);
        parallel_for(utterances, jobs, [&](int u) {
          for (int i = 0; i < 2; ++i) {
            const Spectrogram est_spec = apply_mask(masks[u][i].complex_, spectra[u].mixture);
            const Waveform est = istft(est_spec, corpus[u].mixture.length());
            scores[u].sisdri.push_back(si_sdr(est, corpus[u].sources[i]) -
                                       spectra[u].base_sisdr[i]);
          }
        });
        std::vector<double> all;
        for (const auto& score : scores)
          all.insert(all.end(), score.sisdri.begin(), score.sisdri.end());
        result.cells.push_back(
            {kind, r_max, "intrinsic", 0, mean(all), median(all)});
        continue;
      }

      auto score_cell = [&](const std::function<cdouble(int u, int i, int t, int f)>& mask_fn) {
        std::vector<CellScore> scores(utterances);
        parallel_for(utterances, jobs, [&](int u) {
          const int rows = spectra[u].mixture.frames();
          const int cols = spectra[u].mixture.freq_bins();
          for (int i = 0; i < 2; ++i) {
            CplxMat complex_mask(rows, cols);
            for (int t = 0; t < rows; ++t)
              for (int f = 0; f < cols; ++f) complex_mask(t, f) = mask_fn(u, i, t, f);
            const Spectrogram est_spec = apply_mask(complex_mask, spectra[u].mixture);
            const Waveform est = istft(est_spec, corpus[u].mixture.length());
            scores[u].sisdri.push_back(si_sdr(est, corpus[u].sources[i]) -
                                       spectra[u].base_sisdr[i]);
          }
        });
        std::vector<double> all;
        for (const auto& score : scores)
          all.insert(all.end(), score.sisdri.begin(), score.sisdri.end());
        return all;
      };

      if (options.include_noisy) {
        const auto all = score_cell([&](int u, int i, int t, int f) {
          return cdouble(masks[u][i].real(t, f), 0.0);
        });
        result.cells.push_back({kind, r_max, "noisy", 0, mean(all), median(all)});
      }

      if (options.include_true) {
        const auto all = score_cell([&](int u, int i, int t, int f) {
          return polar_md(std::fabs(masks[u][i].real(t, f)), spectra[u].theta[i](t, f));
        });
        result.cells.push_back({kind, r_max, "true", 0, mean(all), median(all)});
      }

      if (!options.phasebook_sizes.empty()) {
        // One training set per grid row; the phasebook is optimized for the
        // particular magnitude mask it will be paired with.
        std::vector<Spectrogram> flat_sources, flat_mixtures;
        std::vector<RealMat> flat_mags;
        for (int u = 0; u < utterances; ++u) {
          for (int i = 0; i < 2; ++i) {
            flat_sources.push_back(spectra[u].sources[i]);
            flat_mixtures.push_back(spectra[u].mixture);
            flat_mags.push_back(masks[u][i].real);
          }
        }
        const MaskTrainingSet data =
            make_training_set(flat_sources, flat_mixtures, &flat_mags);

        for (int size : options.phasebook_sizes) {
          Phasebook book = size >= 2 ? uniform_phasebook(size) : Phasebook{{0.0}};
          if (options.optimize_phasebooks && size >= 2)
            book = optimize_phasebook(book, data, options.epochs).first;
          std::vector<double> cos_atoms(book.size()), sin_atoms(book.size());
          for (int j = 0; j < book.size(); ++j) {
            cos_atoms[j] = std::cos(book.atoms[j]);
            sin_atoms[j] = std::sin(book.atoms[j]);
          }
          const auto all = score_cell([&](int u, int i, int t, int f) {
            const double m = masks[u][i].real(t, f);
            const cdouble z = spectra[u].sources[i].bins(t, f) *
                              std::conj(spectra[u].mixture.bins(t, f));
            const int j = nearest_phase_atom(m, z, cos_atoms, sin_atoms);
            return polar_md(m, book.atoms[j]);
          });
          result.cells.push_back({kind, r_max, "phasebook", size, mean(all), median(all)});
        }
      }
    }
  }
  return result;
}

void write_oracle_study_csv(const std::string& path, const OracleStudyResult& result) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path);
  out << "mask,r_max,phase,phasebook_size,mean_sisdri_db,median_sisdri_db\n";
  char line[256];
  for (const auto& cell : result.cells) {
    std::snprintf(line, sizeof(line), "%s,%g,%s,%d,%.6f,%.6f\n", to_string(cell.mask),
                  cell.r_max, cell.phase.c_str(), cell.phasebook_size, cell.mean_sisdri_db,
                  cell.median_sisdri_db);
    out << line;
  }
}

// --- commands -------------------------------------------------------------------------

namespace {

int exit_code_for_flags(const ConfigFile& config, const FlagCounters& flags) {
  const double threshold = config.get_double("flags.max_flag_fraction", 1.0);
  if (flags.fraction() > threshold) {
    log_message(LogLevel::Error,
                "flagged bin fraction " + std::to_string(flags.fraction()) +
                    " exceeds threshold " + std::to_string(threshold));
    return 2;
  }
  return 0;
}

std::string out_path(const CommonOptions& common, const std::string& file) {
  fs::create_directories(common.out_dir);
  return (fs::path(common.out_dir) / file).string();
}

}  // namespace

int cmd_synth(const ConfigFile& config, const CommonOptions& common) {
  const SynthSpec spec = synth_from_config(config);
  const std::string dir = (fs::path(common.out_dir) / "corpus").string();
  const CorpusManifest manifest = synth_corpus(spec, common.seed, dir);
  std::printf("wrote %zu mixtures under %s\n", manifest.entries.size(), dir.c_str());
  std::printf("manifest: %s\n", (fs::path(dir) / "corpus.tsv").string().c_str());
  return 0;
}

int cmd_oracle_study(const ConfigFile& config, const CommonOptions& common) {
  const StftConfig stft_config = stft_from_config(config);
  const OracleStudyOptions options = oracle_study_from_config(config);
  const auto corpus = load_corpus(config, common.seed);
  const OracleStudyResult result = run_oracle_study(corpus, stft_config, options, common.jobs);
  const std::string csv = out_path(common, "oracle_study.csv");
  write_oracle_study_csv(csv, result);
  std::printf("oracle study: %zu cells over %zu mixtures -> %s\n", result.cells.size(),
              corpus.size(), csv.c_str());
  return exit_code_for_flags(config, result.flags);
}

namespace {

void write_trace_csv(const std::string& path, const OptReport& report) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path);
  out << "step,objective\n";
  for (size_t i = 0; i < report.trace.size(); ++i) {
    char line[96];
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, report.trace[i]);
    out << line;
  }
}

void write_epoch_csv(const std::string& path, const OptReport& report) {
  std::ofstream out(path);
  require(out.good(), "cannot open for writing: " + path);
  out << "epoch,objective";
  const size_t atom_count =
      report.atoms_per_epoch.empty() ? 0 : report.atoms_per_epoch.front().size();
  for (size_t a = 0; a < atom_count; ++a) out << ",atom" << a;
  out << "\n";
  for (size_t e = 0; e < report.per_epoch.size(); ++e) {
    out << e << ',';
    char value[48];
    std::snprintf(value, sizeof(value), "%.17g", report.per_epoch[e]);
    out << value;
    if (e < report.atoms_per_epoch.size()) {
      for (double atom : report.atoms_per_epoch[e]) {
        std::snprintf(value, sizeof(value), ",%.17g", atom);
        out << value;
      }
    }
    out << "\n";
  }
}

}  // namespace

int cmd_optimize_codebook(const ConfigFile& config, const CommonOptions& common) {
  const StftConfig stft_config = stft_from_config(config);
  const auto corpus = load_corpus(config, common.seed);

  std::vector<Spectrogram> sources, mixtures;
  for (const auto& record : corpus) {
    const Spectrogram mixture = stft(record.mixture, stft_config);
    for (const auto& src : record.sources) {
      sources.push_back(stft(src, stft_config));
      mixtures.push_back(mixture);
    }
  }

  const std::string kind = config.get_string("codebook.kind", "phasebook");
  const int size = config.get_int("codebook.size", 8);
  const int epochs = config.get_int("codebook.epochs", 40);
  const std::string init = config.get_string("codebook.init", "uniform");
  const double mag_clamp = config.get_double("codebook.mag_clamp", kUnboundedRmax);
  const double ratio_clamp = config.get_double("codebook.ratio_clamp", 2.0);
  const uint64_t seed = config.get_u64("codebook.seed", common.seed);

  const MaskTrainingSet data =
      make_training_set(sources, mixtures, nullptr, mag_clamp, ratio_clamp);

  OptReport report;
  if (kind == "phasebook") {
    Phasebook book;
    if (init == "uniform")
      book = uniform_phasebook(size);
    else if (init == "random")
      book = random_phasebook(data, size, seed);
    else if (init == "file")
      book = load_phasebook(config.require_string("codebook.init_file"));
    else
      fail("codebook.init must be uniform, random, or file");
    auto [optimized, opt_report] =
        epochs > 0 ? optimize_phasebook(book, data, epochs)
                   : std::make_pair(book, OptReport{});
    report = opt_report;
    save_codebook(out_path(common, "phasebook.txt"), optimized);
  } else if (kind == "magphase") {
    const int mag_size = config.get_int("codebook.mag_size", 3);
    Magbook mag = uniform_magbook(mag_size);
    Phasebook phase = uniform_phasebook(size);
    if (init == "random") {
      mag = random_magbook(data, mag_size, seed);
      phase = random_phasebook(data, size, seed + 1);
    } else if (init == "file") {
      mag = load_magbook(config.require_string("codebook.mag_init_file"));
      phase = load_phasebook(config.require_string("codebook.init_file"));
    }
    auto [books, opt_report] =
        epochs > 0 ? optimize_magbook_phasebook(mag, phase, data, epochs)
                   : std::make_pair(JointBooks{mag, phase}, OptReport{});
    report = opt_report;
    save_codebook(out_path(common, "magbook.txt"), books.magbook);
    save_codebook(out_path(common, "phasebook.txt"), books.phasebook);
  } else if (kind == "combook") {
    Combook book;
    if (init == "uniform")
      book = uniform_combook(size);
    else if (init == "random")
      book = random_combook(data, size, seed);
    else if (init == "file")
      book = load_combook(config.require_string("codebook.init_file"));
    else
      fail("codebook.init must be uniform, random, or file");
    auto [optimized, opt_report] = epochs > 0 ? optimize_combook(book, data, epochs)
                                              : std::make_pair(book, OptReport{});
    report = opt_report;
    save_codebook(out_path(common, "combook.txt"), optimized);
  } else {
    fail("codebook.kind must be phasebook, magphase, or combook");
  }

  write_trace_csv(out_path(common, "objective_trace.csv"), report);
  write_epoch_csv(out_path(common, "objective_epochs.csv"), report);
  if (!report.trace.empty())
    std::printf("objective %.6g -> %.6g over %d epochs%s\n", report.trace.front(),
                report.trace.back(), report.epochs_run,
                report.converged ? " (converged)" : "");
  return 0;
}

int cmd_fit(const ConfigFile& config, const CommonOptions& common) {
  const StftConfig stft_config = stft_from_config(config);
  const auto corpus = load_corpus(config, common.seed);
  const int index = config.get_int("fit.utterance", 0);
  require(index >= 0 && index < static_cast<int>(corpus.size()), "fit.utterance out of range");
  const MixtureRecord& record = corpus[index];

  GradProblem problem;
  problem.mixture = record.mixture;
  problem.mixture_spec = stft(record.mixture, stft_config);
  for (const auto& src : record.sources) {
    problem.ref_times.push_back(src);
    problem.ref_specs.push_back(stft(src, stft_config));
  }

  const std::string head = config.get_string("fit.head", "magphase");
  problem.head = head == "combook" ? HeadKind::Com : HeadKind::MagPhase;
  problem.magbook = uniform_magbook(config.get_int("fit.magbook_size", 3));
  problem.phasebook = uniform_phasebook(config.get_int("fit.phasebook_size", 8));
  problem.combook = uniform_combook(config.get_int("fit.combook_size", 12));
  if (config.has("fit.magbook_file"))
    problem.magbook = load_magbook(config.require_string("fit.magbook_file"));
  if (config.has("fit.phasebook_file"))
    problem.phasebook = load_phasebook(config.require_string("fit.phasebook_file"));
  if (config.has("fit.combook_file"))
    problem.combook = load_combook(config.require_string("fit.combook_file"));
  const bool train_atoms = config.get_bool("fit.train_atoms", false);
  if (problem.head == HeadKind::MagPhase) {
    problem.train_mag_atoms = train_atoms;
    problem.train_phase_atoms = train_atoms;
  } else {
    problem.train_com_atoms = train_atoms;
  }

  GradLossSpec spec;
  spec.loss = grad_loss_from_string(config.get_string("fit.loss", "WA"));
  spec.norm = norm_from_string(config.get_string("fit.norm", "l1"));
  spec.misi_iters = config.get_int("fit.misi_iters", 0);

  FitOptions options;
  options.iterations = config.get_int("fit.iterations", 200);
  options.step = config.get_double("fit.step", 1.0);
  options.permutation_free = config.get_bool("fit.permutation_free", true);

  const double init_scale = config.get_double("fit.init_scale", 0.5);
  Rng rng(config.get_u64("fit.seed", common.seed));
  const int rows = problem.mixture_spec.frames();
  const int cols = problem.mixture_spec.freq_bins();
  std::vector<LogitHeads> init(problem.sources());
  for (auto& heads : init) {
    if (problem.head == HeadKind::MagPhase) {
      heads.mag = Field3(rows, cols, problem.magbook.size());
      heads.phase = Field3(rows, cols, problem.phasebook.size());
      for (auto& v : heads.mag.data) v = init_scale * rng.normal();
      for (auto& v : heads.phase.data) v = init_scale * rng.normal();
    } else {
      heads.com = Field3(rows, cols, problem.combook.size());
      for (auto& v : heads.com.data) v = init_scale * rng.normal();
    }
  }

  const FitResult result = fit_logits(init, problem, spec, options);

  const std::string trace_path = out_path(common, "fit_trace.csv");
  {
    std::ofstream out(trace_path);
    require(out.good(), "cannot open for writing: " + trace_path);
    out << "iter,loss,sisdr_mean_db,step\n";
    char line[160];
    for (const auto& point : result.trace) {
      std::snprintf(line, sizeof(line), "%d,%.17g,%.6f,%.6g\n", point.iter, point.loss,
                    point.sisdr_mean_db, point.step);
      out << line;
    }
  }

  const auto estimates = reconstruct(result.logits, problem, spec);
  for (size_t i = 0; i < estimates.size(); ++i)
    write_wav(out_path(common, "fit_est" + std::to_string(i + 1) + ".wav"), estimates[i]);

  // Evaluate the whole loss family on the fitted masks (sums and per-frame
  // means) for one-stop comparison across objectives.
  {
    GradProblem final_problem = problem;
    final_problem.magbook = result.magbook;
    final_problem.phasebook = result.phasebook;
    final_problem.combook = result.combook;
    const double frames = problem.mixture_spec.frames();
    const std::string losses_path = out_path(common, "fit_losses.csv");
    std::ofstream out(losses_path);
    require(out.good(), "cannot open for writing: " + losses_path);
    out << "utt_id,loss,value,per_frame_mean\n";
    const std::string utt_id = corpus[index].id;
    std::vector<GradLoss> kinds = {GradLoss::CMA, GradLoss::CSA, GradLoss::WA};
    if (problem.head == HeadKind::MagPhase)
      kinds.insert(kinds.begin(),
                   {GradLoss::MA, GradLoss::MSA, GradLoss::PSA, GradLoss::ECSA});
    for (GradLoss kind : kinds) {
      GradLossSpec eval_spec = spec;
      eval_spec.loss = kind;
      const double value =
          forward_loss(result.logits, final_problem, eval_spec, result.permutation);
      char line[192];
      std::snprintf(line, sizeof(line), "%s,%s,%.17g,%.17g\n", utt_id.c_str(),
                    to_string(kind), value, value / frames);
      out << line;
    }
  }
  if (train_atoms) {
    if (problem.head == HeadKind::MagPhase) {
      save_codebook(out_path(common, "fit_magbook.txt"), result.magbook);
      save_codebook(out_path(common, "fit_phasebook.txt"), result.phasebook);
    } else {
      save_codebook(out_path(common, "fit_combook.txt"), result.combook);
    }
  }

  if (!result.trace.empty())
    std::printf("fit: loss %.6g -> %.6g, SI-SDR %.2f dB over %zu iterations -> %s\n",
                result.trace.front().loss, result.trace.back().loss,
                result.trace.back().sisdr_mean_db, result.trace.size(), trace_path.c_str());
  return result.diverged ? 3 : 0;
}

int cmd_eval(const ConfigFile& config, const CommonOptions& common) {
  const CorpusManifest references = load_manifest(config.require_string("eval.references"));
  const CorpusManifest estimates = load_manifest(config.require_string("eval.estimates"));
  require(references.entries.size() == estimates.entries.size(),
          "eval: manifest sizes differ");

  std::vector<std::vector<Waveform>> est_lists, ref_lists;
  std::vector<Waveform> mixtures;
  std::vector<std::string> ids;
  for (size_t u = 0; u < references.entries.size(); ++u) {
    const MixtureRecord ref = load_record(references.entries[u], references.sample_rate);
    std::vector<Waveform> est;
    for (const auto& path : estimates.entries[u].source_paths) est.push_back(read_wav(path));
    require(est.size() == ref.sources.size(), "eval: source count mismatch at " + ref.id);
    ids.push_back(ref.id);
    mixtures.push_back(ref.mixture);
    ref_lists.push_back(ref.sources);
    est_lists.push_back(std::move(est));
  }

  const EvalReport report = evaluate_corpus(est_lists, ref_lists, mixtures, ids);
  const std::string csv = out_path(common, "eval.csv");
  std::ofstream out(csv);
  require(out.good(), "cannot open for writing: " + csv);
  out << "utt_id,source_idx,sisdr_db,sisdri_db,perm\n";
  for (const auto& utt : report.utterances) {
    for (size_t s = 0; s < utt.sisdr_db.size(); ++s) {
      char line[192];
      std::snprintf(line, sizeof(line), "%s,%zu,%.4f,%.4f,%d\n", utt.id.c_str(), s,
                    utt.sisdr_db[s], utt.sisdri_db[s], utt.permutation[s]);
      out << line;
    }
  }
  std::printf("eval: mean SI-SDR %.2f dB, mean SI-SDRi %.2f dB over %zu utterances -> %s\n",
              report.mean_sisdr_db, report.mean_sisdri_db, report.utterances.size(),
              csv.c_str());
  return 0;
}

int cmd_misi(const ConfigFile& config, const CommonOptions& common, const MisiCmdArgs& args) {
  const StftConfig stft_config = stft_from_config(config);
  const Waveform mixture = read_wav(args.mixture_wav);
  require(!args.magnitude_files.empty(), "misi: need at least one magnitude file");

  std::vector<RealMat> magnitudes;
  for (const auto& path : args.magnitude_files) magnitudes.push_back(load_real_matrix(path));

  std::vector<RealMat> phases;
  if (args.init == "noisy") {
    const Spectrogram mix_spec = stft(mixture, stft_config);
    RealMat noisy(mix_spec.frames(), mix_spec.freq_bins());
    for (size_t b = 0; b < noisy.size(); ++b) {
      const cdouble v = mix_spec.bins.data[b];
      noisy.data[b] = (v.real() != 0.0 || v.imag() != 0.0) ? std::atan2(v.imag(), v.real()) : 0.0;
    }
    phases.assign(magnitudes.size(), noisy);
  } else if (args.init == "zero") {
    for (const auto& mag : magnitudes) phases.emplace_back(mag.rows, mag.cols, 0.0);
  } else if (args.init == "provided") {
    require(args.phase_files.size() == args.magnitude_files.size(),
            "misi: --phase-files must match --magnitudes with --init provided");
    for (const auto& path : args.phase_files) phases.push_back(load_real_matrix(path));
  } else {
    fail("misi: --init must be noisy, zero, or provided");
  }

  MisiOptions options;
  options.iterations = args.iterations;
  options.redistribute_at_k0 = args.redistribute_at_k0;
  const MisiResult result = misi(magnitudes, phases, mixture, stft_config, options);

  double worst = 0.0;
  for (int l = 0; l < mixture.length(); ++l) {
    double total = 0.0;
    for (const auto& src : result.sources) total += src.samples[l];
    worst = std::max(worst, std::abs(total - mixture.samples[l]));
  }

  for (size_t i = 0; i < result.sources.size(); ++i)
    write_wav(out_path(common, "misi_s" + std::to_string(i + 1) + ".wav"), result.sources[i]);
  std::printf("misi: %d iterations, %zu sources, max |sum - mixture| = %.3g\n",
              result.iterations, result.sources.size(), worst);
  return 0;
}

int cmd_gradcheck(const ConfigFile& config, const CommonOptions& common) {
  (void)common;
  const uint64_t seed = config.get_u64("gradcheck.seed", 7);
  const double step = config.get_double("gradcheck.step", 1e-5);
  const double tolerance = config.get_double("gradcheck.tol", 1e-5);
  const Norm norm = norm_from_string(config.get_string("gradcheck.norm", "l2sq"));
  const auto losses = config.get_list(
      "gradcheck.losses", {"MSA", "PSA", "CMA", "CSA", "eCSA", "wa", "wa-misi-1", "wa-misi-2"});

  bool all_pass = true;
  for (const auto& name : losses) {
    GradLossSpec spec;
    spec.norm = norm;
    if (name.rfind("wa-misi-", 0) == 0) {
      spec.loss = GradLoss::WA;
      spec.misi_iters = std::stoi(name.substr(8));
    } else if (name == "wa" || name == "WA") {
      spec.loss = GradLoss::WA;
    } else {
      spec.loss = grad_loss_from_string(name);
    }

    auto [problem, logits] = make_random_grad_problem(HeadKind::MagPhase, seed, true);
    const GradCheckReport report = grad_check_pipeline(logits, problem, spec, step, tolerance);
    std::printf("%-10s max_rel_err %.3e  %s\n", name.c_str(), report.max_rel_err,
                report.pass ? "PASS" : "FAIL");
    if (log_level() >= LogLevel::Info)
      for (const auto& segment : report.segments)
        std::printf("    %-12s %.3e\n", segment.name.c_str(), segment.max_rel_err);
    all_pass = all_pass && report.pass;
  }
  return all_pass ? 0 : 4;
}

std::pair<GradProblem, std::vector<LogitHeads>> make_random_grad_problem(HeadKind head,
                                                                         uint64_t seed,
                                                                         bool train_atoms) {
  // An 8-frame, 9-bin problem: 16-point DFT, hop 4, 20-sample signals.
  StftConfig cfg;
  cfg.win_length = 16;
  cfg.hop = 4;
  cfg.dft_size = 16;
  cfg.sample_rate = 8000;

  Rng rng(seed);
  const int length = 20;
  Waveform s1, s2;
  s1.sample_rate = s2.sample_rate = cfg.sample_rate;
  for (int l = 0; l < length; ++l) {
    s1.samples.push_back(rng.normal());
    s2.samples.push_back(rng.normal());
  }
  Waveform mixture;
  mixture.sample_rate = cfg.sample_rate;
  for (int l = 0; l < length; ++l) mixture.samples.push_back(s1.samples[l] + s2.samples[l]);

  GradProblem problem;
  problem.mixture = mixture;
  problem.mixture_spec = stft(mixture, cfg);
  problem.ref_times = {s1, s2};
  problem.ref_specs = {stft(s1, cfg), stft(s2, cfg)};
  problem.head = head;
  problem.magbook = uniform_magbook(3);
  problem.phasebook = uniform_phasebook(8);
  problem.combook = uniform_combook(6);
  if (head == HeadKind::MagPhase) {
    problem.train_mag_atoms = train_atoms;
    problem.train_phase_atoms = train_atoms;
  } else {
    problem.train_com_atoms = train_atoms;
  }

  const int rows = problem.mixture_spec.frames();
  const int cols = problem.mixture_spec.freq_bins();
  std::vector<LogitHeads> logits(2);
  for (auto& heads : logits) {
    if (head == HeadKind::MagPhase) {
      heads.mag = Field3(rows, cols, problem.magbook.size());
      heads.phase = Field3(rows, cols, problem.phasebook.size());
      for (auto& v : heads.mag.data) v = rng.normal();
      for (auto& v : heads.phase.data) v = rng.normal();
    } else {
      heads.com = Field3(rows, cols, problem.combook.size());
      for (auto& v : heads.com.data) v = rng.normal();
    }
  }
  return {problem, logits};
}

}  // namespace maskbook
