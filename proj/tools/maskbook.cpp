// tools/maskbook.cpp

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

#include <CLI11.hpp>

#include "maskbook/experiments.hpp"

using namespace maskbook;

int main(int argc, char** argv) {
  CLI::App app{"maskbook: discrete codebook masks for source separation"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path;
  CommonOptions common;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--out", common.out_dir, "output directory")->capture_default_str();
  app.add_option("--seed", common.seed, "RNG seed")->capture_default_str();
  app.add_option("--jobs", common.jobs, "worker threads across utterances")
      ->capture_default_str();

  auto* synth = app.add_subcommand("synth", "generate a synthetic two-source corpus");
  auto* oracle = app.add_subcommand("oracle-study", "oracle mask / quantized phase study");
  auto* optimize =
      app.add_subcommand("optimize-codebook", "offline codebook optimization (EM / k-means)");
  auto* fit = app.add_subcommand("fit", "direct per-bin logit fitting on one mixture");
  auto* misi_cmd = app.add_subcommand("misi", "multiple input spectrogram inversion");
  auto* eval = app.add_subcommand("eval", "SI-SDR evaluation with permutation search");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");

  MisiCmdArgs misi_args;
  misi_cmd->add_option("--mixture", misi_args.mixture_wav, "mixture WAV file")->required();
  misi_cmd
      ->add_option("--magnitudes", misi_args.magnitude_files,
                   "per-source magnitude matrix files")
      ->required();
  misi_cmd->add_option("--phase-files", misi_args.phase_files,
                       "per-source phase matrix files (with --init provided)");
  misi_cmd->add_option("--iters", misi_args.iterations, "MISI iterations")
      ->capture_default_str();
  misi_cmd->add_option("--init", misi_args.init, "phase init: noisy | zero | provided")
      ->capture_default_str();
  misi_cmd->add_flag("--redistribute-at-k0", misi_args.redistribute_at_k0,
                     "apply the final error redistribution even with 0 iterations");

  CLI11_PARSE(app, argc, argv);

  try {
    const ConfigFile config = config_path.empty() ? ConfigFile::parse_string("", "<empty>")
                                                  : ConfigFile::parse_file(config_path);
    if (synth->parsed()) return cmd_synth(config, common);
    if (oracle->parsed()) return cmd_oracle_study(config, common);
    if (optimize->parsed()) return cmd_optimize_codebook(config, common);
    if (fit->parsed()) return cmd_fit(config, common);
    if (misi_cmd->parsed()) return cmd_misi(config, common, misi_args);
    if (eval->parsed()) return cmd_eval(config, common);
    if (gradcheck->parsed()) return cmd_gradcheck(config, common);
  } catch (const std::exception& error) {
    std::fprintf(stderr, "error: %s\n", error.what());
    return 1;
  }
  return 0;
}
