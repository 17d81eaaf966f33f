// tools/avsep_cli.cpp

// Copyright 2026  avsep authors
//
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

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avsep/cli.hpp"

namespace {

// Command-line values; only options actually given override the config.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::map<std::string, std::string> paths;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Flat key=value or JSON config file");
  cmd->add_option("--seed", f.seed, "Global seed (u64)");
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--set", f.sets, "Override one config key: key=value (repeatable)");
}

void add_path(CLI::App* cmd, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<std::string>(flag, [&f, key](const std::string& v) { f.paths[key] = v; }, help);
}

avsep::cli::Config resolve(const Flags& f) {
  avsep::cli::Config c = f.config.empty() ? avsep::cli::Config{} : avsep::cli::Config::from_file(f.config);
  for (const auto& kv : f.sets) c.set_assignment(kv);
  for (const auto& [k, v] : f.paths) c.set(k, v);
  if (f.seed) c.set("seed", std::to_string(*f.seed));
  c.set("out", f.out);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual speech separation with a conditional VAE and Monte-Carlo EM"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "Generate the synthetic corpus");
  add_common(gen, f);

  auto* train = app.add_subcommand("train", "Train the speaker-independent model and NMF dictionaries");
  add_common(train, f);
  add_path(train, f, "--corpus", "corpus", "Corpus manifest or directory");
  add_path(train, f, "--speaker-dependent", "speaker_dependent", "Also fine-tune a decoder for <id> or all");

  auto* finetune = app.add_subcommand("finetune", "Fine-tune the decoder for one speaker");
  add_common(finetune, f);
  add_path(finetune, f, "--corpus", "corpus", "Corpus manifest or directory");
  add_path(finetune, f, "--model", "model", "Speaker-independent checkpoint");
  add_path(finetune, f, "--speaker", "speaker", "Speaker id or all");

  auto* sep = app.add_subcommand("separate", "Separate one mixture");
  add_common(sep, f);
  add_path(sep, f, "--corpus", "corpus", "Corpus whose demo mixture is the default input");
  add_path(sep, f, "--model", "model", "Checkpoint used for both speakers");
  add_path(sep, f, "--model1", "model1", "Checkpoint for speaker 1");
  add_path(sep, f, "--model2", "model2", "Checkpoint for speaker 2");
  add_path(sep, f, "--train-dir", "train_dir", "Directory written by train");
  add_path(sep, f, "--mixture", "mixture", "Mixture WAV");
  add_path(sep, f, "--v1", "v1", "Speaker 1 embedding file");
  add_path(sep, f, "--v2", "v2", "Speaker 2 embedding file");

  auto* bench = app.add_subcommand("bench", "Benchmark all methods over the SNR grid");
  add_common(bench, f);
  add_path(bench, f, "--corpus", "corpus", "Corpus manifest or directory");
  add_path(bench, f, "--train-dir", "train_dir", "Directory written by train");
  add_path(bench, f, "--model", "model", "Speaker-independent checkpoint");
  add_path(bench, f, "--model1", "model1", "Fine-tuned checkpoint for speaker 1");
  add_path(bench, f, "--model2", "model2", "Fine-tuned checkpoint for speaker 2");
  add_path(bench, f, "--nmf", "nmf", "NMF dictionaries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const avsep::cli::Config c = resolve(f);
    if (gen->parsed()) avsep::cli::cmd_gen(c);
    else if (train->parsed()) avsep::cli::cmd_train(c);
    else if (finetune->parsed()) avsep::cli::cmd_finetune(c);
    else if (sep->parsed()) avsep::cli::cmd_separate(c);
    else if (bench->parsed()) avsep::cli::cmd_bench(c);
  } catch (const std::exception& e) {
    std::cerr << "avsep: error: " << e.what() << "\n";
    return avsep::cli::exit_code(e);
  }
  return 0;
}
