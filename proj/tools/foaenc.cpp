// Copyright 2026 The foaenc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "foaenc/commands.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool force = false;
};

// Config file first, then any flag given explicitly on the command line.
foaenc::RunConfig resolve_config(const CLI::App& app, const CliState& cli) {
  foaenc::RunConfig config;
  if (!cli.config_path.empty()) {
    std::ifstream is(cli.config_path);
    if (!is) throw foaenc::Error("cannot open config " + cli.config_path);
    config.merge_json(nlohmann::json::parse(is));
  }
  if (app.count("--seed")) config.seed = cli.seed;
  if (app.count("--jobs")) config.jobs = cli.jobs;
  if (cli.force) config.force = true;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-order Ambisonics encoding workbench"};
  app.require_subcommand(1);
  CliState cli;
  app.add_option("--config", cli.config_path, "JSON run configuration");
  app.add_option("--seed", cli.seed, "Random seed");
  app.add_option("--jobs", cli.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--force", cli.force, "Overwrite existing outputs");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulate a scene dataset");
  std::string sim_out;
  std::optional<std::size_t> sim_scenes;
  std::string sim_array;
  std::string sim_corpus;
  simulate->add_option("--out", sim_out, "Dataset root")->required();
  simulate->add_option("--scenes", sim_scenes, "Number of scenes");
  simulate->add_option("--array", sim_array, "tetra | irregular | array JSON");
  simulate->add_option("--corpus", sim_corpus, "Directory of mono 24 kHz wavs");

  // design-baseline
  auto* design = app.add_subcommand("design-baseline",
                                    "Design the least-squares baseline encoder");
  std::string design_out;
  std::string design_array;
  std::optional<double> design_cap;
  std::optional<int> design_order;
  bool design_audit = false;
  design->add_option("--out", design_out, "AMBENC1 output file")->required();
  design->add_option("--array", design_array, "tetra | irregular | array JSON");
  design->add_option("--gain-cap-db", design_cap, "Maximum row gain in dB");
  design->add_option("--order", design_order, "Ambisonic order");
  design->add_flag("--audit", design_audit, "Print the achieved gains");

  // encode
  auto* encode = app.add_subcommand("encode", "Apply an encoding matrix");
  std::string enc_matrix, enc_input, enc_out, enc_tensor;
  encode->add_option("--matrix", enc_matrix, "AMBENC1 or AMBTFE1 file")
      ->required();
  encode->add_option("--input", enc_input, "Microphone wav or AMBTEN1 tensor")
      ->required();
  encode->add_option("--out", enc_out, "FOA wav output");
  encode->add_option("--tensor-out", enc_tensor, "AMBTEN1 output");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate encoders on a dataset");
  std::string ev_dataset, ev_split = "test", ev_baseline, ev_learned, ev_out;
  evaluate->add_option("--dataset", ev_dataset, "Dataset root")->required();
  evaluate->add_option("--split", ev_split, "train | val | test");
  evaluate->add_option("--baseline", ev_baseline,
                       "AMBENC1 baseline (designed on the fly if omitted)");
  evaluate->add_option("--learned", ev_learned,
                       "Directory of <scene_id>/matrix.ambtfe or foa.wav");
  evaluate->add_option("--out", ev_out, "Report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    foaenc::RunConfig config = resolve_config(app, cli);
    if (simulate->parsed()) {
      if (sim_scenes) config.scenes = *sim_scenes;
      if (!sim_array.empty()) config.array = sim_array;
      if (!sim_corpus.empty()) config.corpus = sim_corpus;
      const auto summary = foaenc::cmd_simulate(config, sim_out, std::cerr);
      std::cout << "train " << summary.split_counts[0] << ", val "
                << summary.split_counts[1] << ", test "
                << summary.split_counts[2] << '\n';
    } else if (design->parsed()) {
      if (!design_array.empty()) config.array = design_array;
      if (design_cap) config.gain_cap_db = *design_cap;
      if (design_order) config.order = *design_order;
      if (!config.force && std::filesystem::exists(design_out)) {
        throw foaenc::Error(design_out + " exists (use --force to overwrite)");
      }
      foaenc::cmd_design_baseline(config, design_out, design_audit, std::cout);
    } else if (encode->parsed()) {
      auto opt = [](const std::string& s) -> std::optional<std::filesystem::path> {
        if (s.empty()) return std::nullopt;
        return s;
      };
      for (const auto& p : {opt(enc_out), opt(enc_tensor)}) {
        if (p && !config.force && std::filesystem::exists(*p)) {
          throw foaenc::Error(p->string() + " exists (use --force to overwrite)");
        }
      }
      foaenc::cmd_encode(config, enc_matrix, enc_input, opt(enc_out),
                         opt(enc_tensor));
    } else if (evaluate->parsed()) {
      auto opt = [](const std::string& s) -> std::optional<std::filesystem::path> {
        if (s.empty()) return std::nullopt;
        return s;
      };
      if (!config.force && foaenc::detail::directory_has_entries(ev_out)) {
        throw foaenc::Error(ev_out + " is not empty (use --force to overwrite)");
      }
      const auto summary =
          foaenc::cmd_evaluate(config, ev_dataset, ev_split, opt(ev_baseline),
                               opt(ev_learned), ev_out, std::cerr);
      std::cout << "baseline composite loss " << summary.baseline.composite;
      if (summary.learned) {
        std::cout << ", learned composite loss " << summary.learned->composite;
      }
      std::cout << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
