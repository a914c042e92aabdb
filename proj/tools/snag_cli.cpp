// snag: dataset conversion, search runs, ablations and space listings.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or config.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "snag/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw snag::InputError("bad seed list '" + s + "'");
    out.push_back(v);
  }
  if (out.empty()) throw snag::InputError("empty seed list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SNAG: neural architecture search for graph neural networks"};
  app.require_subcommand(1);

  std::string config, out, seeds, format, input, name;
  std::size_t budget = 0;

  auto add_common = [&](CLI::App* cmd, bool with_run_flags) {
    cmd->add_option("--config", config, "Experiment config (flat JSON)")->required()->check(CLI::ExistingFile);
    if (with_run_flags) {
      cmd->add_option("--out", out, "Output directory (overrides config)");
      cmd->add_option("--seed", seeds, "Comma-separated seeds (overrides config)");
      cmd->add_option("--budget", budget, "Candidates per search (overrides config)")->check(CLI::PositiveNumber);
    }
  };
  CLI::App* run = app.add_subcommand("run", "Run the configured mode once per seed");
  add_common(run, true);
  CLI::App* ablate = app.add_subcommand("ablate", "Run with and without layer aggregators");
  add_common(ablate, true);
  CLI::App* enumerate = app.add_subcommand("enumerate", "List every genotype of the configured space");
  add_common(enumerate, false);
  CLI::App* convert = app.add_subcommand("convert", "Convert a raw dataset to the canonical layout");
  convert->add_option("--format", format, "Input format: edgelist | linqs")->required();
  convert->add_option("--input", input, "Input directory")->required();
  convert->add_option("--out", out, "Output dataset directory")->required();
  convert->add_option("--name", name, "Dataset name (default: input directory name)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*convert) {
      const std::filesystem::path in(input);
      if (name.empty()) name = std::filesystem::absolute(in).lexically_normal().filename().string();
      snag::cmd_convert(format, in, out, name);
      std::cout << "wrote " << out << '\n';
      return 0;
    }
    snag::ExperimentConfig cfg = snag::load_config(config);
    if (!out.empty()) cfg.out = out;
    if (!seeds.empty()) cfg.seeds = parse_seeds(seeds);
    if (budget > 0) cfg.search.budget = budget;
    if (*enumerate) {
      snag::cmd_enumerate(cfg, std::cout);
    } else if (*run) {
      snag::cmd_run(cfg);
      std::cout << "wrote " << (cfg.out / "report.json").string() << '\n';
    } else {
      snag::cmd_ablate(cfg);
      std::cout << "wrote " << (cfg.out / "ablation.json").string() << '\n';
    }
    return 0;
  } catch (const snag::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
