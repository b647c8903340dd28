// Command-line front end: one subcommand per experiment kind plus summarize.

#include <iostream>
#include <utility>

#include "CLI11.hpp"
#include "ctscore/config.hpp"
#include "ctscore/experiment.hpp"
#include "ctscore/summary.hpp"

namespace {

struct RunOptions {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  bool quiet = false;
};

int run(const std::string& kind, const RunOptions& opt) {
  using namespace ctscore;
  if (opt.config.empty() == opt.preset.empty()) {
    std::cerr << "error: give exactly one of --config or --preset\n";
    return 1;
  }
  try {
    ExperimentConfig cfg = opt.config.empty() ? preset(opt.preset) : load_config(opt.config);
    if (to_string(cfg.kind) != kind) {
      throw ConfigError("configuration describes a " + to_string(cfg.kind) +
                        " experiment, not " + kind);
    }
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.workers) cfg.workers = *opt.workers;
    if (opt.out) cfg.output_dir = *opt.out;
    const ExperimentResult result = run_experiment(cfg, opt.quiet ? nullptr : &std::cerr);
    for (const auto& f : result.files) std::cout << f.string() << "\n";
    if (!result.failures.empty()) {
      std::cerr << result.failures.size() << " task(s) failed:\n";
      for (const auto& [rep, msg] : result.failures) {
        std::cerr << "  replication " << rep << ": " << msg << "\n";
      }
      return 2;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online score estimation for partially observed diffusions"};
  app.require_subcommand(1);
  app.footer("ctscore --list-presets prints the shipped preset names.");

  RunOptions opt;
  std::string chosen;
  const std::pair<const char*, const char*> kinds[] = {
      {"simulate", "Simulate hidden path and observations"},
      {"score-direct", "Online score with the direct smoother (Alg1)"},
      {"score-bridge", "Online score with the bridge smoother (Alg3)"},
      {"score-ml", "Online multilevel score"},
      {"estimate", "Recursive or offline parameter estimation"},
      {"benchmark", "Cost against MSE sweep over top levels"}};
  for (const auto& [kind, about] : kinds) {
    auto* sub = app.add_subcommand(kind, about);
    sub->add_option("--config", opt.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--preset", opt.preset, "Shipped preset name");
    sub->add_option("--seed", opt.seed, "Root seed (overrides the configuration)");
    sub->add_option("--workers", opt.workers, "Concurrent replications")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_flag("--quiet", opt.quiet, "No progress messages");
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  std::vector<std::string> files;
  auto* summarize = app.add_subcommand("summarize", "Fit log(cost) against log(MSE) per method");
  summarize->add_option("files", files, "benchmark.csv files")->required()->check(CLI::ExistingFile);
  summarize->callback([&chosen] { chosen = "summarize"; });

  if (argc == 2 && std::string(argv[1]) == "--list-presets") {
    for (const auto& name : ctscore::preset_names()) std::cout << name << "\n";
    return 0;
  }
  CLI11_PARSE(app, argc, argv);

  if (chosen == "summarize") {
    try {
      std::vector<std::filesystem::path> paths(files.begin(), files.end());
      ctscore::summarize(paths, &std::cout);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    return 0;
  }
  return run(chosen, opt);
}
