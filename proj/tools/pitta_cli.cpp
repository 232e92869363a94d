// Command-line entry point: run/validate experiment configs, execute named
// brute-force oracles, print version info.
//
// Exit codes: 0 success, 1 config/usage error, 2 runtime failure.

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "pitta/oracles.hpp"
#include "pitta/protocol.hpp"
#include "pitta/rng.hpp"

namespace {
constexpr char kVersion[] = "1.0.0";
}

int main(int argc, char** argv) {
  CLI::App app{"pitta - physics-informed test-time adaptation lab for inertial streams"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string oracle_name;
  uint64_t seed_override = 0;
  bool has_seed_override = false;
  bool quiet = false;

  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  run_cmd->add_option("config", config_path, "experiment config (JSON, // comments allowed)")
      ->required();
  run_cmd->add_option("--out-dir", out_dir, "override the output directory");
  run_cmd->add_option("--seed-override", seed_override, "run a single seed")
      ->each([&](const std::string&) { has_seed_override = true; });
  run_cmd->add_flag("--quiet", quiet, "suppress progress output");

  auto* validate_cmd = app.add_subcommand("validate", "parse and validate a config");
  validate_cmd->add_option("config", config_path, "experiment config")->required();

  auto* oracle_cmd =
      app.add_subcommand("oracle", "execute a named brute-force oracle and print its value");
  oracle_cmd->add_option("name", oracle_name, "oracle name (see `oracle list`)")->required();

  app.add_subcommand("version", "print version and determinism info");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (app.got_subcommand("version")) {
      std::cout << "pitta " << kVersion << " (rng: " << pitta::kRngAlgorithm << ")\n";
      return 0;
    }
    if (app.got_subcommand("oracle")) {
      if (oracle_name == "list") {
        for (const auto& n : pitta::oracles::names()) std::cout << n << "\n";
        return 0;
      }
      try {
        std::cout << pitta::oracles::run(oracle_name);
      } catch (const pitta::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
      }
      return 0;
    }
    if (app.got_subcommand("validate")) {
      try {
        pitta::load_config(config_path);
      } catch (const pitta::Error& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 1;
      }
      std::cout << "config ok\n";
      return 0;
    }
    if (app.got_subcommand("run")) {
      pitta::ExperimentConfig cfg;
      try {
        cfg = pitta::load_config(config_path);
      } catch (const pitta::Error& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 1;
      }
      pitta::RunOptions opts;
      opts.out_dir_override = out_dir;
      if (has_seed_override) opts.seed_override = seed_override;
      opts.quiet = quiet;
      const int failed = pitta::run_experiment(cfg, opts);
      return failed == 0 ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
