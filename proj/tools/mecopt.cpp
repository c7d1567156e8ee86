// mecopt: Monte-Carlo runs of the MIMO-NOMA offloading energy minimizer.
//
//   mecopt run --config cfg.json [--trials N] [--seed S] [--out results.csv]
//              [--trace traces.csv] [--algorithms proposed,local,full,fdma]
//              [--workers W]
//
// Exit codes: 0 success, 2 configuration / usage error, 3 some trial hit a
// numerical failure (the CSV is still written).

#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "mecnoma/config.hpp"
#include "mecnoma/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mecnoma;

  CLI::App app{"Energy-minimizing offloading and precoding for MIMO-NOMA edge computing"};
  app.require_subcommand(1);
  CLI::App* run_cmd = app.add_subcommand("run", "Run the Monte-Carlo experiment described by a config file");

  std::string config_path;
  int trials = 0;
  std::string seed_text;
  std::string out_path;
  std::string trace_path;
  std::string algorithms;
  unsigned workers = 1;
  bool quiet = false;
  run_cmd->add_option("--config", config_path, "JSON experiment config")->required();
  run_cmd->add_option("--trials", trials, "Override run.trials")->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", seed_text, "Override channel.seed (unsigned 64-bit)");
  run_cmd->add_option("--out", out_path, "CSV output path (default: output.csv from the config, else stdout)");
  run_cmd->add_option("--trace", trace_path, "Per-iteration energy trace CSV");
  run_cmd->add_option("--algorithms", algorithms, "Comma-separated subset of proposed,local,full,fdma");
  run_cmd->add_option("--workers", workers, "Worker threads (output order does not depend on it)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_flag("--quiet", quiet, "No progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  harness::ExperimentConfig cfg;
  try {
    cfg = harness::load_config(config_path);
    // Command-line overrides go through the same parser so errors name the
    // same fields as the config file.
    if (trials > 0) cfg.trials = trials;
    if (!seed_text.empty()) cfg.seed = harness::detail::parse_seed(harness::json(seed_text), "--seed");
    if (!algorithms.empty()) {
      cfg.algorithms.clear();
      for (const auto& name : split_list(algorithms)) {
        bool known = false;
        for (const char* k : harness::kAlgorithms) known = known || name == k;
        if (!known) throw Error(ErrorKind::config, "--algorithms: unknown algorithm '" + name + "'");
        cfg.algorithms.push_back(name);
      }
      if (cfg.algorithms.empty()) throw Error(ErrorKind::config, "--algorithms: empty list");
    }
    if (!out_path.empty()) cfg.csv_path = out_path;
    if (!trace_path.empty()) cfg.trace_path = trace_path;
    cfg.validate();
    if (auto w = cfg.params.antenna_warning()) std::cerr << "warning: " << *w << "\n";
  } catch (const Error& e) {
    std::cerr << "mecopt: " << e.what() << "\n";
    return kExitConfig;
  }

  harness::RunResult result;
  try {
    result = harness::run(cfg, workers, [&](std::size_t t) {
      if (!quiet) std::cerr << "trial " << (t + 1) << "/" << cfg.trials << " done\n";
    });
    if (cfg.csv_path.empty()) {
      harness::write_csv(std::cout, result.records);
    } else {
      harness::write_file(cfg.csv_path, [&](std::ostream& os) { harness::write_csv(os, result.records); });
    }
    if (!cfg.trace_path.empty()) {
      harness::write_file(cfg.trace_path, [&](std::ostream& os) { harness::write_trace(os, result.records); });
    }
  } catch (const Error& e) {
    std::cerr << "mecopt: " << e.what() << "\n";
    return e.kind() == ErrorKind::config ? kExitConfig : kExitNumerical;
  }

  if (result.numerical_failure) {
    std::cerr << "mecopt: at least one trial ended in a numerical failure\n";
    return kExitNumerical;
  }
  return 0;
}
