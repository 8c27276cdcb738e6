// Scenario driver: launches nodes, injects faults, reports pass/fail.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "energychain/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fault-injection harness for energy market nodes"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "Run a scenario file");
  std::string scenario_path;
  std::string report_path;
  std::string workdir;
  std::optional<int> difficulty;
  run->add_option("scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--report", report_path, "Write the JSON report here (text report next to it)");
  run->add_option("--difficulty", difficulty, "Override the proof-of-work difficulty (leading hex zeros)");
  run->add_option("--workdir", workdir, "Directory for node books and snapshots");
  CLI11_PARSE(app, argc, argv);

  namespace h = energychain::harness;
  try {
    const auto scenario = h::LoadScenario(scenario_path);
    h::RunOptions opts;
    opts.difficulty = difficulty;
    opts.workdir = workdir;
    const auto report = h::RunScenario(scenario, opts);
    std::cout << report.ToText();
    if (!report_path.empty()) h::WriteReport(report, report_path);
    return report.passed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "harness: " << e.what() << "\n";
    return 2;
  }
}
