#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "impact/cli/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Pricing and optimal hedging under endogenous market impact"};
  std::string command;
  std::string config;
  std::optional<std::string> out;
  app.add_option("command", command, "gexp | price | solve | closedform | value | verify")
      ->required()
      ->check(CLI::IsMember(impact::cli::commands()));
  app.add_option("--config", config, "scenario file (INI)")->required();
  app.add_option("--out", out, "output directory (overrides [outputs] dir)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : impact::cli::kExitConfig;
  }
  return impact::cli::run_main(command, config, out, std::cerr);
}
