#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "leafwise/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"leafwise: ground states, attractors and curvature checks on periodic grids"};
  std::string config;
  std::string out;
  app.add_option("config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out, "output directory (overrides the config's \"output\")");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : leafwise::cli::kExitConfig;
  }
  std::optional<std::filesystem::path> out_dir;
  if (!out.empty()) out_dir = out;
  return leafwise::cli::run_file(config, out_dir, std::cerr);
}
