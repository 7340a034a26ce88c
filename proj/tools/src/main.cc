#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ctrkit_cli/commands.h"

int main(int argc, char** argv) {
  CLI::App app{"ctrkit: CTR model training and analysis"};
  std::string command;
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  app.add_option("command", command, "Command to run")
      ->required()
      ->check(CLI::IsMember(ctrkit::cli::command_names()));
  app.add_option("--config", config_path, "Config file (key = value lines)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--set", overrides, "Override a config key: key=value")->take_all();
  CLI11_PARSE(app, argc, argv);

  try {
    ctrkit::cli::Config config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ctrkit::Error("cannot open config '" + config_path + "'");
      config.parse(in, config_path);
    }
    for (const auto& o : overrides) config.apply_override(o);
    ctrkit::cli::run_command(command, config, out_dir, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "ctrkit " << command << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
