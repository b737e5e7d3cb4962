#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace versnet::cli;
  CLI::App app{"versnet: fully convolutional SAR target segmentation"};
  app.require_subcommand(1);
  std::vector<Command> commands = register_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  for (auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    try {
      cmd.options->resolve();
      return cmd.run();
    } catch (const std::exception& e) {
      std::cerr << "versnet " << cmd.app->get_name() << ": " << e.what() << '\n';
      return exit_code_for(e);
    }
  }
  return kUsage;
}
