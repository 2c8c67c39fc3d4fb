#pragma once

#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "sketchlab/errors.hpp"

namespace sketchlab::tools {

/// Runs a parsed command. Exit codes: 0 ok, 2 bad configuration or
/// arguments, 1 anything else.
template <typename F>
int guarded_main(CLI::App& app, int argc, char** argv, F&& body) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    body();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << app.get_name() << ": config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << app.get_name() << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace sketchlab::tools
